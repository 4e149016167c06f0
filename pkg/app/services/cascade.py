"""Error-rate estimation and Cascade reconciliation over an authenticated
two-party channel. Every parity and disclosed bit is masked with fresh bits of
a shared one-time pad; only match/mismatch verdicts travel in the clear."""
import heapq
import logging
import math
from collections import deque
from dataclasses import dataclass, field
from typing import Deque, Dict, List, Optional, Sequence, Tuple

import numpy as np
import numpy.typing as npt

from app.config import settings
from app.exceptions import DimensionMismatchError, PadExhaustedError, ParameterError, ProtocolFault
from app.models.schemas import ReconcileConfig
from app.services.bounds import hoeffding_deviation

logger = logging.getLogger(__name__)

ALICE_TO_BOB = "A->B"
BOB_TO_ALICE = "B->A"

Bits = npt.NDArray[np.uint8]


@dataclass(frozen=True)
class ChannelMessage:
    """One message on the classical channel; seq is 1-based."""
    seq: int
    direction: str
    kind: str
    payload: Tuple[int, ...]
    masked: bool

    def log_line(self) -> str:
        payload_hex = np.packbits(np.asarray(self.payload, dtype=np.uint8)).tobytes().hex() or "-"
        return f"{self.seq} {self.direction} {self.kind} {payload_hex} masked:{int(self.masked)}"


class ChannelEndpoint:
    """One side of an in-order, unmodified message channel with a shared transcript tap."""

    def __init__(self, direction: str, transcript: List[ChannelMessage]):
        self.direction = direction
        self.transcript = transcript
        self.inbox: Deque[ChannelMessage] = deque()
        self.peer: Optional["ChannelEndpoint"] = None

    def send(self, kind: str, payload: Sequence[int], masked: bool) -> ChannelMessage:
        if self.peer is None:
            raise ProtocolFault("Channel endpoint is not connected")
        message = ChannelMessage(
            seq=len(self.transcript) + 1,
            direction=self.direction,
            kind=kind,
            payload=tuple(int(bit) for bit in payload),
            masked=masked,
        )
        self.transcript.append(message)
        self.peer.inbox.append(message)
        return message

    def receive(self) -> ChannelMessage:
        if not self.inbox:
            raise ProtocolFault(f"No message waiting on the {self.direction} channel peer")
        return self.inbox.popleft()


class PadLedger:
    """One party's view of the pre-shared pad: every bit is handed out at most once."""

    def __init__(self, pad: Bits, budget: Optional[int] = None):
        self.pad = pad
        self.consumed = 0
        self.budget = budget

    @property
    def pad_length(self) -> int:
        return int(self.pad.shape[0])

    @property
    def over_budget(self) -> bool:
        return self.budget is not None and self.consumed > self.budget

    def take(self, count: int) -> Bits:
        if self.consumed + count > self.pad_length:
            raise PadExhaustedError(self.consumed, count, self.pad_length)
        chunk = self.pad[self.consumed:self.consumed + count]
        self.consumed += count
        return chunk


@dataclass
class ClassicalLink:
    """Both endpoints and both pad ledgers of one session."""
    alice: ChannelEndpoint
    bob: ChannelEndpoint
    alice_pad: PadLedger
    bob_pad: PadLedger
    transcript: List[ChannelMessage] = field(default_factory=list)
    parities_exchanged: int = 0

    @classmethod
    def open(cls, pad: Bits, budget: Optional[int] = None) -> "ClassicalLink":
        pad = np.asarray(pad, dtype=np.uint8)
        transcript: List[ChannelMessage] = []
        alice = ChannelEndpoint(ALICE_TO_BOB, transcript)
        bob = ChannelEndpoint(BOB_TO_ALICE, transcript)
        alice.peer, bob.peer = bob, alice
        return cls(
            alice=alice,
            bob=bob,
            alice_pad=PadLedger(pad.copy(), budget),
            bob_pad=PadLedger(pad.copy(), budget),
            transcript=transcript,
        )

    @property
    def pad_consumed(self) -> int:
        if self.alice_pad.consumed != self.bob_pad.consumed:
            raise ProtocolFault(
                f"Pad ledgers diverged: Alice used {self.alice_pad.consumed}, "
                f"Bob used {self.bob_pad.consumed}"
            )
        return self.alice_pad.consumed


@dataclass(frozen=True)
class ErrorEstimate:
    rate: float
    sample_indices: npt.NDArray[np.int64]
    mismatch_indices: npt.NDArray[np.int64]
    deviation: float


@dataclass(frozen=True)
class ReconcileReport:
    """Outcome of a Cascade run; residual_mismatch is only observable by a test oracle."""
    error_positions: Tuple[int, ...]
    parities_exchanged: int
    pad_consumed: int
    estimated_rate: float
    residual_mismatch: int
    corrected_bits: Bits
    block_sizes: Tuple[int, ...]
    confirmation_mismatch: Optional[bool] = None


def default_pad_length(length: int, pass_count: int, sample_size: int = 0) -> int:
    """Pad bits that cover the worst case of estimation, every pass and every correction."""
    search_cost = math.ceil(math.log2(length)) if length > 1 else 0
    return pass_count * length + length * search_cost + sample_size + 1


def _check_lengths(alice_bits: Bits, bob_bits: Bits) -> None:
    if alice_bits.shape != bob_bits.shape:
        raise DimensionMismatchError(
            f"Alice holds {alice_bits.shape[0]} bits but Bob holds {bob_bits.shape[0]}"
        )


def block_parity(bits: npt.ArrayLike, index_block: npt.ArrayLike) -> int:
    """XOR of the selected bits; the empty block has parity 0."""
    bits = np.asarray(bits, dtype=np.uint8)
    indices = np.asarray(index_block, dtype=np.int64)
    if indices.size and (indices.min() < 0 or indices.max() >= bits.shape[0]):
        raise ParameterError(f"Block indices out of range for {bits.shape[0]} bits")
    return int(bits[indices].sum() & 1)


def exchange_parity(link: ClassicalLink, alice_bits: Bits, bob_bits: Bits, indices: npt.ArrayLike) -> int:
    """
    Alice sends the masked parity of her bits on indices; Bob answers whether it
    matches his own parity.

    Returns:
        int: Alice's parity as decrypted by Bob
    """
    alice_parity = block_parity(alice_bits, indices)
    key = link.alice_pad.take(1)
    link.alice.send("parity", [alice_parity ^ int(key[0])], masked=True)

    received = link.bob.receive()
    decrypted = received.payload[0] ^ int(link.bob_pad.take(1)[0])
    mismatch = int(decrypted != block_parity(bob_bits, indices))
    link.bob.send("verdict", [mismatch], masked=False)
    link.alice.receive()

    link.parities_exchanged += 1
    return decrypted


def estimate_error_rate(
        alice_bits: npt.ArrayLike,
        bob_bits: npt.ArrayLike,
        fraction: float,
        link: ClassicalLink,
        rng: np.random.Generator,
        sample_size: Optional[int] = None,
        confidence: float = 1e-6,
) -> ErrorEstimate:
    """
    Estimate the error rate on a random sample disclosed through the pad.

    Bob sends his sample bits masked, Alice announces which of them disagree.
    The sampled positions are spent and must be dropped before reconciliation.

    Args:
        alice_bits: Alice's string
        bob_bits: Bob's string, same length
        fraction (float): Sample fraction in (0, 1]
        link (ClassicalLink): Channel and pad ledgers
        rng (np.random.Generator): Stream the sample is drawn from
        sample_size (int): Explicit sample size overriding ceil(fraction * length)
        confidence (float): Failure probability of the reported Hoeffding deviation

    Returns:
        ErrorEstimate: Rate, sorted sample indices, mismatching sample indices
    """
    alice_bits = np.asarray(alice_bits, dtype=np.uint8)
    bob_bits = np.asarray(bob_bits, dtype=np.uint8)
    _check_lengths(alice_bits, bob_bits)
    if not 0.0 < fraction <= 1.0:
        raise ParameterError(f"Estimation fraction must lie in (0, 1], got {fraction}")
    length = alice_bits.shape[0]
    k = math.ceil(fraction * length) if sample_size is None else sample_size
    if not 1 <= k <= length:
        raise ParameterError(f"Estimation sample of {k} bits does not fit a string of {length}")

    sample = np.sort(rng.choice(length, size=k, replace=False)).astype(np.int64)

    key = link.bob_pad.take(k)
    link.bob.send("sample", bob_bits[sample] ^ key, masked=True)
    received = np.asarray(link.alice.receive().payload, dtype=np.uint8)
    bob_sample = received ^ link.alice_pad.take(k)
    mismatch_mask = (alice_bits[sample] != bob_sample).astype(np.uint8)
    link.alice.send("mismatch", mismatch_mask, masked=False)
    link.bob.receive()

    rate = float(mismatch_mask.sum()) / k
    deviation = hoeffding_deviation(k, confidence)
    logger.info(
        f"Estimated error rate {rate:.4f} on {k} bits; upper confidence limit "
        f"{min(1.0, rate + deviation):.4f}"
    )
    return ErrorEstimate(
        rate=rate,
        sample_indices=sample,
        mismatch_indices=sample[mismatch_mask.astype(bool)],
        deviation=deviation,
    )


def binary_search_error(
        link: ClassicalLink,
        alice_bits: Bits,
        bob_bits: Bits,
        block: npt.ArrayLike,
        confirm: bool = True,
) -> int:
    """
    Locate one mismatch in a block with odd mismatch parity by halving, and flip
    Bob's bit there in place.

    Args:
        link (ClassicalLink): Channel and pad ledgers
        alice_bits: Alice's string
        bob_bits: Bob's string, modified in place
        block: Indices of the block
        confirm (bool): Exchange the whole-block parity first

    Returns:
        int: The corrected index

    Raises:
        ProtocolFault: The block parities agree
    """
    indices = np.asarray(block, dtype=np.int64)
    if indices.size == 0:
        raise ProtocolFault("Cannot search an empty block")
    if confirm and exchange_parity(link, alice_bits, bob_bits, indices) == block_parity(bob_bits, indices):
        raise ProtocolFault("Block parities agree; no odd number of errors to locate")

    while indices.size > 1:
        half = (indices.size + 1) // 2
        left = indices[:half]
        if exchange_parity(link, alice_bits, bob_bits, left) != block_parity(bob_bits, left):
            indices = left
        else:
            indices = indices[half:]

    position = int(indices[0])
    bob_bits[position] ^= 1
    return position


def _block_sizes(config: ReconcileConfig, estimated_rate: float, length: int) -> List[int]:
    if config.block_sizes:
        planned = list(config.block_sizes[:config.pass_count])
        while len(planned) < config.pass_count:
            planned.append(planned[-1] * 2)
    else:
        rate = max(estimated_rate, settings.CASCADE_MIN_ERROR_RATE)
        first = math.ceil(settings.CASCADE_BLOCK_CONSTANT / rate)
        planned = [first * 2**p for p in range(config.pass_count)]

    # a whole-string block ends the schedule; repeating it exchanges a known parity
    sizes: List[int] = []
    for size in planned:
        sizes.append(max(1, min(size, length)))
        if size >= length:
            break
    return sizes


def _pass_order(config: ReconcileConfig, pass_index: int, length: int) -> npt.NDArray[np.int64]:
    if pass_index == 0:
        return np.arange(length, dtype=np.int64)
    rng = np.random.default_rng([config.shuffle_seed or 0, pass_index])
    return rng.permutation(length).astype(np.int64)


class _CascadeState:
    """Blocks whose Alice parity is known, indexed for backtracking."""

    def __init__(self, link: ClassicalLink, alice_bits: Bits, bob_bits: Bits):
        self.link = link
        self.alice_bits = alice_bits
        self.bob_bits = bob_bits
        self.orders: List[npt.NDArray[np.int64]] = []
        self.positions: List[npt.NDArray[np.int64]] = []
        self.sizes: List[int] = []
        self.known: Dict[Tuple[int, int], int] = {}
        self.corrected: List[int] = []

    def add_pass(self, order: npt.NDArray[np.int64], size: int) -> None:
        position = np.empty_like(order)
        position[order] = np.arange(order.shape[0])
        self.orders.append(order)
        self.positions.append(position)
        self.sizes.append(size)

    def block(self, pass_index: int, block_index: int) -> npt.NDArray[np.int64]:
        size = self.sizes[pass_index]
        return self.orders[pass_index][block_index * size:(block_index + 1) * size]

    def is_odd(self, pass_index: int, block_index: int) -> bool:
        indices = self.block(pass_index, block_index)
        return self.known[(pass_index, block_index)] != block_parity(self.bob_bits, indices)

    def correct(self, pass_index: int, block_index: int) -> None:
        indices = self.block(pass_index, block_index)
        position = binary_search_error(self.link, self.alice_bits, self.bob_bits, indices, confirm=False)
        self.corrected.append(position)
        self.backtrack(position)

    def backtrack(self, position: int) -> None:
        # re-examine every known block holding a corrected bit, smallest first
        heap: List[Tuple[int, int, int]] = []
        self._push_blocks(heap, position)
        while heap:
            _, pass_index, block_index = heapq.heappop(heap)
            if not self.is_odd(pass_index, block_index):
                continue
            indices = self.block(pass_index, block_index)
            found = binary_search_error(self.link, self.alice_bits, self.bob_bits, indices, confirm=False)
            self.corrected.append(found)
            self._push_blocks(heap, found)

    def _push_blocks(self, heap: List[Tuple[int, int, int]], position: int) -> None:
        for pass_index, size in enumerate(self.sizes):
            block_index = int(self.positions[pass_index][position]) // size
            if (pass_index, block_index) in self.known:
                block_len = self.block(pass_index, block_index).shape[0]
                heapq.heappush(heap, (block_len, pass_index, block_index))


def reconcile(
        alice_bits: npt.ArrayLike,
        bob_bits: npt.ArrayLike,
        config: ReconcileConfig,
        link: ClassicalLink,
        estimated_rate: float = 0.0,
        rate_floor: float = 0.0,
) -> ReconcileReport:
    """
    Run multi-pass Cascade so that Bob's copy of the string matches Alice's.

    Pass 1 uses the natural order; later passes use seeded permutations and
    larger blocks, stopping after the first pass whose block spans the whole
    string. Each correction triggers re-examination of every earlier block
    containing the corrected bit.

    Args:
        alice_bits: Alice's string
        bob_bits: Bob's string, not modified
        config (ReconcileConfig): Pass count, block sizes, shuffle seed, confirmation round
        link (ClassicalLink): Channel and pad ledgers
        estimated_rate (float): Error-rate estimate driving the default block sizes
        rate_floor (float): Smallest rate the default block sizes are planned for

    Returns:
        ReconcileReport: Corrected positions, exchange counts and Bob's corrected string

    Raises:
        PadExhaustedError: The pad ran out mid-protocol
    """
    alice_bits = np.asarray(alice_bits, dtype=np.uint8)
    bob_copy = np.array(bob_bits, dtype=np.uint8)
    _check_lengths(alice_bits, bob_copy)
    length = alice_bits.shape[0]
    parities_before = link.parities_exchanged

    sizes = _block_sizes(config, max(estimated_rate, rate_floor), length) if length else []
    state = _CascadeState(link, alice_bits, bob_copy)
    for pass_index, size in enumerate(sizes):
        state.add_pass(_pass_order(config, pass_index, length), size)
        corrections_before = len(state.corrected)
        for block_index in range(math.ceil(length / size)):
            indices = state.block(pass_index, block_index)
            state.known[(pass_index, block_index)] = exchange_parity(link, alice_bits, bob_copy, indices)
            if state.is_odd(pass_index, block_index):
                state.correct(pass_index, block_index)
        logger.debug(
            f"Cascade pass {pass_index + 1}: block size {size}, "
            f"{len(state.corrected) - corrections_before} corrections"
        )

    confirmation_mismatch = None
    if config.final_confirmation and length:
        everything = np.arange(length, dtype=np.int64)
        confirmation_mismatch = exchange_parity(link, alice_bits, bob_copy, everything) != block_parity(
            bob_copy, everything
        )

    residual = int(np.count_nonzero(alice_bits != bob_copy))
    return ReconcileReport(
        error_positions=tuple(sorted(state.corrected)),
        parities_exchanged=link.parities_exchanged - parities_before,
        pad_consumed=link.pad_consumed,
        estimated_rate=estimated_rate,
        residual_mismatch=residual,
        corrected_bits=bob_copy,
        block_sizes=tuple(sizes),
        confirmation_mismatch=confirmation_mismatch,
    )


def public_view(log: Sequence[ChannelMessage]) -> List[ChannelMessage]:
    """The unmasked messages of a transcript, i.e. what the channel reveals without the pad."""
    return [message for message in log if not message.masked]


def transcript_lines(log: Sequence[ChannelMessage]) -> List[str]:
    return [message.log_line() for message in log]
