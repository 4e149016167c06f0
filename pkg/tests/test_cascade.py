import math
import pytest
import numpy as np

from app.exceptions import DimensionMismatchError, PadExhaustedError, ParameterError, ProtocolFault
from app.models.schemas import ReconcileConfig
from app.services import bounds
from app.services.cascade import (
    ALICE_TO_BOB,
    BOB_TO_ALICE,
    ChannelMessage,
    ClassicalLink,
    PadLedger,
    binary_search_error,
    block_parity,
    default_pad_length,
    estimate_error_rate,
    exchange_parity,
    public_view,
    reconcile,
    transcript_lines,
)


def open_link(length, seed=0):
    return ClassicalLink.open(np.random.default_rng(seed).integers(0, 2, size=length, dtype=np.uint8))


def flip(bits, positions):
    flipped = np.array(bits, dtype=np.uint8)
    flipped[list(positions)] ^= 1
    return flipped


def run_estimate_and_reconcile(alice, bob, pad_seed, sample_seed=5):
    config = ReconcileConfig(pass_count=4, block_sizes=[8], shuffle_seed=3)
    link = open_link(default_pad_length(alice.shape[0], 4, alice.shape[0]), seed=pad_seed)
    estimate = estimate_error_rate(alice, bob, 0.25, link, np.random.default_rng(sample_seed))
    keep = np.setdiff1d(np.arange(alice.shape[0]), estimate.sample_indices)
    report = reconcile(alice[keep], bob[keep], config, link, estimate.rate)
    return link, estimate, report


def test_block_parity_examples():
    """Test hand-computed parities and the empty block."""
    bits = [1, 0, 1, 1]

    assert block_parity(bits, [0]) == 1
    assert block_parity(bits, [0, 1, 2]) == 0
    assert block_parity(bits, [0, 2, 3]) == 1
    assert block_parity(bits, []) == 0


def test_block_parity_out_of_range():
    """Test that indices beyond the string are refused."""
    with pytest.raises(ParameterError):
        block_parity([1, 0], [2])


def test_exchange_parity_masks_only_the_parity():
    """Test that the parity travels masked and the verdict travels in the clear."""
    link = open_link(10)
    alice = np.array([1, 1, 0, 0], dtype=np.uint8)
    bob = np.array([1, 0, 0, 0], dtype=np.uint8)

    assert exchange_parity(link, alice, bob, [0, 1]) == 0
    parity, verdict = link.transcript
    assert (parity.direction, parity.kind, parity.masked) == (ALICE_TO_BOB, "parity", True)
    assert parity.payload[0] == 0 ^ int(link.alice_pad.pad[0])
    assert (verdict.direction, verdict.kind, verdict.masked) == (BOB_TO_ALICE, "verdict", False)
    assert verdict.payload == (1,)
    assert link.pad_consumed == 1
    assert link.parities_exchanged == 1


def test_binary_search_error_locates_single_error():
    """Test one error in a block of 8: one confirming parity and three halvings."""
    link = open_link(20)
    alice = np.zeros(8, dtype=np.uint8)
    bob = flip(alice, [5])

    position = binary_search_error(link, alice, bob, np.arange(8))

    assert position == 5
    assert not bob.any()
    assert link.parities_exchanged == 1 + 3
    assert link.pad_consumed == 4


@pytest.mark.parametrize("length, error", [(1, 0), (2, 1), (7, 6), (13, 4), (64, 63)])
def test_binary_search_error_exchange_count(length, error):
    """Test the halving cost is at most ceil(log2 |B|) after the confirming parity."""
    link = open_link(100)
    alice = np.random.default_rng(length).integers(0, 2, size=length, dtype=np.uint8)
    bob = flip(alice, [error])

    assert binary_search_error(link, alice, bob, np.arange(length)) == error
    assert np.array_equal(alice, bob)
    assert link.parities_exchanged <= 1 + math.ceil(math.log2(length))


def test_binary_search_error_refuses_even_block():
    """Test that a block with agreeing parities is a protocol fault."""
    link = open_link(10)
    alice = np.array([0, 1, 1, 0], dtype=np.uint8)

    with pytest.raises(ProtocolFault):
        binary_search_error(link, alice, alice.copy(), np.arange(4))
    with pytest.raises(ProtocolFault):
        binary_search_error(link, alice, alice.copy(), [])


def test_estimate_error_rate_full_sample():
    """Test that sampling every position recovers the exact rate and error positions."""
    alice = np.zeros(1000, dtype=np.uint8)
    errors = np.arange(0, 1000, 10)
    bob = flip(alice, errors)
    link = open_link(1000)

    estimate = estimate_error_rate(alice, bob, 1.0, link, np.random.default_rng(0))

    assert estimate.rate == 0.1
    assert estimate.mismatch_indices.tolist() == errors.tolist()
    assert estimate.deviation == pytest.approx(bounds.hoeffding_deviation(1000, 1e-6))
    assert link.pad_consumed == 1000

    sample, mismatch = link.transcript
    assert (sample.direction, sample.kind, sample.masked) == (BOB_TO_ALICE, "sample", True)
    assert (mismatch.direction, mismatch.kind, mismatch.masked) == (ALICE_TO_BOB, "mismatch", False)


def test_estimate_error_rate_sample_size():
    """Test ceil(fraction * length) distinct sorted sample positions."""
    alice = np.zeros(1000, dtype=np.uint8)
    link = open_link(1000)

    estimate = estimate_error_rate(alice, alice.copy(), 0.25, link, np.random.default_rng(1))

    assert estimate.sample_indices.shape[0] == 250
    assert np.array_equal(estimate.sample_indices, np.unique(estimate.sample_indices))
    assert estimate.rate == 0.0


def test_estimate_error_rate_within_hoeffding(rng):
    """Test that repeated estimates on a 5% channel stay within the reported deviation."""
    alice = np.zeros(2000, dtype=np.uint8)
    for _ in range(50):
        bob = (rng.random(2000) < 0.05).astype(np.uint8)
        link = open_link(2000)
        estimate = estimate_error_rate(alice, bob, 0.5, link, rng)
        true_rate = float(bob[estimate.sample_indices].mean())
        assert estimate.rate == pytest.approx(true_rate)
        assert abs(estimate.rate - 0.05) <= estimate.deviation


@pytest.mark.parametrize("fraction", [0.0, 1.5])
def test_estimate_error_rate_bad_fraction(fraction):
    """Test that fractions outside (0, 1] are refused."""
    alice = np.zeros(10, dtype=np.uint8)
    with pytest.raises(ParameterError):
        estimate_error_rate(alice, alice, fraction, open_link(20), np.random.default_rng(0))


def test_reconcile_length_mismatch():
    """Test that strings of different lengths are refused."""
    with pytest.raises(DimensionMismatchError):
        reconcile(np.zeros(4, dtype=np.uint8), np.zeros(5, dtype=np.uint8), ReconcileConfig(), open_link(50))


def test_reconcile_without_errors(rng):
    """Test that equal strings need only the block parities."""
    alice = rng.integers(0, 2, size=200, dtype=np.uint8)
    link = open_link(400)

    report = reconcile(alice, alice.copy(), ReconcileConfig(pass_count=4, block_sizes=[8]), link)

    assert report.error_positions == ()
    assert report.residual_mismatch == 0
    assert report.block_sizes == (8, 16, 32, 64)
    assert report.parities_exchanged == 25 + 13 + 7 + 4
    assert report.pad_consumed == report.parities_exchanged


def test_reconcile_single_error(rng):
    """Test that one error costs three extra parities in a block of 8."""
    alice = rng.integers(0, 2, size=200, dtype=np.uint8)
    bob = flip(alice, [37])
    link = open_link(400)

    report = reconcile(alice, bob, ReconcileConfig(pass_count=4, block_sizes=[8]), link)

    assert report.error_positions == (37,)
    assert report.residual_mismatch == 0
    assert np.array_equal(report.corrected_bits, alice)
    assert report.parities_exchanged == 49 + 3
    assert bob[37] != alice[37]


def test_reconcile_even_errors_in_first_block(rng):
    """Test that two errors hidden in one block are caught by later passes."""
    alice = rng.integers(0, 2, size=256, dtype=np.uint8)
    bob = flip(alice, [3, 5])
    link = open_link(default_pad_length(256, 4))

    report = reconcile(alice, bob, ReconcileConfig(pass_count=4, block_sizes=[8], shuffle_seed=1), link)

    assert report.residual_mismatch == 0
    assert report.error_positions == (3, 5)


def test_reconcile_default_block_sizes(rng):
    """Test block sizes derived from the estimate, doubled, capped and cut after a whole-string block."""
    alice = rng.integers(0, 2, size=100, dtype=np.uint8)

    report = reconcile(alice, alice.copy(), ReconcileConfig(pass_count=4), open_link(500), estimated_rate=0.05)
    assert report.block_sizes == (15, 30, 60, 100)

    report = reconcile(alice, alice.copy(), ReconcileConfig(pass_count=4), open_link(500))
    assert report.block_sizes == (73, 100)

    report = reconcile(alice, alice.copy(), ReconcileConfig(pass_count=3, block_sizes=[4, 6]), open_link(500))
    assert report.block_sizes == (4, 6, 12)

    report = reconcile(alice, alice.copy(), ReconcileConfig(pass_count=4, block_sizes=[40]), open_link(500))
    assert report.block_sizes == (40, 80, 100)


def test_reconcile_rate_floor(rng):
    """Test that a zero estimate is planned at the floor rate while the report keeps the estimate."""
    alice = rng.integers(0, 2, size=222, dtype=np.uint8)

    report = reconcile(
        alice, alice.copy(), ReconcileConfig(pass_count=4), open_link(500), estimated_rate=0.0, rate_floor=0.1
    )

    assert report.block_sizes == (8, 16, 32, 64)
    assert report.estimated_rate == 0.0
    assert report.parities_exchanged == 28 + 14 + 7 + 4


def test_reconcile_final_confirmation(rng):
    """Test the optional whole-string parity after the last pass."""
    alice = rng.integers(0, 2, size=100, dtype=np.uint8)
    config = ReconcileConfig(pass_count=2, block_sizes=[10], final_confirmation=True)

    report = reconcile(alice, flip(alice, [42]), config, open_link(500))

    assert report.confirmation_mismatch is False


def test_reconcile_is_deterministic(rng):
    """Test that the same shuffle seed reproduces corrections and transcript."""
    alice = rng.integers(0, 2, size=300, dtype=np.uint8)
    bob = flip(alice, rng.choice(300, size=9, replace=False))
    config = ReconcileConfig(pass_count=4, block_sizes=[12], shuffle_seed=42)

    first_link, second_link = open_link(2000), open_link(2000)
    first = reconcile(alice, bob, config, first_link)
    second = reconcile(alice, bob, config, second_link)

    assert first.error_positions == second.error_positions
    assert transcript_lines(first_link.transcript) == transcript_lines(second_link.transcript)


@pytest.mark.slow
@pytest.mark.parametrize("p", [0.01, 0.05, 0.10])
def test_reconcile_binary_symmetric_channel(p):
    """Test estimation then default Cascade on BSC(p): at least 95 of 100 runs end without residual error."""
    generator = np.random.default_rng(int(p * 1000))
    successes = 0
    for run in range(100):
        alice = generator.integers(0, 2, size=1000, dtype=np.uint8)
        bob = flip(alice, np.flatnonzero(generator.random(1000) < p))
        config = ReconcileConfig(shuffle_seed=run)
        link = open_link(default_pad_length(1000, config.pass_count, 1000), seed=run)

        estimate = estimate_error_rate(alice, bob, config.estimation_fraction, link, generator)
        keep = np.setdiff1d(np.arange(1000), estimate.sample_indices)
        report = reconcile(alice[keep], bob[keep], config, link, estimated_rate=estimate.rate)

        assert link.pad_consumed == estimate.sample_indices.shape[0] + link.parities_exchanged
        assert report.pad_consumed == link.pad_consumed
        if report.residual_mismatch == 0:
            successes += 1
            assert set(report.error_positions) == set(np.flatnonzero(alice[keep] != bob[keep]).tolist())
    assert successes >= 95


def test_pad_ledger_identity(rng):
    """Test that pad consumption equals disclosed sample bits plus exchanged parities."""
    alice = rng.integers(0, 2, size=400, dtype=np.uint8)
    bob = flip(alice, rng.choice(400, size=12, replace=False))

    link, estimate, report = run_estimate_and_reconcile(alice, bob, pad_seed=1)

    masked_bits = sum(len(message.payload) for message in link.transcript if message.masked)
    assert link.pad_consumed == estimate.sample_indices.shape[0] + link.parities_exchanged
    assert link.pad_consumed == masked_bits
    assert report.pad_consumed == link.pad_consumed


def test_leak_confinement(rng):
    """Test that the pad changes masked payloads only: public view and corrections are pad-independent."""
    alice = rng.integers(0, 2, size=400, dtype=np.uint8)
    bob = flip(alice, rng.choice(400, size=12, replace=False))

    first_link, first_estimate, first = run_estimate_and_reconcile(alice, bob, pad_seed=1)
    second_link, second_estimate, second = run_estimate_and_reconcile(alice, bob, pad_seed=2)

    assert public_view(first_link.transcript) == public_view(second_link.transcript)
    assert first.error_positions == second.error_positions
    assert first_estimate.rate == second_estimate.rate

    plaintexts = []
    for link in (first_link, second_link):
        masked = np.concatenate(
            [np.asarray(message.payload, dtype=np.uint8) for message in link.transcript if message.masked]
        )
        plaintexts.append(masked ^ link.alice_pad.pad[:masked.shape[0]])
    assert np.array_equal(plaintexts[0], plaintexts[1])

    first_masked = [message.payload for message in first_link.transcript if message.masked]
    second_masked = [message.payload for message in second_link.transcript if message.masked]
    assert first_masked != second_masked


def test_pad_exhaustion(rng):
    """Test that a short pad aborts reconciliation."""
    alice = rng.integers(0, 2, size=200, dtype=np.uint8)

    with pytest.raises(PadExhaustedError) as exc_info:
        reconcile(alice, alice.copy(), ReconcileConfig(pass_count=4, block_sizes=[8]), open_link(5))

    assert exc_info.value.pad_length == 5


def test_pad_ledger_budget():
    """Test the planning budget flag and single use of every bit."""
    ledger = PadLedger(np.array([1, 0, 1, 1], dtype=np.uint8), budget=2)

    assert ledger.take(3).tolist() == [1, 0, 1]
    assert ledger.over_budget
    assert ledger.take(1).tolist() == [1]
    with pytest.raises(PadExhaustedError):
        ledger.take(1)


def test_log_line_format():
    """Test the transcript line layout."""
    assert ChannelMessage(1, ALICE_TO_BOB, "parity", (1,), True).log_line() == "1 A->B parity 80 masked:1"
    assert ChannelMessage(2, BOB_TO_ALICE, "verdict", (0,), False).log_line() == "2 B->A verdict 00 masked:0"
    payload = (0, 1, 0, 1, 0, 1, 0, 1, 1)
    assert ChannelMessage(3, BOB_TO_ALICE, "sample", payload, True).log_line() == "3 B->A sample 5580 masked:1"
    assert ChannelMessage(4, ALICE_TO_BOB, "mismatch", (), False).log_line() == "4 A->B mismatch - masked:0"
