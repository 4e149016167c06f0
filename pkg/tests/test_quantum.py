import itertools
from fractions import Fraction
import pytest
import numpy as np
import sympy as sp
from scipy import stats

from app.exceptions import ParameterError
from app.models.schemas import SourceModel, SourceVariant
from app.services.quantum import (
    OUTCOMES,
    Basis,
    bell_overlap,
    bell_sets,
    exact_amplitude_oracle,
    gamma_of,
    outcome_dist,
    sample_transmission,
)

ALL_CONFIGURATIONS = list(itertools.product(range(4), Basis, Basis))


def test_bell_sets():
    """Test the agree/disagree sets and that they partition the Bell indices."""
    assert bell_sets(Basis.PLUS) == ({0, 1}, {2, 3})
    assert bell_sets(Basis.TIMES) == ({0, 2}, {1, 3})
    for basis in Basis:
        agree, disagree = bell_sets(basis)
        assert agree | disagree == {0, 1, 2, 3}
        assert not agree & disagree


def test_outcome_dist_examples():
    """Test three hand-checked distributions."""
    half, quarter, zero = Fraction(1, 2), Fraction(1, 4), Fraction(0)

    assert outcome_dist(0, Basis.PLUS, Basis.PLUS) == {(0, 0): half, (0, 1): zero, (1, 0): zero, (1, 1): half}
    assert outcome_dist(3, Basis.TIMES, Basis.TIMES) == {(0, 0): zero, (0, 1): half, (1, 0): half, (1, 1): zero}
    assert set(outcome_dist(1, Basis.PLUS, Basis.TIMES).values()) == {quarter}


def test_exact_amplitude_examples():
    """Test amplitudes read off the ket definitions."""
    assert exact_amplitude_oracle(0, Basis.PLUS, Basis.PLUS, 0, 0) == 1 / sp.sqrt(2)
    assert exact_amplitude_oracle(3, Basis.PLUS, Basis.PLUS, 0, 0) == 0
    assert abs(exact_amplitude_oracle(2, Basis.PLUS, Basis.TIMES, 0, 1)) == sp.Rational(1, 2)


@pytest.mark.parametrize("c, a, b", ALL_CONFIGURATIONS)
def test_outcome_dist_matches_squared_amplitudes(c, a, b):
    """Test every (c, a, b) distribution against squared symbolic amplitudes, exactly."""
    dist = outcome_dist(c, a, b)

    assert sum(dist.values()) == 1
    for alpha, beta in OUTCOMES:
        squared = sp.nsimplify(exact_amplitude_oracle(c, a, b, alpha, beta) ** 2)
        assert squared == sp.Rational(dist[(alpha, beta)].numerator, dist[(alpha, beta)].denominator)


def test_sample_transmission_ideal_source_agrees_on_equal_bases():
    """Test that |Phi+> never disagrees when the bases match."""
    record = sample_transmission(SourceModel(), 5_000, np.random.default_rng(1))
    equal = record.a == record.b

    assert equal.any()
    assert np.array_equal(record.alpha[equal], record.beta[equal])
    assert record.eve_log is None


def test_sample_transmission_singlet_always_disagrees():
    """Test that the singlet always disagrees when the bases match."""
    source = SourceModel(variant=SourceVariant.SCRIPTED, script=(3,))
    record = sample_transmission(source, 5_000, np.random.default_rng(2))
    equal = record.a == record.b

    assert (record.alpha[equal] != record.beta[equal]).all()
    assert (record.bell == 3).all()


def test_sample_transmission_bases_are_uniform():
    """Test i.i.d. uniform bases via a binomial tail."""
    n = 100_000
    record = sample_transmission(SourceModel(), n, np.random.default_rng(3))
    for bases in (record.a, record.b):
        assert stats.binomtest(int(bases.sum()), n, 0.5).pvalue > 1e-4


@pytest.mark.slow
def test_sampler_fidelity():
    """Test empirical frequencies within total variation 0.01 for all 64 (c, a, b)."""
    n = 100_000
    for c in range(4):
        source = SourceModel(variant=SourceVariant.SCRIPTED, script=(c,))
        record = sample_transmission(source, n * 4, np.random.default_rng(100 + c))
        for a, b in itertools.product(Basis, Basis):
            mask = (record.a == a) & (record.b == b)
            alphas, betas = record.alpha[mask], record.beta[mask]
            exact = outcome_dist(c, a, b)
            tv = 0.5 * sum(
                abs(float(np.mean((alphas == alpha) & (betas == beta))) - float(exact[(alpha, beta)]))
                for alpha, beta in OUTCOMES
            )
            assert mask.sum() > 90_000
            assert tv < 0.01


def test_intercept_resend_disagreement_rate():
    """Test that full interception gives a 1/4 disagreement rate on equal bases."""
    source = SourceModel(variant=SourceVariant.INTERCEPT_RESEND, interception_probability=1.0)
    record = sample_transmission(source, 100_000, np.random.default_rng(4))
    equal = record.a == record.b
    rate = float(np.mean(record.alpha[equal] != record.beta[equal]))

    assert rate == pytest.approx(0.25, abs=0.01)
    assert record.eve_log is not None
    assert record.eve_log.indices.shape[0] == 100_000
    assert (record.bell == -1).all()


def test_intercept_resend_exact_rate_by_enumeration():
    """Test the 1/4 rate by enumerating Eve's basis and outcome with the amplitude oracle."""
    total = sp.Integer(0)
    for shared, eve in itertools.product(Basis, Basis):
        for eve_bit in (0, 1):
            # Eve's outcome probability on |Phi+>, then both parties read the product state
            p_eve = sum(exact_amplitude_oracle(0, eve, eve, eve_bit, x) ** 2 for x in (0, 1))
            if shared == eve:
                p_disagree = sp.Integer(0)
            else:
                p_disagree = sp.Rational(1, 2)
            total += sp.Rational(1, 4) * p_eve * p_disagree
    assert sp.nsimplify(total) == sp.Rational(1, 4)


def test_partial_interception_only_touches_logged_pairs():
    """Test that non-intercepted pairs keep their Bell index."""
    source = SourceModel(variant=SourceVariant.INTERCEPT_RESEND, interception_probability=0.3)
    record = sample_transmission(source, 10_000, np.random.default_rng(5))
    intercepted = np.zeros(10_000, dtype=bool)
    intercepted[record.eve_log.indices] = True

    assert (record.bell[intercepted] == -1).all()
    assert (record.bell[~intercepted] == 0).all()
    assert intercepted.mean() == pytest.approx(0.3, abs=0.02)


def test_sample_transmission_is_deterministic():
    """Test that the same seed gives a bit-identical record."""
    source = SourceModel.bell_diagonal_delta(0.1)
    first = sample_transmission(source, 2_000, np.random.default_rng(6))
    second = sample_transmission(source, 2_000, np.random.default_rng(6))

    for field in ("a", "b", "alpha", "beta", "bell"):
        assert np.array_equal(getattr(first, field), getattr(second, field))


def test_sample_transmission_rejects_empty():
    """Test that n must be positive."""
    with pytest.raises(ParameterError):
        sample_transmission(SourceModel(), 0, np.random.default_rng(0))


def test_gamma_of():
    """Test the mapping and its precondition."""
    assert gamma_of([1, 2], [Basis.PLUS, Basis.TIMES]).tolist() == [1, 1]
    assert gamma_of([0, 0, 0], [Basis.PLUS, Basis.TIMES, Basis.PLUS]).tolist() == [0, 0, 0]

    with pytest.raises(ParameterError):
        gamma_of([1], [Basis.TIMES])


def test_bell_overlap_examples():
    """Test single-pair and zero-exponent overlaps."""
    assert bell_overlap([0], [Basis.PLUS], [0]) == 1 / sp.sqrt(2)
    assert bell_overlap([1], [Basis.PLUS], [1]) == -1 / sp.sqrt(2)
    assert bell_overlap([0, 0], [Basis.PLUS, Basis.TIMES], [1, 2]) == sp.Rational(1, 2)


@pytest.mark.parametrize("r", [1, 2, 3])
def test_bell_overlap_identity_exhaustive(r):
    """Test the overlap identity against per-pair amplitudes for every valid configuration."""
    for bases in itertools.product(Basis, repeat=r):
        allowed = [sorted(bell_sets(a)[0]) for a in bases]
        for bells in itertools.product(*allowed):
            for alphas in itertools.product((0, 1), repeat=r):
                product = sp.Integer(1)
                for c, a, alpha in zip(bells, bases, alphas):
                    product *= exact_amplitude_oracle(c, a, a, alpha, alpha)
                assert sp.simplify(bell_overlap(alphas, bases, bells) - product) == 0
