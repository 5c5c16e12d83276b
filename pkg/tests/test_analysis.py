import numpy as np
import pytest

from app.models import (
    ALLOWED_LEGS,
    AttackConfig,
    AttackStrategy,
    BackendKind,
    Leg,
    MeasurementBasis,
    RunConfig,
    Variant,
)
from app.services import analysis


@pytest.mark.parametrize(
    ("strategy", "random_basis", "expected"),
    [
        (AttackStrategy.NONE, False, 0.0),
        (AttackStrategy.MEASURE_RESEND, False, 0.25),
        (AttackStrategy.MEASURE_RESEND, True, 0.25),
        (AttackStrategy.INTERCEPT_FAKE, False, 0.5),
        (AttackStrategy.ENTANGLE_MEASURE, False, 0.25),
        (AttackStrategy.PNS, False, 0.25),
    ],
)
def test_decoy_mismatch_probability(strategy, random_basis, expected):
    assert analysis.decoy_mismatch_probability(strategy, random_basis) == pytest.approx(expected)


@pytest.mark.parametrize("variant", list(Variant))
@pytest.mark.parametrize(
    "strategy",
    [
        AttackStrategy.MEASURE_RESEND,
        AttackStrategy.INTERCEPT_FAKE,
        AttackStrategy.ENTANGLE_MEASURE,
        AttackStrategy.PNS,
    ],
)
def test_validation_failure_on_the_return_leg(variant, strategy):
    probability = analysis.validation_failure_probability(strategy, variant, Leg.RETURN)
    assert probability == pytest.approx(0.5)


def test_validation_failure_on_the_distribution_leg():
    for variant in Variant:
        for strategy in (AttackStrategy.MEASURE_RESEND, AttackStrategy.INTERCEPT_FAKE):
            probability = analysis.validation_failure_probability(
                strategy, variant, Leg.DISTRIBUTION
            )
            assert probability == pytest.approx(0.5)


def test_hadamard_guesses_halve_the_validation_failure():
    probability = analysis.validation_failure_probability(
        AttackStrategy.MEASURE_RESEND, Variant.TWO_PARTY, Leg.RETURN, random_basis=True
    )
    assert probability == pytest.approx(0.25)


def test_detection_probability():
    assert analysis.detection_probability(0.25, 8) == pytest.approx(1 - 0.75**8)
    assert analysis.detection_probability(0.25, 8) == pytest.approx(0.8999, abs=1e-4)
    assert analysis.detection_probability(0.25, 0) == 0.0
    assert analysis.detection_probability(0.25, 2, 0.5, 1) == pytest.approx(1 - 0.5625 * 0.5)


def test_expected_rates_for_a_return_attack():
    config = RunConfig(
        variant=Variant.THREE_PARTY,
        m=8,
        attack=AttackConfig(strategy=AttackStrategy.MEASURE_RESEND),
        decoys=8,
        validate_k=0,
    )
    rates = analysis.expected_detection_rates(config)
    assert rates["decoy"] == pytest.approx(1 - 0.75**8)
    assert rates["detection"] == pytest.approx(rates["decoy"])
    assert rates["validation"] == 0.0


def test_distribution_attacks_face_both_validation_pools():
    config = RunConfig(
        m=4,
        attack=AttackConfig(strategy=AttackStrategy.INTERCEPT_FAKE, leg=Leg.DISTRIBUTION),
        decoys=2,
        validate_k=1,
    )
    rates = analysis.expected_detection_rates(config)
    assert rates["validation"] == pytest.approx(1 - 0.5**2)
    assert rates["detection"] == pytest.approx(1 - 0.5**2 * 0.5**2)


def test_no_attack_means_no_expected_detection():
    rates = analysis.expected_detection_rates(RunConfig(m=4))
    assert rates == {"detection": 0.0, "decoy": 0.0, "validation": 0.0}
    unguarded = RunConfig(
        m=4, security=False, attack=AttackConfig(strategy=AttackStrategy.MEASURE_RESEND)
    )
    assert analysis.expected_detection_rates(unguarded)["detection"] == 0.0


def test_standard_error():
    assert analysis.standard_error(0.5, 100) == pytest.approx(0.05)
    assert analysis.standard_error(0.0, 10) == 0.0


def test_mutual_information_of_independent_samples_is_small():
    rng = np.random.default_rng(3)
    xs = rng.integers(0, 4, size=20000)
    ys = rng.integers(0, 4, size=20000)
    assert analysis.mutual_information(xs, ys) < 0.01


def test_mutual_information_of_a_copy_is_its_entropy():
    rng = np.random.default_rng(4)
    xs = rng.integers(0, 4, size=20000)
    assert analysis.mutual_information(xs, xs) == pytest.approx(2.0, abs=0.02)
    assert analysis.mutual_information([], []) == 0.0


def test_mutual_information_needs_paired_samples():
    with pytest.raises(ValueError):
        analysis.mutual_information([0, 1], [0])


def test_total_variation_distance():
    assert analysis.total_variation_distance(np.array([0, 1, 2]), np.array([2, 1, 0])) == 0.0
    assert analysis.total_variation_distance(np.array([0, 0]), np.array([1, 1])) == 1.0
    assert analysis.total_variation_distance(
        np.array([0, 0, 1, 1]), np.array([0, 1, 1, 1])
    ) == pytest.approx(0.25)


def test_chi_square_uniformity():
    statistic, p_value = analysis.chi_square_uniformity(np.repeat(np.arange(8), 50), 8)
    assert statistic == 0.0 and p_value == pytest.approx(1.0)
    _, skewed = analysis.chi_square_uniformity(np.zeros(400, dtype=int), 8)
    assert skewed < 1e-6


def test_eve_learns_nothing_from_entangle_measure():
    attack = AttackConfig(strategy=AttackStrategy.ENTANGLE_MEASURE)
    information = analysis.estimate_eve_information(
        Variant.TWO_PARTY, 2, attack, shots=1000, seed=1
    )
    assert information < 0.01


def test_eve_learns_nothing_in_the_three_party_variant():
    attack = AttackConfig(strategy=AttackStrategy.INTERCEPT_FAKE)
    information = analysis.estimate_eve_information(
        Variant.THREE_PARTY, 2, attack, shots=1000, seed=2
    )
    assert information < 0.01


def test_eve_learns_nothing_from_measure_resend():
    attack = AttackConfig(strategy=AttackStrategy.MEASURE_RESEND)
    information = analysis.estimate_eve_information(
        Variant.TWO_PARTY, 2, attack, backend=BackendKind.STABILIZER, shots=200, seed=3
    )
    assert information < 0.02


def eve_cases():
    cases = []
    for strategy in AttackStrategy:
        if strategy == AttackStrategy.NONE:
            continue
        for leg in Leg:
            if leg not in ALLOWED_LEGS[strategy]:
                continue
            for variant in Variant:
                cases.append((strategy, leg, variant))
    return cases


@pytest.mark.parametrize(("strategy", "leg", "variant"), eve_cases())
def test_eve_learns_nothing_on_any_allowed_leg(strategy, leg, variant):
    if strategy == AttackStrategy.MEASURE_RESEND:
        attack = AttackConfig(strategy=strategy, leg=leg)
        information = analysis.estimate_eve_information(variant, 2, attack, shots=300, seed=5)
        assert information < 0.03
        return
    for readout in MeasurementBasis:
        attack = AttackConfig(strategy=strategy, leg=leg, readout_basis=readout)
        information = analysis.estimate_eve_information(variant, 2, attack, shots=2000, seed=6)
        assert information < 0.02, readout
