from math import sqrt

import numpy as np
import pytest

from app.exceptions import CircuitError, DimensionError, InvariantViolation, ResourceError
from app.models import MeasurementBasis, OracleMode
from app.services.bitvec import BitVector, inner_product_mod2
from app.services.circuits import (
    apply_h_all,
    apply_phase_oracle,
    measure_register,
    prepare_minus,
)
from app.services.statevector import (
    DenseState,
    apply_cnot,
    apply_h,
    init_basis,
    prepare_ghz3_triplets,
    prepare_phi_plus_pairs,
)

INV_SQRT2 = 1 / sqrt(2)


def random_state(n: int, seed: int) -> DenseState:
    rng = np.random.default_rng(seed)
    amps = rng.normal(size=1 << n) + 1j * rng.normal(size=1 << n)
    amps /= np.linalg.norm(amps)
    state = DenseState(n, seed=seed, amplitudes=amps)
    state.layout.add("R", range(n))
    return state


def test_init_basis():
    assert np.allclose(init_basis(1, 0).amplitudes, [1, 0])
    assert np.allclose(init_basis(2, 3).amplitudes, [0, 0, 0, 1])
    state = init_basis(3, 5)
    assert state.dump() == [(5, 1.0, 0.0)]


def test_init_basis_over_cap_is_a_resource_error():
    with pytest.raises(ResourceError):
        init_basis(5, 0, qubit_cap=4)


def test_hadamard_on_zero_gives_plus():
    state = init_basis(1, 0)
    apply_h(state, 0)
    assert np.allclose(state.amplitudes, [INV_SQRT2, INV_SQRT2])


def test_hadamard_is_an_involution():
    state = random_state(4, 3)
    before = state.clone()
    for q in range(4):
        state.h(q)
        state.h(q)
    assert state.overlap(before) == pytest.approx(1.0, abs=1e-9)


def test_hadamard_transform_signs_follow_inner_product():
    # |x⟩ с x = 10: кубит 1 в |1⟩
    state = init_basis(2, 0b10)
    state.layout.add("R", [0, 1])
    apply_h_all(state, "R")
    assert np.allclose(state.amplitudes, 0.5 * np.array([1, 1, -1, -1]))


def test_hadamard_identity_for_all_basis_states():
    for m in range(1, 7):
        for x in range(1 << m):
            state = init_basis(m, x)
            for q in range(m):
                state.h(q)
            x_bits = BitVector(m, x)
            signs = [(-1) ** inner_product_mod2(BitVector(m, z), x_bits) for z in range(1 << m)]
            expected = np.array(signs) / sqrt(1 << m)
            assert np.allclose(state.amplitudes, expected, atol=1e-9)


def test_cnot_examples():
    state = init_basis(2, 0b01)  # контроль q0 = 1
    apply_cnot(state, 0, 1)
    assert state.dump() == [(0b11, 1.0, 0.0)]
    idle = init_basis(2, 0b10)
    apply_cnot(idle, 0, 1)
    assert idle.dump() == [(0b10, 1.0, 0.0)]


def test_cnot_twice_is_identity():
    state = random_state(4, 5)
    before = state.clone()
    state.cnot(2, 0)
    state.cnot(2, 0)
    assert state.overlap(before) == pytest.approx(1.0, abs=1e-9)


def test_cnot_rejects_equal_indices():
    with pytest.raises(CircuitError):
        init_basis(2, 0).cnot(1, 1)
    with pytest.raises(CircuitError):
        init_basis(2, 0).h(2)


def test_gates_preserve_norm():
    state = random_state(5, 9)
    state.debug_checks = True
    for q in range(5):
        state.h(q)
        state.z(q)
        state.x(q)
        state.cnot(q, (q + 1) % 5)
    state.check_norm()


def test_norm_drift_is_an_invariant_violation():
    state = DenseState(1, amplitudes=np.array([1.0, 1.0]))
    with pytest.raises(InvariantViolation):
        state.check_norm()


def test_phi_plus_preparation():
    state = prepare_phi_plus_pairs(1)
    assert np.allclose(state.amplitudes, [INV_SQRT2, 0, 0, INV_SQRT2])
    assert state.layout["AR"] == [0] and state.layout["BR"] == [1]


def test_ghz3_preparation():
    state = prepare_ghz3_triplets(1)
    expected = np.zeros(8)
    expected[0] = expected[7] = INV_SQRT2
    assert np.allclose(state.amplitudes, expected)


def test_two_pairs_expand_to_four_terms():
    state = prepare_phi_plus_pairs(2)
    ar, br = state.layout["AR"], state.layout["BR"]
    indices = [k for k, _, _ in state.dump()]
    assert len(indices) == 4
    for k in indices:
        a = sum(((k >> q) & 1) << i for i, q in enumerate(ar))
        b = sum(((k >> q) & 1) << i for i, q in enumerate(br))
        assert a == b
    assert np.allclose(np.abs(state.amplitudes[indices]), 0.5)


def test_measure_register_computational_and_hadamard():
    state = init_basis(2, 3)
    state.layout.add("R", [0, 1])
    assert measure_register(state, "R").render() == "11"
    plus = init_basis(1, 0)
    plus.layout.add("P", [0])
    plus.h(0)
    assert measure_register(plus, "P", MeasurementBasis.HADAMARD).render() == "0"


def test_both_halves_of_phi_plus_agree():
    for seed in range(50):
        state = prepare_phi_plus_pairs(3, seed=seed)
        assert measure_register(state, "AR") == measure_register(state, "BR")


def test_measurement_is_deterministic_per_seed():
    first = prepare_phi_plus_pairs(4, seed=42)
    second = prepare_phi_plus_pairs(4, seed=42)
    assert measure_register(first, "AR") == measure_register(second, "AR")


def test_phase_oracle_examples():
    state = random_state(3, 2)
    before = state.clone()
    apply_phase_oracle(state, "R", BitVector.zeros(3))
    assert state.overlap(before) == pytest.approx(1.0, abs=1e-12)

    single = init_basis(1, 0)
    single.layout.add("R", [0])
    single.h(0)
    apply_phase_oracle(single, "R", BitVector.parse("1"))
    assert np.allclose(single.amplitudes, [INV_SQRT2, -INV_SQRT2])


def test_phase_oracle_width_mismatch():
    state = random_state(3, 1)
    with pytest.raises(DimensionError):
        apply_phase_oracle(state, "R", BitVector.parse("10"))


def test_diagonal_and_circuit_oracles_agree():
    rng = np.random.default_rng(17)
    for case in range(100):
        m = int(rng.integers(1, 7))
        secret = BitVector.random(m, rng)
        diagonal = random_state(m, case)
        circuit = diagonal.clone()
        prepare_minus(diagonal, "AQ")
        prepare_minus(circuit, "AQ")
        apply_phase_oracle(diagonal, "R", secret, OracleMode.DIAGONAL)
        apply_phase_oracle(circuit, "R", secret, OracleMode.CIRCUIT, "AQ")
        assert circuit.overlap(diagonal) >= 1 - 1e-9


def test_circuit_oracle_needs_an_ancilla():
    with pytest.raises(CircuitError):
        apply_phase_oracle(random_state(2, 0), "R", BitVector.parse("11"), OracleMode.CIRCUIT)


def test_expectation_and_sampling():
    state = prepare_phi_plus_pairs(1, seed=3)
    assert state.expectation({0: "X", 1: "X"}) == pytest.approx(1.0)
    assert state.expectation({0: "Z", 1: "Z"}) == pytest.approx(1.0)
    assert state.expectation({0: "Y", 1: "Y"}) == pytest.approx(-1.0)
    samples = state.sample([0, 1], 500)
    assert np.array_equal(samples[:, 0], samples[:, 1])
    assert state.num_qubits == 2 and np.allclose(np.abs(state.amplitudes[[0, 3]]), INV_SQRT2)


def test_dump_text_lists_nonzero_amplitudes():
    text = prepare_phi_plus_pairs(1).dump_text()
    lines = text.splitlines()
    assert [line.split()[0] for line in lines] == ["0", "3"]
