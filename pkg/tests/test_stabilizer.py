import numpy as np
import pytest

from app.config import settings
from app.exceptions import CircuitError, InvariantViolation
from app.services.circuits import entangle, measure_register
from app.services.stabilizer import (
    StabilizerTableau,
    tab_apply_cnot,
    tab_apply_h,
    tab_apply_x,
    tab_apply_z,
    tab_measure,
)
from app.services.statevector import DenseState


def bell_tableau(seed: int = 0) -> StabilizerTableau:
    tableau = StabilizerTableau(2, seed=seed)
    tab_apply_h(tableau, 0)
    tab_apply_cnot(tableau, 0, 1)
    return tableau


def test_fresh_qubits_measure_zero():
    tableau = StabilizerTableau(3, seed=1)
    assert [tab_measure(tableau, q) for q in range(3)] == [0, 0, 0]
    assert tableau.generators() == ["+ZII", "+IZI", "+IIZ"]


def test_x_flips_and_hzh_is_x():
    tableau = StabilizerTableau(2, seed=1)
    tab_apply_x(tableau, 0)
    tab_apply_h(tableau, 1)
    tab_apply_z(tableau, 1)
    tab_apply_h(tableau, 1)
    assert tableau.peek(0) == 1 and tableau.peek(1) == 1
    assert tab_measure(tableau, 0) == 1


def test_bell_pair_generators_and_sign():
    tableau = bell_tableau()
    assert tableau.generators() == ["+XX", "+ZZ"]
    tab_apply_z(tableau, 0)
    assert tableau.generators() == ["-XX", "+ZZ"]


def test_plus_state_is_random_until_measured():
    tableau = StabilizerTableau(1, seed=4)
    tab_apply_h(tableau, 0)
    assert tableau.peek(0) is None
    first = tab_measure(tableau, 0)
    assert tableau.peek(0) == first
    assert all(tab_measure(tableau, 0) == first for _ in range(5))


def test_bell_halves_agree():
    for seed in range(50):
        tableau = bell_tableau(seed)
        assert tab_measure(tableau, 0) == tab_measure(tableau, 1)


def test_outcomes_are_roughly_fair():
    ones = sum(tab_measure(bell_tableau(seed), 0) for seed in range(400))
    # 3 стандартные ошибки от 200
    assert abs(ones - 200) < 3 * 10


def test_entanglement_across_word_boundary():
    tableau = StabilizerTableau(0, seed=9)
    entangle(tableau, 70, ("AR", "BR"))
    assert tableau.num_qubits == 140
    assert measure_register(tableau, "AR") == measure_register(tableau, "BR")
    tableau.check_invariants()


def test_invalid_qubits_are_rejected():
    tableau = StabilizerTableau(2)
    with pytest.raises(CircuitError):
        tableau.h(2)
    with pytest.raises(CircuitError):
        tableau.cnot(0, 0)


def test_check_invariants_catches_a_broken_tableau():
    tableau = bell_tableau()
    tableau.check_invariants()
    tableau.xs[:] = 0
    with pytest.raises(InvariantViolation):
        tableau.check_invariants()


def random_gate(tableau: StabilizerTableau, rng: np.random.Generator) -> None:
    kind = int(rng.integers(0, 4))
    if kind == 3:
        control, target = rng.choice(tableau.num_qubits, size=2, replace=False)
        tab_apply_cnot(tableau, int(control), int(target))
        return
    gate = (tab_apply_h, tab_apply_x, tab_apply_z)[kind]
    gate(tableau, int(rng.integers(0, tableau.num_qubits)))


def test_debug_mode_checks_invariants_every_interval(monkeypatch):
    monkeypatch.setattr(settings, "invariant_check_interval", 5)
    tableau = StabilizerTableau(6, seed=3, debug_checks=True)
    assert tableau.check_interval == 5
    rng = np.random.default_rng(12)
    for _ in range(500):
        random_gate(tableau, rng)

    tableau.xs[:] = 0
    for _ in range(4):
        random_gate(tableau, rng)
    with pytest.raises(InvariantViolation):
        random_gate(tableau, rng)


def test_invariants_are_not_checked_outside_debug_mode():
    tableau = StabilizerTableau(3, seed=3, debug_checks=False)
    tableau.xs[:] = 0
    rng = np.random.default_rng(13)
    for _ in range(2 * tableau.check_interval):
        random_gate(tableau, rng)


def test_peek_matches_dense_state_on_random_clifford_circuits():
    rng = np.random.default_rng(23)
    for case in range(60):
        n = int(rng.integers(2, 6))
        tableau = StabilizerTableau(n, seed=case)
        dense = DenseState(n, seed=case)
        for _ in range(25):
            gate = rng.integers(0, 4)
            q = int(rng.integers(0, n))
            if gate == 0:
                tableau.h(q)
                dense.h(q)
            elif gate == 1:
                tableau.x(q)
                dense.x(q)
            elif gate == 2:
                tableau.z(q)
                dense.z(q)
            else:
                t = int((q + rng.integers(1, n)) % n)
                tableau.cnot(q, t)
                dense.cnot(q, t)
        tableau.check_invariants()
        for q in range(n):
            assert tableau.peek(q) == dense.peek(q)


def test_clone_is_independent():
    tableau = bell_tableau(seed=2)
    child = tableau.clone()
    tab_measure(child, 0)
    assert tableau.peek(0) is None
    assert child.peek(1) is not None


def test_sample_does_not_collapse():
    tableau = bell_tableau(seed=5)
    samples = tableau.sample([0, 1], 200)
    assert np.array_equal(samples[:, 0], samples[:, 1])
    assert 0 < samples[:, 0].sum() < 200
    assert tableau.peek(0) is None
