from __future__ import annotations

import logging
from math import sqrt
from typing import Mapping, Optional

import numpy as np

from app.config import settings
from app.exceptions import CircuitError, InvariantViolation, ResourceError
from app.services.backend import RegisterLayout, as_seed_sequence, check_pair, check_qubit

logger = logging.getLogger(__name__)

_SQRT2_INV = 1 / sqrt(2)
NORM_TOLERANCE = 1e-9
DUMP_THRESHOLD = 1e-12


class DenseState:
    """
    Точный вектор состояния n кубитов.

    Базисный индекс k кодирует кубит q битом q (little-endian), поэтому в
    тензорной форме reshape((2,)*n) кубиту q соответствует ось n−1−q.
    Новые кубиты добавляются старшими разрядами в состоянии |0⟩.
    """

    def __init__(
        self,
        num_qubits: int,
        *,
        seed: np.random.SeedSequence | int | None = None,
        qubit_cap: Optional[int] = None,
        debug_checks: Optional[bool] = None,
        amplitudes: Optional[np.ndarray] = None,
        layout: Optional[RegisterLayout] = None,
    ) -> None:
        self.qubit_cap = qubit_cap if qubit_cap is not None else settings.dense_qubit_cap
        self.debug_checks = settings.debug_checks if debug_checks is None else debug_checks
        self._check_cap(num_qubits)
        self._seed = as_seed_sequence(seed)
        # Philox: транскрипты воспроизводимы по seed
        self.rng = np.random.Generator(np.random.Philox(self._seed))
        self._n = num_qubits
        if amplitudes is None:
            amplitudes = np.zeros(1 << num_qubits, dtype=np.complex128)
            amplitudes[0] = 1.0
        elif amplitudes.shape != (1 << num_qubits,):
            raise CircuitError(f"expected {1 << num_qubits} amplitudes, got {amplitudes.shape}")
        self._amps = amplitudes.astype(np.complex128, copy=True)
        self.layout = layout if layout is not None else RegisterLayout()

    @classmethod
    def init_basis(
        cls,
        num_qubits: int,
        basis_index: int,
        *,
        seed: np.random.SeedSequence | int | None = None,
        qubit_cap: Optional[int] = None,
    ) -> DenseState:
        state = cls(num_qubits, seed=seed, qubit_cap=qubit_cap)
        if not 0 <= basis_index < (1 << num_qubits):
            raise CircuitError(f"basis index {basis_index} out of range for {num_qubits} qubits")
        state._amps[0] = 0.0
        state._amps[basis_index] = 1.0
        return state

    @property
    def num_qubits(self) -> int:
        return self._n

    @property
    def amplitudes(self) -> np.ndarray:
        view = self._amps.view()
        view.flags.writeable = False
        return view

    def _check_cap(self, num_qubits: int) -> None:
        if num_qubits > self.qubit_cap:
            raise ResourceError(
                f"dense state of {num_qubits} qubits exceeds the cap of {self.qubit_cap}"
            )

    def _tensor(self) -> np.ndarray:
        return self._amps.reshape((2,) * self._n) if self._n else self._amps

    def _axis(self, q: int) -> int:
        return self._n - 1 - q

    def _slice(self, q: int, bit: int) -> tuple:
        index: list = [slice(None)] * self._n
        index[self._axis(q)] = bit
        return tuple(index)

    def _after_gate(self) -> None:
        if self.debug_checks:
            self.check_norm()

    def check_norm(self) -> None:
        norm = float(np.vdot(self._amps, self._amps).real)
        if abs(norm - 1.0) > NORM_TOLERANCE:
            raise InvariantViolation(f"state norm drifted to {norm:.12f}")

    def allocate(self, count: int, register: str) -> list[int]:
        if count < 0:
            raise CircuitError(f"cannot allocate {count} qubits")
        self._check_cap(self._n + count)
        grown = np.zeros(1 << (self._n + count), dtype=np.complex128)
        grown[: self._amps.size] = self._amps
        qubits = list(range(self._n, self._n + count))
        self._amps = grown
        self._n += count
        self.layout.extend(register, qubits)
        return qubits

    def h(self, q: int) -> None:
        check_qubit(q, self._n)
        psi = self._tensor()
        zero, one = self._slice(q, 0), self._slice(q, 1)
        a = psi[zero].copy()
        b = psi[one].copy()
        psi[zero] = (a + b) * _SQRT2_INV
        psi[one] = (a - b) * _SQRT2_INV
        self._after_gate()

    def x(self, q: int) -> None:
        check_qubit(q, self._n)
        psi = self._tensor()
        psi[...] = np.flip(psi, axis=self._axis(q)).copy()
        self._after_gate()

    def z(self, q: int) -> None:
        check_qubit(q, self._n)
        self._tensor()[self._slice(q, 1)] *= -1
        self._after_gate()

    def cnot(self, control: int, target: int) -> None:
        check_pair(control, target, self._n)
        active = self._tensor()[self._slice(control, 1)]
        # ось цели внутри подтензора с фиксированным контролем
        axis = self._axis(target)
        if axis > self._axis(control):
            axis -= 1
        active[...] = np.flip(active, axis=axis).copy()
        self._after_gate()

    def probability_of_one(self, q: int) -> float:
        check_qubit(q, self._n)
        ones = self._tensor()[self._slice(q, 1)]
        return float(np.sum(np.abs(ones) ** 2))

    def project(self, q: int, outcome: int) -> float:
        """Проецирует кубит на |outcome⟩ и нормирует; возвращает вероятность ветви."""
        p_one = self.probability_of_one(q)
        probability = p_one if outcome else 1.0 - p_one
        self._tensor()[self._slice(q, 1 - outcome)] = 0.0
        if probability > DUMP_THRESHOLD:
            self._amps /= sqrt(probability)
        return probability

    def measure(self, q: int) -> int:
        p_one = self.probability_of_one(q)
        outcome = int(self.rng.random() < p_one)
        self.project(q, outcome)
        self.check_norm()
        return outcome

    def peek(self, q: int) -> Optional[int]:
        p_one = self.probability_of_one(q)
        if p_one < NORM_TOLERANCE:
            return 0
        if p_one > 1.0 - NORM_TOLERANCE:
            return 1
        return None

    def sample(self, qubits: list[int], shots: int) -> np.ndarray:
        """Совместная выборка исходов без коллапса: массив shots × len(qubits)."""
        for q in qubits:
            check_qubit(q, self._n)
        probabilities = np.abs(self._amps) ** 2
        probabilities /= probabilities.sum()
        indices = self.rng.choice(probabilities.size, size=shots, p=probabilities)
        columns = [(indices >> q) & 1 for q in qubits]
        if not columns:
            return np.zeros((shots, 0), dtype=np.uint8)
        return np.stack(columns, axis=1).astype(np.uint8)

    def clone(self) -> DenseState:
        child = self._seed.spawn(1)[0]
        return DenseState(
            self._n,
            seed=child,
            qubit_cap=self.qubit_cap,
            debug_checks=self.debug_checks,
            amplitudes=self._amps,
            layout=self.layout.copy(),
        )

    def overlap(self, other: DenseState) -> float:
        """|⟨φ|ψ⟩|, то есть сравнение с точностью до глобальной фазы."""
        if other.num_qubits != self._n:
            raise CircuitError(f"cannot compare {self._n} and {other.num_qubits} qubit states")
        return float(abs(np.vdot(other._amps, self._amps)))

    def expectation(self, paulis: Mapping[int, str]) -> float:
        """⟨ψ|P|ψ⟩ для произведения X/Y/Z на указанных кубитах."""
        scratch = self.clone()
        phase = 1.0 + 0.0j
        for q, label in paulis.items():
            match label.upper():
                case "X":
                    scratch.x(q)
                case "Z":
                    scratch.z(q)
                case "Y":
                    # Y = iXZ
                    scratch.z(q)
                    scratch.x(q)
                    phase *= 1j
                case "I":
                    pass
                case _:
                    raise CircuitError(f"unknown Pauli label {label!r}")
        return float((phase * np.vdot(self._amps, scratch._amps)).real)

    def dump(self, threshold: float = DUMP_THRESHOLD) -> list[tuple[int, float, float]]:
        nonzero = np.flatnonzero(np.abs(self._amps) > threshold)
        return [(int(k), float(self._amps[k].real), float(self._amps[k].imag)) for k in nonzero]

    def dump_text(self, threshold: float = DUMP_THRESHOLD) -> str:
        return "\n".join(f"{k} {re:+.12f} {im:+.12f}" for k, re, im in self.dump(threshold))


def init_basis(num_qubits: int, basis_index: int, **kwargs) -> DenseState:
    return DenseState.init_basis(num_qubits, basis_index, **kwargs)


def apply_h(state: DenseState, q: int) -> None:
    state.h(q)


def apply_cnot(state: DenseState, control: int, target: int) -> None:
    state.cnot(control, target)


def prepare_phi_plus_pairs(
    m: int,
    *,
    seed: np.random.SeedSequence | int | None = None,
    qubit_cap: Optional[int] = None,
) -> DenseState:
    from app.services.circuits import entangle_pairs

    state = DenseState(0, seed=seed, qubit_cap=qubit_cap)
    entangle_pairs(state, m)
    return state


def prepare_ghz3_triplets(
    m: int,
    *,
    seed: np.random.SeedSequence | int | None = None,
    qubit_cap: Optional[int] = None,
) -> DenseState:
    from app.services.circuits import entangle_triplets

    state = DenseState(0, seed=seed, qubit_cap=qubit_cap)
    entangle_triplets(state, m)
    return state
