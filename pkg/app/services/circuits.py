from __future__ import annotations

from typing import Optional, Sequence

import numpy as np

from app.exceptions import CircuitError, DimensionError
from app.models import MeasurementBasis, OracleMode
from app.services.backend import QuantumBackend
from app.services.bitvec import BitVector

PAIR_REGISTERS = ("AR", "BR")
TRIPLET_REGISTERS = ("AR", "BR", "CR")


def apply_h_all(backend: QuantumBackend, register: str) -> None:
    for q in backend.layout[register]:
        backend.h(q)


def prepare_minus(backend: QuantumBackend, register: str) -> int:
    """Выделяет вспомогательный кубит в состоянии |−⟩ = H X |0⟩."""
    (q,) = backend.allocate(1, register)
    backend.x(q)
    backend.h(q)
    return q


def entangle(backend: QuantumBackend, m: int, registers: Sequence[str]) -> None:
    """
    m кортежей: j-е кубиты всех регистров в состоянии (|0…0⟩ + |1…1⟩)/√2.

    Первый регистр служит источником: H на каждом кубите, затем CNOT в остальные.
    """
    if m < 1:
        raise DimensionError(f"need at least one tuple, got m={m}")
    allocated = [backend.allocate(m, name) for name in registers]
    source, *others = allocated
    for j in range(m):
        backend.h(source[j])
        for other in others:
            backend.cnot(source[j], other[j])


def entangle_pairs(
    backend: QuantumBackend, m: int, registers: Sequence[str] = PAIR_REGISTERS
) -> None:
    entangle(backend, m, registers)


def entangle_triplets(
    backend: QuantumBackend, m: int, registers: Sequence[str] = TRIPLET_REGISTERS
) -> None:
    entangle(backend, m, registers)


def apply_phase_oracle(
    backend: QuantumBackend,
    register: str,
    secret: BitVector,
    mode: OracleMode = OracleMode.DIAGONAL,
    ancilla: Optional[str] = None,
) -> None:
    """
    |x⟩ → (−1)^{s·x} |x⟩ на регистре.

    DIAGONAL: Z на каждом кубите с s_i = 1. CIRCUIT: CNOT из этих кубитов во
    вспомогательный кубит в |−⟩ (фазовый откат y ⊕ f(x)); ancilla задаёт имя
    регистра с этим кубитом.
    """
    qubits = backend.layout[register]
    if len(qubits) != secret.length:
        raise DimensionError(
            f"secret of length {secret.length} does not match register {register!r} "
            f"of width {len(qubits)}"
        )
    if mode == OracleMode.DIAGONAL:
        for i in secret.support():
            backend.z(qubits[i])
        return
    if ancilla is None:
        raise CircuitError("circuit-mode oracle needs an ancilla register in |−⟩")
    (target,) = backend.layout[ancilla]
    for i in secret.support():
        backend.cnot(qubits[i], target)


def _rotate(backend: QuantumBackend, qubits: Sequence[int], basis: MeasurementBasis) -> None:
    if basis == MeasurementBasis.HADAMARD:
        for q in qubits:
            backend.h(q)


def measure_qubits(
    backend: QuantumBackend,
    qubits: Sequence[int],
    basis: MeasurementBasis = MeasurementBasis.COMPUTATIONAL,
) -> BitVector:
    """Измеряет кубиты по возрастанию позиции; в базисе Адамара + → 0, − → 1."""
    _rotate(backend, qubits, basis)
    return BitVector.from_bits([backend.measure(q) for q in qubits])


def measure_register(
    backend: QuantumBackend,
    register: str,
    basis: MeasurementBasis = MeasurementBasis.COMPUTATIONAL,
) -> BitVector:
    return measure_qubits(backend, backend.layout[register], basis)


def bits_to_int(bits: np.ndarray) -> np.ndarray:
    """Строки битов x_0…x_{w−1} (shots × w) → целые значения регистров."""
    weights = np.left_shift(np.int64(1), np.arange(bits.shape[1], dtype=np.int64))
    return bits.astype(np.int64) @ weights


def sample_registers(
    backend: QuantumBackend,
    registers: Sequence[str],
    shots: int,
    basis: MeasurementBasis = MeasurementBasis.COMPUTATIONAL,
) -> dict[str, np.ndarray]:
    """
    Совместная выборка значений регистров без изменения исходного состояния.

    Возвращает для каждого регистра вектор из shots целых чисел.
    """
    scratch = backend.clone()
    qubits: list[int] = []
    spans: dict[str, tuple[int, int]] = {}
    for name in registers:
        register_qubits = scratch.layout[name]
        spans[name] = (len(qubits), len(qubits) + len(register_qubits))
        qubits.extend(register_qubits)
    _rotate(scratch, qubits, basis)
    bits = scratch.sample(qubits, shots)
    return {name: bits_to_int(bits[:, start:stop]) for name, (start, stop) in spans.items()}
