from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Optional, Protocol, Self

import numpy as np

from app.exceptions import CircuitError, InvariantViolation
from app.models import BackendKind

EVE_REGISTER = "EVE"


@dataclass(slots=True)
class RegisterLayout:
    """
    Именованные регистры → упорядоченные индексы кубитов.

    Позиция i внутри регистра соответствует биту x_i. Регистры не пересекаются
    и вместе покрывают все выделенные кубиты.
    """

    registers: dict[str, list[int]] = field(default_factory=dict)

    def add(self, name: str, qubits: Iterable[int]) -> None:
        if name in self.registers:
            raise CircuitError(f"register {name!r} already exists")
        self.registers[name] = list(qubits)

    def extend(self, name: str, qubits: Iterable[int]) -> None:
        self.registers.setdefault(name, []).extend(qubits)

    def rename(self, old: str, new: str) -> None:
        if old not in self.registers:
            raise CircuitError(f"unknown register {old!r}")
        if new in self.registers:
            raise CircuitError(f"register {new!r} already exists")
        self.registers = {
            (new if name == old else name): qubits for name, qubits in self.registers.items()
        }

    def reassign(self, name: str, position: int, qubit: int, *, displaced_to: str) -> None:
        """Ставит qubit на позицию регистра, вытесненный кубит уходит в displaced_to."""
        target = self[name]
        displaced = target[position]
        if displaced == qubit:
            return
        owner = self.owner_of(qubit)
        if owner is not None:
            self.registers[owner].remove(qubit)
        target[position] = qubit
        self.registers.setdefault(displaced_to, []).append(displaced)

    def owner_of(self, qubit: int) -> Optional[str]:
        for name, qubits in self.registers.items():
            if qubit in qubits:
                return name
        return None

    def width(self, name: str) -> int:
        return len(self[name])

    def names(self) -> list[str]:
        return list(self.registers)

    def validate(self, num_qubits: int) -> None:
        seen: list[int] = [q for qubits in self.registers.values() for q in qubits]
        if len(seen) != len(set(seen)):
            raise InvariantViolation("registers overlap")
        if sorted(seen) != list(range(num_qubits)):
            raise InvariantViolation(
                f"registers cover {len(set(seen))} qubits, backend holds {num_qubits}"
            )

    def copy(self) -> RegisterLayout:
        return RegisterLayout({name: list(qubits) for name, qubits in self.registers.items()})

    def __contains__(self, name: object) -> bool:
        return name in self.registers

    def __getitem__(self, name: str) -> list[int]:
        try:
            return self.registers[name]
        except KeyError:
            raise CircuitError(f"unknown register {name!r}") from None


class QuantumBackend(Protocol):
    """Общий интерфейс плотного и стабилизаторного бэкендов."""

    layout: RegisterLayout

    @property
    def num_qubits(self) -> int: ...

    def allocate(self, count: int, register: str) -> list[int]: ...

    def h(self, q: int) -> None: ...

    def x(self, q: int) -> None: ...

    def z(self, q: int) -> None: ...

    def cnot(self, control: int, target: int) -> None: ...

    def measure(self, q: int) -> int: ...

    def peek(self, q: int) -> Optional[int]: ...

    def clone(self) -> Self: ...

    def sample(self, qubits: list[int], shots: int) -> np.ndarray: ...


def as_seed_sequence(seed: np.random.SeedSequence | int | None) -> np.random.SeedSequence:
    return seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(seed)


def check_qubit(q: int, num_qubits: int) -> None:
    if not 0 <= q < num_qubits:
        raise CircuitError(f"qubit {q} out of range for {num_qubits} qubits")


def check_pair(control: int, target: int, num_qubits: int) -> None:
    check_qubit(control, num_qubits)
    check_qubit(target, num_qubits)
    if control == target:
        raise CircuitError(f"control and target are the same qubit {control}")


def create_backend(
    kind: BackendKind,
    seed: np.random.SeedSequence,
    *,
    qubit_cap: Optional[int] = None,
    debug_checks: Optional[bool] = None,
) -> QuantumBackend:
    # локальные импорты: модули бэкендов сами импортируют RegisterLayout отсюда
    if kind == BackendKind.DENSE:
        from app.services.statevector import DenseState

        return DenseState(0, seed=seed, qubit_cap=qubit_cap, debug_checks=debug_checks)
    from app.services.stabilizer import StabilizerTableau

    return StabilizerTableau(0, seed=seed, debug_checks=debug_checks)
