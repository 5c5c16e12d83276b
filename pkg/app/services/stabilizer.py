"""
Стабилизаторный бэкенд: табло Ааронсона–Готтесмана с упакованными строками.

Строки 0…n−1 хранят дестабилизаторы, n…2n−1 стабилизаторы. X- и Z-части каждой
строки лежат в словах uint64 (кубит q хранится в бите q % 64 слова q // 64), знак хранится в
отдельном векторе. Вентили обновляют один столбец сразу во всех строках,
измерение перемножает строки векторно через bitwise_count.
"""
from __future__ import annotations

import logging
from typing import Optional

import numpy as np

from app.config import settings
from app.exceptions import CircuitError, InvariantViolation
from app.services.backend import RegisterLayout, as_seed_sequence, check_pair, check_qubit

logger = logging.getLogger(__name__)

WORD_BITS = 64
_ONE = np.uint64(1)


def _words(num_qubits: int) -> int:
    return max(1, (num_qubits + WORD_BITS - 1) // WORD_BITS)


def _phase_exponent(x1: np.ndarray, z1: np.ndarray, x2: np.ndarray, z2: np.ndarray) -> np.ndarray:
    """
    Σ_j g(x1_j, z1_j, x2_j, z2_j) даёт степень i при умножении P1·P2, по строкам.

    Аргументы: упакованные строки (последняя ось по словам), P1 транслируется.
    """
    y1 = x1 & z1
    x_only = x1 & ~z1
    z_only = ~x1 & z1
    plus = (y1 & z2 & ~x2) | (x_only & z2 & x2) | (z_only & x2 & ~z2)
    minus = (y1 & x2 & ~z2) | (x_only & z2 & ~x2) | (z_only & x2 & z2)
    return (
        np.bitwise_count(plus).sum(axis=-1, dtype=np.int64)
        - np.bitwise_count(minus).sum(axis=-1, dtype=np.int64)
    )


def _reduce_product(
    xs: np.ndarray, zs: np.ndarray, exponents: np.ndarray
) -> tuple[np.ndarray, np.ndarray, int]:
    """Произведение набора попарно коммутирующих строк деревом попарных умножений."""
    while xs.shape[0] > 1:
        odd = xs.shape[0] % 2
        if odd:
            tail = (xs[-1:], zs[-1:], exponents[-1:])
            xs, zs, exponents = xs[:-1], zs[:-1], exponents[:-1]
        left_x, right_x = xs[0::2], xs[1::2]
        left_z, right_z = zs[0::2], zs[1::2]
        exponents = (
            exponents[0::2] + exponents[1::2] + _phase_exponent(left_x, left_z, right_x, right_z)
        ) % 4
        xs, zs = left_x ^ right_x, left_z ^ right_z
        if odd:
            xs = np.concatenate([xs, tail[0]])
            zs = np.concatenate([zs, tail[1]])
            exponents = np.concatenate([exponents, tail[2]])
    return xs[0], zs[0], int(exponents[0]) % 4


class StabilizerTableau:
    def __init__(
        self,
        num_qubits: int,
        *,
        seed: np.random.SeedSequence | int | None = None,
        debug_checks: Optional[bool] = None,
        layout: Optional[RegisterLayout] = None,
    ) -> None:
        self._seed = as_seed_sequence(seed)
        self.rng = np.random.Generator(np.random.Philox(self._seed))
        self.debug_checks = settings.debug_checks if debug_checks is None else debug_checks
        self.check_interval = settings.invariant_check_interval
        self.layout = layout if layout is not None else RegisterLayout()
        self._n = num_qubits
        words = _words(num_qubits)
        self.xs = np.zeros((2 * num_qubits, words), dtype=np.uint64)
        self.zs = np.zeros((2 * num_qubits, words), dtype=np.uint64)
        self.signs = np.zeros(2 * num_qubits, dtype=np.uint8)
        for q in range(num_qubits):
            word, bit = divmod(q, WORD_BITS)
            self.xs[q, word] |= _ONE << np.uint64(bit)
            self.zs[num_qubits + q, word] |= _ONE << np.uint64(bit)
        self._operations = 0

    @property
    def num_qubits(self) -> int:
        return self._n

    def _column(self, table: np.ndarray, q: int) -> np.ndarray:
        word, bit = divmod(q, WORD_BITS)
        return ((table[:, word] >> np.uint64(bit)) & _ONE).astype(np.uint8)

    def _toggle(self, table: np.ndarray, q: int, rows: np.ndarray) -> None:
        word, bit = divmod(q, WORD_BITS)
        table[:, word] ^= rows.astype(np.uint64) << np.uint64(bit)

    def _after_operation(self) -> None:
        self._operations += 1
        if self.debug_checks and self._operations % self.check_interval == 0:
            self.check_invariants()

    def allocate(self, count: int, register: str) -> list[int]:
        if count < 0:
            raise CircuitError(f"cannot allocate {count} qubits")
        old, new = self._n, self._n + count
        words = _words(new)
        xs = np.zeros((2 * new, words), dtype=np.uint64)
        zs = np.zeros((2 * new, words), dtype=np.uint64)
        signs = np.zeros(2 * new, dtype=np.uint8)
        old_words = self.xs.shape[1]
        # дестабилизаторы: старые строки, затем X новых кубитов
        xs[:old, :old_words] = self.xs[:old]
        zs[:old, :old_words] = self.zs[:old]
        signs[:old] = self.signs[:old]
        # стабилизаторы: старые строки, затем Z новых кубитов
        xs[new : new + old, :old_words] = self.xs[old:]
        zs[new : new + old, :old_words] = self.zs[old:]
        signs[new : new + old] = self.signs[old:]
        for q in range(old, new):
            word, bit = divmod(q, WORD_BITS)
            xs[q, word] |= _ONE << np.uint64(bit)
            zs[new + q, word] |= _ONE << np.uint64(bit)
        self.xs, self.zs, self.signs = xs, zs, signs
        self._n = new
        qubits = list(range(old, new))
        self.layout.extend(register, qubits)
        return qubits

    def h(self, q: int) -> None:
        check_qubit(q, self._n)
        x_col, z_col = self._column(self.xs, q), self._column(self.zs, q)
        self.signs ^= x_col & z_col
        swap = x_col ^ z_col
        self._toggle(self.xs, q, swap)
        self._toggle(self.zs, q, swap)
        self._after_operation()

    def x(self, q: int) -> None:
        check_qubit(q, self._n)
        self.signs ^= self._column(self.zs, q)
        self._after_operation()

    def z(self, q: int) -> None:
        check_qubit(q, self._n)
        self.signs ^= self._column(self.xs, q)
        self._after_operation()

    def cnot(self, control: int, target: int) -> None:
        check_pair(control, target, self._n)
        xc, zc = self._column(self.xs, control), self._column(self.zs, control)
        xt, zt = self._column(self.xs, target), self._column(self.zs, target)
        self.signs ^= xc & zt & (xt ^ zc ^ 1)
        self._toggle(self.xs, target, xc)
        self._toggle(self.zs, control, zt)
        self._after_operation()

    def _deterministic_outcome(self, q: int) -> int:
        destabilizers = np.flatnonzero(self._column(self.xs, q)[: self._n])
        if destabilizers.size == 0:
            return 0
        rows = destabilizers + self._n
        exponents = 2 * self.signs[rows].astype(np.int64)
        _, _, exponent = _reduce_product(self.xs[rows], self.zs[rows], exponents)
        return (exponent >> 1) & 1

    def _random_pivot(self, q: int) -> Optional[int]:
        hits = np.flatnonzero(self._column(self.xs, q)[self._n :])
        return int(hits[0]) + self._n if hits.size else None

    def peek(self, q: int) -> Optional[int]:
        check_qubit(q, self._n)
        if self._random_pivot(q) is not None:
            return None
        return self._deterministic_outcome(q)

    def measure(self, q: int) -> int:
        check_qubit(q, self._n)
        pivot = self._random_pivot(q)
        if pivot is None:
            outcome = self._deterministic_outcome(q)
            self._after_operation()
            return outcome
        rows = np.flatnonzero(self._column(self.xs, q))
        rows = rows[rows != pivot]
        if rows.size:
            exponents = (
                2 * self.signs[rows].astype(np.int64)
                + 2 * int(self.signs[pivot])
                + _phase_exponent(self.xs[pivot], self.zs[pivot], self.xs[rows], self.zs[rows])
            ) % 4
            self.signs[rows] = (exponents >> 1).astype(np.uint8)
            self.xs[rows] ^= self.xs[pivot]
            self.zs[rows] ^= self.zs[pivot]
        partner = pivot - self._n
        self.xs[partner] = self.xs[pivot]
        self.zs[partner] = self.zs[pivot]
        self.signs[partner] = self.signs[pivot]
        outcome = int(self.rng.integers(0, 2))
        word, bit = divmod(q, WORD_BITS)
        self.xs[pivot] = 0
        self.zs[pivot] = 0
        self.zs[pivot, word] = _ONE << np.uint64(bit)
        self.signs[pivot] = outcome
        self._after_operation()
        return outcome

    def sample(self, qubits: list[int], shots: int) -> np.ndarray:
        for q in qubits:
            check_qubit(q, self._n)
        result = np.zeros((shots, len(qubits)), dtype=np.uint8)
        for shot in range(shots):
            scratch = self.clone()
            for column, q in enumerate(qubits):
                result[shot, column] = scratch.measure(q)
        return result

    def clone(self) -> StabilizerTableau:
        child = StabilizerTableau(
            0,
            seed=self._seed.spawn(1)[0],
            debug_checks=self.debug_checks,
            layout=self.layout.copy(),
        )
        child._n = self._n
        child.xs = self.xs.copy()
        child.zs = self.zs.copy()
        child.signs = self.signs.copy()
        child.check_interval = self.check_interval
        return child

    def _unpacked(self) -> tuple[np.ndarray, np.ndarray]:
        def unpack(table: np.ndarray) -> np.ndarray:
            as_bytes = table.astype("<u8").view(np.uint8)
            bits = np.unpackbits(as_bytes, axis=1, bitorder="little")
            return bits[:, : self._n].astype(np.int64)

        return unpack(self.xs), unpack(self.zs)

    def check_invariants(self) -> None:
        """
        Симплектическая проверка: дестабилизатор i антикоммутирует только со
        стабилизатором i, остальные пары коммутируют. Отсюда же следует
        независимость всех 2n генераторов.
        """
        xs, zs = self._unpacked()
        gram = (xs @ zs.T + zs @ xs.T) % 2
        n = self._n
        expected = np.zeros((2 * n, 2 * n), dtype=np.int64)
        expected[:n, n:] = np.eye(n, dtype=np.int64)
        expected[n:, :n] = np.eye(n, dtype=np.int64)
        if not np.array_equal(gram, expected):
            raise InvariantViolation("tableau lost its symplectic (de)stabilizer pairing")
        logger.debug(f"tableau invariants hold after {self._operations} operations")

    def generators(self) -> list[str]:
        """Стабилизаторы в виде строк '+XZI…' (кубит 0 слева)."""
        xs, zs = self._unpacked()
        labels = np.array(["I", "X", "Z", "Y"])
        rendered = []
        for row in range(self._n, 2 * self._n):
            ops = labels[xs[row] + 2 * zs[row]]
            rendered.append(("-" if self.signs[row] else "+") + "".join(ops))
        return rendered


def tab_apply_h(tableau: StabilizerTableau, q: int) -> None:
    tableau.h(q)


def tab_apply_cnot(tableau: StabilizerTableau, control: int, target: int) -> None:
    tableau.cnot(control, target)


def tab_apply_z(tableau: StabilizerTableau, q: int) -> None:
    tableau.z(q)


def tab_apply_x(tableau: StabilizerTableau, q: int) -> None:
    tableau.x(q)


def tab_measure(tableau: StabilizerTableau, q: int) -> int:
    return tableau.measure(q)
