from __future__ import annotations

from dataclasses import dataclass
from typing import Iterator, Optional, Sequence

import numpy as np

from app.config import settings
from app.exceptions import DimensionError, ResourceError

HEX_PREFIX = "0x"


@dataclass(frozen=True, slots=True)
class BitVector:
    """
    Битовый вектор фиксированной длины m.

    Биты хранятся упакованными в целое число: бит i (x_i) хранится в i-м разряде,
    индекс 0 младший и в строковой форме стоит справа ("1011" → x_0 = 1).
    """

    length: int
    value: int

    def __post_init__(self) -> None:
        if self.length < 1:
            raise DimensionError(f"bit vector length must be >= 1, got {self.length}")
        if self.value < 0 or self.value >> self.length:
            raise DimensionError(f"value {self.value} does not fit into {self.length} bits")

    @classmethod
    def zeros(cls, length: int) -> BitVector:
        return cls(length, 0)

    @classmethod
    def from_int(cls, value: int, length: int) -> BitVector:
        return cls(length, value)

    @classmethod
    def from_bits(cls, bits: Sequence[int]) -> BitVector:
        """Собирает вектор из битов в порядке x_0, x_1, …, x_{m−1}."""
        value = 0
        for index, bit in enumerate(bits):
            if bit not in (0, 1):
                raise DimensionError(f"bit {index} is {bit!r}, expected 0 or 1")
            value |= int(bit) << index
        return cls(len(bits), value)

    @classmethod
    def parse(cls, text: str, length: Optional[int] = None) -> BitVector:
        """
        Разбирает строковую форму.

        "1011": старший бит слева. "0x…": шестнадцатеричная форма, big-endian
        по полубайтам; длина по умолчанию 4 бита на символ.
        """
        raw = text.strip().replace("_", "")
        if raw.lower().startswith(HEX_PREFIX):
            digits = raw[len(HEX_PREFIX):]
            if not digits:
                raise DimensionError(f"empty hex bit vector: {text!r}")
            try:
                value = int(digits, 16)
            except ValueError as exc:
                raise DimensionError(f"invalid hex bit vector: {text!r}") from exc
            width = length if length is not None else 4 * len(digits)
            return cls(width, value)
        if not raw or set(raw) - {"0", "1"}:
            raise DimensionError(f"invalid bit string: {text!r}")
        if length is not None and length != len(raw):
            raise DimensionError(f"bit string {text!r} has length {len(raw)}, expected {length}")
        return cls(len(raw), int(raw, 2))

    @classmethod
    def random(cls, length: int, rng: np.random.Generator) -> BitVector:
        bits = rng.integers(0, 2, size=length)
        return cls.from_bits([int(bit) for bit in bits])

    def render(self) -> str:
        return format(self.value, f"0{self.length}b")

    def to_hex(self) -> str:
        nibbles = (self.length + 3) // 4
        return HEX_PREFIX + format(self.value, f"0{nibbles}x")

    def bits(self) -> tuple[int, ...]:
        """Биты в порядке x_0 … x_{m−1}."""
        return tuple((self.value >> index) & 1 for index in range(self.length))

    def support(self) -> list[int]:
        """Индексы i, для которых x_i = 1."""
        return [index for index in range(self.length) if (self.value >> index) & 1]

    def popcount(self) -> int:
        return self.value.bit_count()

    def is_zero(self) -> bool:
        return self.value == 0

    def __len__(self) -> int:
        return self.length

    def __getitem__(self, index: int) -> int:
        if not 0 <= index < self.length:
            raise IndexError(f"bit index {index} out of range for length {self.length}")
        return (self.value >> index) & 1

    def __iter__(self) -> Iterator[int]:
        return iter(self.bits())

    def __xor__(self, other: BitVector) -> BitVector:
        return xor(self, other)

    def __str__(self) -> str:
        return self.render()


def _require_same_length(x: BitVector, y: BitVector) -> None:
    if x.length != y.length:
        raise DimensionError(f"length mismatch: {x.length} vs {y.length}")


def inner_product_mod2(x: BitVector, y: BitVector) -> int:
    """x·y = ⊕ x_i y_i."""
    _require_same_length(x, y)
    return (x.value & y.value).bit_count() & 1


def xor(x: BitVector, y: BitVector) -> BitVector:
    _require_same_length(x, y)
    return BitVector(x.length, x.value ^ y.value)


def cip_census(c: BitVector, max_length: Optional[int] = None) -> tuple[int, int]:
    """
    Перебирает все x ∈ B^m и считает, сколько раз c·x = 0 и c·x = 1.

    Для c ≠ 0 ответ (2^{m−1}, 2^{m−1}), для c = 0 ответ (2^m, 0).
    """
    limit = max_length if max_length is not None else settings.cip_census_max_length
    if c.length > limit:
        raise ResourceError(f"exhaustive census over 2^{c.length} vectors exceeds limit 2^{limit}")
    xs = np.arange(1 << c.length, dtype=np.uint64)
    parity = np.bitwise_count(xs & np.uint64(c.value)) & 1
    ones = int(parity.sum())
    return (1 << c.length) - ones, ones
