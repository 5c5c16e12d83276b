"""
Квантовый канал между участниками и проверки безопасности на его концах.

Плечо канала представлено как упорядоченная последовательность слотов. Слот данных несёт
j-е кубиты всех потоков плеча, слот проверки несёт кубиты одного жертвуемого
кортежа, слот-ловушка несёт один случайно приготовленный кубит. Перехватчик видит
только последовательность слотов и не отличает их друг от друга.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from enum import Enum
from typing import TYPE_CHECKING, Optional

import numpy as np

from app.exceptions import ConfigError, DimensionError, PhaseError
from app.models import Leg, MeasurementBasis, SecurityReport, Variant
from app.services.backend import EVE_REGISTER, QuantumBackend, create_backend
from app.services.circuits import entangle, measure_qubits

if TYPE_CHECKING:
    from app.services.protocol import ProtocolSession

logger = logging.getLogger(__name__)

DECOY_REGISTER = "DECOY"
TUPLE_REGISTERS = ("A", "B", "C")


class SlotKind(str, Enum):
    DATA = "data"
    VALIDATION = "validation"
    DECOY = "decoy"


class DecoyState(str, Enum):
    ZERO = "0"
    ONE = "1"
    PLUS = "+"
    MINUS = "-"

    @property
    def basis(self) -> MeasurementBasis:
        if self in (DecoyState.ZERO, DecoyState.ONE):
            return MeasurementBasis.COMPUTATIONAL
        return MeasurementBasis.HADAMARD

    @property
    def expected(self) -> int:
        return 0 if self in (DecoyState.ZERO, DecoyState.PLUS) else 1


DECOY_STATES = tuple(DecoyState)


def leg_streams(variant: Variant, leg: Leg) -> tuple[str, ...]:
    """Регистры отправителя, кубиты которых уходят по плечу."""
    if variant == Variant.TWO_PARTY:
        return ("BR",) if leg == Leg.DISTRIBUTION else ("AR",)
    return ("BR", "CR")


def tuple_register(stream: str) -> str:
    """Регистр жертвуемого кортежа, идущий вместе с потоком: AR → A, BR → B."""
    return stream[0]


@dataclass(slots=True)
class Slot:
    kind: SlotKind
    backend: QuantumBackend
    targets: list[tuple[str, int]]
    qubits: list[int]
    index: int = 0
    decoy: Optional[DecoyState] = None
    stream: Optional[str] = None


@dataclass(slots=True)
class ValidationTuple:
    index: int
    pool: int
    backend: QuantumBackend
    registers: tuple[str, ...]

    def qubits(self) -> list[int]:
        return [self.backend.layout[name][0] for name in self.registers]


@dataclass(frozen=True, slots=True)
class DecoyPlan:
    """
    Ловушки одного плеча: позиции в итоговой последовательности (по
    возрастанию), приготовленные состояния и номер потока для каждой.
    Базис приёмника совпадает с базисом приготовления.
    """

    positions: tuple[int, ...] = ()
    states: tuple[DecoyState, ...] = ()
    streams: tuple[int, ...] = ()

    @property
    def count(self) -> int:
        return len(self.positions)

    @property
    def bases(self) -> tuple[MeasurementBasis, ...]:
        return tuple(state.basis for state in self.states)


@dataclass(slots=True)
class ChannelLeg:
    leg: Leg
    streams: tuple[str, ...]
    slots: list[Slot] = field(default_factory=list)
    delivered: bool = False

    def of_kind(self, kind: SlotKind) -> list[Slot]:
        return [slot for slot in self.slots if slot.kind == kind]


def make_decoy_plan(
    d: int, sequence_length: int, stream_count: int, rng: np.random.Generator
) -> DecoyPlan:
    if d < 0:
        raise ConfigError(f"decoy count must be >= 0, got {d}")
    if d == 0:
        return DecoyPlan()
    positions = np.sort(rng.choice(sequence_length + d, size=d, replace=False))
    states = rng.integers(0, len(DECOY_STATES), size=d)
    streams = rng.integers(0, stream_count, size=d)
    return DecoyPlan(
        positions=tuple(int(p) for p in positions),
        states=tuple(DECOY_STATES[int(i)] for i in states),
        streams=tuple(int(s) for s in streams),
    )


def prepare_decoy(backend: QuantumBackend, state: DecoyState) -> int:
    (q,) = backend.allocate(1, DECOY_REGISTER)
    if state in (DecoyState.ONE, DecoyState.MINUS):
        backend.x(q)
    if state.basis == MeasurementBasis.HADAMARD:
        backend.h(q)
    return q


def reserve_validation_tuples(
    session: ProtocolSession, count: int, pool: int
) -> list[ValidationTuple]:
    """Готовит count кортежей Φ⁺ / GHZ₃, каждый в своём небольшом бэкенде."""
    registers = TUPLE_REGISTERS[: session.variant.arity]
    reserved = []
    for index in range(count):
        backend = create_backend(session.backend_kind, session.spawn_seed())
        entangle(backend, 1, registers)
        reserved.append(
            ValidationTuple(index=index, pool=pool, backend=backend, registers=registers)
        )
    return reserved


def build_leg(session: ProtocolSession, leg: Leg) -> ChannelLeg:
    """
    Собирает плечо: слоты данных в исходном порядке, слоты проверочных
    кортежей (все ещё не пожертвованные) на случайных местах между ними.
    """
    if session.backend is None:
        raise PhaseError("no entangled registers to transmit")
    streams = leg_streams(session.variant, leg)
    channel = ChannelLeg(leg=leg, streams=streams)
    data = [
        Slot(
            kind=SlotKind.DATA,
            backend=session.backend,
            targets=[(stream, j) for stream in streams],
            qubits=[session.backend.layout[stream][j] for stream in streams],
            index=j,
        )
        for j in range(session.m)
    ]
    validation = []
    for pool in sorted(session.validation_pools):
        for tup in session.validation_pools[pool]:
            registers = [tuple_register(stream) for stream in streams]
            validation.append(
                Slot(
                    kind=SlotKind.VALIDATION,
                    backend=tup.backend,
                    targets=[(name, 0) for name in registers],
                    qubits=[tup.backend.layout[name][0] for name in registers],
                    index=tup.index,
                )
            )
    total = len(data) + len(validation)
    is_validation = np.zeros(total, dtype=bool)
    if validation:
        is_validation[session.rng.choice(total, size=len(validation), replace=False)] = True
    data_iter, validation_iter = iter(data), iter(validation)
    channel.slots = [next(validation_iter) if flag else next(data_iter) for flag in is_validation]
    session.channel = channel
    return channel


def insert_decoys(session: ProtocolSession, plan: DecoyPlan) -> None:
    channel = session.channel
    if channel is None or channel.delivered:
        raise PhaseError("decoys go into a leg that has not been transmitted yet")
    if not (len(plan.positions) == len(plan.states) == len(plan.streams)):
        raise DimensionError(
            f"decoy plan lists {len(plan.positions)} positions, {len(plan.states)} states "
            f"and {len(plan.streams)} streams"
        )
    total = len(channel.slots) + plan.count
    if len(set(plan.positions)) != plan.count or any(not 0 <= p < total for p in plan.positions):
        raise DimensionError(f"decoy positions {plan.positions} do not fit a sequence of {total}")
    slots = list(channel.slots)
    for number, (position, state, stream) in enumerate(
        sorted(zip(plan.positions, plan.states, plan.streams))
    ):
        if not 0 <= stream < len(channel.streams):
            raise DimensionError(f"decoy stream {stream} out of range")
        backend = create_backend(session.backend_kind, session.spawn_seed())
        q = prepare_decoy(backend, state)
        slots.insert(
            position,
            Slot(
                kind=SlotKind.DECOY,
                backend=backend,
                targets=[(DECOY_REGISTER, 0)],
                qubits=[q],
                index=number,
                decoy=state,
                stream=channel.streams[stream],
            ),
        )
    channel.slots = slots
    logger.debug(f"inserted {plan.count} decoys into the {channel.leg.value} leg")


def deliver_slot(slot: Slot) -> None:
    if len(slot.qubits) != len(slot.targets):
        raise DimensionError(
            f"slot carries {len(slot.qubits)} qubits for {len(slot.targets)} places"
        )
    for (register, position), qubit in zip(slot.targets, slot.qubits):
        slot.backend.layout.reassign(register, position, qubit, displaced_to=EVE_REGISTER)


def deliver(session: ProtocolSession) -> None:
    """Кладёт пришедшие кубиты на места получателя; вытесненные остаются у Евы."""
    channel = session.channel
    if channel is None or channel.delivered:
        raise PhaseError("nothing to deliver")
    for slot in channel.slots:
        deliver_slot(slot)
    channel.delivered = True


def run_eavesdropping_detection(session: ProtocolSession) -> SecurityReport:
    """
    Получатель измеряет каждую ловушку в базисе её приготовления после того,
    как отправитель раскрыл позиции; ловушки убираются из последовательности.
    """
    channel = session.channel
    if channel is None or not channel.delivered:
        raise PhaseError("eavesdropping detection runs after the leg is delivered")
    mismatches = 0
    by_stream = dict.fromkeys(channel.streams, 0)
    decoys = channel.of_kind(SlotKind.DECOY)
    for slot in decoys:
        assert slot.decoy is not None and slot.stream is not None
        q = slot.backend.layout[DECOY_REGISTER][0]
        outcome = measure_qubits(slot.backend, [q], slot.decoy.basis)[0]
        mismatch = int(outcome != slot.decoy.expected)
        mismatches += mismatch
        by_stream[slot.stream] += mismatch
    channel.slots = [slot for slot in channel.slots if slot.kind != SlotKind.DECOY]
    report = SecurityReport(
        checkpoint=session.checkpoint,
        leg=channel.leg,
        decoys_checked=len(decoys),
        decoy_mismatches=mismatches,
        decoy_mismatches_by_stream=by_stream if decoys else {},
    )
    logger.debug(f"decoy check on {channel.leg.value}: {mismatches}/{len(decoys)} mismatches")
    return report


def run_entanglement_validation(session: ProtocolSession, k: int) -> SecurityReport:
    """
    Жертвует k кортежей пула текущей контрольной точки: все кубиты измеряются
    в базисе Адамара, чётность исходов у Φ⁺ и GHZ₃ обязана быть нулевой.
    """
    pool = session.validation_pools.get(session.checkpoint, [])
    if k > len(pool):
        raise ConfigError(f"cannot sacrifice {k} tuples, only {len(pool)} reserved")
    failures = 0
    for tup in pool[:k]:
        outcome = measure_qubits(tup.backend, tup.qubits(), MeasurementBasis.HADAMARD)
        failures += outcome.popcount() & 1
    remaining = pool[k:]
    if remaining:
        session.validation_pools[session.checkpoint] = remaining
    else:
        session.validation_pools.pop(session.checkpoint, None)
    leg = session.channel.leg if session.channel is not None else Leg.DISTRIBUTION
    logger.debug(
        f"entanglement validation at checkpoint {session.checkpoint}: {failures}/{k} failed"
    )
    return SecurityReport(
        checkpoint=session.checkpoint,
        leg=leg,
        validation_checked=k,
        parity_failures=failures,
    )
