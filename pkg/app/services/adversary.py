from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from app.models import AttackConfig, AttackStrategy, MeasurementBasis
from app.services.backend import EVE_REGISTER, QuantumBackend
from app.services.channel import ChannelLeg, Slot, SlotKind
from app.services.circuits import measure_qubits

logger = logging.getLogger(__name__)


@dataclass(slots=True)
class Eavesdropper:
    """
    Ева на одном плече канала.

    measured: исходы MeasureResend на слотах данных в порядке перехвата;
    всё, что Ева оставила себе, лежит в регистре EVE бэкендов слотов.
    """

    config: AttackConfig
    rng: np.random.Generator
    measured: list[int] = field(default_factory=list)
    intercepted: int = 0

    def intercept(self, channel: ChannelLeg) -> None:
        if not self.config.active or channel.leg != self.config.leg:
            return
        attack = STRATEGIES[self.config.strategy]
        for slot in channel.slots:
            attack(self, slot)
            self.intercepted += len(slot.qubits)
        logger.debug(
            f"{self.config.strategy.value} intercepted {self.intercepted} qubits "
            f"on the {channel.leg.value} leg"
        )

    def readout(self, backend: Optional[QuantumBackend]) -> str:
        """Итоговая запись Евы: исходы перехвата и её кубиты, измеренные в конце."""
        bits = list(self.measured)
        if backend is not None and EVE_REGISTER in backend.layout:
            kept = sorted(backend.layout[EVE_REGISTER])
            bits.extend(measure_qubits(backend, kept, self.config.readout_basis).bits())
        return "".join(str(bit) for bit in bits)


def attack_measure_resend(eve: Eavesdropper, slot: Slot) -> None:
    for q in slot.qubits:
        basis = MeasurementBasis.COMPUTATIONAL
        if eve.config.random_basis and eve.rng.integers(0, 2):
            basis = MeasurementBasis.HADAMARD
        outcome = measure_qubits(slot.backend, [q], basis)[0]
        if basis == MeasurementBasis.HADAMARD:
            # пересылает |±⟩ в том базисе, в котором мерила
            slot.backend.h(q)
        if slot.kind == SlotKind.DATA:
            eve.measured.append(outcome)


def attack_intercept_fake(eve: Eavesdropper, slot: Slot) -> None:
    """Оригиналы остаются у Евы, дальше уходят половинки её свежего кортежа."""
    backend = slot.backend
    fresh = backend.allocate(len(slot.qubits) + 1, EVE_REGISTER)
    source, *forwarded = fresh
    backend.h(source)
    for q in forwarded:
        backend.cnot(source, q)
    slot.qubits = forwarded


def attack_entangle_measure(eve: Eavesdropper, slot: Slot) -> None:
    (ancilla,) = slot.backend.allocate(1, EVE_REGISTER)
    slot.backend.cnot(slot.qubits[0], ancilla)


def attack_pns(eve: Eavesdropper, slot: Slot) -> None:
    # лишний фотон импульса: ещё один кубит, идеально скоррелированный с первым
    attack_entangle_measure(eve, slot)


def _no_attack(eve: Eavesdropper, slot: Slot) -> None:
    return None


STRATEGIES: dict[AttackStrategy, Callable[[Eavesdropper, Slot], None]] = {
    AttackStrategy.NONE: _no_attack,
    AttackStrategy.MEASURE_RESEND: attack_measure_resend,
    AttackStrategy.INTERCEPT_FAKE: attack_intercept_fake,
    AttackStrategy.ENTANGLE_MEASURE: attack_entangle_measure,
    AttackStrategy.PNS: attack_pns,
}
