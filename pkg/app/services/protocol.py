"""
Сеансы протоколов прямой квантовой связи на двух и трёх участниках.

Фазы идут строго по порядку: раздача запутанных кортежей → встраивание
секрета фазовым оракулом → передача кубитов обратно → декодирование.
В конце раздачи и в конце передачи стоят контрольные точки безопасности.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Any, Optional

import numpy as np
from scipy.stats import chisquare

from app.exceptions import DimensionError, InvariantViolation, PhaseError, ResourceError
from app.models import (
    AttackConfig,
    BackendKind,
    Leg,
    MeasurementBasis,
    OracleMode,
    RunConfig,
    SecurityReport,
    SessionPhase,
    TranscriptEvent,
    Variant,
)
from app.services.adversary import Eavesdropper
from app.services.backend import QuantumBackend, as_seed_sequence, create_backend
from app.services.bitvec import BitVector, xor
from app.services.channel import (
    ChannelLeg,
    ValidationTuple,
    build_leg,
    deliver,
    insert_decoys,
    make_decoy_plan,
    reserve_validation_tuples,
    run_eavesdropping_detection,
    run_entanglement_validation,
)
from app.services.circuits import (
    PAIR_REGISTERS,
    TRIPLET_REGISTERS,
    apply_h_all,
    apply_phase_oracle,
    entangle,
    measure_qubits,
    measure_register,
    prepare_minus,
    sample_registers,
)

logger = logging.getLogger(__name__)

# имена регистров после передачи
RETURN_RELABEL: dict[Variant, dict[str, str]] = {
    Variant.TWO_PARTY: {"AR": "BR_A"},
    Variant.THREE_PARTY: {"BR": "AR_B", "CR": "AR_C"},
}
ANCILLAS: dict[Variant, tuple[str, ...]] = {
    Variant.TWO_PARTY: ("AQ",),
    Variant.THREE_PARTY: ("BQ", "CQ"),
}
UNIFORMITY_MAX_LENGTH = 16
UNIFORMITY_P_VALUE = 0.01
SAMPLING_MAX_LENGTH = 62


@dataclass(slots=True)
class SecurityPolicy:
    enabled: bool = True
    decoys: int = 0
    validate_k: int = 0
    abort_on_detection: bool = True

    @classmethod
    def disabled(cls) -> SecurityPolicy:
        return cls(enabled=False)

    @classmethod
    def from_config(cls, config: RunConfig) -> SecurityPolicy:
        return cls(
            enabled=config.security,
            decoys=config.decoy_count,
            validate_k=config.validation_count,
            abort_on_detection=config.abort_on_detection,
        )


@dataclass(slots=True)
class HadamardEntanglementCheck:
    shots: int
    violations: int
    chi_square: Optional[float] = None
    p_value: Optional[float] = None

    @property
    def uniform(self) -> bool:
        """Маргиналь первого регистра не отвергается хи-квадратом (или не проверялась)."""
        return self.p_value is None or self.p_value > UNIFORMITY_P_VALUE

    @property
    def holds(self) -> bool:
        return self.violations == 0 and self.uniform


@dataclass(slots=True)
class ProtocolSession:
    variant: Variant
    m: int
    seed: np.random.SeedSequence
    backend_kind: BackendKind = BackendKind.STABILIZER
    secret: Optional[BitVector] = None
    secret_b: Optional[BitVector] = None
    secret_c: Optional[BitVector] = None
    policy: SecurityPolicy = field(default_factory=SecurityPolicy.disabled)
    oracle_mode: OracleMode = OracleMode.CIRCUIT
    attack: AttackConfig = field(default_factory=AttackConfig)
    measure_ancillas: bool = False
    record_transcript: bool = True
    phase: SessionPhase = SessionPhase.CREATED
    backend: Optional[QuantumBackend] = None
    channel: Optional[ChannelLeg] = None
    checkpoint: int = 0
    validation_pools: dict[int, list[ValidationTuple]] = field(default_factory=dict)
    checkpoints: list[SecurityReport] = field(default_factory=list)
    transcript: list[TranscriptEvent] = field(default_factory=list)
    aborted_at: Optional[SessionPhase] = None
    decoded: Optional[BitVector] = None
    rng: np.random.Generator = field(init=False)
    eve: Eavesdropper = field(init=False)

    def __post_init__(self) -> None:
        protocol_seed, eve_seed = self.seed.spawn(2)
        self.rng = np.random.Generator(np.random.Philox(protocol_seed))
        if self.attack.seed is not None:
            eve_seed = np.random.SeedSequence(self.attack.seed)
        self.eve = Eavesdropper(self.attack, np.random.Generator(np.random.Philox(eve_seed)))

    @property
    def target_secret(self) -> BitVector:
        if self.variant == Variant.TWO_PARTY:
            assert self.secret is not None
            return self.secret
        assert self.secret_b is not None and self.secret_c is not None
        return xor(self.secret_b, self.secret_c)

    @property
    def registers(self) -> tuple[str, ...]:
        return PAIR_REGISTERS if self.variant == Variant.TWO_PARTY else TRIPLET_REGISTERS

    def spawn_seed(self) -> np.random.SeedSequence:
        return self.seed.spawn(1)[0]

    def record(self, event: str, **detail: Any) -> None:
        logger.debug(f"[{self.variant.value} m={self.m}] {self.phase.value}: {event} {detail}")
        if self.record_transcript:
            self.transcript.append(TranscriptEvent(phase=self.phase, event=event, detail=detail))


def new_session(
    variant: Variant,
    m: int,
    *,
    seed: np.random.SeedSequence | int | None = None,
    backend: BackendKind = BackendKind.STABILIZER,
    secret: BitVector | str | None = None,
    secret_b: BitVector | str | None = None,
    secret_c: BitVector | str | None = None,
    policy: Optional[SecurityPolicy] = None,
    attack: Optional[AttackConfig] = None,
    oracle_mode: OracleMode = OracleMode.CIRCUIT,
    measure_ancillas: bool = False,
    record_transcript: bool = True,
) -> ProtocolSession:
    """Создаёт сеанс; недостающие секреты выбираются случайно из потока сеанса."""
    if m < 1:
        raise DimensionError(f"message length must be >= 1, got {m}")
    seed = as_seed_sequence(seed)
    session = ProtocolSession(
        variant=variant,
        m=m,
        seed=seed,
        backend_kind=backend,
        policy=policy if policy is not None else SecurityPolicy.disabled(),
        oracle_mode=oracle_mode,
        attack=attack if attack is not None else AttackConfig(),
        measure_ancillas=measure_ancillas,
        record_transcript=record_transcript,
    )

    def resolve(value: BitVector | str | None) -> BitVector:
        if value is None:
            return BitVector.random(m, session.rng)
        vector = BitVector.parse(value, m) if isinstance(value, str) else value
        if vector.length != m:
            raise DimensionError(f"secret has length {vector.length}, expected m={m}")
        return vector

    if variant == Variant.TWO_PARTY:
        session.secret = resolve(secret)
    else:
        session.secret_b = resolve(secret_b)
        session.secret_c = resolve(secret_c)
    return session


def _require(session: ProtocolSession, expected: SessionPhase, operation: str) -> None:
    if session.phase != expected:
        raise PhaseError(
            f"{operation} needs phase {expected.value}, session is {session.phase.value}"
        )


def _run_leg(session: ProtocolSession, leg: Leg) -> ChannelLeg:
    channel = build_leg(session, leg)
    if session.policy.enabled:
        plan = make_decoy_plan(
            session.policy.decoys, len(channel.slots), len(channel.streams), session.rng
        )
        insert_decoys(session, plan)
    session.eve.intercept(channel)
    deliver(session)
    session.record("leg delivered", leg=leg.value, slots=len(channel.slots))
    return channel


def _checkpoint(session: ProtocolSession, entering: SessionPhase) -> SecurityReport:
    session.checkpoint += 1
    channel = session.channel
    leg = channel.leg if channel is not None else Leg.DISTRIBUTION
    if not session.policy.enabled:
        report = SecurityReport(checkpoint=session.checkpoint, leg=leg, skipped=True)
    else:
        report = run_eavesdropping_detection(session).merge(
            run_entanglement_validation(session, session.policy.validate_k)
        )
    session.checkpoints.append(report)
    session.record(
        "checkpoint",
        number=report.checkpoint,
        decoy_mismatches=report.decoy_mismatches,
        parity_failures=report.parity_failures,
        detected=report.detected,
    )
    if report.detected and session.policy.abort_on_detection:
        session.aborted_at = entering
        session.phase = SessionPhase.ABORTED
        session.record("aborted", checkpoint=report.checkpoint)
        logger.info(f"session aborted at checkpoint {report.checkpoint} ({leg.value} leg)")
    else:
        session.phase = entering
    return report


def distribute(session: ProtocolSession) -> None:
    """
    Источник готовит m кортежей Φ⁺ (2 участника) или GHZ₃ (3 участника) и
    рассылает вторые (и третьи) половины; в режиме схемы у получателей
    оракула появляются вспомогательные кубиты в |−⟩.
    """
    _require(session, SessionPhase.CREATED, "distribute")
    backend = create_backend(session.backend_kind, session.spawn_seed())
    session.backend = backend
    entangle(backend, session.m, session.registers)
    if session.oracle_mode == OracleMode.CIRCUIT:
        for ancilla in ANCILLAS[session.variant]:
            prepare_minus(backend, ancilla)
    if session.policy.enabled:
        k = session.policy.validate_k
        session.validation_pools = {
            1: reserve_validation_tuples(session, k, pool=1),
            2: reserve_validation_tuples(session, k, pool=2),
        }
    session.record("distributed", qubits=backend.num_qubits)
    _run_leg(session, Leg.DISTRIBUTION)
    _checkpoint(session, SessionPhase.DISTRIBUTED)


def embed_secret(session: ProtocolSession) -> None:
    _require(session, SessionPhase.DISTRIBUTED, "embed_secret")
    assert session.backend is not None
    if session.variant == Variant.TWO_PARTY:
        oracles = [("AR", session.secret, "AQ")]
    else:
        oracles = [("BR", session.secret_b, "BQ"), ("CR", session.secret_c, "CQ")]
    for register, secret, ancilla in oracles:
        assert secret is not None
        apply_phase_oracle(
            session.backend,
            register,
            secret,
            session.oracle_mode,
            ancilla if session.oracle_mode == OracleMode.CIRCUIT else None,
        )
    session.phase = SessionPhase.EMBEDDED
    session.record("embedded", mode=session.oracle_mode.value)


def transmit(session: ProtocolSession) -> None:
    _require(session, SessionPhase.EMBEDDED, "transmit")
    assert session.backend is not None
    _run_leg(session, Leg.RETURN)
    for old, new in RETURN_RELABEL[session.variant].items():
        session.backend.layout.rename(old, new)
    session.record("transmitted", registers=session.backend.layout.names())
    _checkpoint(session, SessionPhase.TRANSMITTED)


def decode_registers(session: ProtocolSession) -> tuple[str, ...]:
    """Регистры получателя после передачи; измеряется последний."""
    if session.variant == Variant.TWO_PARTY:
        return ("BR_A", "BR")
    return ("AR", "AR_B", "AR_C")


def _measure_ancillas(session: ProtocolSession) -> None:
    backend = session.backend
    assert backend is not None
    for name in ANCILLAS[session.variant]:
        if name not in backend.layout:
            continue
        outcome = measure_register(backend, name, MeasurementBasis.HADAMARD)[0]
        session.record("ancilla measured", register=name, outcome=outcome)
        if outcome != 1:
            raise InvariantViolation(f"ancilla {name} left |−⟩ after the phase kickback")


def decode(session: ProtocolSession) -> BitVector:
    """
    2 участника: H⊗m на BR и BR_A, CNOT BR_A[j] → BR[j], измерение BR.
    3 участника: H⊗m на AR, AR_B, AR_C, CNOT AR → AR_B, затем AR_B → AR_C,
    измерение AR_C.
    """
    _require(session, SessionPhase.TRANSMITTED, "decode")
    backend = session.backend
    assert backend is not None
    if session.measure_ancillas:
        _measure_ancillas(session)
    registers = decode_registers(session)
    for name in registers:
        apply_h_all(backend, name)
    for control, target in zip(registers, registers[1:]):
        for c, t in zip(backend.layout[control], backend.layout[target]):
            backend.cnot(c, t)
    decoded = measure_qubits(backend, backend.layout[registers[-1]])
    session.decoded = decoded
    session.phase = SessionPhase.DECODED
    session.record("decoded", value=decoded.render())
    return decoded


def verify_hadamard_entanglement(session: ProtocolSession, shots: int) -> HadamardEntanglementCheck:
    """
    Выборка исходов всех регистров после H⊗m на копии состояния: XOR исходов
    должен давать секрет на каждом выстреле, а значения первого регистра
    быть равномерными.
    """
    if session.phase not in (SessionPhase.EMBEDDED, SessionPhase.TRANSMITTED):
        raise PhaseError(f"no embedded state to sample in phase {session.phase.value}")
    if session.m > SAMPLING_MAX_LENGTH:
        raise ResourceError(f"register sampling supports m <= {SAMPLING_MAX_LENGTH}")
    assert session.backend is not None
    registers = session.registers
    if session.phase == SessionPhase.TRANSMITTED:
        registers = decode_registers(session)
    samples = sample_registers(session.backend, registers, shots, MeasurementBasis.HADAMARD)
    combined = np.zeros(shots, dtype=np.int64)
    for name in registers:
        combined ^= samples[name]
    violations = int(np.count_nonzero(combined != session.target_secret.value))
    check = HadamardEntanglementCheck(shots=shots, violations=violations)
    if session.m <= UNIFORMITY_MAX_LENGTH:
        counts = np.bincount(samples[registers[0]], minlength=1 << session.m)
        result = chisquare(counts)
        check.chi_square = float(result.statistic)
        check.p_value = float(result.pvalue)
    session.record("hadamard entanglement", shots=shots, violations=violations)
    return check


def run_session(session: ProtocolSession) -> Optional[BitVector]:
    """Проводит сеанс до конца; None, если он прерван на контрольной точке."""
    distribute(session)
    if session.phase == SessionPhase.ABORTED:
        return None
    embed_secret(session)
    transmit(session)
    if session.phase == SessionPhase.ABORTED:
        return None
    return decode(session)
