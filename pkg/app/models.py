from __future__ import annotations

from datetime import datetime
from enum import Enum
from math import ceil
from pathlib import Path
from typing import Any, Optional

from pydantic import BaseModel, ConfigDict, computed_field, field_validator, model_validator
from sqlmodel import Field, SQLModel

from app.config import settings
from app.exceptions import ConfigError


class Variant(str, Enum):
    TWO_PARTY = "2p"
    THREE_PARTY = "3p"

    @property
    def arity(self) -> int:
        return 2 if self == Variant.TWO_PARTY else 3


class BackendKind(str, Enum):
    DENSE = "dense"
    STABILIZER = "stabilizer"


class SessionPhase(str, Enum):
    CREATED = "created"
    DISTRIBUTED = "distributed"
    EMBEDDED = "embedded"
    TRANSMITTED = "transmitted"
    DECODED = "decoded"
    ABORTED = "aborted"


class MeasurementBasis(str, Enum):
    COMPUTATIONAL = "computational"
    HADAMARD = "hadamard"


class OracleMode(str, Enum):
    DIAGONAL = "diagonal"
    CIRCUIT = "circuit"


class Leg(str, Enum):
    DISTRIBUTION = "distribution"
    RETURN = "return"


class AttackStrategy(str, Enum):
    NONE = "none"
    MEASURE_RESEND = "measure-resend"
    INTERCEPT_FAKE = "intercept-fake"
    ENTANGLE_MEASURE = "entangle-measure"
    PNS = "pns"


# entangle-measure имеет смысл только на возврате, когда в кортежах уже есть фаза
ALLOWED_LEGS: dict[AttackStrategy, frozenset[Leg]] = {
    AttackStrategy.NONE: frozenset(Leg),
    AttackStrategy.MEASURE_RESEND: frozenset(Leg),
    AttackStrategy.INTERCEPT_FAKE: frozenset(Leg),
    AttackStrategy.ENTANGLE_MEASURE: frozenset({Leg.RETURN}),
    AttackStrategy.PNS: frozenset(Leg),
}


class AttackConfig(BaseModel):
    model_config = ConfigDict(frozen=True)

    strategy: AttackStrategy = AttackStrategy.NONE
    leg: Leg = Leg.RETURN
    random_basis: bool = False
    readout_basis: MeasurementBasis = MeasurementBasis.COMPUTATIONAL
    seed: Optional[int] = None

    @model_validator(mode="after")
    def _check_leg(self) -> AttackConfig:
        if self.leg not in ALLOWED_LEGS[self.strategy]:
            raise ConfigError(
                f"strategy {self.strategy.value} is not defined on the {self.leg.value} leg"
            )
        return self

    @property
    def active(self) -> bool:
        return self.strategy != AttackStrategy.NONE


def _add_counts(first: dict[str, int], second: dict[str, int]) -> dict[str, int]:
    merged = dict(first)
    for key, value in second.items():
        merged[key] = merged.get(key, 0) + value
    return merged


class SecurityReport(BaseModel):
    checkpoint: int
    leg: Leg
    skipped: bool = False
    decoys_checked: int = 0
    decoy_mismatches: int = 0
    decoy_mismatches_by_stream: dict[str, int] = {}
    validation_checked: int = 0
    parity_failures: int = 0

    @computed_field  # type: ignore[prop-decorator]
    @property
    def detected(self) -> bool:
        return self.decoy_mismatches + self.parity_failures > 0

    @property
    def decoy_detected(self) -> bool:
        return self.decoy_mismatches > 0

    @property
    def validation_detected(self) -> bool:
        return self.parity_failures > 0

    def merge(self, other: SecurityReport) -> SecurityReport:
        return SecurityReport(
            checkpoint=self.checkpoint,
            leg=self.leg,
            skipped=self.skipped and other.skipped,
            decoys_checked=self.decoys_checked + other.decoys_checked,
            decoy_mismatches=self.decoy_mismatches + other.decoy_mismatches,
            decoy_mismatches_by_stream=_add_counts(
                self.decoy_mismatches_by_stream, other.decoy_mismatches_by_stream
            ),
            validation_checked=self.validation_checked + other.validation_checked,
            parity_failures=self.parity_failures + other.parity_failures,
        )


class TranscriptEvent(BaseModel):
    phase: SessionPhase
    event: str
    detail: dict[str, Any] = {}


def _check_bits(value: Optional[str]) -> Optional[str]:
    if value is None:
        return None
    from app.services.bitvec import BitVector

    return BitVector.parse(value).render()


class RunConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    variant: Variant = Variant.TWO_PARTY
    m: int = 8
    secret: Optional[str] = None
    secret_b: Optional[str] = None
    secret_c: Optional[str] = None
    backend: BackendKind = BackendKind.STABILIZER
    trials: int = 1
    attack: AttackConfig = AttackConfig()
    decoys: Optional[int] = None
    validate_k: Optional[int] = None
    security: bool = True
    abort_on_detection: bool = True
    oracle_mode: OracleMode = OracleMode.CIRCUIT
    measure_ancillas: bool = False
    seed: Optional[int] = None
    out: Optional[Path] = None
    record_timing: bool = False
    record_transcript: bool = True

    @field_validator("m", "trials")
    @classmethod
    def _positive(cls, value: int) -> int:
        if value < 1:
            raise ValueError("must be >= 1")
        return value

    @field_validator("decoys", "validate_k")
    @classmethod
    def _non_negative(cls, value: Optional[int]) -> Optional[int]:
        if value is not None and value < 0:
            raise ValueError("must be >= 0")
        return value

    @field_validator("secret", "secret_b", "secret_c")
    @classmethod
    def _bit_string(cls, value: Optional[str]) -> Optional[str]:
        return _check_bits(value)

    @model_validator(mode="after")
    def _check_consistency(self) -> RunConfig:
        for name in ("secret", "secret_b", "secret_c"):
            value = getattr(self, name)
            if value is not None and len(value) != self.m:
                raise ValueError(f"{name} has length {len(value)}, expected m={self.m}")
        if self.variant == Variant.TWO_PARTY and (self.secret_b or self.secret_c):
            raise ValueError("secret_b / secret_c apply to the 3p variant only")
        if self.variant == Variant.THREE_PARTY:
            if self.secret is not None:
                raise ValueError("the 3p variant takes secret_b and secret_c, not secret")
            if (self.secret_b is None) != (self.secret_c is None):
                raise ValueError("secret_b and secret_c must be given together")
        if self.backend == BackendKind.DENSE and self.data_qubits() > settings.dense_qubit_cap:
            raise ValueError(
                f"dense backend needs {self.data_qubits()} qubits for m={self.m}, "
                f"cap is {settings.dense_qubit_cap}"
            )
        return self

    @property
    def decoy_count(self) -> int:
        if not self.security:
            return 0
        return self.decoys if self.decoys is not None else ceil(self.m / 4)

    @property
    def validation_count(self) -> int:
        if not self.security:
            return 0
        return self.validate_k if self.validate_k is not None else ceil(self.m / 4)

    def data_qubits(self) -> int:
        """Кубиты основного бэкенда: регистры, |−⟩-анциллы и кубиты Евы."""
        arity = self.variant.arity
        total = arity * self.m
        if self.oracle_mode == OracleMode.CIRCUIT:
            total += arity - 1
        if self.attack.strategy == AttackStrategy.INTERCEPT_FAKE:
            total += arity * self.m
        elif self.attack.strategy in (AttackStrategy.ENTANGLE_MEASURE, AttackStrategy.PNS):
            total += self.m
        return total


class TrialRecord(BaseModel):
    index: int
    secret: str
    secret_b: Optional[str] = None
    secret_c: Optional[str] = None
    decoded: Optional[str] = None
    correct: bool = False
    aborted_phase: Optional[SessionPhase] = None
    checkpoints: list[SecurityReport] = []
    eve_record: Optional[str] = None
    error: Optional[str] = None
    transcript: list[TranscriptEvent] = []

    @property
    def detected(self) -> bool:
        return any(report.detected for report in self.checkpoints)


class RunAggregates(BaseModel):
    trials: int
    decoded: int
    correct: int
    aborted: int
    detected: int
    decoy_detected: int
    validation_detected: int
    decode_success_rate: float
    detection_rate: float
    decoy_detection_rate: float
    validation_detection_rate: float
    wall_time_s: Optional[float] = None


class RunReport(BaseModel):
    schema_version: str
    config: RunConfig
    trials: list[TrialRecord]
    aggregates: RunAggregates
    invariant_violations: list[str] = []


class SweepRow(BaseModel):
    cell: int
    variant: str
    m: Optional[int] = None
    backend: str = ""
    strategy: str = ""
    leg: str = ""
    decoys: Optional[int] = None
    validate_k: Optional[int] = None
    trials: Optional[int] = None
    status: str
    decode_success_rate: Optional[float] = None
    detection_rate: Optional[float] = None
    decoy_detection_rate: Optional[float] = None
    validation_detection_rate: Optional[float] = None
    error: Optional[str] = None


class RunJournal(SQLModel, table=True):
    id: Optional[int] = Field(default=None, primary_key=True)
    created_at: datetime = Field(default_factory=datetime.utcnow, nullable=False)
    variant: str = Field(index=True)
    m: int
    backend: str
    strategy: str = Field(index=True)
    leg: str
    trials: int
    # энтропия SeedSequence не помещается в INTEGER
    seed: Optional[str] = None
    decode_success_rate: float
    detection_rate: float
    invariant_violations: int = 0
    report_path: Optional[str] = None
