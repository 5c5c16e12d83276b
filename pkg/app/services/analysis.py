"""
Эталонные вероятности обнаружения и статистика для отчётов и тестов.

Вероятности считаются точно: атака применяется к маленькому плотному
состоянию, ветви измерений Евы перебираются явно через проекции.
"""
from __future__ import annotations

import logging
from math import log
from typing import Optional, Sequence

import numpy as np
from scipy.stats import chisquare

from app.models import (
    AttackConfig,
    AttackStrategy,
    BackendKind,
    Leg,
    MeasurementBasis,
    RunConfig,
    SessionPhase,
    Variant,
)
from app.services.adversary import STRATEGIES, Eavesdropper
from app.services.backend import EVE_REGISTER
from app.services.bitvec import BitVector
from app.services.channel import (
    DECOY_REGISTER,
    DECOY_STATES,
    TUPLE_REGISTERS,
    Slot,
    SlotKind,
    deliver_slot,
    leg_streams,
    prepare_decoy,
    tuple_register,
)
from app.services.circuits import entangle, sample_registers
from app.services.protocol import (
    ProtocolSession,
    distribute,
    embed_secret,
    new_session,
    transmit,
)
from app.services.statevector import DUMP_THRESHOLD, DenseState

logger = logging.getLogger(__name__)

Branch = tuple[float, DenseState]


def _measure_resend_branches(
    state: DenseState, qubits: Sequence[int], random_basis: bool
) -> list[Branch]:
    bases = (
        (MeasurementBasis.COMPUTATIONAL, MeasurementBasis.HADAMARD)
        if random_basis
        else (MeasurementBasis.COMPUTATIONAL,)
    )
    branches: list[Branch] = [(1.0, state)]
    for q in qubits:
        grown: list[Branch] = []
        for weight, branch in branches:
            for basis in bases:
                for outcome in (0, 1):
                    child = branch.clone()
                    if basis == MeasurementBasis.HADAMARD:
                        child.h(q)
                    probability = child.project(q, outcome)
                    if probability <= DUMP_THRESHOLD:
                        continue
                    if basis == MeasurementBasis.HADAMARD:
                        child.h(q)
                    grown.append((weight * probability / len(bases), child))
        branches = grown
    return branches


def _attacked(
    state: DenseState,
    targets: list[tuple[str, int]],
    strategy: AttackStrategy,
    random_basis: bool,
) -> list[Branch]:
    """Ветви состояния после атаки на один слот и доставки получателю."""
    qubits = [state.layout[register][position] for register, position in targets]
    if strategy == AttackStrategy.MEASURE_RESEND:
        return _measure_resend_branches(state, qubits, random_basis)
    slot = Slot(kind=SlotKind.DATA, backend=state, targets=targets, qubits=qubits)
    eve = Eavesdropper(
        AttackConfig(strategy=strategy, leg=Leg.RETURN), np.random.default_rng(0)
    )
    STRATEGIES[strategy](eve, slot)
    deliver_slot(slot)
    return [(1.0, state)]


def _odd_parity_probability(state: DenseState, qubits: Sequence[int]) -> float:
    probabilities = np.abs(state.amplitudes) ** 2
    indices = np.arange(probabilities.size)
    parity = np.zeros(probabilities.size, dtype=np.int64)
    for q in qubits:
        parity ^= (indices >> q) & 1
    return float(probabilities[parity == 1].sum())


def decoy_mismatch_probability(strategy: AttackStrategy, random_basis: bool = False) -> float:
    """Вероятность того, что одна ловушка из {|0⟩,|1⟩,|+⟩,|−⟩} покажет расхождение."""
    if strategy == AttackStrategy.NONE:
        return 0.0
    total = 0.0
    for decoy in DECOY_STATES:
        state = DenseState(0)
        prepare_decoy(state, decoy)
        for weight, branch in _attacked(state, [(DECOY_REGISTER, 0)], strategy, random_basis):
            q = branch.layout[DECOY_REGISTER][0]
            scratch = branch.clone()
            if decoy.basis == MeasurementBasis.HADAMARD:
                scratch.h(q)
            p_one = scratch.probability_of_one(q)
            total += weight * (p_one if decoy.expected == 0 else 1.0 - p_one) / len(DECOY_STATES)
    return total


def validation_failure_probability(
    strategy: AttackStrategy,
    variant: Variant = Variant.TWO_PARTY,
    leg: Leg = Leg.RETURN,
    random_basis: bool = False,
) -> float:
    """Вероятность нарушить X-чётность одного жертвуемого кортежа, атакованного на плече."""
    if strategy == AttackStrategy.NONE:
        return 0.0
    registers = TUPLE_REGISTERS[: variant.arity]
    state = DenseState(0)
    entangle(state, 1, registers)
    targets = [(tuple_register(stream), 0) for stream in leg_streams(variant, leg)]
    total = 0.0
    for weight, branch in _attacked(state, targets, strategy, random_basis):
        scratch = branch.clone()
        qubits = [scratch.layout[name][0] for name in registers]
        for q in qubits:
            scratch.h(q)
        total += weight * _odd_parity_probability(scratch, qubits)
    return total


def detection_probability(p_decoy: float, d: int, p_validation: float = 0.0, k: int = 0) -> float:
    """1 − (1−p_d)^d (1−p_v)^k: хотя бы одна ловушка или один кортеж сработали."""
    return 1.0 - (1.0 - p_decoy) ** d * (1.0 - p_validation) ** k


def expected_detection_rates(config: RunConfig) -> dict[str, float]:
    """Ожидаемые доли обнаружения для прогона: общая, по ловушкам, по кортежам."""
    attack = config.attack
    if not attack.active or not config.security:
        return {"detection": 0.0, "decoy": 0.0, "validation": 0.0}
    p_decoy = decoy_mismatch_probability(attack.strategy, attack.random_basis)
    p_validation = validation_failure_probability(
        attack.strategy, config.variant, attack.leg, attack.random_basis
    )
    # атака на раздаче задевает оба пула, на возврате только второй
    tuples = config.validation_count * (2 if attack.leg == Leg.DISTRIBUTION else 1)
    d = config.decoy_count
    return {
        "detection": detection_probability(p_decoy, d, p_validation, tuples),
        "decoy": detection_probability(p_decoy, d),
        "validation": detection_probability(p_validation, tuples),
    }


def standard_error(p: float, trials: int) -> float:
    return float(np.sqrt(max(p * (1.0 - p), 0.0) / trials))


def chi_square_uniformity(values: np.ndarray, categories: int) -> tuple[float, float]:
    counts = np.bincount(np.asarray(values, dtype=np.int64), minlength=categories)
    result = chisquare(counts)
    return float(result.statistic), float(result.pvalue)


def _codes(labels: Sequence[object] | np.ndarray) -> tuple[np.ndarray, int]:
    _, inverse = np.unique(np.asarray(labels), return_inverse=True)
    inverse = inverse.reshape(-1)
    return inverse, int(inverse.max()) + 1 if inverse.size else 0


def _entropy_miller_madow(codes: np.ndarray) -> float:
    counts = np.bincount(codes)
    counts = counts[counts > 0]
    n = counts.sum()
    p = counts / n
    plug_in = float(-(p * np.log(p)).sum())
    return plug_in + (counts.size - 1) / (2 * n)


def mutual_information(
    xs: Sequence[object] | np.ndarray, ys: Sequence[object] | np.ndarray
) -> float:
    """
    Взаимная информация в битах с поправкой Миллера–Мэдоу для каждой энтропии.
    Отрицательная оценка обрезается нулём.
    """
    x_codes, _ = _codes(xs)
    y_codes, y_size = _codes(ys)
    if x_codes.size != y_codes.size:
        raise ValueError(f"sample sizes differ: {x_codes.size} vs {y_codes.size}")
    if x_codes.size == 0:
        return 0.0
    joint = x_codes.astype(np.int64) * max(y_size, 1) + y_codes
    _, joint_codes = np.unique(joint, return_inverse=True)
    nats = (
        _entropy_miller_madow(x_codes)
        + _entropy_miller_madow(y_codes)
        - _entropy_miller_madow(joint_codes.reshape(-1))
    )
    return max(nats / log(2), 0.0)


def total_variation_distance(first: np.ndarray, second: np.ndarray) -> float:
    """TV-расстояние между эмпирическими распределениями двух выборок."""
    first, second = np.asarray(first), np.asarray(second)
    support = np.union1d(first, second)
    p = np.array([np.count_nonzero(first == value) for value in support]) / max(first.size, 1)
    q = np.array([np.count_nonzero(second == value) for value in support]) / max(second.size, 1)
    return 0.5 * float(np.abs(p - q).sum())


def _eve_session(
    variant: Variant,
    secret: BitVector,
    attack: AttackConfig,
    backend: BackendKind,
    seed: np.random.SeedSequence,
) -> ProtocolSession:
    if variant == Variant.TWO_PARTY:
        session = new_session(
            variant, secret.length, seed=seed, backend=backend, secret=secret, attack=attack,
            record_transcript=False,
        )
    else:
        # s_B случайный, s_C = s ⊕ s_B: Ева видит только сумму
        session = new_session(
            variant, secret.length, seed=seed, backend=backend, attack=attack,
            record_transcript=False,
        )
        assert session.secret_b is not None
        session.secret_c = session.secret_b ^ secret
    distribute(session)
    embed_secret(session)
    transmit(session)
    assert session.phase == SessionPhase.TRANSMITTED
    return session


def estimate_eve_information(
    variant: Variant,
    m: int,
    attack: AttackConfig,
    *,
    backend: BackendKind = BackendKind.DENSE,
    shots: int = 1000,
    seed: Optional[int] = None,
) -> float:
    """
    Взаимная информация между записью Евы и секретом при переборе всех
    секретов длины m.

    Исходы MeasureResend входят в саму запись, поэтому для этой атаки каждый
    выстрел идёт отдельным сеансом. Для остальных атак выборка берётся из регистра
    EVE после передачи: последующие действия получателя его маргиналь не меняют.
    """
    root = np.random.SeedSequence(seed)
    secrets: list[int] = []
    records: list[int] = []
    for value in range(1 << m):
        secret = BitVector(m, value)
        if attack.strategy == AttackStrategy.MEASURE_RESEND:
            for child in root.spawn(shots):
                session = _eve_session(variant, secret, attack, backend, child)
                record = session.eve.readout(session.backend)
                records.append(int(record, 2) if record else 0)
                secrets.append(value)
            continue
        session = _eve_session(variant, secret, attack, backend, root.spawn(1)[0])
        assert session.backend is not None
        if EVE_REGISTER in session.backend.layout:
            sampled = sample_registers(
                session.backend, [EVE_REGISTER], shots, attack.readout_basis
            )[EVE_REGISTER]
            records.extend(int(r) for r in sampled)
        else:
            records.extend([0] * shots)
        secrets.extend([value] * shots)
    information = mutual_information(secrets, records)
    logger.info(
        f"Eve information for {attack.strategy.value} on {attack.leg.value}, "
        f"{variant.value} m={m}: {information:.5f} bits"
    )
    return information
