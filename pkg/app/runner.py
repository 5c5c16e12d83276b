from __future__ import annotations

import asyncio
import copy
import csv
import itertools
import logging
import time
from pathlib import Path
from typing import Any, Iterable, Optional

import numpy as np
from pydantic import ValidationError

from app.config import settings
from app.exceptions import InvariantViolation, QSDCError
from app.models import (
    RunAggregates,
    RunConfig,
    RunReport,
    SweepRow,
    TrialRecord,
)
from app.services.protocol import SecurityPolicy, new_session, run_session

logger = logging.getLogger(__name__)

INVARIANT_PREFIX = "invariant: "


def run_trial(config: RunConfig, index: int, seed: np.random.SeedSequence) -> TrialRecord:
    """Один сеанс протокола от раздачи до декодирования (или прерывания)."""
    session = new_session(
        config.variant,
        config.m,
        seed=seed,
        backend=config.backend,
        secret=config.secret,
        secret_b=config.secret_b,
        secret_c=config.secret_c,
        policy=SecurityPolicy.from_config(config),
        attack=config.attack,
        oracle_mode=config.oracle_mode,
        measure_ancillas=config.measure_ancillas,
        record_transcript=config.record_transcript,
    )
    decoded = run_session(session)
    target = session.target_secret
    correct = decoded is not None and decoded == target
    if decoded is not None and not correct and not config.attack.active:
        raise InvariantViolation(
            f"trial {index}: decoded {decoded.render()} instead of {target.render()} "
            "without an attack"
        )
    eve_record = session.eve.readout(session.backend) if config.attack.active else None
    return TrialRecord(
        index=index,
        secret=target.render(),
        secret_b=session.secret_b.render() if session.secret_b is not None else None,
        secret_c=session.secret_c.render() if session.secret_c is not None else None,
        decoded=decoded.render() if decoded is not None else None,
        correct=correct,
        aborted_phase=session.aborted_at,
        checkpoints=session.checkpoints,
        eve_record=eve_record,
        transcript=session.transcript,
    )


def _run_trial_safely(config: RunConfig, index: int, seed: np.random.SeedSequence) -> TrialRecord:
    try:
        return run_trial(config, index, seed)
    except InvariantViolation as exc:
        logger.warning(f"Invariant violated in trial {index}: {exc}")
        return TrialRecord(index=index, secret="", error=f"{INVARIANT_PREFIX}{exc}")
    except QSDCError as exc:
        logger.error(f"Trial {index} failed: {exc}", exc_info=True)
        return TrialRecord(index=index, secret="", error=str(exc))


def _rate(count: int, total: int) -> float:
    return count / total if total else 0.0


def summarize(trials: list[TrialRecord], wall_time_s: Optional[float] = None) -> RunAggregates:
    """Агрегаты считаются только по записям испытаний."""
    total = len(trials)
    decoded = sum(trial.decoded is not None for trial in trials)
    correct = sum(trial.correct for trial in trials)
    aborted = sum(trial.aborted_phase is not None for trial in trials)
    detected = sum(trial.detected for trial in trials)
    decoy = sum(any(r.decoy_detected for r in trial.checkpoints) for trial in trials)
    validation = sum(any(r.validation_detected for r in trial.checkpoints) for trial in trials)
    return RunAggregates(
        trials=total,
        decoded=decoded,
        correct=correct,
        aborted=aborted,
        detected=detected,
        decoy_detected=decoy,
        validation_detected=validation,
        decode_success_rate=_rate(correct, total),
        detection_rate=_rate(detected, total),
        decoy_detection_rate=_rate(decoy, total),
        validation_detection_rate=_rate(validation, total),
        wall_time_s=wall_time_s,
    )


def _with_seed(config: RunConfig) -> RunConfig:
    if config.seed is not None:
        return config
    entropy = np.random.SeedSequence().entropy
    assert isinstance(entropy, int)
    return config.model_copy(update={"seed": entropy})


async def run(config: RunConfig, *, workers: Optional[int] = None) -> RunReport:
    """
    Запускает config.trials независимых сеансов параллельно.

    Семена испытаний порождаются из seed прогона, поэтому при одинаковых
    seed и конфигурации отчёт совпадает побайтно независимо от числа потоков.
    """
    config = _with_seed(config)
    limit = asyncio.Semaphore(workers or settings.workers)
    seeds = np.random.SeedSequence(config.seed).spawn(config.trials)
    logger.info(
        f"Run started: {config.variant.value} m={config.m} backend={config.backend.value} "
        f"attack={config.attack.strategy.value}/{config.attack.leg.value} trials={config.trials}"
    )
    started = time.perf_counter()

    async def worker(index: int) -> TrialRecord:
        async with limit:
            return await asyncio.to_thread(_run_trial_safely, config, index, seeds[index])

    trials = list(await asyncio.gather(*(worker(i) for i in range(config.trials))))
    elapsed = time.perf_counter() - started
    violations = [
        f"trial {t.index}: {t.error}"
        for t in trials
        if t.error and t.error.startswith(INVARIANT_PREFIX)
    ]
    failed = sum(1 for t in trials if t.error) - len(violations)
    report = RunReport(
        schema_version=settings.report_schema_version,
        config=config,
        trials=trials,
        aggregates=summarize(trials, round(elapsed, 6) if config.record_timing else None),
        invariant_violations=violations,
    )
    logger.info(
        f"Run finished: success={report.aggregates.decode_success_rate:.4f} "
        f"detection={report.aggregates.detection_rate:.4f} "
        f"aborted={report.aggregates.aborted} in {elapsed:.2f}s"
    )
    if violations:
        logger.warning(f"{len(violations)} trials tripped invariants")
    if failed:
        logger.warning(f"{failed} trials failed without tripping an invariant")
    if config.out is not None:
        write_report(report, config.out)
    if settings.database_url:
        from app.database import record_run

        await record_run(report)
    return report


def run_sync(config: RunConfig, *, workers: Optional[int] = None) -> RunReport:
    return asyncio.run(run(config, workers=workers))


def render_report(report: RunReport) -> str:
    return report.model_dump_json(indent=2) + "\n"


def write_report(report: RunReport, path: Path) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(render_report(report), encoding="utf-8")


def load_report(path: Path) -> RunReport:
    return RunReport.model_validate_json(path.read_text(encoding="utf-8"))


def _set_path(target: dict[str, Any], dotted: str, value: Any) -> None:
    *parents, leaf = dotted.split(".")
    for key in parents:
        target = target.setdefault(key, {})
    target[leaf] = value


def expand_grid(grid: dict[str, Any]) -> list[dict[str, Any]]:
    """
    {"base": {...}, "axes": {"m": [4, 8], "attack.strategy": [...]}} →
    декартово произведение осей поверх base. Для пустой сетки список пуст.
    """
    base = grid.get("base", {})
    axes: dict[str, list[Any]] = grid.get("axes", {})
    if not base and not axes:
        return []
    names = list(axes)
    cells = []
    for values in itertools.product(*(axes[name] for name in names)):
        cell = copy.deepcopy(base)
        for name, value in zip(names, values):
            _set_path(cell, name, value)
        cells.append(cell)
    return cells


def _failed_row(number: int, raw: dict[str, Any], error: str) -> SweepRow:
    attack = raw.get("attack", {}) if isinstance(raw.get("attack"), dict) else {}
    return SweepRow(
        cell=number,
        variant=str(raw.get("variant", "")),
        m=raw.get("m") if isinstance(raw.get("m"), int) else None,
        backend=str(raw.get("backend", "")),
        strategy=str(attack.get("strategy", "")),
        leg=str(attack.get("leg", "")),
        trials=raw.get("trials") if isinstance(raw.get("trials"), int) else None,
        status="failed",
        error=error,
    )


async def sweep(
    configs: Iterable[dict[str, Any]], *, workers: Optional[int] = None
) -> list[SweepRow]:
    """Прогоняет ячейки по очереди; упавшая ячейка помечается и не останавливает остальные."""
    rows: list[SweepRow] = []
    for number, raw in enumerate(configs):
        try:
            config = RunConfig.model_validate(raw)
            report = await run(config, workers=workers)
        except (ValidationError, QSDCError) as exc:
            logger.warning(f"Sweep cell {number} failed: {exc}")
            rows.append(_failed_row(number, raw, str(exc).replace("\n", "; ")))
            continue
        aggregates = report.aggregates
        status = "invariant" if report.invariant_violations else "ok"
        rows.append(
            SweepRow(
                cell=number,
                variant=config.variant.value,
                m=config.m,
                backend=config.backend.value,
                strategy=config.attack.strategy.value,
                leg=config.attack.leg.value,
                decoys=config.decoy_count,
                validate_k=config.validation_count,
                trials=config.trials,
                status=status,
                decode_success_rate=aggregates.decode_success_rate,
                detection_rate=aggregates.detection_rate,
                decoy_detection_rate=aggregates.decoy_detection_rate,
                validation_detection_rate=aggregates.validation_detection_rate,
            )
        )
        logger.info(f"Sweep cell {number}: {status}")
    return rows


SWEEP_COLUMNS = list(SweepRow.model_fields)


def write_sweep_csv(rows: list[SweepRow], path: Path) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="", encoding="utf-8") as handle:
        writer = csv.DictWriter(handle, fieldnames=SWEEP_COLUMNS)
        writer.writeheader()
        for row in rows:
            writer.writerow(row.model_dump(mode="json"))
