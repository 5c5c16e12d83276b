from __future__ import annotations

import argparse
import asyncio
import json
import logging
import sys
from pathlib import Path
from typing import Any, Optional, Sequence

from pydantic import ValidationError

from app.config import settings
from app.exceptions import ConfigError, QSDCError
from app.models import (
    AttackStrategy,
    BackendKind,
    Leg,
    MeasurementBasis,
    OracleMode,
    RunConfig,
    Variant,
)
from app.runner import expand_grid, run, sweep, write_sweep_csv

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_INVARIANT = 3


def _add_run_arguments(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", type=Path, help="JSON-файл с RunConfig; флаги его перекрывают")
    parser.add_argument("--variant", choices=[v.value for v in Variant])
    parser.add_argument("--m", type=int, help="длина сообщения")
    parser.add_argument("--secret", help="секрет 2p: '1011' или '0x…'")
    parser.add_argument("--secret-b", dest="secret_b", help="секрет Боба в 3p")
    parser.add_argument("--secret-c", dest="secret_c", help="секрет Чарли в 3p")
    parser.add_argument("--backend", choices=[b.value for b in BackendKind])
    parser.add_argument("--trials", type=int)
    parser.add_argument("--attack", choices=[a.value for a in AttackStrategy])
    parser.add_argument("--leg", choices=[leg.value for leg in Leg])
    parser.add_argument("--eve-random-basis", action="store_true", default=None)
    parser.add_argument("--eve-readout", choices=[b.value for b in MeasurementBasis])
    parser.add_argument("--decoys", type=int, help="ловушек на плечо")
    parser.add_argument("--validate-k", dest="validate_k", type=int, help="жертвуемых кортежей")
    parser.add_argument("--seed", type=int)
    parser.add_argument("--out", type=Path, help="куда записать JSON-отчёт")
    parser.add_argument("--no-security", action="store_true", default=None)
    parser.add_argument("--no-abort", action="store_true", default=None)
    parser.add_argument("--oracle-mode", choices=[o.value for o in OracleMode])
    parser.add_argument("--measure-ancillas", action="store_true", default=None)
    parser.add_argument("--timing", action="store_true", default=None)
    parser.add_argument("--no-transcript", action="store_true", default=None)
    parser.add_argument("--workers", type=int)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="qsdc",
        description="Симуляция протоколов прямой квантовой связи на 2 и 3 участниках",
    )
    parser.add_argument("--log-level", default=settings.log_level)
    commands = parser.add_subparsers(dest="command", required=True)
    _add_run_arguments(commands.add_parser("run", help="серия испытаний с JSON-отчётом"))
    sweep_parser = commands.add_parser("sweep", help="сетка конфигураций с CSV-сводкой")
    sweep_parser.add_argument("grid", type=Path, help='JSON: {"base": {...}, "axes": {...}}')
    sweep_parser.add_argument("--out", type=Path, required=True, help="CSV со сводкой")
    sweep_parser.add_argument("--workers", type=int)
    return parser


def _load_json(path: Path) -> Any:
    try:
        return json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: line {exc.lineno}, column {exc.colno}: {exc.msg}") from exc
    except OSError as exc:
        raise ConfigError(f"{path}: {exc.strerror}") from exc


def config_from_args(args: argparse.Namespace) -> RunConfig:
    """RunConfig из файла (если есть) с поверх наложенными флагами."""
    raw: dict[str, Any] = _load_json(args.config) if args.config else {}
    if not isinstance(raw, dict):
        raise ConfigError(f"{args.config}: expected a JSON object")
    for name in (
        "variant", "m", "secret", "secret_b", "secret_c", "backend", "trials",
        "decoys", "validate_k", "seed", "out", "oracle_mode",
    ):
        value = getattr(args, name)
        if value is not None:
            raw[name] = str(value) if isinstance(value, Path) else value
    attack = dict(raw.get("attack") or {})
    for flag, key in (
        ("attack", "strategy"), ("leg", "leg"), ("eve_random_basis", "random_basis"),
        ("eve_readout", "readout_basis"),
    ):
        value = getattr(args, flag)
        if value is not None:
            attack[key] = value
    if attack:
        raw["attack"] = attack
    if args.no_security:
        raw["security"] = False
    if args.no_abort:
        raw["abort_on_detection"] = False
    if args.measure_ancillas:
        raw["measure_ancillas"] = True
    if args.timing:
        raw["record_timing"] = True
    if args.no_transcript:
        raw["record_transcript"] = False
    return RunConfig.model_validate(raw)


def format_validation_error(exc: ValidationError) -> str:
    lines = []
    for error in exc.errors():
        location = ".".join(str(part) for part in error["loc"]) or "config"
        lines.append(f"{location}: {error['msg']}")
    return "\n".join(lines)


async def _run_command(args: argparse.Namespace) -> int:
    config = config_from_args(args)
    report = await run(config, workers=args.workers)
    if config.out is None:
        sys.stdout.write(report.model_dump_json(indent=2) + "\n")
    return EXIT_INVARIANT if report.invariant_violations else EXIT_OK


async def _sweep_command(args: argparse.Namespace) -> int:
    grid = _load_json(args.grid)
    if not isinstance(grid, dict):
        raise ConfigError(f"{args.grid}: expected a JSON object")
    rows = await sweep(expand_grid(grid), workers=args.workers)
    write_sweep_csv(rows, args.out)
    logger.info(f"Sweep of {len(rows)} cells written to {args.out}")
    return EXIT_INVARIANT if any(row.status == "invariant" for row in rows) else EXIT_OK


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=args.log_level.upper(),
        format="%(asctime)s | %(levelname)s | %(name)s | %(message)s",
    )
    command = _run_command if args.command == "run" else _sweep_command
    try:
        return asyncio.run(command(args))
    except ValidationError as exc:
        sys.stderr.write(format_validation_error(exc) + "\n")
        return EXIT_CONFIG
    except ConfigError as exc:
        sys.stderr.write(f"{exc}\n")
        return EXIT_CONFIG
    except QSDCError as exc:
        logger.error(f"Run failed: {exc}", exc_info=True)
        return EXIT_INVARIANT


def cli() -> None:
    sys.exit(main())


if __name__ == "__main__":
    cli()
