"""명령행 진입점: calibrate / train / sweep / memory / compare

종료 코드: 0 성공, 1 실행 오류(발산, 파일 없음 등), 2 설정 오류.
"""

from __future__ import annotations

import argparse
import asyncio
import json
import logging
import os
import sys
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence

from pydantic import ValidationError

from owskit.errors import ConfigError, OwsError
from owskit.experiment import (
    SWEEP_AXES,
    compare_means,
    prepare_task,
    run_compare,
    run_experiment,
    run_sweep,
    seed_wins,
    write_run,
)
from owskit.memory import compare_methods, memory_sweep, render_table, reports_to_csv
from owskit.nn import load_checkpoint
from owskit.outlier import build_profile, calibrate, format_profile_table, save_profile
from owskit.schemas import SAMPLING_METHODS, Method, RunConfigFile, TrainConfig

logger = logging.getLogger(__name__)

LOG_FORMAT = "%(asctime)s [%(levelname)s] %(name)s: %(message)s"

EXIT_OK = 0
EXIT_RUNTIME = 1
EXIT_CONFIG = 2

# CLI 플래그 -> 설정 필드
_OVERRIDES = {
    "method": "method",
    "gamma": "gamma",
    "rank": "rank",
    "tau": "tau",
    "seed": "seed",
    "steps": "total_steps",
    "period": "sample_period_k",
    "lr": "lr",
    "task": "task",
    "update_mode": "update_mode",
    "sampling_mode": "sampling_mode",
    "refresh_every": "refresh_every",
    "batch_size": "batch_size",
    "log_every": "log_every",
    "checkpoint": "checkpoint",
}


def configure_logging(level: str | None = None) -> None:
    logging.basicConfig(level=(level or os.getenv("OWS_LOG_LEVEL", "INFO")).upper(), format=LOG_FORMAT)


def load_run_config(args: argparse.Namespace) -> RunConfigFile:
    """JSON 설정 파일 위에 CLI 플래그를 덮어쓴다 (플래그 우선)."""
    data: Dict[str, Any] = {}
    if args.config:
        path = Path(args.config)
        if not path.exists():
            raise FileNotFoundError(f"Config file not found: {path}")
        try:
            data = json.loads(path.read_text(encoding="utf-8"))
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config file is not valid JSON: {exc}") from exc
        if not isinstance(data, dict):
            raise ConfigError("config file must contain a JSON object")

    for flag, field_name in _OVERRIDES.items():
        value = getattr(args, flag, None)
        if value is not None:
            data[field_name] = value
    if getattr(args, "arch", None) is not None:
        data["model"] = {**data.get("model", {}), "arch": args.arch}
    return RunConfigFile.model_validate(data)


def resolve_out_dir(args: argparse.Namespace, config: RunConfigFile, command: str) -> Path:
    if getattr(args, "out", None):
        return Path(args.out)
    if config.out_dir:
        return Path(config.out_dir)
    return Path(os.getenv("OWS_RUNS_DIR", "runs")) / command


def _write_text(path: Path, text: str) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text, encoding="utf-8")
    return path


# ============================================================
# 명령
# ============================================================

def cmd_calibrate(args: argparse.Namespace) -> int:
    config = load_run_config(args)
    train_config = config.train_config()
    data = prepare_task(train_config)
    model = load_checkpoint(config.checkpoint) if config.checkpoint else data.initial_model()
    stats = calibrate(model, data.batches("calibration", train_config.calibration_batches))
    profile = build_profile(model, stats, train_config.tau)

    target = save_profile(profile, resolve_out_dir(args, config, "calibrate") / "profile.json")
    print(format_profile_table(profile))
    logger.info("profile 저장: %s (argmax layer %d)", target, profile.argmax())
    return EXIT_OK


def cmd_train(args: argparse.Namespace) -> int:
    config = load_run_config(args)
    train_config = config.train_config()
    model = load_checkpoint(config.checkpoint) if config.checkpoint else None
    result = run_experiment(train_config, model=model, bytes_per_elem=config.bytes_per_elem)
    out = write_run(result, resolve_out_dir(args, config, "train"))
    print(
        f"final eval loss {result.log.final_eval_loss:.6f} "
        f"(initial {result.log.initial_eval_loss:.6f}), run dir {out}"
    )
    return EXIT_OK


async def _queued_sweep(base: TrainConfig, axis: str, values: Sequence[float]) -> List[Dict[str, Any]]:
    from owskit.tasks.redis_client import close_redis
    from owskit.tasks.sweep import queue_sweep

    try:
        return await queue_sweep(base, axis, values)
    finally:
        await close_redis()


def cmd_sweep(args: argparse.Namespace) -> int:
    config = load_run_config(args)
    if not args.values:
        raise ConfigError("sweep needs at least one value")
    base = config.train_config()
    if args.queue:
        rows = asyncio.run(_queued_sweep(base, args.axis, args.values))
    else:
        rows = run_sweep(base, args.axis, args.values)
    target = _write_text(resolve_out_dir(args, config, "sweep") / "sweep.csv", reports_to_csv(rows))
    print(reports_to_csv(rows), end="")
    logger.info("sweep 저장: %s", target)
    return EXIT_OK


def cmd_memory(args: argparse.Namespace) -> int:
    config = load_run_config(args)
    spec = config.model
    if args.gammas or args.ranks:
        rows = memory_sweep(
            spec,
            args.gammas or [config.gamma],
            args.ranks or [config.rank],
            batch_size=config.batch_size,
            bytes_per_elem=config.bytes_per_elem,
        )
        text = reports_to_csv(rows)
        _write_text(resolve_out_dir(args, config, "memory") / "memory.csv", text)
        print(text, end="")
    else:
        reports = compare_methods(spec, config.rank, config.gamma, config.batch_size, config.bytes_per_elem)
        print(render_table(reports))
    return EXIT_OK


def cmd_compare(args: argparse.Namespace) -> int:
    config = load_run_config(args)
    rows = run_compare(config.train_config(), args.methods, args.seeds)
    out = resolve_out_dir(args, config, "compare")
    _write_text(out / "compare.csv", reports_to_csv(rows))
    for method, mean in compare_means(rows).items():
        print(f"{method:>14}  mean final eval loss {mean:.6f}")
    lead, *others = list(dict.fromkeys(str(r["method"]) for r in rows))
    for other in others:
        wins, total = seed_wins(rows, lead, other)
        print(f"{lead} < {other}: {wins}/{total} seeds")
    return EXIT_OK


# ============================================================
# 파서
# ============================================================

def _add_common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", help="JSON 설정 파일 (RunConfigFile)")
    parser.add_argument("--out", help="출력 디렉토리 (기본: $OWS_RUNS_DIR/<명령>)")
    parser.add_argument("--seed", type=int)
    parser.add_argument("--method", choices=[m.value for m in Method])
    parser.add_argument("--gamma", type=float)
    parser.add_argument("--rank", type=int)
    parser.add_argument("--tau", type=float)
    parser.add_argument("--steps", type=int, help="total_steps")
    parser.add_argument("--period", type=int, help="sample_period_k")
    parser.add_argument("--lr", type=float)
    parser.add_argument("--task", choices=["teacher-student", "seq-copy", "layer-signal"])
    parser.add_argument("--arch", choices=["mlp-stack", "tiny-transformer"])
    parser.add_argument("--update-mode", dest="update_mode", choices=["low-rank", "full-rank"])
    parser.add_argument("--sampling-mode", dest="sampling_mode", choices=["bernoulli", "systematic"])
    parser.add_argument("--refresh-every", dest="refresh_every", type=int)
    parser.add_argument("--batch-size", dest="batch_size", type=int)
    parser.add_argument("--log-every", dest="log_every", type=int)
    parser.add_argument("--checkpoint", help="시작 모델 체크포인트 디렉토리")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="run_ows.py", description="Outlier-weighed layerwise sampling toolkit")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("calibrate", help="이상치 프로파일 계산 (profile.json)")
    _add_common(p)
    p.set_defaults(func=cmd_calibrate)

    p = sub.add_parser("train", help="학습 실행 (log.csv, summary.json, checkpoint)")
    _add_common(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("sweep", help="γ / r / τ 축 sweep (sweep.csv)")
    _add_common(p)
    p.add_argument("--axis", required=True, choices=SWEEP_AXES)
    p.add_argument("--values", nargs="*", type=float, default=[])
    p.add_argument("--queue", action="store_true", help="Redis Streams로 worker에 분산")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("memory", help="방식별 메모리 회계")
    _add_common(p)
    p.add_argument("--gammas", nargs="*", type=float, default=[])
    p.add_argument("--ranks", nargs="*", type=int, default=[])
    p.set_defaults(func=cmd_memory)

    p = sub.add_parser("compare", help="방식 × seed 비교 (compare.csv)")
    _add_common(p)
    p.add_argument(
        "--methods",
        nargs="+",
        default=[Method.OWS.value, Method.LISA_UNIFORM.value, Method.OWS_REVERSE.value],
        choices=[m.value for m in SAMPLING_METHODS] + [Method.FULL.value, Method.GALORE.value],
    )
    p.add_argument("--seeds", nargs="+", type=int, default=[0, 1, 2, 3, 4])
    p.set_defaults(func=cmd_compare)
    return parser


def _format_validation_error(exc: ValidationError) -> List[str]:
    lines = []
    for err in exc.errors():
        path = ".".join(str(part) for part in err["loc"]) or "<root>"
        lines.append(f"{path}: {err['msg']}")
    return lines


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ValidationError as exc:
        for line in _format_validation_error(exc):
            print(f"config error: {line}", file=sys.stderr)
        return EXIT_CONFIG
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except FileNotFoundError as exc:
        print(f"file not found: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    except OwsError as exc:
        logger.error("%s", exc)
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
