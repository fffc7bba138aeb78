"""Command-line front end.

    optune-lab run       --config c.yaml --out runs/a
    optune-lab sweep     --config c.yaml --rho 0.3,0.5,0.7,1.0 --strategy optune,random --out runs/
    optune-lab analyze   runs/*/ --out reports/
    optune-lab analyze   --speedup
    optune-lab plot-data runs/*/ --out figures/

Every flag can also come from an environment variable named
``OPTUNE_LAB_<FLAG>`` (for example ``OPTUNE_LAB_SEED=3``); explicit flags win.
"""

from __future__ import annotations

import argparse
import csv
import datetime as dt
import hashlib
import io
import json
import logging
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .config import ExperimentConfig, dump_config, parse_config
from .efficiency import CostModel, speedup_table
from .errors import DomainError, LogFormatError
from .evaluation import judge_pairwise, reward_gain_attribution, win_score
from .loop import build_scenario, checkpoint_from_entry, read_log, record_from_entry, run_training
from .policy import PolicyParams
from .scheduler import STRATEGIES

log = logging.getLogger("optune_lab")

ENV_PREFIX = "OPTUNE_LAB_"
SCHEMA_VERSION = 1
DEFAULT_SWEEP_RHOS = (0.3, 0.5, 0.7, 1.0)

LOG_NAME = "log.jsonl"
MANIFEST_NAME = "manifest.json"
CONFIG_NAME = "config.yaml"


def _env(name: str, default=None):
    return os.environ.get(ENV_PREFIX + name.upper(), default)


def _float_list(text: str) -> list[float]:
    return [float(v) for v in text.split(",") if v.strip()]


def _str_list(text: str) -> list[str]:
    items = [v.strip() for v in text.split(",") if v.strip()]
    for item in items:
        if item not in STRATEGIES:
            raise argparse.ArgumentTypeError(f"unknown strategy {item!r}; choose from {STRATEGIES}")
    return items


def _now() -> str:
    return dt.datetime.now(dt.timezone.utc).isoformat(timespec="seconds")


def _load_config(args) -> ExperimentConfig:
    config = parse_config(args.config) if args.config else ExperimentConfig()
    overrides = {}
    if args.seed is not None:
        overrides["master_seed"] = int(args.seed)
    if getattr(args, "workers", None) is not None:
        overrides["workers"] = int(args.workers)
    return config.replace(**overrides) if overrides else config


# --- run / sweep ------------------------------------------------------------

def _run_complete(out: Path, config: ExperimentConfig) -> bool:
    log_path = out / LOG_NAME
    if not (out / MANIFEST_NAME).exists() or not log_path.exists():
        return False
    return len(read_log(log_path)) == config.iterations


def execute_run(config: ExperimentConfig, out: Path, fmt: str = "jsonl") -> Path:
    """Run one experiment into ``out``; completed runs are left untouched."""
    out.mkdir(parents=True, exist_ok=True)
    log_path = out / LOG_NAME
    if _run_complete(out, config):
        log.info("%s already complete, skipping", out)
        return log_path
    started = _now()
    (out / CONFIG_NAME).write_text(dump_config(config))
    result = run_training(config, log_path)
    outputs = {"log": LOG_NAME, "config": CONFIG_NAME}
    if fmt == "csv":
        _write_csv(out / "records.csv", _record_rows(result.records))
        outputs["records"] = "records.csv"
    manifest = {
        "schema_version": SCHEMA_VERSION,
        "artifact_version": __version__,
        "config": config.to_dict(),
        "master_seed": config.master_seed,
        "started": started,
        "finished": _now(),
        "wall_time_ms": [r.wall_time_ms for r in result.records],
        "outputs": outputs,
    }
    (out / MANIFEST_NAME).write_text(json.dumps(manifest, indent=2) + "\n")
    return log_path


def _record_rows(records) -> list[dict]:
    return [
        {
            "iteration": r.iteration,
            "mean_chosen_reward": r.mean_chosen_reward,
            "expected_oracle_reward": r.expected_oracle_reward,
            "fresh_count": r.fresh_count,
            "reused_count": r.reused_count,
            "simulated_cost": r.simulated_cost,
            "final_loss": r.loss_trace[-1],
        }
        for r in records
    ]


def sweep_seed(master_seed: int, rho: float, strategy: str) -> int:
    digest = hashlib.sha256(f"{master_seed}:{rho!r}:{strategy}".encode()).digest()
    return int.from_bytes(digest[:4], "little")


def sweep_dir_name(rho: float, strategy: str) -> str:
    return f"rho{rho:g}_{strategy}"


def execute_sweep(config: ExperimentConfig, rhos, strategies, out: Path, fmt: str = "jsonl") -> list[Path]:
    """One run per (rho, strategy); all runs share the base config's scenario."""
    paths = []
    for strategy in strategies:
        for rho in rhos:
            run_config = config.replace(
                rho=rho,
                strategy=strategy,
                master_seed=sweep_seed(config.master_seed, rho, strategy),
                scenario_seed=config.resolved_scenario_seed,
            )
            paths.append(execute_run(run_config, out / sweep_dir_name(rho, strategy), fmt))
    return paths


# --- analysis ---------------------------------------------------------------

class LoadedRun:
    def __init__(self, path):
        path = Path(path)
        run_dir = path if path.is_dir() else path.parent
        log_path = path if path.is_file() else run_dir / LOG_NAME
        manifest_path = run_dir / MANIFEST_NAME
        if not manifest_path.exists():
            raise LogFormatError(manifest_path, 0, "manifest not found next to the log")
        try:
            manifest = json.loads(manifest_path.read_text())
        except json.JSONDecodeError as exc:
            raise LogFormatError(manifest_path, exc.lineno, f"invalid JSON ({exc.msg})") from None
        self.name = run_dir.name
        self.config = ExperimentConfig(**manifest["config"])
        self.entries = read_log(log_path)
        if not self.entries:
            raise LogFormatError(log_path, 0, "log is empty")
        self.records = [record_from_entry(e) for e in self.entries]
        self.scenario = build_scenario(self.config)

    def policy_after(self, t: int) -> PolicyParams:
        return checkpoint_from_entry(self.entries[t], self.config)[1]

    @property
    def final_policy(self) -> PolicyParams:
        return self.policy_after(len(self.entries) - 1)


def _same_oracle(a: LoadedRun, b: LoadedRun) -> None:
    if not np.array_equal(a.scenario.oracle.table, b.scenario.oracle.table):
        raise DomainError(f"runs {a.name} and {b.name} use different oracle rewards")


def analyze(run_paths, out: Path | None, judge_seed: int = 0, fmt: str = "csv") -> dict[str, list[dict]]:
    runs = [LoadedRun(p) for p in run_paths]
    tables: dict[str, list[dict]] = {"win_scores": [], "attribution": [], "speedup": []}
    if runs:
        baseline = runs[0]
        for run in runs:
            _same_oracle(baseline, run)
            outcome = judge_pairwise(
                run.final_policy, baseline.final_policy, baseline.scenario.oracle,
                seed=judge_seed, generation=baseline.config.generation,
            )
            tables["win_scores"].append({
                "run": run.name, "baseline": baseline.name,
                "n_win": outcome.n_win, "n_lose": outcome.n_lose, "n": outcome.n,
                "win_score": win_score(outcome),
            })
            for t in range(1, len(run.records)):
                prev_ranking = run.entries[t - 1]["checkpoint"]["state"]["ranked_prompts"]
                report = reward_gain_attribution(run.records[t - 1], run.records[t], prev_ranking)
                tables["attribution"].append({"run": run.name, "iteration": t, **report.to_dict()})
            cost = run.config.cost_model
            for row in speedup_table(cost, (run.config.rho,)):
                tables["speedup"].append({"run": run.name, **row})
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
        for name, rows in tables.items():
            if rows:
                _write_table(out, name, rows, fmt)
    return tables


def plot_data(run_paths, out: Path, judge_seed: int = 0) -> dict[str, list[dict]]:
    """Per-figure tables: win score vs iteration and vs cumulative simulated cost.

    Each run's policy after every iteration is judged against that run's
    initial policy.
    """
    runs = [LoadedRun(p) for p in run_paths]
    by_iter, by_cost = [], []
    for run in runs:
        cumulative = 0.0
        for t, record in enumerate(run.records):
            cumulative += record.simulated_cost
            outcome = judge_pairwise(
                run.policy_after(t), run.scenario.initial_policy, run.scenario.oracle,
                seed=judge_seed, generation=run.config.generation,
            )
            row = {
                "run": run.name, "rho": run.config.rho, "strategy": run.config.strategy,
                "loss_kind": run.config.loss_kind, "iteration": t + 1,
                "win_score": win_score(outcome),
                "expected_oracle_reward": record.expected_oracle_reward,
            }
            by_iter.append(row)
            by_cost.append({**row, "cumulative_cost": cumulative})
    tables = {"winscore_vs_iteration": by_iter, "winscore_vs_cost": by_cost}
    out.mkdir(parents=True, exist_ok=True)
    for name, rows in tables.items():
        _write_csv(out / f"{name}.csv", rows)
    return tables


def _write_csv(path: Path, rows: list[dict]) -> None:
    with path.open("w", newline="") as fh:
        fh.write(_csv_text(rows))


def _csv_text(rows: list[dict]) -> str:
    buf = io.StringIO()
    if rows:
        writer = csv.DictWriter(buf, fieldnames=list(rows[0]), lineterminator="\n")
        writer.writeheader()
        writer.writerows(rows)
    return buf.getvalue()


def _write_table(out: Path, name: str, rows: list[dict], fmt: str) -> None:
    _write_csv(out / f"{name}.csv", rows)
    if fmt == "jsonl":
        with (out / f"{name}.jsonl").open("w") as fh:
            for row in rows:
                fh.write(json.dumps(row) + "\n")


# --- argument parsing -------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", default=_env("config"), help="YAML config file")
    common.add_argument("--seed", type=int, default=_env("seed"), help="master seed override")
    common.add_argument("--out", default=_env("out"), help="output directory")
    common.add_argument("--format", choices=("jsonl", "csv"), default=_env("format"))
    common.add_argument("--workers", type=int, default=_env("workers"),
                        help="threads for prompt-parallel sampling")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(prog="optune-lab", description=__doc__.split("\n")[0])
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    sub.add_parser("run", parents=[common], help="run one experiment")

    p = sub.add_parser("sweep", parents=[common], help="run a rho x strategy grid")
    p.add_argument("--rho", type=_float_list, default=_env("rho", ",".join(map(str, DEFAULT_SWEEP_RHOS))))
    p.add_argument("--strategy", type=_str_list, default=_env("strategy", "optune,random"))

    p = sub.add_parser("analyze", parents=[common], help="win-score, attribution and speedup tables")
    p.add_argument("runs", nargs="*", help="run directories or log.jsonl paths")
    p.add_argument("--speedup", action="store_true", help="print a rho -> (cost, speedup) CSV")
    p.add_argument("--rho", type=_float_list, default=_env("rho", ",".join(map(str, DEFAULT_SWEEP_RHOS))))

    p = sub.add_parser("plot-data", parents=[common], help="per-figure CSVs")
    p.add_argument("runs", nargs="+", help="run directories or log.jsonl paths")
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        return _dispatch(args)
    except (DomainError, LogFormatError, OSError, TypeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


def _dispatch(args) -> int:
    out = Path(args.out) if args.out else None
    if args.command == "run":
        config = _load_config(args)
        path = execute_run(config, out or Path("runs") / f"seed{config.master_seed}", args.format or "jsonl")
        print(path)
    elif args.command == "sweep":
        config = _load_config(args)
        for path in execute_sweep(config, args.rho, args.strategy, out or Path("sweep"), args.format or "jsonl"):
            print(path)
    elif args.command == "analyze":
        if args.speedup:
            config = parse_config(args.config) if args.config else ExperimentConfig()
            cost = CostModel(config.f_gen, config.f_reward, config.f_train)
            rows = [{k: r[k] for k in ("rho", "cost", "speedup")} for r in speedup_table(cost, args.rho)]
            sys.stdout.write(_csv_text(rows))
        if args.runs:
            analyze(args.runs, out or Path("analysis"), judge_seed=args.seed or 0, fmt=args.format or "csv")
        elif not args.speedup:
            raise DomainError("analyze needs run paths or --speedup")
    elif args.command == "plot-data":
        plot_data(args.runs, out or Path("plot_data"), judge_seed=args.seed or 0)
    return 0


if __name__ == "__main__":
    sys.exit(main())
