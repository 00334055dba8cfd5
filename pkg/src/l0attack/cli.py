"""Command-line experiment runner.

Subcommands: ``gen-data``, ``train``, ``attack``, ``report`` and ``grid``.
Diagnostics go to stderr; stdout only carries a one-line JSON summary.

Exit codes: 0 success, 2 configuration error, 3 data error,
4 model/data shape mismatch, 5 missing or corrupt outcome files.
"""

from __future__ import annotations

import argparse
import concurrent.futures
import csv
import datetime as _dt
import hashlib
import io
import json
import logging
import os
import sys
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from . import __version__
from . import data as data_mod
from . import evaluation, models
from .attacks import AttackConfig, AttackConfigError, run_attack
from .data import DataError, Dataset
from .models import ModelError
from .regularizers import DEFAULT_LAMBDA, Regularizer

logger = logging.getLogger("l0attack")

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DATA = 3
EXIT_SHAPE = 4
EXIT_OUTCOMES = 5


class CliError(Exception):
    def __init__(self, message: str, code: int):
        super().__init__(message)
        self.code = code


def _config_error(msg: str) -> CliError:
    return CliError(msg, EXIT_CONFIG)


# ---------------------------------------------------------------------------
# datasets


SYNTHETIC_KEYS = {"n": int, "d": int, "bump": int, "noise": float, "amp": float, "seed": int}


def parse_synthetic(spec: str) -> dict:
    """Parse ``d=64,bump=8,n=200,noise=0.1`` into generator arguments."""
    out = {}
    for item in filter(None, (p.strip() for p in spec.split(","))):
        key, sep, raw = item.partition("=")
        if not sep or key not in SYNTHETIC_KEYS:
            raise _config_error(f"bad synthetic spec item {item!r}; keys: {sorted(SYNTHETIC_KEYS)}")
        try:
            out[key] = SYNTHETIC_KEYS[key](raw)
        except ValueError:
            raise _config_error(f"bad value for {key}: {raw!r}") from None
    return out


def synthetic_dataset(spec: dict, default_seed: int = 0) -> Dataset:
    return data_mod.gen_synthetic(
        n_per_class=spec.get("n", 200),
        length=spec.get("d", 64),
        bump_width=spec.get("bump", 8),
        noise_std=spec.get("noise", 0.1),
        seed=spec.get("seed", default_seed),
        amplitude=spec.get("amp", 1.5),
    )


def dataset_from_source(source: dict, default_seed: int = 0) -> Dataset:
    """Resolve ``{"synthetic": {...}}``, ``{"ucr": dir}`` or ``{"train": p, "test": p}``."""
    if "synthetic" in source:
        spec = source["synthetic"]
        if isinstance(spec, str):
            spec = parse_synthetic(spec)
        return synthetic_dataset(spec, default_seed)
    znorm = bool(source.get("znorm", False))
    if "ucr" in source:
        train, test = data_mod.find_split(source["ucr"])
        return data_mod.load_split(train, test, znorm=znorm)
    if "train" in source and "test" in source:
        return data_mod.load_split(source["train"], source["test"], znorm=znorm)
    raise _config_error("dataset source needs 'synthetic', 'ucr' or 'train'+'test'")


def _add_dataset_args(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("dataset")
    g.add_argument("--synthetic", metavar="SPEC", help="synthetic benchmark, e.g. d=64,bump=8,n=200,noise=0.1")
    g.add_argument("--data", metavar="DIR", help="UCR dataset folder holding *_TRAIN/*_TEST files")
    g.add_argument("--train", metavar="PATH", help="training file (with --test)")
    g.add_argument("--test", metavar="PATH", help="test file (with --train)")
    g.add_argument("--znorm", action="store_true", help="z-normalise every loaded series")


def _dataset_source(args) -> dict:
    if args.synthetic is not None:
        return {"synthetic": parse_synthetic(args.synthetic)}
    if args.data is not None:
        return {"ucr": args.data, "znorm": args.znorm}
    if args.train is not None and args.test is not None:
        return {"train": args.train, "test": args.test, "znorm": args.znorm}
    raise _config_error("no dataset given: use --synthetic, --data or --train/--test")


# ---------------------------------------------------------------------------
# attacking a whole test set


_WORKER_MODEL: models.Model | None = None


def _init_worker(model: models.Model) -> None:
    global _WORKER_MODEL
    _WORKER_MODEL = model


def _attack_one(task):
    x, y, config = task
    out = run_attack(_WORKER_MODEL, x, y, config)
    return out.success, out.l2_distance, out.close_to_zero, out.iterations_used, out.final_sigma, \
        out.diagnostic, out.delta


def attack_dataset(model: models.Model, X: np.ndarray, y: np.ndarray, config: AttackConfig,
                   jobs: int = 1) -> tuple[list[dict], np.ndarray, float]:
    """Attack every row of ``X``; records come back in sample order whatever ``jobs`` is."""
    tasks = [(X[i], int(y[i]), config) for i in range(len(X))]
    start = time.perf_counter()
    if jobs <= 1:
        _init_worker(model)
        results = [_attack_one(t) for t in tasks]
    else:
        with concurrent.futures.ProcessPoolExecutor(max_workers=jobs, initializer=_init_worker,
                                                    initargs=(model,)) as pool:
            results = list(pool.map(_attack_one, tasks, chunksize=max(1, len(tasks) // (4 * jobs))))
    duration = time.perf_counter() - start

    records = []
    for i, (success, dist, ctz, iters, sigma, diag, _) in enumerate(results):
        rec = {
            "index": i,
            "label": int(y[i]),
            "success": bool(success),
            "l2_distance": float(dist),
            "close_to_zero": int(ctz),
            "iterations_used": int(iters),
        }
        if sigma is not None:
            rec["final_sigma"] = float(sigma)
        if diag:
            rec["diagnostic"] = diag
        records.append(rec)
    deltas = np.stack([r[-1] for r in results]) if results else np.zeros((0, X.shape[1]))
    return records, deltas, duration


def write_outcomes(path: Path, records: list[dict], meta: dict, deltas: np.ndarray | None = None) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text("".join(json.dumps(r) + "\n" for r in records))
    meta_path(path).write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")
    if deltas is not None:
        np.save(deltas_path(path), deltas.astype("<f8"))


def meta_path(outcomes: Path) -> Path:
    return outcomes.with_name(outcomes.name + ".meta.json")


def deltas_path(outcomes: Path) -> Path:
    return outcomes.with_name(outcomes.name + ".deltas.npy")


def read_outcomes(path: str | Path) -> tuple[list[dict], dict]:
    path = Path(path)
    if not path.is_file():
        raise CliError(f"{path}: outcome file not found", EXIT_OUTCOMES)
    mpath = meta_path(path)
    if not mpath.is_file():
        raise CliError(f"{path}: metadata sidecar {mpath.name} not found", EXIT_OUTCOMES)
    try:
        meta = json.loads(mpath.read_text())
        records = [json.loads(line) for line in path.read_text().splitlines() if line.strip()]
    except ValueError as exc:
        raise CliError(f"{path}: corrupt outcome file ({exc})", EXIT_OUTCOMES) from None
    need = ("success", "l2_distance", "close_to_zero")
    for n, rec in enumerate(records, start=1):
        if not isinstance(rec, dict) or any(k not in rec for k in need):
            raise CliError(f"{path}: record {n} lacks one of {need}", EXIT_OUTCOMES)
    if not records:
        raise CliError(f"{path}: no records", EXIT_OUTCOMES)
    if meta.get("n_records", len(records)) != len(records):
        raise CliError(f"{path}: expected {meta['n_records']} records, found {len(records)}", EXIT_OUTCOMES)
    return records, meta


# ---------------------------------------------------------------------------
# reports


def build_report(paths: Sequence[str | Path]) -> list[evaluation.MetricsRow]:
    rows = []
    seen = {}
    for p in paths:
        records, meta = read_outcomes(p)
        try:
            cell = (meta["model"], meta["attack"], meta["regularizer"])
        except KeyError as exc:
            raise CliError(f"{p}: metadata lacks {exc}", EXIT_OUTCOMES) from None
        if cell in seen:
            raise _config_error(f"duplicate cell {cell}: {seen[cell]} and {p}")
        seen[cell] = p
        rows.append(evaluation.aggregate(records, meta.get("duration_s", 0.0), *cell))
    return rows


def comparison_rows(rows: Sequence[evaluation.MetricsRow]) -> list[dict]:
    """Long-format (model, method, metric, value) records for bar charts."""
    metrics = ("asr", "mean_success_distance", "overall_mean_distance", "close_to_zero")
    out = []
    for r in rows:
        if r.regularizer == "asl0":
            method = f"AS_{r.attack}"
        elif r.regularizer == "none":
            method = r.attack
        else:
            method = f"{r.attack}+{r.regularizer}"
        for m in metrics:
            value = getattr(r, m)
            out.append({"model": r.model, "method": method, "metric": m,
                        "value": "" if value is None else repr(value)})
    return out


def write_report(rows: Sequence[evaluation.MetricsRow], out_dir: Path) -> dict[str, Path]:
    out_dir.mkdir(parents=True, exist_ok=True)
    paths = {
        "csv": out_dir / "report.csv",
        "json": out_dir / "report.json",
        "comparison": out_dir / "comparison.csv",
    }
    paths["csv"].write_text(evaluation.rows_to_csv(rows))
    paths["json"].write_text(evaluation.rows_to_json(rows) + "\n")
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=["model", "method", "metric", "value"], lineterminator="\n")
    writer.writeheader()
    writer.writerows(comparison_rows(rows))
    paths["comparison"].write_text(buf.getvalue())
    return paths


# ---------------------------------------------------------------------------
# subcommands


def _emit(summary: dict) -> None:
    sys.stdout.write(json.dumps(summary, sort_keys=True) + "\n")


def cmd_gen_data(args) -> int:
    spec = parse_synthetic(args.synthetic)
    ds = synthetic_dataset(spec, args.seed)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    data_mod.save_tsv(ds.train, out / "SYNTHETIC_TRAIN.tsv")
    data_mod.save_tsv(ds.test, out / "SYNTHETIC_TEST.tsv")
    _emit({"train": len(ds.train), "test": len(ds.test), "length": ds.length, "dir": str(out)})
    return EXIT_OK


def train_model(ds: Dataset, architecture: str, config: models.TrainConfig, hidden: int = 32):
    model = models.build(architecture, ds.length, ds.num_classes, seed=config.seed, hidden=hidden)
    X, y = ds.train_arrays
    result = models.train(model, X, y, config)
    Xt, yt = ds.test_arrays
    log = {
        "architecture": result.model.architecture.value,
        "parameter_count": result.model.parameter_count,
        "train_config": config.to_dict(),
        "initial_loss": result.initial_loss,
        "loss_curve": result.loss_curve,
        "train_accuracy": models.accuracy(result.model, X, y),
        "test_accuracy": models.accuracy(result.model, Xt, yt),
    }
    return result.model, log


def cmd_train(args) -> int:
    ds = dataset_from_source(_dataset_source(args), args.seed)
    try:
        config = models.TrainConfig(optimizer=args.optimizer, learning_rate=args.lr, epochs=args.epochs,
                                    batch_size=args.batch_size, seed=args.seed)
    except ValueError as exc:
        raise _config_error(str(exc)) from None
    model, log = train_model(ds, args.arch, config, hidden=args.hidden)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    models.save(model, out)
    log_path = Path(args.log) if args.log else out.with_suffix(".train.json")
    log_path.write_text(json.dumps(log, indent=2) + "\n")
    _emit({"model": str(out), "log": str(log_path), "test_accuracy": log["test_accuracy"]})
    return EXIT_OK


def _attack_config_from_args(args) -> AttackConfig:
    return AttackConfig(
        kind=args.attack,
        regularizer=Regularizer(args.regularizer, args.lam),
        iterations=args.iterations,
        alpha=args.alpha,
        eps_inf=args.eps_inf,
        eps_2=args.eps_2,
        kappa=args.kappa,
        sigma0=args.sigma0,
        eta_d=args.eta_d,
        eta_i=args.eta_i,
        clamp_range=tuple(args.clamp) if args.clamp else None,
        early_stop=args.early_stop,
        keep_ball=args.keep_ball,
        epsilon_zero=args.epsilon_zero,
        seed=args.seed,
        stability_floor=args.stability_floor,
    )


def cmd_attack(args) -> int:
    try:
        config = _attack_config_from_args(args)
    except ValueError as exc:
        raise _config_error(str(exc)) from None
    model_path = Path(args.model)
    if not model_path.is_file():
        raise CliError(f"{model_path}: model file not found", EXIT_DATA)
    model = models.load(model_path)
    ds = dataset_from_source(_dataset_source(args), args.seed)
    if ds.length != model.input_length or ds.num_classes > model.num_classes:
        raise CliError(f"model expects length {model.input_length} and {model.num_classes} classes; "
                       f"dataset has length {ds.length} and {ds.num_classes} classes", EXIT_SHAPE)
    X, y = ds.test_arrays
    if args.limit:
        X, y = X[: args.limit], y[: args.limit]
    records, deltas, duration = attack_dataset(model, X, y, config, jobs=args.jobs)
    meta = {
        "model": args.model_name or model.architecture.value,
        "attack": config.kind.value,
        "regularizer": config.regularizer.kind.value,
        "config": config.to_dict(),
        "duration_s": duration,
        "n_records": len(records),
        "tool_version": __version__,
    }
    out = Path(args.out)
    write_outcomes(out, records, meta, deltas if args.save_deltas else None)
    _emit({"outcomes": str(out), "records": len(records),
           "asr": evaluation.asr(sum(r["success"] for r in records),
                                 sum(not r["success"] for r in records))})
    return EXIT_OK


def cmd_report(args) -> int:
    rows = build_report(args.outcomes)
    paths = write_report(rows, Path(args.out_dir))
    _emit({k: str(v) for k, v in paths.items()} | {"rows": len(rows)})
    return EXIT_OK


# ---------------------------------------------------------------------------
# grid


@dataclass
class ExperimentConfig:
    dataset: dict
    model: dict
    attacks: list[dict]
    regularizers: list[dict]
    output_dir: str
    seed: int = 0

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        missing = [k for k in ("dataset", "model", "attacks", "regularizers", "output_dir") if k not in d]
        if missing:
            raise _config_error(f"experiment config lacks {missing}")
        cfg = cls(d["dataset"], d["model"], list(d["attacks"]), list(d["regularizers"]),
                  d["output_dir"], int(d.get("seed", 0)))
        if not cfg.attacks or not cfg.regularizers:
            raise _config_error("attack and regularizer grids must be non-empty")
        return cfg

    def hash(self) -> str:
        body = {"dataset": self.dataset, "model": self.model, "attacks": self.attacks,
                "regularizers": self.regularizers, "seed": self.seed}
        return hashlib.sha256(json.dumps(body, sort_keys=True).encode()).hexdigest()

    def cells(self) -> dict[str, AttackConfig]:
        out = {}
        for a in self.attacks:
            for r in self.regularizers:
                try:
                    cfg = AttackConfig.from_dict({"seed": self.seed, **a, "regularizer": Regularizer.from_dict(r)})
                except (ValueError, KeyError, TypeError) as exc:
                    raise _config_error(f"bad grid cell {a} x {r}: {exc}") from None
                cell_id = f"{cfg.kind.value}__{cfg.regularizer.kind.value}"
                if cell_id in out:
                    raise _config_error(f"grid cell {cell_id} appears twice")
                out[cell_id] = cfg
        return out


def _now() -> str:
    return _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds")


class Manifest:
    def __init__(self, path: Path, payload: dict):
        self.path = path
        self.payload = payload

    @classmethod
    def open(cls, path: Path, config_hash: str, cell_ids: Sequence[str]) -> "Manifest":
        if path.is_file():
            try:
                payload = json.loads(path.read_text())
            except ValueError:
                raise _config_error(f"{path}: corrupt manifest") from None
            if payload.get("config_hash") != config_hash:
                raise _config_error(f"{path}: written for a different configuration; use a new output_dir")
        else:
            payload = {"config_hash": config_hash, "tool_version": __version__, "created": _now(),
                       "model": {"status": "pending"}, "cells": {}}
        for cid in cell_ids:
            payload["cells"].setdefault(cid, {"status": "pending"})
        manifest = cls(path, payload)
        manifest.save()
        return manifest

    def save(self) -> None:
        self.payload["updated"] = _now()
        tmp = self.path.with_suffix(".tmp")
        tmp.write_text(json.dumps(self.payload, indent=2, sort_keys=True) + "\n")
        os.replace(tmp, self.path)

    def cell(self, cid: str) -> dict:
        return self.payload["cells"][cid]

    def mark(self, section: dict, status: str, **extra) -> None:
        section.update(status=status, **extra)
        self.save()


def run_grid(config: ExperimentConfig, jobs: int = 1, max_cells: int | None = None) -> dict:
    out_dir = Path(config.output_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    cells = config.cells()
    manifest = Manifest.open(out_dir / "manifest.json", config.hash(), list(cells))

    ds = dataset_from_source(config.dataset, config.seed)
    model_path = out_dir / "victim.model"
    model_spec = dict(config.model)
    arch = model_spec.get("architecture", "mlp")
    if manifest.payload["model"].get("status") == "done" and model_path.is_file():
        model = models.load(model_path)
    else:
        try:
            tcfg = models.TrainConfig(**{"seed": config.seed, **model_spec.get("train", {})})
        except (TypeError, ValueError) as exc:
            raise _config_error(f"bad train config: {exc}") from None
        model, log = train_model(ds, arch, tcfg, hidden=model_spec.get("hidden", 32))
        models.save(model, model_path)
        (out_dir / "victim.train.json").write_text(json.dumps(log, indent=2) + "\n")
        manifest.mark(manifest.payload["model"], "done", path=model_path.name,
                      test_accuracy=log["test_accuracy"], finished=_now())
    if ds.length != model.input_length:
        raise CliError("trained model does not match the dataset length", EXIT_SHAPE)

    X, y = ds.test_arrays
    ran = 0
    for cid, cfg in cells.items():
        entry = manifest.cell(cid)
        outcome_path = out_dir / "outcomes" / f"{cid}.jsonl"
        if entry.get("status") == "done" and outcome_path.is_file() and meta_path(outcome_path).is_file():
            continue
        if max_cells is not None and ran >= max_cells:
            break
        manifest.mark(entry, "running", started=_now())
        try:
            records, deltas, duration = attack_dataset(model, X, y, cfg, jobs=jobs)
            meta = {"model": arch, "attack": cfg.kind.value, "regularizer": cfg.regularizer.kind.value,
                    "config": cfg.to_dict(), "duration_s": duration, "n_records": len(records),
                    "tool_version": __version__}
            write_outcomes(outcome_path, records, meta, deltas)
        except Exception as exc:  # one failing cell must not corrupt the manifest
            logger.error("cell %s failed: %s", cid, exc)
            manifest.mark(entry, "failed", error=str(exc), finished=_now())
            continue
        manifest.mark(entry, "done", outcomes=str(outcome_path.relative_to(out_dir)), finished=_now())
        logger.info("cell %s done in %.1fs", cid, duration)
        ran += 1

    statuses = {cid: manifest.cell(cid)["status"] for cid in cells}
    summary = {"output_dir": str(out_dir), "cells": statuses, "ran": ran}
    if all(s == "done" for s in statuses.values()):
        rows = build_report([out_dir / "outcomes" / f"{cid}.jsonl" for cid in cells])
        summary["report"] = {k: str(v) for k, v in write_report(rows, out_dir).items()}
    return summary


def cmd_grid(args) -> int:
    path = Path(args.config)
    if not path.is_file():
        raise _config_error(f"{path}: config file not found")
    try:
        raw = json.loads(path.read_text())
    except ValueError as exc:
        raise _config_error(f"{path}: invalid JSON ({exc})") from None
    if args.out_dir:
        raw["output_dir"] = args.out_dir
    summary = run_grid(ExperimentConfig.from_dict(raw), jobs=args.jobs, max_cells=args.max_cells)
    _emit(summary)
    failed = [c for c, s in summary["cells"].items() if s == "failed"]
    return EXIT_DATA if failed else EXIT_OK


# ---------------------------------------------------------------------------
# argument parsing


def _add_attack_args(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("attack")
    g.add_argument("--attack", default="pgd", choices=["pgd", "pgd_l2", "cw", "cw_l2"])
    g.add_argument("--regularizer", default="none", choices=["asl0", "l1", "l2", "none"])
    g.add_argument("--lambda", dest="lam", type=float, default=DEFAULT_LAMBDA)
    g.add_argument("--sigma0", type=float, default=1.0)
    g.add_argument("--eta-d", type=float, default=0.9)
    g.add_argument("--eta-i", type=float, default=1.1)
    g.add_argument("--epsilon-zero", type=float, default=1e-6)
    g.add_argument("--iterations", type=int, default=1000)
    g.add_argument("--alpha", type=float, default=0.01)
    g.add_argument("--kappa", type=float, default=0.0)
    g.add_argument("--eps-inf", type=float, default=0.5)
    g.add_argument("--eps-2", type=float, default=2.0)
    g.add_argument("--clamp", type=float, nargs=2, metavar=("LO", "HI"))
    g.add_argument("--early-stop", action="store_true")
    g.add_argument("--keep-ball", action=argparse.BooleanOptionalAction, default=True,
                   help="keep the PGD/L2 ball projection for the adaptive variants")
    g.add_argument("--stability-floor", action=argparse.BooleanOptionalAction, default=True,
                   help="keep sigma >= sqrt(2 * alpha * lambda) in the adaptive schedule")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="l0attack", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    parser.add_argument("-v", "--verbose", action="count", default=0)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-data", help="write the synthetic benchmark as TSV files")
    p.add_argument("--synthetic", default="d=64,bump=8,n=200,noise=0.1")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=cmd_gen_data)

    p = sub.add_parser("train", help="train a victim model")
    _add_dataset_args(p)
    p.add_argument("--arch", default="mlp", choices=[a.value for a in models.Architecture])
    p.add_argument("--hidden", type=int, default=32)
    p.add_argument("--optimizer", default="adam", choices=["sgd", "adam"])
    p.add_argument("--lr", type=float, default=0.01)
    p.add_argument("--epochs", type=int, default=200)
    p.add_argument("--batch-size", type=int, default=32)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True, help="model file to write (.model)")
    p.add_argument("--log", help="training log path (default: <out>.train.json)")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("attack", help="attack every test series and write per-sample outcomes")
    _add_dataset_args(p)
    _add_attack_args(p)
    p.add_argument("--model", required=True)
    p.add_argument("--model-name", help="model column in reports (default: architecture)")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--limit", type=int, help="attack only the first N test series")
    p.add_argument("--save-deltas", action="store_true", help="also write perturbations as .npy")
    p.add_argument("--out", required=True, help="JSON-lines outcome file")
    p.set_defaults(func=cmd_attack)

    p = sub.add_parser("report", help="aggregate outcome files into CSV/JSON rows")
    p.add_argument("outcomes", nargs="+")
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=cmd_report)

    p = sub.add_parser("grid", help="run an attack x regularizer grid from a JSON config")
    p.add_argument("config")
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--out-dir", help="override output_dir from the config")
    p.add_argument("--max-cells", type=int, help="stop after running this many cells")
    p.set_defaults(func=cmd_grid)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0) and EXIT_CONFIG
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2), stream=sys.stderr,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.code
    except (AttackConfigError, ModelError) as exc:
        code = EXIT_CONFIG if isinstance(exc, AttackConfigError) else EXIT_SHAPE
        print(f"error: {exc}", file=sys.stderr)
        return code
    except (DataError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
