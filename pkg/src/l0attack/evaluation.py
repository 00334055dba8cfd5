"""Attack metrics: success rate, perturbation distances, near-zero counts, report rows."""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import asdict, dataclass
from typing import Iterable, Sequence

import numpy as np

DEFAULT_EPSILON = 1e-6

CSV_FIELDS = (
    "model",
    "attack",
    "regularizer",
    "asr",
    "mean_success_distance",
    "mean_failure_distance",
    "overall_mean_distance",
    "duration_s",
    "close_to_zero",
    "n_success",
    "n_fail",
)


def asr(n_success: int, n_fail: int) -> float:
    total = n_success + n_fail
    if n_success < 0 or n_fail < 0 or total < 1:
        raise ValueError("asr needs non-negative counts with at least one attempt")
    return n_success / total


def _fields(outcome) -> tuple[bool, float]:
    if isinstance(outcome, dict):
        return bool(outcome["success"]), float(outcome["l2_distance"])
    return bool(outcome.success), float(outcome.l2_distance)


def mean_distance(outcomes: Sequence, which: str = "success") -> float | None:
    """Mean L2 distance over successful, failed or all outcomes; ``None`` for an empty subset."""
    if which not in ("success", "failure", "all"):
        raise ValueError(f"unknown filter {which!r}")
    dists = []
    for o in outcomes:
        ok, dist = _fields(o)
        if which == "all" or ok == (which == "success"):
            dists.append(dist)
    if not dists:
        return None
    return math.fsum(dists) / len(dists)


def close_to_zero_count(delta, epsilon: float = DEFAULT_EPSILON) -> int:
    """Number of entries with ``|delta_i| < epsilon`` (strict)."""
    if not epsilon > 0:
        raise ValueError("epsilon must be > 0")
    return int(np.count_nonzero(np.abs(np.asarray(delta, dtype=np.float64)) < epsilon))


@dataclass(frozen=True)
class MetricsRow:
    model: str
    attack: str
    regularizer: str
    asr: float
    mean_success_distance: float | None
    mean_failure_distance: float | None
    overall_mean_distance: float
    duration_s: float
    close_to_zero: float
    n_success: int
    n_fail: int

    def to_dict(self) -> dict:
        return asdict(self)


def aggregate(outcomes: Sequence, wall_clock: float, model: str = "", attack: str = "",
              regularizer: str = "") -> MetricsRow:
    """One report row from per-sample outcomes (objects or JSON records)."""
    if not outcomes:
        raise ValueError("cannot aggregate an empty outcome list")
    flags = [_fields(o)[0] for o in outcomes]
    n_success = sum(flags)
    n_fail = len(flags) - n_success
    near_zero = [o["close_to_zero"] if isinstance(o, dict) else o.close_to_zero for o in outcomes]
    return MetricsRow(
        model=model,
        attack=attack,
        regularizer=regularizer,
        asr=asr(n_success, n_fail),
        mean_success_distance=mean_distance(outcomes, "success"),
        mean_failure_distance=mean_distance(outcomes, "failure"),
        overall_mean_distance=mean_distance(outcomes, "all"),
        duration_s=float(wall_clock),
        close_to_zero=math.fsum(near_zero) / len(near_zero),
        n_success=n_success,
        n_fail=n_fail,
    )


def rows_to_csv(rows: Iterable[MetricsRow]) -> str:
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=CSV_FIELDS, lineterminator="\n")
    writer.writeheader()
    for row in rows:
        writer.writerow({k: "" if v is None else repr(v) if isinstance(v, float) else v
                         for k, v in row.to_dict().items()})
    return buf.getvalue()


def rows_to_json(rows: Iterable[MetricsRow]) -> str:
    return json.dumps([r.to_dict() for r in rows], indent=2)


def rows_from_csv(text: str) -> list[MetricsRow]:
    out = []
    for rec in csv.DictReader(io.StringIO(text)):
        def num(key, cast=float):
            return None if rec[key] == "" else cast(rec[key])

        out.append(MetricsRow(
            model=rec["model"], attack=rec["attack"], regularizer=rec["regularizer"],
            asr=num("asr"), mean_success_distance=num("mean_success_distance"),
            mean_failure_distance=num("mean_failure_distance"),
            overall_mean_distance=num("overall_mean_distance"), duration_s=num("duration_s"),
            close_to_zero=num("close_to_zero"), n_success=num("n_success", int),
            n_fail=num("n_fail", int),
        ))
    return out
