"""Evaluation quantities and result files.

Everything here is a pure function of simulation logs. ``regret_d`` and
``CV`` share one summation so ``regret_d[-1] / T == CV`` holds exactly.

Result files (schema version 1)::

    summary.json | summary.csv   per-learner MSE / CV (mean, std over trials),
                                 final regrets, seeds, resolved config
    config.json                  resolved config (csv format only; json embeds it)
    timing.json                  wall-clock seconds, kept apart so the payload
                                 files are byte-identical across reruns
    curves/learner<j>_<metric>.csv   columns ``t,value`` for metric in
                                 regret_a, regret_d, epsilon (trial mean)
"""

from __future__ import annotations

import csv
import json
import logging
import os
from dataclasses import dataclass, field
from typing import List, Optional, Sequence

import numpy as np

from .errors import InputError, InvariantError, IngestionError, ProtocolError

log = logging.getLogger(__name__)

SCHEMA_VERSION = 1
JITTER = 1e-9
CURVE_METRICS = ("regret_a", "regret_d", "epsilon")
SUMMARY_FIELDS = ("learner", "mse_mean", "mse_std", "cv_mean", "cv_std", "regret_a_final", "regret_d_final")

SUMMARY_SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "type": "object",
    "required": ["schema_version", "name", "rounds", "trials", "seeds", "checks_passed", "config", "learners"],
    "properties": {
        "schema_version": {"const": SCHEMA_VERSION},
        "name": {"type": "string"},
        "rounds": {"type": "integer", "minimum": 0},
        "trials": {"type": "integer", "minimum": 0},
        "seeds": {"type": "array", "items": {"type": "integer"}},
        "checks_passed": {"type": "boolean"},
        "config": {"type": "object"},
        "learners": {
            "type": "array",
            "items": {
                "type": "object",
                "required": list(SUMMARY_FIELDS),
                "properties": {
                    "learner": {"type": "integer", "minimum": 1},
                    **{k: {"type": "number"} for k in SUMMARY_FIELDS[1:]},
                },
            },
        },
        "extra": {"type": "object"},
    },
}


def _as_float_array(a, what: str) -> np.ndarray:
    a = np.asarray(a, dtype=float)
    if a.size == 0:
        raise InputError(f"{what} is empty")
    return a


def mse(predictions, labels) -> float:
    p = _as_float_array(predictions, "predictions")
    y = _as_float_array(labels, "labels")
    if p.shape != y.shape:
        raise InputError(f"predictions {p.shape} and labels {y.shape} differ in shape")
    return float(np.mean((p - y) ** 2))


def discrepancy_terms(logs) -> np.ndarray:
    """``sum_i (f_j - f_i)(x_j)`` per learner and round, shape ``(J, T)``.

    ``logs`` needs ``predictions`` (J, T), ``neighbor_predictions`` (one
    ``(T, deg_j)`` array per learner) and ``neighbors`` (0-based tuples).
    """
    preds = np.asarray(logs.predictions, dtype=float)
    if preds.ndim != 2:
        raise InputError(f"predictions must be (J, T), got shape {preds.shape}")
    J, T = preds.shape
    nbr = logs.neighbor_predictions
    if len(nbr) != J or len(logs.neighbors) != J:
        raise ProtocolError(f"neighbor evaluations given for {len(nbr)} of {J} learners")
    out = np.zeros((J, T))
    for j in range(J):
        nb = np.asarray(nbr[j], dtype=float).reshape(T, -1) if np.size(nbr[j]) else np.zeros((T, 0))
        if nb.shape != (T, len(logs.neighbors[j])):
            raise ProtocolError(f"learner {j + 1}: expected neighbor evaluations of shape "
                                f"{(T, len(logs.neighbors[j]))}, got {np.shape(nbr[j])}")
        if not np.all(np.isfinite(nb)):
            raise ProtocolError(f"learner {j + 1}: missing neighbor evaluations")
        out[j] = np.sum(preds[j][:, None] - nb, axis=1)
    return out


def regret_discrepancy(logs) -> np.ndarray:
    """Cumulative ``|sum_i (f_j - f_i)(x_j)|^2``, shape ``(J, T)``."""
    return np.cumsum(discrepancy_terms(logs) ** 2, axis=-1)


def consensus_violation(logs) -> np.ndarray:
    """Per-learner time-averaged squared discrepancy, ``regret_d(T) / T``."""
    rd = regret_discrepancy(logs)
    T = rd.shape[-1]
    if T == 0:
        raise InputError("consensus violation of an empty run")
    return rd[:, -1] / T


def regret_accuracy(losses, comparator_losses) -> np.ndarray:
    """Partial sums of ``losses - comparator_losses`` along the last axis."""
    a = _as_float_array(losses, "losses")
    b = _as_float_array(comparator_losses, "comparator losses")
    if a.shape != b.shape:
        raise InputError(f"losses {a.shape} and comparator losses {b.shape} differ in shape")
    return np.cumsum(a - b, axis=-1)


def hindsight_comparator(stream, feature_map, reg: float):
    """Best fixed RF parameter for a whole stream, and its per-round squared errors.

    Solves ``(Z^T Z + (reg + 1e-9) I) theta = Z^T y``. The jitter keeps the
    system solvable when ``reg = 0`` and ``T < 2D``.
    """
    if reg < 0:
        raise InputError(f"reg must be >= 0, got {reg!r}")
    X = np.asarray(stream.features, dtype=float)
    y = np.asarray(stream.labels, dtype=float)
    Z = feature_map.features(X) if hasattr(feature_map, "features") else np.asarray(feature_map(X), dtype=float)
    if Z.ndim != 2 or Z.shape[0] != y.shape[0]:
        raise InputError(f"feature matrix has shape {Z.shape} for {y.shape[0]} samples")
    if reg == 0:
        log.debug("comparator: reg=0, solving with jitter %g only", JITTER)
    A = Z.T @ Z + (reg + JITTER) * np.eye(Z.shape[1])
    theta = np.linalg.solve(A, Z.T @ y)
    return theta, (y - Z @ theta) ** 2


def best_kernel_comparator(stream, dictionary, reg: float, T: Optional[int] = None):
    """Per-kernel comparators over the first ``T`` samples; the one with least total loss wins.

    Returns ``(kernel index (0-based), per-round losses)``.
    """
    if T is not None:
        stream = stream.take(slice(0, T))
    best = None
    for p, fmap in enumerate(dictionary.maps):
        _, losses = hindsight_comparator(stream, fmap, reg)
        total = losses.sum()
        if best is None or total < best[0]:
            best = (total, p, losses)
    return best[1], best[2]


@dataclass
class TrialMetrics:
    """Per-learner metrics of a single run."""

    mse: np.ndarray  # (J,)
    cv: np.ndarray  # (J,)
    regret_a: np.ndarray  # (J, T)
    regret_d: np.ndarray  # (J, T)
    epsilon: np.ndarray  # (J, T)
    comparator_kernels: list = field(default_factory=list)
    checks_passed: bool = True


def trial_metrics(result, streams, dictionary, reg: float) -> TrialMetrics:
    T = result.T
    comp = []
    kernels = []
    for s in streams:
        p, losses = best_kernel_comparator(s, dictionary, reg, T)
        comp.append(losses)
        kernels.append(p + 1)
    rd = regret_discrepancy(result)
    sq = (result.predictions - result.labels) ** 2
    return TrialMetrics(
        mse=np.mean(sq, axis=1),
        cv=rd[:, -1] / T,
        regret_a=regret_accuracy(sq, np.array(comp)),
        regret_d=rd,
        epsilon=np.array(result.epsilon, dtype=float),
        comparator_kernels=kernels,
        checks_passed=result.checks_passed,
    )


@dataclass
class MetricsReport:
    name: str
    config: dict
    seeds: list
    trials: List[TrialMetrics]
    wall_clock: float = 0.0
    extra: dict = field(default_factory=dict)

    @property
    def num_learners(self) -> int:
        return self.trials[0].mse.shape[0] if self.trials else 0

    @property
    def rounds(self) -> int:
        return self.trials[0].regret_d.shape[1] if self.trials else 0

    @property
    def checks_passed(self) -> bool:
        return all(t.checks_passed for t in self.trials)

    def _stack(self, attr):
        return np.stack([getattr(t, attr) for t in self.trials])

    def mean(self, attr: str) -> np.ndarray:
        return self._stack(attr).mean(axis=0)

    def std(self, attr: str) -> np.ndarray:
        return self._stack(attr).std(axis=0)

    def summary_rows(self) -> list:
        if not self.trials:
            return []
        mse_m, mse_s = self.mean("mse"), self.std("mse")
        cv_m, cv_s = self.mean("cv"), self.std("cv")
        ra, rd = self.mean("regret_a"), self.mean("regret_d")
        rows = []
        for j in range(self.num_learners):
            last = lambda c: float(c[j, -1]) if c.shape[1] else 0.0  # noqa: E731
            rows.append({"learner": j + 1, "mse_mean": float(mse_m[j]), "mse_std": float(mse_s[j]),
                         "cv_mean": float(cv_m[j]), "cv_std": float(cv_s[j]),
                         "regret_a_final": last(ra), "regret_d_final": last(rd)})
        return rows

    def summary(self) -> dict:
        return {"schema_version": SCHEMA_VERSION, "name": self.name, "rounds": self.rounds,
                "trials": len(self.trials), "seeds": [int(s) for s in self.seeds],
                "checks_passed": self.checks_passed, "config": self.config,
                "learners": self.summary_rows(), "extra": self.extra}


def build_report(name: str, results: Sequence, streams: Sequence, dictionaries: Sequence, config: dict,
                 seeds: Sequence[int], reg: float = 0.0, wall_clock: float = 0.0) -> MetricsReport:
    """One :class:`TrialMetrics` per ``(result, streams, dictionary)`` triple.

    ``reg`` is the ridge weight of the hindsight comparators.
    """
    if not (len(results) == len(streams) == len(dictionaries) == len(seeds)):
        raise InputError("results, streams, dictionaries and seeds must have one entry per trial")
    trials = [trial_metrics(r, s, d, reg) for r, s, d in zip(results, streams, dictionaries)]
    for t in trials:
        for attr in CURVE_METRICS:
            if not np.all(np.isfinite(getattr(t, attr))):
                raise InvariantError(f"non-finite values in {attr} curve")
    return MetricsReport(name, dict(config), list(seeds), trials, wall_clock)


def _fmt(v) -> str:
    return repr(float(v)) if isinstance(v, (float, np.floating)) else str(v)


def _write_csv(path, header, rows):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(v) for v in row])


def _dump_json(obj, path):
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True)
        fh.write("\n")


def write_table(rows: Sequence[dict], path, fields: Sequence[str], format: str = "csv") -> str:
    """Write a list of flat dicts as CSV or a JSON array; returns the path written."""
    path = f"{path}.{format}"
    try:
        if format == "csv":
            _write_csv(path, fields, [[r[k] for k in fields] for r in rows])
        else:
            _dump_json([{k: r[k] for k in fields} for r in rows], path)
    except OSError as exc:
        raise IngestionError(f"cannot write {path}: {exc}") from exc
    return path


def write_report(report: MetricsReport, out_dir, format: str = "csv") -> list:
    """Write summary, config, timing and curve files under ``out_dir``; returns the paths."""
    if format not in ("csv", "json"):
        raise InputError(f"unknown report format {format!r}; choose csv or json")
    curves_dir = os.path.join(out_dir, "curves")
    written = []
    try:
        os.makedirs(curves_dir, exist_ok=True)
        summary = report.summary()
        if format == "json":
            path = os.path.join(out_dir, "summary.json")
            _dump_json(summary, path)
            written.append(path)
        else:
            path = os.path.join(out_dir, "summary.csv")
            _write_csv(path, SUMMARY_FIELDS, [[r[k] for k in SUMMARY_FIELDS] for r in summary["learners"]])
            written.append(path)
            meta = {k: v for k, v in summary.items() if k != "learners"}
            path = os.path.join(out_dir, "config.json")
            _dump_json(meta, path)
            written.append(path)
        path = os.path.join(out_dir, "timing.json")
        _dump_json({"wall_clock_seconds": report.wall_clock}, path)
        written.append(path)
        if report.trials:
            T = report.rounds
            for attr in CURVE_METRICS:
                curve = report.mean(attr)
                for j in range(report.num_learners):
                    path = os.path.join(curves_dir, f"learner{j + 1}_{attr}.csv")
                    _write_csv(path, ("t", "value"), zip(range(1, T + 1), curve[j]))
                    written.append(path)
    except OSError as exc:
        raise IngestionError(f"cannot write report to {out_dir}: {exc}") from exc
    return written


def _read_csv(path):
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    return rows[0], rows[1:]


def read_report(out_dir) -> dict:
    """Parse files written by :func:`write_report` back into plain Python / numpy values."""
    out = {"curves": {}}
    try:
        if os.path.exists(os.path.join(out_dir, "summary.json")):
            with open(os.path.join(out_dir, "summary.json"), encoding="utf-8") as fh:
                out["summary"] = json.load(fh)
        else:
            header, rows = _read_csv(os.path.join(out_dir, "summary.csv"))
            with open(os.path.join(out_dir, "config.json"), encoding="utf-8") as fh:
                summary = json.load(fh)
            summary["learners"] = [{k: (int(v) if k == "learner" else float(v)) for k, v in zip(header, r)}
                                   for r in rows]
            out["summary"] = summary
        curves_dir = os.path.join(out_dir, "curves")
        if os.path.isdir(curves_dir):
            for fname in sorted(os.listdir(curves_dir)):
                _, rows = _read_csv(os.path.join(curves_dir, fname))
                out["curves"][fname[:-4]] = np.array([float(r[1]) for r in rows])
    except (OSError, ValueError) as exc:
        raise IngestionError(f"cannot read report from {out_dir}: {exc}") from exc
    return out
