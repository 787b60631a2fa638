"""Command-line entry point.

Configuration comes from four layers, later ones winning:
built-in defaults < YAML/JSON config file < ``DOMKL_*`` environment
variables < command-line flags. The config file schema (version 1)::

    version: 1
    name: my-run
    seed: 0                 # master seed; trial k uses derive_seed(seed, k)
    trials: 10
    compare: false          # also run every single-kernel variant and the centralized baseline
    dataset:
      path: data.csv        # or leave null and fill `synthetic`
      synthetic: {dim: 2, samples: 2500, variance: 0.1, centers: 5, noise_std: 0.01, seed: 0}
      label_column: null    # header name or 0-based index; default last column
      header: true
      normalize: auto       # minmax | zscore | none; auto = minmax for files, none for synthetic
      ar_order: null        # window a single series column into AR(p) samples
    network: {topology: complete, learners: 3, edges: null}
    simulation:
      mode: domkl           # or dokl (needs kernel_index, 1-based)
      kernel_index: null
      features: 50
      variances: null       # null = the 17-kernel default dictionary
      rho: 1.0
      eta: 1.0
      eta_g: 1.0
      reg: 0.01
      sqrt_t_hypers: true   # rho = eta = eta_g = sqrt(T), overriding the three above
      weight_mode: neighbor # or message_passing
      allow_cyclic_messages: false
      rounds: null          # null = per-learner stream length
      workers: 1
      self_checks: true
    output: {dir: results, format: csv}

Every environment variable is the flag name upper-cased with a ``DOMKL_``
prefix, e.g. ``DOMKL_RHO=2`` or ``DOMKL_OUT_DIR=/tmp/run``.
"""

from __future__ import annotations

import argparse
import copy
import logging
import os
import sys
import time
from collections import Counter
from dataclasses import dataclass, replace
from typing import Optional

import numpy as np
import yaml

from . import data, metrics, simulator
from .errors import ConfigurationError, DomklError
from .kernels import KernelSpec, dictionary_variances
from .topology import PRESETS, Topology, preset

log = logging.getLogger("domkl")

CONFIG_VERSION = 1
ENV_PREFIX = "DOMKL_"

SYNTHETIC_DEFAULTS = {"dim": 2, "samples": 2500, "variance": 0.1, "centers": 5, "noise_std": 0.01, "seed": 0}

DEFAULTS = {
    "version": CONFIG_VERSION,
    "name": "experiment",
    "seed": 0,
    "trials": 10,
    "compare": False,
    "dataset": {"path": None, "synthetic": None, "label_column": None, "header": True,
                "normalize": "auto", "ar_order": None},
    "network": {"topology": None, "learners": None, "edges": None},
    "simulation": {"mode": "domkl", "kernel_index": None, "features": 50, "variances": None,
                   "rho": 1.0, "eta": 1.0, "eta_g": 1.0, "reg": 0.01, "sqrt_t_hypers": True,
                   "weight_mode": "neighbor", "allow_cyclic_messages": False, "rounds": None,
                   "workers": 1, "self_checks": True},
    "output": {"dir": "results", "format": "csv"},
}

# flag dest -> config key path
FLAG_KEYS = {
    "topology": ("network", "topology"),
    "learners": ("network", "learners"),
    "mode": ("simulation", "mode"),
    "kernel_index": ("simulation", "kernel_index"),
    "trials": ("trials",),
    "seed": ("seed",),
    "rho": ("simulation", "rho"),
    "eta": ("simulation", "eta"),
    "eta_g": ("simulation", "eta_g"),
    "reg": ("simulation", "reg"),
    "features": ("simulation", "features"),
    "sqrt_t_hypers": ("simulation", "sqrt_t_hypers"),
    "weight_mode": ("simulation", "weight_mode"),
    "allow_cyclic_messages": ("simulation", "allow_cyclic_messages"),
    "rounds": ("simulation", "rounds"),
    "workers": ("simulation", "workers"),
    "self_checks": ("simulation", "self_checks"),
    "out_dir": ("output", "dir"),
    "format": ("output", "format"),
    "normalize": ("dataset", "normalize"),
    "label_column": ("dataset", "label_column"),
    "ar_order": ("dataset", "ar_order"),
    "compare": ("compare",),
    "name": ("name",),
}


@dataclass
class ExperimentPreset:
    name: str
    dataset: dict
    topology: Topology
    simulation: simulator.SimulationConfig
    trials: int
    seed: int
    out_dir: str
    format: str
    compare: bool
    resolved: dict  # every key materialized; re-runnable as a config file


def _check_keys(cfg: dict, schema: dict, prefix: str = ""):
    for key, value in cfg.items():
        path = f"{prefix}{key}"
        if key not in schema:
            raise ConfigurationError("unknown key", key=path)
        if isinstance(schema[key], dict) and value is not None:
            if not isinstance(value, dict):
                raise ConfigurationError("expected a mapping", key=path)
            _check_keys(value, schema[key], path + ".")


def _merge(base: dict, override: dict, source: str, prefix: str = "") -> dict:
    out = copy.deepcopy(base)
    for key, value in override.items():
        path = f"{prefix}{key}"
        if isinstance(value, dict) and isinstance(out.get(key), dict):
            out[key] = _merge(out[key], value, source, path + ".")
            continue
        if key in out and out[key] is not None and out[key] != value and source != "file":
            log.info("%s: %s overrides %r with %r", path, source, out[key], value)
        out[key] = value
    return out


def _nest(path, value) -> dict:
    out = value
    for key in reversed(path):
        out = {key: out}
    return out


def _dataset_override(value: str) -> dict:
    if value == "synthetic":
        return {"dataset": {"synthetic": {}, "path": None}}
    return {"dataset": {"path": value, "synthetic": None}}


def load_config_file(path) -> dict:
    try:
        with open(path, encoding="utf-8") as fh:
            cfg = yaml.safe_load(fh)
    except OSError as exc:
        raise ConfigurationError(f"cannot read config file {path}: {exc}", key="config") from exc
    except yaml.YAMLError as exc:
        raise ConfigurationError(f"cannot parse {path}: {exc}", key="config") from exc
    if cfg is None:
        return {}
    if not isinstance(cfg, dict):
        raise ConfigurationError("config file must hold a mapping at the top level", key="config")
    return cfg


def env_overrides(environ=None) -> dict:
    environ = os.environ if environ is None else environ
    out = {}
    for dest, path in FLAG_KEYS.items():
        raw = environ.get(ENV_PREFIX + dest.upper())
        if raw is not None:
            out = _merge(out, _nest(path, yaml.safe_load(raw)), "env")
    raw = environ.get(ENV_PREFIX + "DATASET")
    if raw is not None:
        out = _merge(out, _dataset_override(raw), "env")
    return out


def flag_overrides(args: argparse.Namespace) -> dict:
    out = {}
    for dest, path in FLAG_KEYS.items():
        value = getattr(args, dest, None)
        if value is not None:
            out = _merge(out, _nest(path, value), "flag")
    if getattr(args, "dataset", None) is not None:
        out = _merge(out, _dataset_override(args.dataset), "flag")
    return out


def _int(value, key, minimum=None, allow_none=False):
    if value is None and allow_none:
        return None
    if isinstance(value, bool) or not isinstance(value, (int, float)) or int(value) != value:
        raise ConfigurationError(f"expected an integer, got {value!r}", key=key)
    if minimum is not None and value < minimum:
        raise ConfigurationError(f"must be >= {minimum}, got {value!r}", key=key)
    return int(value)


def _num(value, key):
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigurationError(f"expected a number, got {value!r}", key=key)
    return float(value)


def _bool(value, key):
    if not isinstance(value, bool):
        raise ConfigurationError(f"expected true or false, got {value!r}", key=key)
    return value


def resolve(cfg: dict) -> ExperimentPreset:
    """Validate a merged config dict and materialize every default."""
    _check_keys(cfg, DEFAULTS)
    if "version" in cfg and cfg["version"] != CONFIG_VERSION:
        raise ConfigurationError(f"unsupported config version {cfg['version']!r}", key="version")
    r = _merge(DEFAULTS, cfg, "file")

    ds = r["dataset"]
    if ds["synthetic"] is not None:
        _check_keys(ds["synthetic"], SYNTHETIC_DEFAULTS, "dataset.synthetic.")
        ds["synthetic"] = {**SYNTHETIC_DEFAULTS, **ds["synthetic"]}
        if ds["path"] is not None:
            raise ConfigurationError("give either a path or a synthetic spec, not both", key="dataset")
        syn = ds["synthetic"]
        for k in ("dim", "samples", "centers"):
            syn[k] = _int(syn[k], f"dataset.synthetic.{k}", 1)
        syn["seed"] = _int(syn["seed"], "dataset.synthetic.seed", 0)
        syn["variance"] = _num(syn["variance"], "dataset.synthetic.variance")
        syn["noise_std"] = _num(syn["noise_std"], "dataset.synthetic.noise_std")
        if syn["variance"] <= 0:
            raise ConfigurationError("must be positive", key="dataset.synthetic.variance")
        if syn["noise_std"] < 0:
            raise ConfigurationError("must be >= 0", key="dataset.synthetic.noise_std")
    elif ds["path"] is None:
        raise ConfigurationError("missing required key (a file path or a synthetic spec)", key="dataset")
    if ds["normalize"] == "auto":
        ds["normalize"] = "none" if ds["synthetic"] is not None else "minmax"
    if ds["normalize"] not in data.NORMALIZE_MODES:
        raise ConfigurationError(f"must be one of {', '.join(data.NORMALIZE_MODES)}", key="dataset.normalize")
    ds["ar_order"] = _int(ds["ar_order"], "dataset.ar_order", 1, allow_none=True)
    ds["header"] = _bool(ds["header"], "dataset.header")

    net = r["network"]
    if net["learners"] is None:
        raise ConfigurationError("missing required key", key="network.learners")
    J = _int(net["learners"], "network.learners", 1)
    net["learners"] = J
    if net["edges"] is not None:
        try:
            topo = Topology(J, net["edges"])
        except (TypeError, ValueError) as exc:
            raise ConfigurationError(str(exc), key="network.edges") from exc
        net["topology"] = net["topology"] or "custom"
    elif J == 1:
        topo = Topology(1, [])
        net["topology"] = net["topology"] or "single"
    else:
        if net["topology"] is None:
            raise ConfigurationError("missing required key", key="network.topology")
        if net["topology"] not in PRESETS:
            raise ConfigurationError(f"must be one of {', '.join(PRESETS)} (or give edges)", key="network.topology")
        topo = preset(net["topology"], J)
    net["edges"] = topo.edge_list()

    sim = r["simulation"]
    if sim["variances"] is None:
        sim["variances"] = list(dictionary_variances())
    if not isinstance(sim["variances"], list) or not sim["variances"]:
        raise ConfigurationError("expected a non-empty list of positive numbers", key="simulation.variances")
    sim["variances"] = [_num(v, "simulation.variances") for v in sim["variances"]]
    if any(v <= 0 for v in sim["variances"]):
        raise ConfigurationError("kernel variances must be positive", key="simulation.variances")
    for k in ("rho", "eta", "eta_g", "reg"):
        sim[k] = _num(sim[k], f"simulation.{k}")
    for k in ("sqrt_t_hypers", "allow_cyclic_messages", "self_checks"):
        sim[k] = _bool(sim[k], f"simulation.{k}")
    sim["features"] = _int(sim["features"], "simulation.features", 1)
    sim["workers"] = _int(sim["workers"], "simulation.workers", 1)
    sim["rounds"] = _int(sim["rounds"], "simulation.rounds", 1, allow_none=True)
    sim["kernel_index"] = _int(sim["kernel_index"], "simulation.kernel_index", allow_none=True)

    r["seed"] = _int(r["seed"], "seed", 0)
    r["trials"] = _int(r["trials"], "trials", 1)
    r["compare"] = _bool(r["compare"], "compare")
    if r["output"]["format"] not in ("csv", "json"):
        raise ConfigurationError("must be csv or json", key="output.format")

    try:
        sc = simulator.SimulationConfig(
            topology=topo, variances=tuple(sim["variances"]), num_features=sim["features"],
            rho=sim["rho"], eta=sim["eta"], eta_g=sim["eta_g"], reg=sim["reg"], rounds=sim["rounds"],
            seed=r["seed"], mode=sim["mode"], kernel_index=sim["kernel_index"], weight_mode=sim["weight_mode"],
            allow_cyclic_messages=sim["allow_cyclic_messages"], sqrt_t_hypers=sim["sqrt_t_hypers"],
            self_checks=sim["self_checks"], workers=sim["workers"])
    except ConfigurationError as exc:
        if exc.key is None:
            raise
        path = "seed" if exc.key == "seed" else f"simulation.{exc.key}"
        raise ConfigurationError(str(exc)[len(exc.key) + 2:], key=path) from exc

    return ExperimentPreset(name=str(r["name"]), dataset=ds, topology=topo, simulation=sc, trials=r["trials"],
                            seed=r["seed"], out_dir=str(r["output"]["dir"]), format=r["output"]["format"],
                            compare=r["compare"], resolved=r)


def parse_config(path=None, args: Optional[argparse.Namespace] = None, environ=None) -> ExperimentPreset:
    """Merge defaults, config file, environment and flags into a validated preset."""
    cfg = load_config_file(path) if path else {}
    _check_keys(cfg, DEFAULTS)
    cfg = _merge(cfg, env_overrides(environ), "env")
    if args is not None:
        cfg = _merge(cfg, flag_overrides(args), "flag")
    return resolve(cfg)


def load_dataset(spec: dict) -> data.Dataset:
    if spec["synthetic"] is not None:
        s = spec["synthetic"]
        ds = data.synth_rkhs(s["dim"], s["samples"], KernelSpec(s["variance"]), s["centers"], s["noise_std"],
                             s["seed"])
    elif spec["ar_order"] is not None:
        series = data.load_series_csv(spec["path"], spec["label_column"], header=spec["header"])
        ds = data.ar_window(series, spec["ar_order"], name=str(spec["path"]))
    else:
        ds = data.load_csv(spec["path"], spec["label_column"], header=spec["header"])
    return data.normalize(ds, spec["normalize"])


def trial_seeds(master: int, trials: int) -> list:
    return [simulator.derive_seed(master, k) for k in range(trials)]


def _trial_inputs(preset: ExperimentPreset, dataset: data.Dataset, seed: int):
    streams = simulator.partition_data(dataset, preset.topology.num_learners, simulator.derive_seed(seed, 0))
    config = replace(preset.simulation, seed=simulator.derive_seed(seed, 1))
    return streams, config


def run_trials(preset: ExperimentPreset, dataset: Optional[data.Dataset] = None) -> metrics.MetricsReport:
    dataset = load_dataset(preset.dataset) if dataset is None else dataset
    seeds = trial_seeds(preset.seed, preset.trials)
    results, all_streams, dicts = [], [], []
    start = time.perf_counter()
    for k, seed in enumerate(seeds):
        streams, config = _trial_inputs(preset, dataset, seed)
        dictionary = config.build_dictionary(dataset.dim)
        res = simulator.run(config, streams, dictionary)
        log.info("trial %d/%d: mean MSE %.6g", k + 1, len(seeds), float(np.mean(res.losses)))
        results.append(res)
        all_streams.append(streams)
        dicts.append(dictionary)
    elapsed = time.perf_counter() - start
    return metrics.build_report(preset.name, results, all_streams, dicts, preset.resolved, seeds,
                                reg=preset.simulation.reg, wall_clock=elapsed)


def format_summary(report: metrics.MetricsReport) -> str:
    lines = [f"{report.name}: {len(report.trials)} trial(s), T={report.rounds}",
             f"{'learner':>8} {'MSE(x1e-2)':>12} {'CV':>12}"]
    for row in report.summary_rows():
        lines.append(f"{row['learner']:>8d} {100 * row['mse_mean']:>12.4f} {row['cv_mean']:>12.4e}")
    if not report.checks_passed:
        lines.append("self-checks FAILED")
    return "\n".join(lines)


def run_experiment(preset: ExperimentPreset, stdout=None) -> int:
    """Run every trial, write the report and print the summary table; 0 iff all self-checks passed."""
    stdout = sys.stdout if stdout is None else stdout
    report = run_trials(preset)
    metrics.write_report(report, preset.out_dir, preset.format)
    print(format_summary(report), file=stdout)
    return 0 if report.checks_passed else 1


COMPARISON_FIELDS = ("variant", "kernel_index", "variance", "mse_mean", "mse_std", "cv_mean")


def run_comparison(preset: ExperimentPreset, stdout=None) -> dict:
    """DOMKL, every single-kernel DOKL variant and the centralized baseline on identical partitions."""
    stdout = sys.stdout if stdout is None else stdout
    dataset = load_dataset(preset.dataset)
    seeds = trial_seeds(preset.seed, preset.trials)
    variances = preset.simulation.variances
    P = len(variances)
    mse = {"DOMKL": [], "OMKL": [], **{p: [] for p in range(1, P + 1)}}
    cv = {k: [] for k in mse}
    checks = True
    for seed in seeds:
        streams, config = _trial_inputs(preset, dataset, seed)
        res = simulator.run(replace(config, mode="domkl", kernel_index=None), streams)
        mse["DOMKL"].append(float(np.mean(res.losses)))
        cv["DOMKL"].append(float(np.mean(metrics.consensus_violation(res))))
        checks &= res.checks_passed
        for p in range(1, P + 1):
            r = simulator.run(replace(config, mode="dokl", kernel_index=p), streams)
            mse[p].append(float(np.mean(r.losses)))
            cv[p].append(float(np.mean(metrics.consensus_violation(r))))
            checks &= r.checks_passed
        om = simulator.run_centralized_omkl(config, simulator.merge_streams(streams))
        mse["OMKL"].append(float(np.mean(om.losses)))
        cv["OMKL"].append(0.0)

    best_per_trial = [int(np.argmin([mse[p][k] for p in range(1, P + 1)])) + 1 for k in range(len(seeds))]
    mean = {k: float(np.mean(v)) for k, v in mse.items()}
    best = min(range(1, P + 1), key=lambda p: mean[p])
    rows = [{"variant": "DOMKL", "kernel_index": 0, "variance": 0.0}]
    rows += [{"variant": f"DOKL{p}", "kernel_index": p, "variance": float(variances[p - 1])} for p in range(1, P + 1)]
    rows += [{"variant": "OMKL", "kernel_index": 0, "variance": 0.0}]
    for row in rows:
        key = row["kernel_index"] or row["variant"]
        row.update(mse_mean=mean[key], mse_std=float(np.std(mse[key])), cv_mean=float(np.mean(cv[key])))
    out = {
        "rows": rows,
        "best_kernel": best,
        "best_kernel_per_trial": best_per_trial,
        "best_kernel_majority": Counter(best_per_trial).most_common(1)[0][0],
        "ratio_domkl_best": mean["DOMKL"] / mean[best],
        "ratio_domkl_omkl": mean["DOMKL"] / mean["OMKL"],
        "checks_passed": bool(checks),
        "seeds": seeds,
        "config": preset.resolved,
    }
    os.makedirs(preset.out_dir, exist_ok=True)
    metrics.write_table(rows, os.path.join(preset.out_dir, "comparison"), COMPARISON_FIELDS, preset.format)
    meta = {k: v for k, v in out.items() if k != "rows"}
    metrics._dump_json({"schema_version": metrics.SCHEMA_VERSION, **meta},
                       os.path.join(preset.out_dir, "comparison_meta.json"))

    print(f"{'variant':>8} {'sigma^2':>10} {'MSE(x1e-2)':>12} {'CV':>12}", file=stdout)
    for row in rows:
        var = f"{row['variance']:.3g}" if row["kernel_index"] else "-"
        print(f"{row['variant']:>8} {var:>10} {100 * row['mse_mean']:>12.4f} {row['cv_mean']:>12.4e}", file=stdout)
    print(f"best single kernel: {best} (sigma^2={variances[best - 1]:.3g}); "
          f"DOMKL/best = {out['ratio_domkl_best']:.3f}; DOMKL/OMKL = {out['ratio_domkl_omkl']:.3f}", file=stdout)
    return out


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="domkl", description="Distributed online multiple-kernel learning experiments.")
    p.add_argument("--config", help="YAML or JSON config file")
    p.add_argument("--dataset", help="CSV path, or 'synthetic' for the built-in generator")
    p.add_argument("--name")
    p.add_argument("--topology", choices=PRESETS)
    p.add_argument("--learners", type=int)
    p.add_argument("--mode", choices=simulator.MODES)
    p.add_argument("--kernel-index", type=int, help="1-based kernel for dokl mode")
    p.add_argument("--trials", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--rho", type=float)
    p.add_argument("--eta", type=float)
    p.add_argument("--eta-g", type=float)
    p.add_argument("--reg", type=float)
    p.add_argument("--features", type=int, help="random features per kernel (D)")
    p.add_argument("--sqrt-t-hypers", action=argparse.BooleanOptionalAction, default=None,
                   help="set rho = eta = eta_g = sqrt(T)")
    p.add_argument("--weight-mode", choices=simulator.WEIGHT_MODES)
    p.add_argument("--allow-cyclic-messages", action="store_const", const=True)
    p.add_argument("--rounds", type=int)
    p.add_argument("--workers", type=int)
    p.add_argument("--normalize", choices=data.NORMALIZE_MODES)
    p.add_argument("--label-column")
    p.add_argument("--ar-order", type=int)
    p.add_argument("--out-dir")
    p.add_argument("--format", choices=("csv", "json"))
    p.add_argument("--no-self-checks", dest="self_checks", action="store_const", const=False)
    p.add_argument("--compare", action="store_const", const=True,
                   help="compare DOMKL against every single kernel and the centralized baseline")
    p.add_argument("-v", "--verbose", action="count", default=0)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2),
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        preset_ = parse_config(args.config, args)
        if preset_.compare:
            out = run_comparison(preset_)
            return 0 if out["checks_passed"] else 1
        return run_experiment(preset_)
    except ConfigurationError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 2
    except DomklError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
