"""Library entry points behind the command line: single runs, sweeps, benchmarks.

Each function takes an :class:`~adaptive_malt.config.ExperimentConfig` and an
output directory and writes the same files the CLI does, so every command can
be reproduced from Python.
"""

from __future__ import annotations

import csv
import dataclasses
import json
import math
import os
import tempfile
import time
from pathlib import Path
from typing import Iterable, Optional

import numpy as np

from .config import ExperimentConfig
from .diagnostics import bootstrap_sem, min_ess_squared_coords, percentile
from .dynamics import num_steps
from .sampler import RunConfig, RunRecord, run

__all__ = [
    "TRACE_COLUMNS",
    "SURFACE_COLUMNS",
    "BENCH_COLUMNS",
    "ESS_COLUMNS",
    "run_experiment",
    "run_sweep",
    "run_bench",
    "method_config",
]

TRACE_COLUMNS = (
    "iteration", "phase", "step_size", "length", "damping", "eigenvalue", "rho",
    "acceptance", "accept_rate", "n_leapfrog", "grad_step", "grad_length", "grad_evals",
)
ESS_COLUMNS = ("row_type", "coordinate", "ess", "ess_per_grad", "ess_per_iter")
SURFACE_COLUMNS = (
    "tau", "gamma", "step_size", "n_leapfrog", "clamped", "repeats",
    "min_ess_per_grad_mean", "min_ess_per_grad_p10", "min_ess_per_iter_mean", "acceptance_mean",
)
BENCH_COLUMNS = (
    "row_type", "method", "seed", "min_ess_per_grad", "min_ess_per_iter",
    "sem_per_grad", "sem_per_iter", "normalized_per_grad", "normalized_per_iter",
    "step_size", "length", "damping", "acceptance",
)

# runtime-dependent report fields, excluded from determinism checks
VOLATILE_FIELDS = ("runtime_seconds", "timestamp")


def _fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, (bool, np.bool_)):
        return str(int(value))
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return "" if math.isnan(value) else repr(float(value))
    return str(value)


def _write_csv(path: Path, header: Iterable[str], rows: Iterable[Iterable]) -> None:
    """Write a CSV atomically (temp file in the same directory, then rename)."""
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    with os.fdopen(fd, "w", newline="") as fh:
        writer = csv.writer(fh, quoting=csv.QUOTE_MINIMAL, lineterminator="\n")
        writer.writerow(list(header))
        for row in rows:
            writer.writerow([_fmt(v) for v in row])
    os.replace(tmp, path)


def _write_json(path: Path, obj: dict) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    with os.fdopen(fd, "w") as fh:
        fh.write(json.dumps(obj, sort_keys=True, allow_nan=True) + "\n")
    os.replace(tmp, path)


def _config_dict(cfg: ExperimentConfig) -> dict:
    def clean(obj):
        if dataclasses.is_dataclass(obj):
            return {f.name: clean(getattr(obj, f.name)) for f in dataclasses.fields(obj)
                    if f.name != "raw"}
        if isinstance(obj, (list, tuple, np.ndarray)):
            return [clean(v) for v in obj]
        return obj

    return clean(cfg)


def _summary(record: RunRecord) -> dict:
    sampling = record.phase == 2
    return {
        "step_size": float(record.step_size[-1]) if record.phase.size else None,
        "length": float(record.length[-1]) if record.phase.size else None,
        "damping": float(record.damping[-1]) if record.phase.size else None,
        "eigenvalue": float(record.eigenvalue[-1]) if record.phase.size else None,
        "mass": record.final_mass.tolist(),
        "acceptance_sampling": float(np.mean(record.acceptance[sampling])) if sampling.any()
        else None,
    }


def run_experiment(cfg: ExperimentConfig, out_dir=None, quiet: bool = True) -> dict:
    """One run; writes ``trace.csv``, ``report.json`` and optionally ``draws.csv``/``ess.csv``.

    Returns the report dictionary.
    """
    out = Path(out_dir if out_dir is not None else cfg.output.dir)
    target = cfg.make_target()
    t0 = time.perf_counter()
    record = run(target, cfg.run)
    runtime = time.perf_counter() - t0
    cols = record.trace_columns()
    _write_csv(out / "trace.csv", TRACE_COLUMNS, zip(*(cols[c] for c in TRACE_COLUMNS)))

    report = {
        "target": target.name,
        "kernel": cfg.run.kernel,
        "rho_mode": cfg.run.rho_mode,
        "config": _config_dict(cfg),
        "final": _summary(record),
        "grad_evals_total": record.total_grad_evals,
        "grad_evals_sampling": record.sampling_grad_evals,
        "runtime_seconds": runtime,
        "timestamp": time.strftime("%Y-%m-%dT%H:%M:%S"),
    }
    if record.n_sample >= 10:
        ess = min_ess_squared_coords(record, target)
        report["ess"] = ess.to_dict()
        if cfg.output.ess_csv:
            rows = [("coordinate", int(record.stored_coords[j]), e,
                     e / ess.grad_evals if ess.grad_evals else float("nan"),
                     e / (ess.n_chains * ess.n_draws)) for j, e in enumerate(ess.ess)]
            rows.append(("summary", int(record.stored_coords[ess.argmin]), ess.min_ess,
                         ess.ess_per_grad, ess.ess_per_iter))
            _write_csv(out / "ess.csv", ESS_COLUMNS, rows)
    else:
        report["ess"] = None
    if cfg.output.draws:
        K, N, _ = record.draws.shape
        header = ["chain", "draw"] + [f"x{j}" for j in record.stored_coords]
        rows = ([k, i, *record.draws[k, i]] for k in range(K) for i in range(N))
        _write_csv(out / "draws.csv", header, rows)
    _write_json(out / "report.json", report)
    if not quiet:
        e = report["ess"]
        msg = f"{target.name}: kernel={cfg.run.kernel} h={report['final']['step_size']:.4g}"
        msg += f" tau={report['final']['length']:.4g}"
        if e:
            msg += f" min-ESS={e['min_ess']:.1f} ESS/grad={e['ess_per_grad']:.3g}"
        print(msg)
    return report


def _fixed_kernel(cfg: ExperimentConfig, tau: float, gamma: float, seed: int) -> RunConfig:
    step = cfg.sweep.step_size if cfg.sweep.step_size is not None else cfg.run.step_size
    if step is None:
        raise ValueError("sweep needs sweep.step_size or run.step_size")
    return dataclasses.replace(
        cfg.run, n_adapt=0, n_clip=0, step_size=step, length=tau, damping=gamma,
        adapt_mass=False, kernel="malt", seed=seed,
    )


def run_sweep(cfg: ExperimentConfig, out_dir=None, quiet: bool = True) -> list:
    """Fixed-kernel MALT over the ``(tau, gamma)`` grid; writes ``surface.csv``.

    Each cell is run ``sweep.repeats`` times with seeds ``run.seed + r``. Cells
    with ``tau < h`` run a single leapfrog step and are flagged ``clamped``.
    """
    if cfg.sweep is None:
        raise ValueError("config has no [sweep] section")
    out = Path(out_dir if out_dir is not None else cfg.output.dir)
    target = cfg.make_target()
    rows = []
    for tau in cfg.sweep.taus:
        for gamma in cfg.sweep.gammas:
            per_grad, per_iter, acc = [], [], []
            for r in range(cfg.sweep.repeats):
                rc = _fixed_kernel(cfg, tau, gamma, cfg.run.seed + r)
                record = run(target, rc)
                ess = min_ess_squared_coords(record, target)
                per_grad.append(ess.ess_per_grad)
                per_iter.append(ess.ess_per_iter)
                acc.append(float(np.mean(record.acceptance[record.phase == 2])))
            h = rc.step_size
            row = (tau, gamma, h, num_steps(tau, h), tau < h, cfg.sweep.repeats,
                   float(np.mean(per_grad)), percentile(per_grad), float(np.mean(per_iter)),
                   float(np.mean(acc)))
            rows.append(row)
            if not quiet:
                print(f"tau={tau:g} gamma={gamma:g} ESS/grad={row[6]:.4g}")
    _write_csv(out / "surface.csv", SURFACE_COLUMNS, rows)
    return [dict(zip(SURFACE_COLUMNS, r)) for r in rows]


def method_config(run_cfg: RunConfig, method: str) -> RunConfig:
    """Run settings for one entry of the benchmark battery.

    Baselines keep the plain ESJD/tau criterion (``rho = 1``).
    """
    table = {
        "malt-adaptive-rho": ("malt", "adaptive"),
        "malt-rho-one": ("malt", "fixed-one"),
        "rhmc-uniform": ("rhmc-uniform", "fixed-one"),
        "rhmc-exponential": ("rhmc-exponential", "fixed-one"),
        "hmc": ("hmc", "fixed-one"),
    }
    kernel, rho_mode = table[method]
    return dataclasses.replace(run_cfg, kernel=kernel, rho_mode=rho_mode)


def run_bench(cfg: ExperimentConfig, out_dir=None, quiet: bool = True) -> list:
    """Run the method battery over seeds; writes ``bench.csv``.

    One raw row per (method, seed) and one summary row per method holding the
    percentile across seeds, its bootstrap SEM, and the ratio to the reference
    method's percentile (NaN when the reference is not in the battery).
    """
    if cfg.bench is None:
        raise ValueError("config has no [bench] section")
    bench = cfg.bench
    out = Path(out_dir if out_dir is not None else cfg.output.dir)
    target = cfg.make_target()
    seeds = bench.seed_list(cfg.run.seed)
    raw, results = [], {}
    for method in bench.methods:
        results[method] = ([], [])
        for seed in seeds:
            rc = dataclasses.replace(method_config(cfg.run, method), seed=seed)
            record = run(target, rc)
            ess = min_ess_squared_coords(record, target)
            s = _summary(record)
            results[method][0].append(ess.ess_per_grad)
            results[method][1].append(ess.ess_per_iter)
            raw.append(("raw", method, seed, ess.ess_per_grad, ess.ess_per_iter, None, None,
                        None, None, s["step_size"], s["length"], s["damping"],
                        s["acceptance_sampling"]))
            if not quiet:
                print(f"{method} seed={seed} ESS/grad={ess.ess_per_grad:.4g}")
    q = bench.percentile
    stat = lambda v: percentile(v, q)  # noqa: E731
    summary = {m: (stat(g), stat(i)) for m, (g, i) in results.items()}
    ref = summary.get(bench.reference)
    rows = list(raw)
    for method, (g, i) in results.items():
        pg, pi = summary[method]
        rows.append((
            "summary", method, f"p{q:g}", pg, pi,
            bootstrap_sem(g, stat, bench.n_boot), bootstrap_sem(i, stat, bench.n_boot),
            pg / ref[0] if ref else float("nan"), pi / ref[1] if ref else float("nan"),
            None, None, None, None,
        ))
    _write_csv(out / "bench.csv", BENCH_COLUMNS, rows)
    return [dict(zip(BENCH_COLUMNS, r)) for r in rows]


def read_csv(path) -> list:
    """Read one of the CSV outputs back as a list of dicts (strings)."""
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def strip_volatile(report: dict, fields: Optional[Iterable[str]] = None) -> dict:
    """Copy of ``report`` without runtime-dependent fields."""
    drop = set(VOLATILE_FIELDS if fields is None else fields)
    return {k: v for k, v in report.items() if k not in drop}
