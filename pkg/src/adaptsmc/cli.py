"""Experiment runner.

Usage::

    adaptsmc run <preset|config.json> [--seed S] [--reps R] [--out-dir D]
                 [--override key=value ...] [--workers W]
    adaptsmc presets

A preset or a flat JSON config expands into one or more
:class:`ExperimentSpec`.  Each spec writes ``<name>.csv`` (one row per
replication), ``<name>.json`` (full diagnostics) and contributes to
``summary.json`` in the output directory.
"""

from __future__ import annotations

import argparse
import concurrent.futures
import csv
import dataclasses
import json
import logging
import math
import sys
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from .adapt import AdaptConfig, make_policy
from .kernels import KLMCFamily, LMCFamily, MALAFamily
from .model import (
    AnnealedPath,
    funnel,
    load_logistic_csv,
    logistic_regression,
    make_schedule,
    shifted_gaussian,
    synthetic_logistic_data,
)
from .schedule_adapt import RoundPlan, run_rounds
from .smc import FixedParams, RunConfig, constant_params, smc_run

log = logging.getLogger(__name__)

CSV_HEADER = ("seed", "log_z_hat", "wall_time_s", "total_objective_evals")

# keys of AdaptConfig that a flat config may set directly
_ADAPT_KEYS = ("tau", "epsilon", "c", "r", "delta", "h_guess", "B", "Xi", "rho_guess", "max_sweeps")


@dataclass
class ExperimentSpec:
    """Flat description of one study cell.

    ``policy`` is ``"adaptive"`` or ``"fixed"``.  Fixed runs use ``h`` (and
    ``rho`` for KLMC).  With ``replay`` an adaptive run is followed by a
    vanilla run that reuses the tuned parameters on a fresh random stream,
    and that run's estimate is reported.  ``rounds > 1`` turns on schedule
    adaptation with ``T`` as the first round's length.
    """

    name: str = "experiment"
    target: str = "gaussian"
    d: int = 10
    mu: float = 3.0
    data_csv: Optional[str] = None
    data_n: int = 200
    data_seed: int = 0
    kernel: str = "lmc"
    potential: str = "tc_fwd"
    first_backward: str = "reference"
    policy: str = "adaptive"
    mala_mode: str = "arc"
    h: Optional[float] = None
    rho: Optional[float] = None
    schedule: str = "quadratic"
    T: int = 64
    N: int = 1024
    resample_threshold: float = 0.5
    scheme: str = "systematic"
    adapt: dict = field(default_factory=dict)
    replay: bool = False
    rounds: int = 1
    replications: int = 1
    seed: int = 0
    record_wall_time: bool = True

    def __post_init__(self):
        if self.replications < 1:
            raise ValueError("replications must be >= 1")
        if self.policy not in ("adaptive", "fixed"):
            raise ValueError(f"unknown policy {self.policy!r}")
        if self.policy == "fixed" and self.h is None:
            raise ValueError("fixed policy needs h")
        if self.kernel == "klmc" and self.policy == "fixed" and self.rho is None:
            raise ValueError("fixed KLMC needs rho")
        if self.kernel not in ("lmc", "mala", "klmc"):
            raise ValueError(f"unknown kernel {self.kernel!r}")
        if self.rounds < 1:
            raise ValueError("rounds must be >= 1")

    # -- builders ---------------------------------------------------------

    def build_target(self):
        if self.target == "gaussian":
            return shifted_gaussian(self.d, self.mu)
        if self.target == "funnel":
            return funnel(self.d)
        if self.target == "logistic":
            if self.data_csv:
                return load_logistic_csv(self.data_csv)
            X, y = synthetic_logistic_data(self.data_n, self.d - 1, self.data_seed)
            return logistic_regression(X, y)
        raise ValueError(f"unknown target {self.target!r}")

    def build_family(self):
        if self.kernel == "klmc":
            return KLMCFamily()
        if self.kernel == "mala":
            return MALAFamily()
        return LMCFamily(self.potential, first_backward=self.first_backward)

    def build_adapt_config(self) -> AdaptConfig:
        kw = dict(self.adapt)
        if "Xi" in kw:
            kw["Xi"] = tuple(kw["Xi"])
        if self.kernel == "klmc":
            return AdaptConfig.klmc(**kw)
        return AdaptConfig.lmc(**kw)

    def run_config(self, seed: int) -> RunConfig:
        return RunConfig(self.N, self.resample_threshold, self.scheme, seed)

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentSpec":
        d = dict(d)
        adapt = dict(d.pop("adapt", {}) or {})
        for k in _ADAPT_KEYS:
            if k in d:
                adapt[k] = d.pop(k)
        if "reps" in d:
            d["replications"] = d.pop("reps")
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        return cls(adapt=adapt, **d)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)


# ---------------------------------------------------------------------------
# one replication
# ---------------------------------------------------------------------------


def _param_dict(p) -> dict:
    out = {"h": float(p.h)}
    if getattr(p, "rho", None) is not None:
        out["rho"] = float(p.rho)
    return out


def run_replication(spec: ExperimentSpec, seed: int) -> dict:
    """Run one replication end to end; the result depends only on ``(spec, seed)``."""
    t0 = time.perf_counter()
    target = spec.build_target()
    family = spec.build_family()
    rng = np.random.default_rng(seed)
    cfg = spec.run_config(seed)
    out = {"seed": seed}

    if spec.rounds > 1:
        plan = RoundPlan(spec.rounds, spec.T)
        rr = run_rounds(target, plan, family, spec.build_adapt_config(), cfg, rng)
        result = rr.final
        out["rounds"] = [r.to_dict() for r in rr.history]
        schedule = rr.schedules[-1]
    else:
        schedule = make_schedule(spec.schedule, spec.T)
        path = AnnealedPath(target, schedule)
        if spec.policy == "fixed":
            policy = constant_params(family, spec.T, spec.h, spec.rho)
        else:
            policy = make_policy(family.name, spec.build_adapt_config(), spec.mala_mode)
        result = smc_run(path, family, policy, cfg, rng)

    out["adaptive_log_z_hat"] = float(result.log_z_hat)
    out["steps"] = [r.to_dict() for r in result.records]
    out["params"] = [_param_dict(p) for p in result.params]
    out["total_objective_evals"] = int(result.total_evals)
    log_z = float(result.log_z_hat)
    if spec.replay and spec.policy == "adaptive":
        path = AnnealedPath(target, schedule)
        replay_rng = np.random.default_rng([seed, 1])
        rep = smc_run(path, family, FixedParams(result.params), cfg, replay_rng)
        log_z = float(rep.log_z_hat)
        out["replay_log_z_hat"] = log_z
    out["log_z_hat"] = log_z
    out["wall_time_s"] = time.perf_counter() - t0 if spec.record_wall_time else 0.0
    return out


def _safe_replication(spec: ExperimentSpec, seed: int) -> dict:
    try:
        return run_replication(spec, seed)
    except Exception as exc:  # recorded, not fatal
        return {"seed": seed, "error": f"{type(exc).__name__}: {exc}"}


# ---------------------------------------------------------------------------
# aggregation and output
# ---------------------------------------------------------------------------


def nearest_rank(values, p: float) -> float:
    """Nearest-rank empirical quantile: the ``ceil(p n)``-th smallest value."""
    xs = sorted(values)
    if not xs:
        raise ValueError("no values")
    if not 0.0 < p <= 1.0:
        raise ValueError("p must lie in (0, 1]")
    k = max(1, math.ceil(p * len(xs)))
    return float(xs[k - 1])


@dataclass
class SummaryRecord:
    name: str
    seeds: list
    log_z_hat: list
    median: float
    q10: float
    q90: float
    mean_evals_per_step: Optional[float]
    n_failed: int = 0

    @classmethod
    def from_rows(cls, name: str, rows: list, n_failed: int = 0) -> "SummaryRecord":
        lz = [r["log_z_hat"] for r in rows]
        steps = sum(len(r["steps"]) for r in rows)
        evals = sum(r["total_objective_evals"] for r in rows)
        return cls(
            name=name,
            seeds=[r["seed"] for r in rows],
            log_z_hat=lz,
            median=nearest_rank(lz, 0.5),
            q10=nearest_rank(lz, 0.1),
            q90=nearest_rank(lz, 0.9),
            mean_evals_per_step=(evals / steps) if evals else None,
            n_failed=n_failed,
        )

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)


def _fmt(x) -> str:
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return format(float(x), ".17g")


def write_csv(rows: list, fh) -> None:
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(CSV_HEADER)
    for r in rows:
        w.writerow([_fmt(r["seed"]), _fmt(r["log_z_hat"]), _fmt(r["wall_time_s"]),
                    _fmt(int(r["total_objective_evals"]))])


def read_csv(fh) -> list:
    reader = csv.reader(fh)
    header = tuple(next(reader))
    if header != CSV_HEADER:
        raise ValueError(f"unexpected CSV header {header}")
    return [
        {"seed": int(s), "log_z_hat": float(lz), "wall_time_s": float(wt), "total_objective_evals": int(ev)}
        for s, lz, wt, ev in reader
    ]


def run_experiment(spec: ExperimentSpec, out_dir=None, workers: int = 1):
    """Run all replications of ``spec`` and aggregate them.

    Replication ``i`` uses seed ``spec.seed + i``.  Failed replications are
    recorded in the JSON output; the run fails only when all of them do.

    Returns
    -------
    summary : SummaryRecord
    raw : dict
        The JSON diagnostics document.
    """
    seeds = [spec.seed + i for i in range(spec.replications)]
    if workers > 1 and len(seeds) > 1:
        with concurrent.futures.ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_safe_replication, [spec] * len(seeds), seeds))
    else:
        results = [_safe_replication(spec, s) for s in seeds]
    # fixed-order reduce: results are already in seed order
    ok = [r for r in results if "error" not in r]
    failed = [r for r in results if "error" in r]
    for f in failed:
        log.warning("%s: replication seed=%d failed: %s", spec.name, f["seed"], f["error"])
    if not ok:
        raise RuntimeError(f"{spec.name}: all {len(results)} replications failed; first error: {failed[0]['error']}")
    summary = SummaryRecord.from_rows(spec.name, ok, len(failed))
    raw = {"spec": spec.to_dict(), "summary": summary.to_dict(), "replications": ok, "failures": failed}
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        with open(out / f"{spec.name}.csv", "w", newline="") as fh:
            write_csv(ok, fh)
        with open(out / f"{spec.name}.json", "w") as fh:
            json.dump(raw, fh, indent=1)
    return summary, raw


# ---------------------------------------------------------------------------
# presets
# ---------------------------------------------------------------------------


def _as_list(v, cast=float):
    if isinstance(v, str):
        return [cast(x) for x in v.split(",") if x.strip()]
    if isinstance(v, (list, tuple)):
        return [cast(x) for x in v]
    return [cast(v)]


def _preset_adaptive(o):
    base = dict(name="adaptive", target="funnel", d=10, kernel="lmc", policy="adaptive",
                schedule="quadratic", T=64, N=1024, replay=True)
    base.update(o)
    return [ExperimentSpec.from_dict(base)]


def _preset_gridsearch(o):
    o = dict(o)
    grid = _as_list(o.pop("h_grid", list(np.logspace(-3, 0, 7))))
    rhos = _as_list(o.pop("rho_grid", [0.1, 0.5, 0.9]))
    base = dict(target="funnel", d=10, kernel="lmc", policy="fixed", schedule="quadratic", T=64, N=1024,
                first_backward="tc")
    base.update(o)
    specs = []
    for h in grid:
        for rho in (rhos if base["kernel"] == "klmc" else [None]):
            tag = f"h{h:.4g}" + (f"_rho{rho:g}" if rho is not None else "")
            specs.append(ExperimentSpec.from_dict({**base, "h": h, "rho": rho, "name": f"gridsearch_{tag}"}))
    return specs


def _preset_backward(o):
    base = dict(target="gaussian", d=10, mu=30.0, kernel="lmc", policy="fixed", h=0.5, schedule="linear",
                T=64, N=1024, first_backward="tc")
    base.update(o)
    return [ExperimentSpec.from_dict({**base, "potential": p, "name": f"backward_{p}"})
            for p in ("dbf", "tc_fwd", "fwd")]


def dim_scaling_T(d: int) -> int:
    return 4 * math.ceil(math.sqrt(d))


def _preset_dim_scaling(o):
    o = dict(o)
    dims = _as_list(o.pop("dims", [16, 64]), int)
    base = dict(target="gaussian", mu=3.0, kernel="lmc", policy="adaptive", schedule="quadratic", N=1024,
                replay=True)
    base.update(o)
    # T follows d unless the caller pins it explicitly
    return [ExperimentSpec.from_dict({"T": dim_scaling_T(d), **base, "d": d, "name": f"dim_scaling_d{d}"})
            for d in dims]


def _preset_ground_truth(o):
    base = dict(name="ground_truth", target="funnel", d=10, kernel="lmc", policy="adaptive",
                schedule="quadratic", N=2**14, T=2**9, replay=True)
    base.update(o)
    return [ExperimentSpec.from_dict(base)]


PRESETS = {
    "adaptive": _preset_adaptive,
    "gridsearch-fixed-h": _preset_gridsearch,
    "backward-compare": _preset_backward,
    "dim-scaling": _preset_dim_scaling,
    "ground-truth": _preset_ground_truth,
}


def expand(name_or_path: str, overrides: Optional[dict] = None) -> list:
    """Turn a preset name or a JSON config path into a list of specs."""
    overrides = dict(overrides or {})
    if name_or_path in PRESETS:
        return PRESETS[name_or_path](overrides)
    p = Path(name_or_path)
    if p.suffix == ".json" and p.exists():
        with open(p) as fh:
            cfg = json.load(fh)
        if not isinstance(cfg, dict):
            raise ValueError("config file must hold a JSON object")
        preset = cfg.pop("preset", None)
        cfg.update(overrides)
        if preset is not None:
            return expand(preset, cfg)
        return [ExperimentSpec.from_dict(cfg)]
    raise ValueError(f"unknown preset or missing config file: {name_or_path!r} (presets: {', '.join(PRESETS)})")


def parse_override(text: str):
    if "=" not in text:
        raise argparse.ArgumentTypeError(f"override must be key=value, got {text!r}")
    key, raw = text.split("=", 1)
    try:
        value = json.loads(raw)
    except json.JSONDecodeError:
        value = raw
    return key.strip(), value


# ---------------------------------------------------------------------------
# entry point
# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="adaptsmc", description="Adaptive SMC experiment runner")
    sub = ap.add_subparsers(dest="command", required=True)
    run = sub.add_parser("run", help="run a preset or a JSON config")
    run.add_argument("config", help=f"preset ({', '.join(PRESETS)}) or path to a JSON config")
    run.add_argument("--seed", type=int, default=None, help="base seed")
    run.add_argument("--reps", type=int, default=None, help="replications per spec")
    run.add_argument("--out-dir", default="results", help="output directory")
    run.add_argument("--override", action="append", type=parse_override, default=[], metavar="KEY=VALUE")
    run.add_argument("--workers", type=int, default=1, help="worker processes")
    run.add_argument("-v", "--verbose", action="store_true")
    sub.add_parser("presets", help="list presets")
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.command == "presets":
        for name in PRESETS:
            print(name)
        return 0
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    overrides = dict(args.override)
    if args.seed is not None:
        overrides["seed"] = args.seed
    if args.reps is not None:
        overrides["replications"] = args.reps
    try:
        specs = expand(args.config, overrides)
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    summaries = []
    for spec in specs:
        summary, _ = run_experiment(spec, args.out_dir, args.workers)
        summaries.append(summary.to_dict())
        print(f"{spec.name}: median log Z = {summary.median:.4f} "
              f"[{summary.q10:.4f}, {summary.q90:.4f}] over {len(summary.log_z_hat)} runs")
    out = Path(args.out_dir)
    with open(out / "summary.json", "w") as fh:
        json.dump(summaries, fh, indent=1)
    return 0


if __name__ == "__main__":
    sys.exit(main())
