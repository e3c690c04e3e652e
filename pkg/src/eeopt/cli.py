"""Command-line front end.

Usage::

    eeopt run <config> [--out FILE] [--seed N] [--tol X]
    eeopt tradeoff <config> [--out FILE] [--points N]
    eeopt validate <config>

``run`` writes one CSV row per (group, sweep point) with the columns in
:data:`RUN_COLUMNS`; ``tradeoff`` writes the rate/power curve with the
columns in :data:`TRADEOFF_COLUMNS`. Floats use 17 significant digits.

Exit codes: 0 success, 1 invalid configuration, 2 some sweep point is
infeasible (its row is still written with status ``infeasible``), 3 a
numerical routine failed.
"""

from __future__ import annotations

import argparse
import csv
import io
import math
import sys
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .config import ConfigError, build_power_model, load_config
from .ergodic import (
    ErgodicProblem,
    RayleighFading,
    independent_rayleigh,
    mimo_scenario,
    solve_ergodic,
    solve_parallel_fading,
)
from .exceptions import DomainError, InfeasibleError, NumericalError, TableRangeError
from .fracprog import Status
from .mmse import Constellation, MmseTable, build_table, load_table, mercury_allocate, save_table, solve_mmse_ee
from .nested import MercuryOracle, WaterfillOracle, solve_nested
from .powermodel import LOG2E, dbm_per_hz_to_watts
from .waterfill import (
    ParallelChannel,
    StaticEEProblem,
    apply_gap,
    flat_fading_closed_form,
    solve_static,
    waterfill_allocate,
)

__all__ = ["RUN_COLUMNS", "TRADEOFF_COLUMNS", "Row", "run_config", "tradeoff_rows", "main"]

RUN_COLUMNS = (
    "group",
    "sweep_value",
    "lambda",
    "ee",
    "ee_bits_per_joule",
    "sum_power",
    "sum_rate",
    "idle_probability",
    "iterations",
    "status",
    "std_error",
)

TRADEOFF_COLUMNS = ("group", "lambda", "total_power", "sum_rate", "ee", "optimum")

EXIT_OK, EXIT_CONFIG, EXIT_INFEASIBLE, EXIT_NUMERICAL = 0, 1, 2, 3

DEFAULT_NOISE_DBM_PER_HZ = -104.5
DEFAULT_TOL = 1e-10
DEFAULT_SAMPLES = 10_000


class _Failure(Exception):
    def __init__(self, code: int, message: str):
        super().__init__(message)
        self.code = code


@dataclass
class Row:
    """One line of ``run`` output; NaN where a quantity is not defined."""

    group: str
    sweep_value: float
    lam: float
    ee: float
    ee_bits_per_joule: float
    sum_power: float
    sum_rate: float
    idle_probability: float = math.nan
    iterations: int = 0
    status: str = "converged"
    std_error: float = math.nan

    def values(self) -> list:
        return [
            self.group, self.sweep_value, self.lam, self.ee, self.ee_bits_per_joule,
            self.sum_power, self.sum_rate, self.idle_probability, self.iterations,
            self.status, self.std_error,
        ]


def _fmt(v) -> str:
    if isinstance(v, (float, np.floating)):
        return f"{float(v):.17g}"
    return str(v)


def format_csv(columns, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for r in rows:
        w.writerow([_fmt(v) for v in r])
    return buf.getvalue()


# ---------------------------------------------------------------- scenario

def _sweep_points(cfg) -> list[float]:
    """Swept values, or the single ``mu`` (NaN with a power model)."""
    grid = cfg.get("sweep_grid")
    if grid is None:
        return [float(cfg.get("mu", math.nan))]
    return [float(v) for v in grid]


def _mu_and_conversion(cfg, x: float, **model_overrides) -> tuple[float, float]:
    """``mu`` and bits/J conversion at sweep value ``x``."""
    var = cfg.get("sweep", {}).get("variable")
    if "power_model" in cfg:
        if var == "p_c":
            model_overrides["p_c"] = x
        ms = build_power_model(cfg["power_model"], **model_overrides).mu_scale()
        return ms.mu, ms.conversion
    mu = x if var == "mu" else cfg["mu"]
    # no hardware model: report bits per unit of (mu + p)
    return mu, LOG2E


def _channel(cfg, seed: int) -> ParallelChannel:
    ch = cfg["channel"]
    if "cnrs" in ch:
        g = np.asarray(ch["cnrs"], dtype=float)
    else:
        d = ch["rayleigh_draw"]
        g = np.random.default_rng(seed).exponential(d["mean_cnr"], d["n_sub"])
    channel = ParallelChannel(g, ch.get("p_max", math.inf))
    if "gap" in ch:
        channel = apply_gap(channel, ch["gap"])
    return channel


def _tables(cfg) -> dict[str, MmseTable]:
    labels = cfg.get("constellations") or [cfg.get("constellation", "gaussian")]
    opts = cfg.get("table", {})
    rho_max, n_points = opts.get("rho_max", 1e4), opts.get("n_points", 512)
    cache = Path(opts["cache_dir"]) if "cache_dir" in opts else None
    out = {}
    for label in labels:
        c = Constellation.from_label(label)
        path = None
        if cache is not None:
            path = cache / f"{c.label}-rho{rho_max:g}-n{n_points}.txt"
            if path.exists():
                out[label] = load_table(path)
                continue
        tab = build_table(c, rho_max=rho_max, n_points=n_points)
        if path is not None:
            path.parent.mkdir(parents=True, exist_ok=True)
            save_table(tab, path)
        out[label] = tab
    return out


def _status(s) -> str:
    if s is Status.MAX_ITER:
        raise _Failure(EXIT_NUMERICAL, "iteration limit reached before convergence")
    return str(s)


def _infeasible_row(group, x, exc) -> Row:
    print(f"[{group} @ {x:.6g}] infeasible: {exc}", file=sys.stderr)
    nan = math.nan
    return Row(group, x, nan, nan, nan, nan, nan, status="infeasible")


def _run_static(cfg, tol, seed, max_iter):
    channel = _channel(cfg, seed)
    cons = cfg.get("constraints", {})
    for x in _sweep_points(cfg):
        mu, conv = _mu_and_conversion(cfg, x)
        prob = StaticEEProblem(channel, mu, cons.get("sum_power"), cons.get("min_rate"))
        try:
            tr = solve_static(prob, tol=tol, max_iter=max_iter)
        except InfeasibleError as exc:
            yield _infeasible_row("static", x, exc)
            continue
        sol = tr.solution
        yield Row("static", x, tr.lam, tr.ee, conv * tr.ee, sol.f2 - mu, sol.f1,
                  iterations=tr.iterations, status=_status(tr.status))


def _run_flat(cfg, tol, seed, max_iter):
    channel = _channel(cfg, seed)
    g = float(channel.cnrs[0])
    for x in _sweep_points(cfg):
        mu, conv = _mu_and_conversion(cfg, x)
        lam, p = flat_fading_closed_form(g, mu)
        p = min(p, channel.p_max)
        r = math.log1p(g * p)
        ee = r / (mu + p)
        yield Row("flat", x, lam, ee, conv * ee, p, r)


def _run_ergodic_rayleigh(cfg, tol, seed, max_iter):
    cons = cfg.get("constraints", {})
    fading = RayleighFading(cfg["fading"]["mean_cnr"])
    for x in _sweep_points(cfg):
        mu, conv = _mu_and_conversion(cfg, x)
        prob = ErgodicProblem(fading, mu, cons.get("avg_power_max"), cons.get("avg_rate_min"))
        try:
            sol = solve_ergodic(prob, tol=tol, max_iter=max_iter)
        except InfeasibleError as exc:
            yield _infeasible_row("rayleigh", x, exc)
            continue
        yield Row("rayleigh", x, sol.lam, sol.ee, conv * sol.ee, sol.avg_power, sol.avg_rate,
                  sol.idle_probability, sol.iterations, _status(sol.status))


def _mc_row(group, x, scenario, mu, conv, cons, tol, max_iter) -> Row:
    try:
        sol = solve_parallel_fading(
            scenario, mu, tol=tol, avg_power_max=cons.get("avg_power_max"),
            avg_rate_min=cons.get("avg_rate_min"), max_iter=max_iter,
        )
    except InfeasibleError as exc:
        return _infeasible_row(group, x, exc)
    return Row(group, x, sol.lam, sol.ee, conv * sol.ee, sol.avg_power, sol.avg_rate,
               sol.idle_probability, sol.iterations, _status(sol.status), sol.std_error)


def _run_ergodic_parallel(cfg, tol, seed, max_iter):
    cons = cfg.get("constraints", {})
    n = cfg.get("n_samples", DEFAULT_SAMPLES)
    # same draws at every sweep point
    scenario = independent_rayleigh(cfg["fading"]["mean_cnrs"], n_samples=n, seed=seed)
    for x in _sweep_points(cfg):
        mu, conv = _mu_and_conversion(cfg, x)
        yield _mc_row("parallel", x, scenario, mu, conv, cons, tol, max_iter)


def _run_mimo(cfg, tol, seed, max_iter):
    cons = cfg.get("constraints", {})
    n = cfg.get("n_samples", DEFAULT_SAMPLES)
    n0 = dbm_per_hz_to_watts(cfg.get("noise_psd_dbm_per_hz", DEFAULT_NOISE_DBM_PER_HZ))
    gain = 10.0 ** (-cfg.get("path_loss_db", 0.0) / 10.0) / n0
    if cfg.get("sweep", {}).get("variable") == "n":
        for x in _sweep_points(cfg):
            k = int(x)
            mu, conv = _mu_and_conversion(cfg, x, n_a=k)
            sc = mimo_scenario(k, k, gain, n_samples=n, seed=seed)
            yield _mc_row("balanced", x, sc, mu, conv, cons, tol, max_iter)
        return
    for ant in cfg["antennas"]:
        n_t, n_r = ant["n_t"], ant["n_r"]
        group = f"{n_t}x{n_r}"
        sc = mimo_scenario(n_t, n_r, gain, n_samples=n, seed=seed)
        for x in _sweep_points(cfg):
            mu, conv = _mu_and_conversion(cfg, x, n_a=n_t)
            yield _mc_row(group, x, sc, mu, conv, cons, tol, max_iter)


def _run_mmse(cfg, tol, seed, max_iter):
    g = _channel(cfg, seed).cnrs
    for label, tab in _tables(cfg).items():
        for x in _sweep_points(cfg):
            mu, conv = _mu_and_conversion(cfg, x)
            tr, alloc = solve_mmse_ee(tab, g, mu, tol=tol, max_iter=max_iter)
            yield Row(label, x, tr.lam, tr.ee, conv * tr.ee, alloc.sum_power, alloc.sum_rate,
                      iterations=tr.iterations, status=_status(tr.status))


def _run_nested(cfg, tol, seed, max_iter):
    channel = _channel(cfg, seed)
    label = cfg.get("constellation", "gaussian")
    if Constellation.from_label(label).is_gaussian:
        oracle = WaterfillOracle(channel)
    else:
        oracle = MercuryOracle(_tables(cfg)[label], channel.cnrs)
    for x in _sweep_points(cfg):
        mu, conv = _mu_and_conversion(cfg, x)
        res = solve_nested(oracle, mu, tol=min(tol, 1e-10))
        a = res.allocation
        yield Row(label, x, res.inner.level, res.ee, conv * res.ee, a.sum_power, a.sum_rate,
                  iterations=res.evaluations)


_RUNNERS = {
    "static": _run_static,
    "flat-closed-form": _run_flat,
    "ergodic-rayleigh": _run_ergodic_rayleigh,
    "ergodic-parallel": _run_ergodic_parallel,
    "mimo": _run_mimo,
    "mmse": _run_mmse,
    "nested": _run_nested,
}


def _numerical(fn, *args):
    try:
        return fn(*args)
    except (NumericalError, TableRangeError) as exc:
        raise _Failure(EXIT_NUMERICAL, f"numerical failure: {exc}") from exc
    except DomainError as exc:
        raise _Failure(EXIT_CONFIG, f"invalid parameter: {exc}") from exc


def run_config(cfg: dict, seed: int | None = None, tol: float | None = None) -> list[Row]:
    """Solve every sweep point of a validated scenario."""
    seed = cfg.get("seed", 0) if seed is None else seed
    tol = cfg.get("tolerance", DEFAULT_TOL) if tol is None else tol
    max_iter = cfg.get("max_iter", 100)
    return _numerical(lambda: list(_RUNNERS[cfg["solver"]](cfg, tol, seed, max_iter)))


# ---------------------------------------------------------------- trade-off

def _lambda_grid(hi: float, lo: float, n: int) -> np.ndarray:
    return np.logspace(math.log10(hi), math.log10(lo), n)


def tradeoff_rows(cfg: dict, n_points: int | None = None, tol: float | None = None) -> list[tuple]:
    """Rate/power trade-off curve(s) at the configured ``mu``.

    Each group gets ``n_points`` cutoffs, log-spaced from the largest CNR
    (zero power) down to where the curve stops moving, plus the optimal
    cutoff flagged with ``optimum = 1``. Rows are sorted by ``lambda``
    descending within each group.
    """
    kind = cfg["solver"]
    if kind not in ("static", "mmse"):
        raise _Failure(EXIT_CONFIG, f"tradeoff needs a static or mmse scenario, not {kind!r}")
    n_points = n_points or cfg.get("tradeoff_points", 200)
    tol = cfg.get("tolerance", DEFAULT_TOL) if tol is None else tol
    seed = cfg.get("seed", 0)
    first = float(cfg["sweep_grid"][0]) if "sweep_grid" in cfg else math.nan
    mu, _ = _mu_and_conversion(cfg, first)
    channel = _channel(cfg, seed)
    gmax = float(channel.cnrs.max())
    if not gmax > 0:
        raise _Failure(EXIT_INFEASIBLE, "all CNRs are zero; the curve is a single point")

    def build():
        rows = []
        if kind == "static":
            cons = cfg.get("constraints", {})
            prob = StaticEEProblem(channel, mu, cons.get("sum_power"), cons.get("min_rate"))
            lo = channel.saturation_cutoff if math.isfinite(channel.p_max) else 1e-4 * gmax
            lam_star = solve_static(prob, tol=tol).lam
            curves = [("gaussian", lambda lam: waterfill_allocate(channel, lam, mu), lo, lam_star)]
        else:
            curves = []
            for label, tab in _tables(cfg).items():
                if tab.degenerate:
                    continue
                lo = max(1e-6, tab.floor * (1.0 + 1e-9)) * gmax
                lam_star = solve_mmse_ee(tab, channel.cnrs, mu, tol=tol)[0].lam

                def alloc(lam, tab=tab):
                    return mercury_allocate(tab, channel.cnrs, lam, mu)

                curves.append((label, alloc, lo, lam_star))
        for label, alloc, lo, lam_star in curves:
            lams = list(_lambda_grid(gmax, lo, n_points))
            lams.append(lam_star)
            for lam in sorted(lams, reverse=True):
                a = alloc(lam)
                total = mu + a.sum_power
                rows.append((label, lam, total, a.sum_rate, a.sum_rate / total, int(lam == lam_star)))
        return rows

    try:
        return _numerical(build)
    except InfeasibleError as exc:
        raise _Failure(EXIT_INFEASIBLE, f"infeasible: {exc}") from exc


# ---------------------------------------------------------------- entry point

def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="eeopt", description="Energy-efficiency optimization scenarios.")
    sub = p.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="solve every sweep point and write CSV")
    run.add_argument("config")
    run.add_argument("--out", help="output file (default: standard output)")
    run.add_argument("--seed", type=int, help="override the config seed")
    run.add_argument("--tol", type=float, help="override the config tolerance")

    tr = sub.add_parser("tradeoff", help="write the rate/power trade-off curve")
    tr.add_argument("config")
    tr.add_argument("--out")
    tr.add_argument("--points", type=int, help="cutoffs per curve")

    val = sub.add_parser("validate", help="check a config without solving")
    val.add_argument("config")
    return p


def _emit(text: str, out: str | None) -> None:
    if out:
        Path(out).write_text(text)
    else:
        sys.stdout.write(text)


def main(argv: list[str] | None = None) -> int:
    args = _parser().parse_args(argv)
    try:
        cfg = load_config(args.config)
    except ConfigError as exc:
        print(f"{args.config}: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    if args.command == "validate":
        return EXIT_OK

    try:
        if args.command == "run":
            if args.tol is not None and not args.tol > 0:
                raise _Failure(EXIT_CONFIG, "--tol must be positive")
            rows = run_config(cfg, seed=args.seed, tol=args.tol)
            _emit(format_csv(RUN_COLUMNS, [r.values() for r in rows]), args.out)
            return EXIT_INFEASIBLE if any(r.status == "infeasible" for r in rows) else EXIT_OK
        rows = tradeoff_rows(cfg, n_points=args.points)
        _emit(format_csv(TRADEOFF_COLUMNS, rows), args.out)
        return EXIT_OK
    except _Failure as exc:
        print(f"{args.config}: {exc}", file=sys.stderr)
        return exc.code


if __name__ == "__main__":
    sys.exit(main())
