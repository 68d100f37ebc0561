"""Command line: configured runs, smoothing verification, rate fits and dimension sweeps.

Configs are TOML; dotted keys and tables are interchangeable
(``risk.p = 2`` is the same as ``p = 2`` under ``[risk]``).
"""

from __future__ import annotations

import argparse
import csv
import math
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

try:
    import tomllib
except ModuleNotFoundError:  # Python 3.10
    import tomli as tomllib

from . import diagnostics as dg
from .core import ConfigError, RandomStreams, RiskProfile, RiskSpec
from .problems import Problem, make_problem
from .smoothing import (
    PairConstantsReport,
    SmoothingPlan,
    choose_mu,
    chi_mean,
    pair_constants,
    slipschitz_check,
    smoothed_gradient,
    smoothed_value,
    surrogate_gap_bound,
)
from .solver import NumericalError, QuasiDraws, RunOptions, Schedule, quasi_gradient, run

EXIT_OK = 0
EXIT_CHECK_FAILED = 1
EXIT_CONFIG = 2
EXIT_NUMERIC = 3

_ALLOWED = {
    "problem": None,  # free-form parameter map, validated by the constructor
    "risk": {"p", "c", "profile", "eta", "t"},
    "smoothing": {"class", "mu", "M", "T2", "T2_K"},
    "schedule": {"variant", "epsilon", "delta", "zeta", "sigma", "alpha", "beta", "gamma"},
    "run": {"iterations", "replications", "seed", "x0", "y0", "z0", "record", "block_size"},
    "output": {"path"},
    "options": {"average", "track_errors", "tracking_cadence", "diagnostic_K", "reference",
                "exact_chain_rule", "jobs"},
    "verify": {"seed", "K", "L_x4", "grid_points"},
    "sweep": {"dims", "window"},
}

HEADER_TAIL = ["y", "z", "y_err_sq", "z_err_sq", "oracle_calls"]


def _fmt(v) -> str:
    if v is None or (isinstance(v, float) and math.isnan(v)):
        return ""
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return f"{float(v):.17g}"


# ---------------------------------------------------------------------------
# Configuration
# ---------------------------------------------------------------------------


@dataclass
class ExperimentConfig:
    problem_name: str
    problem_params: dict
    spec: RiskSpec
    smoothing_class: str
    mu: Optional[float]
    M: Optional[float]
    T2: Optional[float]
    T2_K: int
    schedule: Schedule
    iterations: int
    replications: int
    seed: int
    output: Optional[str]
    x0: Optional[list] = None
    y0: Optional[float] = None
    z0: Optional[float] = None
    record: str = "geometric"
    block_size: int = 4096
    average: bool = False
    track_errors: bool = False
    tracking_cadence: int = 10
    diagnostic_K: int = 2000
    reference: object = "none"
    exact_chain_rule: bool = True
    jobs: int = 1
    verify: dict = field(default_factory=dict)
    sweep: dict = field(default_factory=dict)
    raw: dict = field(default_factory=dict)


def _field(section, key, value, kind, check=None, msg=""):
    try:
        v = kind(value)
    except (TypeError, ValueError):
        raise ConfigError(f"{section}.{key}: expected {kind.__name__}, got {value!r}") from None
    if check is not None and not check(v):
        raise ConfigError(f"{section}.{key}: {msg} (got {value!r})")
    return v


def _as_bool(v):
    if isinstance(v, bool):
        return v
    raise ValueError


def parse_config(raw: dict) -> ExperimentConfig:
    for sec, body in raw.items():
        if sec not in _ALLOWED:
            raise ConfigError(f"{sec}: unknown config section")
        if not isinstance(body, dict):
            raise ConfigError(f"{sec}: expected a table of keys")
        allowed = _ALLOWED[sec]
        if allowed is not None:
            for key in body:
                if key not in allowed:
                    raise ConfigError(f"{sec}.{key}: unknown key")
    prob = dict(raw.get("problem", {}))
    name = prob.pop("name", None)
    if not isinstance(name, str):
        raise ConfigError("problem.name: required problem name")

    r = raw.get("risk", {})
    p = _field("risk", "p", r.get("p", 1.0), float)
    kind = r.get("profile", "relu-shift")
    if "eta" not in r and p > 1.0:
        raise ConfigError("risk.eta: required when risk.p > 1")
    try:
        profile = RiskProfile(kind, _field("risk", "eta", r.get("eta", 0.0), float),
                              _field("risk", "t", r.get("t", 1.0), float))
        spec = RiskSpec(p, _field("risk", "c", r.get("c", 0.0), float), profile)
    except ConfigError as exc:
        raise ConfigError(f"risk: {exc}") from None

    s = raw.get("smoothing", {})
    mu = s.get("mu")
    M = s.get("M")
    if (mu is None) == (M is None):
        raise ConfigError("smoothing: give exactly one of smoothing.mu or smoothing.M")
    if mu is not None:
        mu = _field("smoothing", "mu", mu, float, lambda v: v > 0, "must be > 0")
    if M is not None:
        M = _field("smoothing", "M", M, float, lambda v: v > 0, "must be > 0")
    T2 = s.get("T2")
    if T2 is not None:
        T2 = _field("smoothing", "T2", T2, float, lambda v: v >= 0 and math.isfinite(v), "must be finite and >= 0")

    sc = dict(raw.get("schedule", {}))
    variant = sc.pop("variant", "strongly-convex-subharmonic")
    try:
        schedule_kw = {k: float(v) for k, v in sc.items()}
    except (TypeError, ValueError):
        raise ConfigError("schedule: parameters must be numbers") from None

    rn = raw.get("run", {})
    out = raw.get("output", {})
    op = raw.get("options", {})
    iterations = _field("run", "iterations", rn.get("iterations", 1000), int, lambda v: v >= 0, "must be >= 0")
    reps = _field("run", "replications", rn.get("replications", 1), int, lambda v: v >= 1, "must be >= 1")
    seed = _field("run", "seed", rn.get("seed", 0), int, lambda v: 0 <= v < 2**64, "must be a 64-bit unsigned integer")
    record = rn.get("record", "geometric")
    if record not in ("all", "geometric"):
        raise ConfigError(f"run.record: expected 'all' or 'geometric', got {record!r}")
    cfg = ExperimentConfig(
        problem_name=name, problem_params=prob, spec=spec,
        smoothing_class=s.get("class", ""), mu=mu, M=M, T2=T2,
        T2_K=_field("smoothing", "T2_K", s.get("T2_K", 4096), int, lambda v: v >= 2, "must be >= 2"),
        schedule=None, iterations=iterations, replications=reps, seed=seed,
        output=out.get("path"), x0=rn.get("x0"), y0=rn.get("y0"), z0=rn.get("z0"), record=record,
        block_size=_field("run", "block_size", rn.get("block_size", 4096), int, lambda v: v >= 1, "must be >= 1"),
        average=_field("options", "average", op.get("average", False), _as_bool),
        track_errors=_field("options", "track_errors", op.get("track_errors", False), _as_bool),
        tracking_cadence=_field("options", "tracking_cadence", op.get("tracking_cadence", 10), int,
                                lambda v: v >= 1, "must be >= 1"),
        diagnostic_K=_field("options", "diagnostic_K", op.get("diagnostic_K", 2000), int, lambda v: v >= 2, "must be >= 2"),
        reference=op.get("reference", "none"),
        exact_chain_rule=_field("options", "exact_chain_rule", op.get("exact_chain_rule", True), _as_bool),
        jobs=_field("options", "jobs", op.get("jobs", 1), int, lambda v: v >= 1, "must be >= 1"),
        verify=dict(raw.get("verify", {})), sweep=dict(raw.get("sweep", {})), raw=raw,
    )
    # validate everything that a run would build, before any run starts
    problem = build_problem(cfg)
    if "sigma" not in schedule_kw and variant != "convex-subharmonic":
        schedule_kw["sigma"] = problem.sigma
    try:
        cfg.schedule = Schedule(variant, **schedule_kw)
    except ConfigError as exc:
        raise ConfigError(f"schedule: {exc}") from None
    except TypeError as exc:
        raise ConfigError(f"schedule: {exc}") from None
    if cfg.smoothing_class and cfg.smoothing_class != problem.cls:
        raise ConfigError(f"smoothing.class: problem {name!r} declares class {problem.cls!r}")
    cfg.smoothing_class = problem.cls
    if not (cfg.reference in ("none", "auto") or isinstance(cfg.reference, list)):
        raise ConfigError("options.reference: expected 'none', 'auto' or a coordinate list")
    if not math.isfinite(problem.V):
        raise ConfigError("problem: the feasible region must be bounded so the moment bound V is finite")
    return cfg


def load_config(path: str) -> ExperimentConfig:
    try:
        with open(path, "rb") as fh:
            raw = tomllib.load(fh)
    except FileNotFoundError:
        raise ConfigError(f"--config: no such file {path!r}") from None
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"--config: invalid TOML: {exc}") from None
    return parse_config(raw)


def build_problem(cfg: ExperimentConfig, dim: Optional[int] = None) -> Problem:
    params = dict(cfg.problem_params)
    if dim is not None:
        params["dim"] = dim
    try:
        return make_problem(cfg.problem_name, params)
    except ConfigError as exc:
        raise ConfigError(f"problem: {exc}") from None
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"problem: bad parameters ({exc})") from None


def build_plan(cfg: ExperimentConfig, problem: Problem) -> SmoothingPlan:
    N = problem.dim
    mu = cfg.mu if cfg.mu is not None else choose_mu(problem.cls, N, cfg.M)
    if problem.cls == "smooth" and cfg.T2 is not None:
        report = PairConstantsReport("smooth", N, float(N), math.sqrt(N * (N + 2.0)), cfg.T2, 1.0)
    else:
        # T2 estimation draws from its own seeded generator so runs stay reproducible
        report = pair_constants(problem.cls, N, problem, np.random.default_rng([cfg.seed, 0x7432]), cfg.T2_K)
    return SmoothingPlan.from_report(mu, report)


def _reference(cfg, problem, plan):
    if cfg.reference == "none":
        return None
    if cfg.reference == "auto":
        return dg.reference_optimum(problem, cfg.spec, plan.mu)
    ref = np.asarray(cfg.reference, dtype=float)
    if ref.shape != (problem.dim,):
        raise ConfigError(f"options.reference: expected {problem.dim} coordinates")
    return ref


# ---------------------------------------------------------------------------
# run
# ---------------------------------------------------------------------------


def csv_header(N: int, with_reference: bool, average: bool):
    cols = ["replication", "n", "alpha", "beta", "gamma"]
    cols += ["dist_sq"] if with_reference else [f"x_{i + 1}" for i in range(N)]
    cols += HEADER_TAIL
    if average:
        cols += ["dist_sq_avg"] if with_reference else [f"xavg_{i + 1}" for i in range(N)]
    return cols


def _replication(args):
    """Run one replication and format its rows; rebuilt from the raw config so it pickles."""
    raw, rep, seed, dim, mu_override = args
    cfg = parse_config(raw)
    cfg.seed = seed
    if mu_override is not None:
        cfg.mu, cfg.M = mu_override, None
    problem = build_problem(cfg, dim)
    plan = build_plan(cfg, problem)
    ref = _reference(cfg, problem, plan)
    opts = RunOptions(
        x0=None if cfg.x0 is None else np.broadcast_to(np.asarray(cfg.x0, float), (problem.dim,)),
        y0=cfg.y0, z0=cfg.z0, average=cfg.average, record=cfg.record, block_size=cfg.block_size,
        exact_chain_rule=cfg.exact_chain_rule,
    )
    streams = RandomStreams(seed, rep)
    failure = None
    try:
        tr = run(problem, cfg.spec, plan, cfg.schedule, cfg.iterations, streams, opts)
    except NumericalError as exc:
        tr, failure = exc.trajectory, (exc.iteration, str(exc))
    R = len(tr)
    ye = np.full(R, np.nan)
    ze = np.full(R, np.nan)
    if cfg.track_errors and R:
        diag = RandomStreams(seed, rep).spawn(rep + 2**32)
        series = dg.tracking_errors(tr, problem, cfg.spec, plan, diag, cfg.diagnostic_K, cfg.tracking_cadence)
        ye = series.y_err_sq
        ze = series.z_err_sq if series.z_applicable else np.full(R, np.nan)
    rows = []
    for i in range(R):
        row = [rep, int(tr.n[i]), tr.alpha[i], tr.beta[i], tr.gamma[i]]
        if ref is not None:
            row.append(float(np.sum((tr.x[i] - ref) ** 2)))
        else:
            row.extend(tr.x[i].tolist())
        row += [tr.y[i], tr.z[i], ye[i], ze[i], int(tr.calls[i])]
        if cfg.average:
            if ref is not None:
                row.append(float(np.sum((tr.x_avg[i] - ref) ** 2)))
            else:
                row.extend(tr.x_avg[i].tolist())
        rows.append([_fmt(v) for v in row])
    return rows, failure, problem.dim, ref is not None


def _run_all(cfg: ExperimentConfig, dim=None, mu_override=None):
    tasks = [(cfg.raw, r, cfg.seed, dim, mu_override) for r in range(cfg.replications)]
    if cfg.jobs > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=cfg.jobs) as ex:
            return list(ex.map(_replication, tasks))  # map preserves replication order
    out = []
    for t in tasks:
        res = _replication(t)
        out.append(res)
        if res[1] is not None:
            break
    return out


def cmd_run(cfg: ExperimentConfig, out_path: Optional[str]) -> int:
    path = out_path or cfg.output
    if not path:
        raise ConfigError("output.path: required (or pass --out)")
    results = _run_all(cfg)
    N, with_ref = results[0][2], results[0][3]
    header = csv_header(N, with_ref, cfg.average)
    status = EXIT_OK
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for r, (rows, failure, _, _) in enumerate(results):
            w.writerows(rows)
            if failure is not None:
                it, msg = failure
                w.writerow([str(r), str(it)] + ["FAILED"] * (len(header) - 2))
                print(f"numeric failure in replication {r} at iteration {it}: {msg}", file=sys.stderr)
                status = EXIT_NUMERIC
                break
    return status


# ---------------------------------------------------------------------------
# verify-smoothing
# ---------------------------------------------------------------------------


def _verify_checks(vcfg: dict):
    seed = int(vcfg.get("seed", 20240611))
    K = int(vcfg.get("K", 100_000))
    L4 = float(vcfg.get("L_x4", 24.0))
    pts = int(vcfg.get("grid_points", 10_000))
    base = RandomStreams(seed)
    checks = []

    # shift-Lipschitz fixtures
    xs = np.linspace(-2.0, 2.0, pts)
    us = np.linspace(-2.0, 2.0, pts)
    quart = lambda v: np.square(np.square(v))  # much faster than a float power
    v = slipschitz_check(quart, lambda u: u * u + quart(u), lambda x, u: 4 * x * u * (x * x + u * u), L4, xs, us)
    checks.append(("slipschitz_check_x4", 1e-9 - v))
    xs2 = np.linspace(-5.0, 5.0, pts)
    v = slipschitz_check(lambda x: np.sqrt(np.abs(x)), lambda u: np.sqrt(np.abs(u)), lambda x, u: 0.0, 1.0, xs2, xs2)
    checks.append(("slipschitz_check_sqrt", 1e-9 - v))
    a = np.array([1.0, -2.0, 0.5])
    gx = base.spawn(1).gauss.uniform(-3, 3, (200, 3))
    gu = base.spawn(2).gauss.uniform(-3, 3, (200, 3))
    v = slipschitz_check(lambda x: x @ a, lambda u: np.linalg.norm(u, axis=-1), lambda x, u: 0.0 * (u @ a),
                         float(np.linalg.norm(a)), gx, gu)
    checks.append(("slipschitz_check_linear", 1e-12 - v))

    # overestimation of a convex function by its smoothing
    nv = make_problem("newsvendor", {})
    f = lambda X: np.mean(np.abs(X[:, :1] - np.array([0.0, 1.0])[None, :]), axis=1)
    worst = math.inf
    for i, x in enumerate(np.linspace(-1.0, 2.0, 20)):
        est, se = smoothed_value(f, [x], 0.2, base.spawn(10 + i), K // 10, vectorized=True)
        worst = min(worst, est - float(f(np.array([[x]]))[0]) + 4 * se)
    checks.append(("overestimation", worst))

    # smoothed-gradient unbiasedness on ||x||^2
    worst = math.inf
    sq = lambda X: np.einsum("ij,ij->i", X, X)
    for i, x in enumerate(([1.0, -2.0, 0.5, 0.0], [0.0, 0.0, 0.0, 0.0], [-1.0, 3.0, 2.0, -0.5])):
        est, se = smoothed_gradient(sq, x, 0.1, base.spawn(40 + i), K, vectorized=True)
        worst = min(worst, float(np.min(4 * se - np.abs(est - 2 * np.asarray(x)))))
    checks.append(("gradient_unbiasedness", worst))

    # exact smoothing gap of a noiseless quadratic fit
    qf = make_problem("quadratic-fit", {"A": [[1.0, 0.0], [0.0, 1.0]], "y": [1.0, 0.0]})
    fq = lambda X: qf.cost_batch(X, np.zeros((X.shape[0], 2)))
    worst = math.inf
    grid = [[0.0, 0.0], [1.0, 0.0], [-1.0, 2.0], [0.5, -0.5], [2.0, 1.0]]
    for mu in (0.1, 0.5):
        for i, x in enumerate(grid):
            est, se = smoothed_value(fq, x, mu, base.spawn(60 + i + int(mu * 100)), K, vectorized=True)
            gap = est - float(fq(np.array([x]))[0])
            worst = min(worst, 4 * se - abs(gap - 2 * mu * mu))
    checks.append(("smoothing_identity", worst))

    # quasi-gradient unbiasedness, p = 2
    spec2 = RiskSpec(2.0, 0.5, RiskProfile("relu-shift", 0.1))
    mu = 0.2
    x = np.array([0.3])
    st = base.spawn(80)
    s = dg.estimate_s_mu(nv, x, mu, st, 10 * K).value
    g = dg.estimate_g_mu(nv, spec2, x, s, mu, st, 10 * K).value
    q, qse = _quasi_mean(nv, spec2, x, s, g, mu, st, K)
    ref, rse = dg.estimate_grad_phi(nv, spec2, x, mu, base.spawn(81), K, y=s, z=g)
    checks.append(("quasi_gradient_unbiasedness", float(np.min(4 * np.sqrt(qse**2 + rse**2) - np.abs(q - ref)))))

    # surrogate gap bound, newsvendor p = 1, c = 1
    spec1 = RiskSpec(1.0, 1.0, RiskProfile("relu-shift", 0.0))
    plan = SmoothingPlan(0.1, "lipschitz", 0.0, chi_mean(1), 1.0)
    bound = surrogate_gap_bound(spec1, plan, nv.G, nv.V)
    worst = math.inf
    for i, x in enumerate(np.linspace(-1.0, 2.0, 10)):
        a1 = dg.estimate_phi(nv, spec1, [x], 0.1, base.spawn(100 + i), 2 * K)
        a0 = dg.estimate_phi(nv, spec1, [x], 0.0, base.spawn(200 + i), 2 * K)
        worst = min(worst, bound + 4 * math.hypot(a1.stderr, a0.stderr) - abs(a1.value - a0.value))
    checks.append(("surrogate_gap_bound", worst))
    return checks


def _quasi_mean(problem, spec, x, y, z, mu, streams, K, exact_chain_rule=True):
    rg = streams.gauss
    U1 = rg.standard_normal((K, problem.dim))
    V = rg.standard_normal((K, problem.dim + 1))
    U2, U = V[:, :problem.dim], V[:, problem.dim]
    W1 = problem.sampler(streams.w1, K)
    W2 = problem.sampler(streams.w2, K)
    X = np.repeat(np.asarray(x, float)[None, :], K, 0)
    q = QuasiDraws(U1, U2, U, problem.cost_batch(X + mu * U1, W1), problem.cost_batch(X, W1),
                   problem.cost_batch(X + mu * U2, W2), problem.cost_batch(X, W2))
    Q = quasi_gradient(y, z, q, spec, mu, exact_chain_rule)
    return Q.mean(axis=0), Q.std(axis=0, ddof=1) / math.sqrt(K)


def cmd_verify_smoothing(vcfg: dict) -> int:
    checks = _verify_checks(vcfg)
    first_fail = None
    for name, margin in checks:
        ok = margin >= 0
        print(f"{'PASS' if ok else 'FAIL'} {name} margin={margin:.6g}")
        if not ok and first_fail is None:
            first_fail = name
    if first_fail is not None:
        print(f"first failing check: {first_fail}", file=sys.stderr)
        return EXIT_CHECK_FAILED
    return EXIT_OK


# ---------------------------------------------------------------------------
# fit-rate
# ---------------------------------------------------------------------------


def read_series(path: str, column: str):
    """Mean of ``column`` across replications, grouped by ``n``; blank cells are skipped."""
    with open(path, newline="") as fh:
        rd = csv.DictReader(fh)
        if rd.fieldnames is None or column not in rd.fieldnames or "n" not in rd.fieldnames:
            raise KeyError(column)
        acc = {}
        for row in rd:
            cell = row[column]
            if not cell or cell == "FAILED":
                continue
            n = int(row["n"])
            s, k = acc.get(n, (0.0, 0))
            acc[n] = (s + float(cell), k + 1)
    ns = np.array(sorted(acc), dtype=float)
    vals = np.array([acc[int(n)][0] / acc[int(n)][1] for n in ns])
    return ns, vals


def cmd_fit_rate(path: str, column: str, window: float) -> int:
    try:
        n, v = read_series(path, column)
    except FileNotFoundError:
        print(f"error: no such file {path!r}", file=sys.stderr)
        return EXIT_CONFIG
    except KeyError:
        print(f"error: column {column!r} not found in {path!r}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        fit = dg.fit_rate(n, v, window)
    except dg.InsufficientDataError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except dg.NonPositiveValuesError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    print(f"slope={fit.slope:.12g} intercept={fit.intercept:.12g} r2={fit.r2:.12g} "
          f"window=[{fit.window[0]}, {fit.window[1]}]")
    return EXIT_OK


# ---------------------------------------------------------------------------
# sweep-dimension
# ---------------------------------------------------------------------------


def cmd_sweep_dimension(cfg: ExperimentConfig, out_path: Optional[str]) -> int:
    dims = cfg.sweep.get("dims", [])
    if not isinstance(dims, list) or not dims or not all(isinstance(d, int) and d >= 1 for d in dims):
        raise ConfigError("sweep.dims: expected a nonempty list of positive integers")
    if cfg.M is None:
        raise ConfigError("smoothing.M: the sweep derives mu from M, so smoothing.M is required")
    if cfg.reference == "none":
        cfg.raw.setdefault("options", {})["reference"] = "auto"
    window = float(cfg.sweep.get("window", 0.5))
    path = out_path or cfg.output
    if not path:
        raise ConfigError("output.path: required (or pass --out)")
    rows = []
    for N in dims:
        problem = build_problem(cfg, N)
        mu = choose_mu(problem.cls, N, cfg.M)
        results = _run_all(cfg, dim=N)
        finals, series = [], {}
        for rows_r, failure, _, _ in results:
            if failure is not None:
                print(f"numeric failure at N={N}: {failure[1]}", file=sys.stderr)
                return EXIT_NUMERIC
            for row in rows_r:
                n, d = int(row[1]), float(row[5])
                s, k = series.get(n, (0.0, 0))
                series[n] = (s + d, k + 1)
            finals.append(float(rows_r[-1][5]))
        ns = np.array(sorted(series), dtype=float)
        vals = np.array([series[int(n)][0] / series[int(n)][1] for n in ns])
        try:
            slope = dg.fit_rate(ns, vals, window).slope
        except ValueError:
            slope = math.nan
        rows.append([str(N), _fmt(mu), _fmt(float(np.mean(finals))), _fmt(slope) if math.isfinite(slope) else ""])
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["N", "mu", "final_mse", "slope"])
        w.writerows(rows)
    return EXIT_OK


# ---------------------------------------------------------------------------
# entry point
# ---------------------------------------------------------------------------


def _parser():
    ap = argparse.ArgumentParser(prog="zorisk", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="command", required=True)
    for name in ("run", "sweep-dimension"):
        sp = sub.add_parser(name)
        sp.add_argument("--config", required=True)
        sp.add_argument("--out")
        sp.add_argument("--seed", type=int)
        sp.add_argument("--replications", type=int)
        sp.add_argument("--jobs", type=int)
    sp = sub.add_parser("verify-smoothing")
    sp.add_argument("--config")
    sp.add_argument("--seed", type=int)
    sp = sub.add_parser("fit-rate")
    sp.add_argument("--csv", required=True)
    sp.add_argument("--column", default="dist_sq")
    sp.add_argument("--window", type=float, default=0.5)
    return ap


def _overrides(raw: dict, args) -> dict:
    raw = {k: dict(v) if isinstance(v, dict) else v for k, v in raw.items()}
    run_sec = raw.setdefault("run", {})
    if getattr(args, "seed", None) is not None:
        run_sec["seed"] = args.seed
    if getattr(args, "replications", None) is not None:
        run_sec["replications"] = args.replications
    if getattr(args, "jobs", None) is not None:
        raw.setdefault("options", {})["jobs"] = args.jobs
    return raw


def _read_raw(path):
    try:
        with open(path, "rb") as fh:
            return tomllib.load(fh)
    except FileNotFoundError:
        raise ConfigError(f"--config: no such file {path!r}") from None
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"--config: invalid TOML: {exc}") from None


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    try:
        if args.command == "fit-rate":
            return cmd_fit_rate(args.csv, args.column, args.window)
        if args.command == "verify-smoothing":
            raw = _read_raw(args.config) if args.config else {}
            unknown = set(raw) - {"verify"}
            if unknown:
                raise ConfigError(f"{sorted(unknown)[0]}: verify-smoothing reads only the [verify] section")
            vcfg = dict(raw.get("verify", {}))
            for key in vcfg:
                if key not in _ALLOWED["verify"]:
                    raise ConfigError(f"verify.{key}: unknown key")
            if args.seed is not None:
                vcfg["seed"] = args.seed
            return cmd_verify_smoothing(vcfg)
        cfg = parse_config(_overrides(_read_raw(args.config), args))
        if args.command == "run":
            return cmd_run(cfg, args.out)
        return cmd_sweep_dimension(cfg, args.out)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
