"""Three-level zeroth-order stochastic approximation for mean-semideviation objectives.

Each iteration makes four cost queries: ``F(x + mu U1, W1)``, ``F(x + mu U2, W2)``,
``F(x, W1)`` and ``F(x, W2)``. ``y`` tracks the smoothed mean cost, ``z`` the
smoothed p-th semideviation moment, and ``x`` moves along a quasi-gradient
built from the two finite differences.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Optional, Sequence

import numpy as np

from ..core import ConfigError, RandomStreams, RiskSpec, project, project_interval
from ..problems import OracleCounter, OracleError, Problem, evaluate, sample_scenarios
from ..smoothing import SmoothingPlan
from . import kernel
from .schedules import Schedule, stepsizes, stepsizes_array

__all__ = [
    "AuxiliarySets",
    "SolverState",
    "Draws",
    "QuasiDraws",
    "Trajectory",
    "RunOptions",
    "NumericalError",
    "auxiliary_sets",
    "initial_state",
    "quasi_gradient",
    "step",
    "step_with_draws",
    "run",
    "record_indices",
]

GEOMETRIC_DENSE = 10_000
GEOMETRIC_RATIO = 1.05


class NumericalError(FloatingPointError):
    """Non-finite intermediate; ``trajectory`` holds the records made before it."""

    def __init__(self, message, trajectory=None, iteration=None):
        super().__init__(message)
        self.trajectory = trajectory
        self.iteration = iteration


@dataclass(frozen=True)
class AuxiliarySets:
    """Intervals the ``y`` and ``z`` recursions are projected onto.

    ``z_bypassed`` marks p = 1, where ``z`` is pinned to 1.
    """

    y_lo: float
    y_hi: float
    z_lo: float
    z_hi: float
    z_bypassed: bool

    def __post_init__(self):
        if not self.y_lo <= self.y_hi:
            raise ConfigError("empty y interval")
        if not self.z_lo <= self.z_hi:
            raise ConfigError("empty z interval")

    @property
    def y_mid(self) -> float:
        return 0.5 * (self.y_lo + self.y_hi)


def auxiliary_sets(spec: RiskSpec, plan: SmoothingPlan, G: float, V: float) -> AuxiliarySets:
    if not math.isfinite(V):
        raise ConfigError("a finite moment bound V is required to size the auxiliary sets")
    if spec.p > 1.0 and not spec.eta > 0.0:
        raise ConfigError("p > 1 requires a risk profile floor eta > 0")
    y_hi = plan.mu_pow * G * plan.D1 + V
    if spec.p == 1.0:
        return AuxiliarySets(-V, y_hi, 1.0, 1.0, True)
    top = spec.R0 + 2 * V + plan.mu_pow * G * (plan.D1 + plan.D2) + plan.mu * (plan.T2 + 1.0)
    return AuxiliarySets(-V, y_hi, spec.eta**spec.p, top**spec.p, False)


@dataclass
class SolverState:
    x: np.ndarray
    y: float
    z: float
    n: int = 0
    counter: OracleCounter = field(default_factory=OracleCounter)


@dataclass(frozen=True)
class Draws:
    """Randomness consumed by one iteration."""

    U1: np.ndarray
    U2: np.ndarray
    U: float
    w1: np.ndarray
    w2: np.ndarray


@dataclass(frozen=True)
class QuasiDraws:
    """Perturbations and the four cost values; fields may carry a leading batch axis."""

    U1: np.ndarray
    U2: np.ndarray
    U: np.ndarray
    F1: np.ndarray
    F10: np.ndarray
    F2: np.ndarray
    F20: np.ndarray


def _risk_pow(spec: RiskSpec, v):
    r = spec.R(v)
    if spec.p == 1.0:
        return r
    if np.ndim(r) == 0:
        return math.pow(r, spec.p)
    return np.power(r, spec.p)


def _z_factor(spec: RiskSpec, z, exact_chain_rule: bool):
    if spec.p == 1.0:
        return 1.0
    z = np.asarray(z, dtype=float)
    if np.any(z <= 0):
        raise ValueError("z must be > 0 when p > 1")
    f = z ** ((1.0 - spec.p) / spec.p)
    if exact_chain_rule:
        f = (1.0 / spec.p) * f
    return float(f) if f.ndim == 0 else f


def quasi_gradient(y, z, draws: QuasiDraws, spec: RiskSpec, mu: float, exact_chain_rule: bool = True):
    """Single-sample estimate of the smoothed objective's gradient.

    ``Delta1 U1 + c * k(z) * (U2 + Delta1 U1 U) * Delta2`` with
    ``k(z) = z^((1-p)/p) / p``. ``exact_chain_rule=False`` drops the ``1/p``,
    which biases the risk term by a factor ``p`` when ``p > 1``.
    Batched input (leading axis K) returns a ``(K, N)`` array.
    """
    U1 = np.asarray(draws.U1, dtype=float)
    U2 = np.asarray(draws.U2, dtype=float)
    d1 = (np.asarray(draws.F1, float) - np.asarray(draws.F10, float)) / mu
    d2 = (_risk_pow(spec, np.asarray(draws.F2, float) - mu * np.asarray(draws.U, float) - y)
          - _risk_pow(spec, np.asarray(draws.F20, float) - y)) / mu
    factor = _z_factor(spec, z, exact_chain_rule)
    if U1.ndim == 2:
        d1 = np.asarray(d1)[:, None]
        d2 = np.asarray(d2)[:, None]
        u = np.asarray(draws.U, float)[:, None]
        factor = np.asarray(factor)[:, None] if np.ndim(factor) else factor
    else:
        u = float(draws.U)
    return d1 * U1 + spec.c * factor * (U2 + d1 * U1 * u) * d2


def step_with_draws(state: SolverState, problem: Problem, spec: RiskSpec, plan: SmoothingPlan,
                    sets: AuxiliarySets, steps: Sequence[float], draws: Draws,
                    exact_chain_rule: bool = True) -> SolverState:
    """One iteration with explicit randomness and stepsizes ``(alpha, beta, gamma)``."""
    alpha, beta, gamma = (float(s) for s in steps)
    mu = plan.mu
    x, y, z = state.x, state.y, state.z
    ctr = state.counter
    try:
        F1 = evaluate(problem, x + mu * draws.U1, draws.w1, ctr)
        y_new = project_interval((1.0 - beta) * y + beta * F1, sets.y_lo, sets.y_hi)
        F2 = evaluate(problem, x + mu * draws.U2, draws.w2, ctr)
        if sets.z_bypassed:
            z_new = 1.0
        else:
            rp = _risk_pow(spec, F2 - mu * draws.U - y)
            z_new = project_interval((1.0 - gamma) * z + gamma * rp, sets.z_lo, sets.z_hi)
        F10 = evaluate(problem, x, draws.w1, ctr)
        F20 = evaluate(problem, x, draws.w2, ctr)
    except (OracleError, OverflowError) as exc:
        raise NumericalError(str(exc), iteration=state.n) from exc
    q = QuasiDraws(draws.U1, draws.U2, draws.U, F1, F10, F2, F20)
    with np.errstate(all="ignore"):
        try:
            g = quasi_gradient(y, 1.0 if sets.z_bypassed else z, q, spec, mu, exact_chain_rule)
        except OverflowError as exc:
            raise NumericalError(str(exc), iteration=state.n) from exc
        x_step = x - alpha * g
    if not (np.all(np.isfinite(x_step)) and math.isfinite(y_new) and math.isfinite(z_new)):
        raise NumericalError(f"non-finite update at iteration {state.n}; mu may be too small", iteration=state.n)
    return SolverState(project(problem.region, x_step), y_new, z_new, state.n + 1, ctr)


def _draw(problem: Problem, streams: RandomStreams) -> Draws:
    N = problem.dim
    g = streams.gauss.standard_normal(2 * N + 1)
    w1 = sample_scenarios(problem, streams.w1, 1)[0]
    w2 = sample_scenarios(problem, streams.w2, 1)[0]
    return Draws(g[:N], g[N:2 * N], float(g[2 * N]), w1, w2)


def step(state: SolverState, problem: Problem, spec: RiskSpec, plan: SmoothingPlan, sets: AuxiliarySets,
         schedule: Schedule, streams: RandomStreams, exact_chain_rule: bool = True) -> SolverState:
    """One iteration drawing from ``streams`` with the schedule's stepsizes at ``state.n``."""
    steps = stepsizes(schedule, spec.p, state.n)
    return step_with_draws(state, problem, spec, plan, sets, steps, _draw(problem, streams), exact_chain_rule)


# ---------------------------------------------------------------------------
# Full runs
# ---------------------------------------------------------------------------


@dataclass
class Trajectory:
    """Recorded states; row ``i`` is the state after ``n[i]`` iterations.

    ``alpha/beta/gamma`` are the stepsizes indexed by ``n`` (the ones the
    next iteration applies). ``x_avg`` is the mean of the last ``ceil(n/2)``
    iterates (``x^0`` at ``n = 0``) when averaging is on.
    """

    n: np.ndarray
    alpha: np.ndarray
    beta: np.ndarray
    gamma: np.ndarray
    x: np.ndarray
    y: np.ndarray
    z: np.ndarray
    calls: np.ndarray
    x_avg: Optional[np.ndarray] = None
    failed: bool = False
    error: str = ""

    def __len__(self):
        return int(self.n.size)

    @property
    def final_state(self):
        return self.x[-1], float(self.y[-1]), float(self.z[-1])


@dataclass(frozen=True)
class RunOptions:
    x0: Optional[np.ndarray] = None
    y0: Optional[float] = None
    z0: Optional[float] = None
    average: bool = False
    record: object = "all"  # "all", "geometric", or explicit iteration indices
    block_size: int = 4096
    exact_chain_rule: bool = True
    use_kernel: Optional[bool] = None  # None: compiled/fast path whenever the problem allows it
    sets: Optional[AuxiliarySets] = None


def record_indices(iterations: int, record="all") -> np.ndarray:
    """Iteration indices to keep: every one, or every one up to 10^4 then ratio-1.05 spacing."""
    if isinstance(record, str):
        if record == "all" or iterations <= GEOMETRIC_DENSE:
            return np.arange(iterations + 1)
        if record != "geometric":
            raise ConfigError(f"unknown record mode {record!r}")
        idx = list(range(GEOMETRIC_DENSE + 1))
        v = float(GEOMETRIC_DENSE)
        while True:
            v *= GEOMETRIC_RATIO
            k = int(math.ceil(v))
            if k >= iterations:
                break
            if k > idx[-1]:
                idx.append(k)
        idx.append(iterations)
        return np.asarray(idx, dtype=np.int64)
    idx = np.unique(np.concatenate([[0], np.asarray(record, dtype=np.int64), [iterations]]))
    return idx[(idx >= 0) & (idx <= iterations)]


def initial_state(problem: Problem, spec: RiskSpec, sets: AuxiliarySets, options: RunOptions) -> SolverState:
    region = problem.region
    if options.x0 is None:
        x0 = region.anchor()
    else:
        x0 = np.broadcast_to(np.asarray(options.x0, dtype=float), (problem.dim,)).copy()
    x0 = project(region, x0)
    y0 = sets.y_mid if options.y0 is None else project_interval(float(options.y0), sets.y_lo, sets.y_hi)
    if sets.z_bypassed:
        z0 = 1.0
    else:
        z0 = sets.z_lo if options.z0 is None else project_interval(float(options.z0), sets.z_lo, sets.z_hi)
    return SolverState(x0, y0, z0, 0, OracleCounter())


def _kernel_ready(problem: Problem, spec: RiskSpec) -> bool:
    return problem.kernel_code >= 0 and spec.profile.kernel_code is not None and problem.dim <= 256


class _Recorder:
    def __init__(self, idx, N, average, total):
        self.idx = idx
        self.ptr = 0
        R = idx.size
        self.x = np.empty((R, N))
        self.y = np.empty(R)
        self.z = np.empty(R)
        self.calls = np.empty(R, dtype=np.int64)
        self.average = average
        self.cums = np.zeros((total + 2, N)) if average else None  # cums[k] = sum of x^0..x^{k-1}

    def push_block(self, n_first, X, Y, Z, calls_before):
        """States ``n_first .. n_first + len(X) - 1``; calls counted 4 per state beyond ``n_first - 1``."""
        B = X.shape[0]
        if self.average:
            self.cums[n_first + 1:n_first + B + 1] = self.cums[n_first] + np.cumsum(X, axis=0)
        lo = self.ptr
        hi = np.searchsorted(self.idx, n_first + B, side="left")
        if hi > lo:
            rel = self.idx[lo:hi] - n_first
            self.x[lo:hi] = X[rel]
            self.y[lo:hi] = Y[rel]
            self.z[lo:hi] = Z[rel]
            self.calls[lo:hi] = calls_before + 4 * (rel + 1)
        self.ptr = hi

    def finish(self, schedule, p, failed=False, error=""):
        R = self.ptr
        n = self.idx[:R]
        a, b, g = stepsizes_array(schedule, p, n)
        x_avg = None
        if self.average:
            w = (n + 1) // 2
            safe = np.maximum(w, 1)
            x_avg = (self.cums[n + 1] - self.cums[n + 1 - w]) / safe[:, None]
            x_avg[w == 0] = self.x[:R][w == 0]
        return Trajectory(n.copy(), a, b, g, self.x[:R].copy(), self.y[:R].copy(), self.z[:R].copy(),
                          self.calls[:R].copy(), x_avg, failed, error)


def run(problem: Problem, spec: RiskSpec, plan: SmoothingPlan, schedule: Schedule, iterations: int,
        streams: RandomStreams, options: Optional[RunOptions] = None) -> Trajectory:
    """Run ``iterations`` steps and return the recorded trajectory.

    Built-in costs with built-in profiles go through the block kernel
    (compiled when available); anything else uses ``step`` one iteration at
    a time. Both consume the random streams identically.
    """
    options = options or RunOptions()
    iterations = int(iterations)
    if iterations < 0:
        raise ValueError("iterations must be >= 0")
    if not spec.enforce_floor and spec.p > 1.0 and not spec.eta > 0:
        raise ConfigError("the solver needs eta > 0 when p > 1")
    sets = options.sets or auxiliary_sets(spec, plan, problem.G, problem.V)
    state = initial_state(problem, spec, sets, options)
    idx = record_indices(iterations, options.record)
    rec = _Recorder(idx, problem.dim, options.average, iterations)
    rec.push_block(0, state.x[None, :], np.array([state.y]), np.array([state.z]), -4)

    use_kernel = _kernel_ready(problem, spec) if options.use_kernel is None else options.use_kernel
    if use_kernel and not _kernel_ready(problem, spec):
        raise ConfigError("this problem/profile combination has no kernel implementation")

    if use_kernel:
        _run_kernel(problem, spec, plan, schedule, iterations, streams, options, sets, state, rec)
    else:
        _run_python(problem, spec, plan, schedule, iterations, streams, options, sets, state, rec)
    return rec.finish(schedule, spec.p)


def _run_python(problem, spec, plan, schedule, iterations, streams, options, sets, state, rec):
    B = max(1, int(options.block_size))
    N = problem.dim
    n = 0
    while n < iterations:
        b = min(B, iterations - n)
        X = np.empty((b, N))
        Y = np.empty(b)
        Z = np.empty(b)
        for i in range(b):
            try:
                state = step(state, problem, spec, plan, sets, schedule, streams, options.exact_chain_rule)
            except NumericalError as exc:
                if i:
                    rec.push_block(n + 1, X[:i], Y[:i], Z[:i], 4 * n)
                exc.trajectory = rec.finish(schedule, spec.p, True, str(exc))
                raise
            X[i], Y[i], Z[i] = state.x, state.y, state.z
        rec.push_block(n + 1, X, Y, Z, 4 * n)
        n += b
    if state.counter.calls != 4 * iterations:
        raise RuntimeError(f"oracle accounting broken: {state.counter.calls} calls for {iterations} iterations")


def _run_kernel(problem, spec, plan, schedule, iterations, streams, options, sets, state, rec):
    B = max(1, int(options.block_size))
    N, M = problem.dim, problem.scenario_dim
    region = problem.region
    rk = {"all-space": 0, "box": 1, "l2-ball": 2}[region.kind]
    lo = np.ascontiguousarray(region.lower if rk == 1 else np.zeros(N), dtype=float)
    hi = np.ascontiguousarray(region.upper if rk == 1 else np.zeros(N), dtype=float)
    ctr = np.ascontiguousarray(region.center if rk == 2 else np.zeros(N), dtype=float)
    rad = float(region.radius) if rk == 2 else 0.0
    prof = spec.profile
    chain = (1.0 / spec.p) if options.exact_chain_rule else 1.0
    x = state.x.copy()
    yz = np.array([state.y, state.z])
    counter = state.counter
    n = 0
    while n < iterations:
        b = min(B, iterations - n)
        G = np.ascontiguousarray(streams.gauss.standard_normal((b, 2 * N + 1)))
        W1 = np.ascontiguousarray(sample_scenarios(problem, streams.w1, b), dtype=float)
        W2 = np.ascontiguousarray(sample_scenarios(problem, streams.w2, b), dtype=float)
        a, be, g = (np.ascontiguousarray(v) for v in stepsizes_array(schedule, spec.p, np.arange(n, n + b)))
        X = np.empty((b, N))
        Y = np.empty(b)
        Z = np.empty(b)
        done, evals = kernel.run_block(
            problem.kernel_code, problem.kernel_theta, N, M, rk, lo, hi, ctr, rad,
            prof.kernel_code, prof.eta, prof.t, spec.p, spec.c, chain, plan.mu,
            sets.y_lo, sets.y_hi, sets.z_lo, sets.z_hi, sets.z_bypassed,
            x, yz, G, W1, W2, a, be, g, X, Y, Z)
        counter.add(evals)
        rec.push_block(n + 1, X[:done], Y[:done], Z[:done], 4 * n)
        if done < b:
            err = f"non-finite update at iteration {n + done}; mu may be too small"
            raise NumericalError(err, rec.finish(schedule, spec.p, True, err), n + done)
        n += b
    if counter.calls != 4 * iterations:
        raise RuntimeError(f"oracle accounting broken: {counter.calls} calls for {iterations} iterations")
    state.x, state.y, state.z, state.n = x, float(yz[0]), float(yz[1]), iterations


def with_sets(options: RunOptions, sets: AuxiliarySets) -> RunOptions:
    return replace(options, sets=sets)
