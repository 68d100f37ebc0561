"""Zeroth-order sampling oracle and the built-in benchmark problems."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .core import ConfigError, FeasibleRegion, project

__all__ = [
    "Problem",
    "OracleCounter",
    "OracleError",
    "evaluate",
    "evaluate_batch",
    "sample_scenario",
    "sample_scenarios",
    "newsvendor",
    "quadratic_tracking",
    "quadratic_fit",
    "piecewise_linear",
    "constant_cost",
    "make_problem",
    "PROBLEM_NAMES",
]

CLASSES = ("lipschitz", "smooth")

# Codes understood by the compiled kernel; -1 means "Python callback only".
KERNEL_NEWSVENDOR = 0
KERNEL_QTRACK = 1
KERNEL_QFIT = 2
KERNEL_PIECEWISE = 3


class OracleError(ValueError):
    """Bad oracle query: wrong dimension or a non-finite cost."""


@dataclass
class OracleCounter:
    calls: int = 0

    def add(self, k: int) -> None:
        if k < 0:
            raise ValueError("oracle counter cannot decrease")
        self.calls += int(k)


@dataclass(frozen=True, eq=False)
class Problem:
    """A convex cost ``F(x, W)`` with its scenario law and regularity metadata.

    ``sampler(rng, count)`` returns a ``(count, M)`` array of scenarios and
    ``cost_batch(X, W)`` evaluates row-wise. ``V_p(p)`` bounds
    ``sup_x ||F(x, W)||_{L_{2p}}``. ``optimum(spec, mu)`` returns the minimizer of
    the risk-aware objective smoothed at radius ``mu`` (``mu = 0``: unsmoothed)
    when it is known in closed form, else ``None``.
    """

    name: str
    dim: int
    scenario_dim: int
    region: FeasibleRegion
    sampler: Callable[[np.random.Generator, int], np.ndarray]
    cost_batch: Callable[[np.ndarray, np.ndarray], np.ndarray]
    cls: str
    G: float
    V: float
    V_p: Callable[[float], float]
    sigma: float = 0.0
    optimum: Callable[..., Optional[np.ndarray]] = field(default=lambda spec, mu=0.0: None)
    mean_cost: Optional[Callable[[np.ndarray], float]] = None
    kernel_code: int = -1
    kernel_theta: np.ndarray = field(default_factory=lambda: np.zeros(0))
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.cls not in CLASSES:
            raise ConfigError(f"problem class must be one of {CLASSES}, got {self.cls!r}")
        if self.dim < 1 or self.region.dim != self.dim:
            raise ConfigError("problem dimension must be >= 1 and match its region")
        if not (self.G >= 0 and self.V >= 0 and self.sigma >= 0):
            raise ConfigError("G, V and sigma must be nonnegative")
        theta = np.ascontiguousarray(self.kernel_theta, dtype=float)
        theta.setflags(write=False)
        object.__setattr__(self, "kernel_theta", theta)

    def cost(self, x, w) -> float:
        return float(self.cost_batch(np.asarray(x, float)[None, :], np.asarray(w, float)[None, :])[0])


def evaluate(problem: Problem, x, w, counter: OracleCounter) -> float:
    """One oracle query ``F(x, w)``; every call adds exactly one to ``counter``."""
    x = np.asarray(x, dtype=float)
    if x.shape != (problem.dim,):
        raise OracleError(f"x has shape {x.shape}, expected ({problem.dim},)")
    counter.add(1)
    val = problem.cost(x, w)
    if not math.isfinite(val):
        raise OracleError(f"non-finite cost at x={x!r}")
    return val


def evaluate_batch(problem: Problem, X, W, counter: OracleCounter) -> np.ndarray:
    """Row-wise oracle queries; adds one call per row."""
    X = np.asarray(X, dtype=float)
    if X.ndim != 2 or X.shape[1] != problem.dim:
        raise OracleError(f"X has shape {X.shape}, expected (K, {problem.dim})")
    counter.add(X.shape[0])
    vals = np.asarray(problem.cost_batch(X, np.asarray(W, dtype=float)), dtype=float)
    if not np.all(np.isfinite(vals)):
        raise OracleError("non-finite cost in batch")
    return vals


def sample_scenario(problem: Problem, rng: np.random.Generator) -> np.ndarray:
    return problem.sampler(rng, 1)[0]


def sample_scenarios(problem: Problem, rng: np.random.Generator, count: int) -> np.ndarray:
    """``count`` i.i.d. draws; the stream advances exactly as ``count`` single draws would."""
    return problem.sampler(rng, int(count))


# ---------------------------------------------------------------------------
# Built-ins
# ---------------------------------------------------------------------------


def _region_from(params: dict, dim: int, default: FeasibleRegion) -> FeasibleRegion:
    kind = params.get("region", None)
    if kind is None:
        return default
    if kind == "all-space":
        return FeasibleRegion.all_space(dim)
    if kind == "box":
        lo = np.broadcast_to(np.asarray(params.get("lower", -1.0), float), (dim,))
        hi = np.broadcast_to(np.asarray(params.get("upper", 1.0), float), (dim,))
        return FeasibleRegion.box(lo, hi)
    if kind == "l2-ball":
        ctr = np.broadcast_to(np.asarray(params.get("center", 0.0), float), (dim,))
        return FeasibleRegion.ball(ctr, float(params.get("radius", 1.0)))
    raise ConfigError(f"unknown region kind {kind!r}")


def newsvendor(support=(0.0, 1.0), lower: float = -1.0, upper: float = 2.0) -> Problem:
    """Scalar ``|x - W|`` with ``W`` uniform on a finite support."""
    sup = np.asarray(support, dtype=float).reshape(-1)
    if sup.size < 1 or not np.all(np.isfinite(sup)):
        raise ConfigError("newsvendor support must be a nonempty finite set")
    region = FeasibleRegion.box([lower], [upper])
    k = sup.size

    def sampler(rng, count):
        idx = np.minimum((k * rng.random(count)).astype(np.int64), k - 1)
        return sup[idx][:, None]

    def cost_batch(X, W):
        return np.abs(X[:, 0] - W[:, 0])

    def moment(q):
        # convex in x, so the sup over the interval sits at an endpoint
        return max(float(np.mean(np.abs(e - sup) ** q)) ** (1.0 / q) for e in (lower, upper))

    def optimum(spec, mu=0.0):
        if spec.c == 0.0 and mu == 0.0:
            return project(region, np.array([float(np.sort(sup)[(k - 1) // 2])]))
        return None

    return Problem(
        name="newsvendor", dim=1, scenario_dim=1, region=region, sampler=sampler,
        cost_batch=cost_batch, cls="lipschitz", G=1.0, V=moment(2.0),
        V_p=lambda p: moment(2.0 * p), sigma=0.0, optimum=optimum,
        mean_cost=lambda x: float(np.mean(np.abs(np.asarray(x, float).reshape(-1)[0] - sup))),
        kernel_code=KERNEL_NEWSVENDOR, kernel_theta=np.array([float(k), *sup]),
        params={"support": sup.tolist(), "lower": lower, "upper": upper},
    )


def _ncx2_raw_moment(order: int, dof: int, lam: float) -> float:
    """Raw moment of a noncentral chi-square from its cumulants."""
    kappa = [2.0 ** (j - 1) * math.factorial(j - 1) * (dof + j * lam) for j in range(1, order + 1)]
    mom = [1.0]
    for n in range(1, order + 1):
        mom.append(sum(math.comb(n - 1, j - 1) * kappa[j - 1] * mom[n - j] for j in range(1, n + 1)))
    return mom[order]


def quadratic_tracking(dim: int = 2, mean=None, region: Optional[FeasibleRegion] = None) -> Problem:
    """``0.5 ||x - W||^2`` with ``W ~ N(m, I)`` truncated to ``||W - m|| <= 10 sqrt(N)``.

    Strong-convexity modulus is declared without the usual 1/2, hence 0.5.
    """
    dim = int(dim)
    m = np.zeros(dim) if mean is None else np.broadcast_to(np.asarray(mean, float), (dim,)).copy()
    if region is None:
        region = FeasibleRegion.ball(m, 5.0)
    trunc = 10.0 * math.sqrt(dim)

    def sampler(rng, count):
        z = rng.standard_normal((count, dim))
        bad = np.linalg.norm(z, axis=1) > trunc
        while np.any(bad):
            z[bad] = rng.standard_normal((int(bad.sum()), dim))
            bad = np.linalg.norm(z, axis=1) > trunc
        return m + z

    def cost_batch(X, W):
        d = X - W
        return 0.5 * np.einsum("ij,ij->i", d, d)

    r = region.sup_distance(m)

    def lp_norm(q):
        # ||x-W||^2 is noncentral chi-square; truncation only lowers its moments
        if not math.isfinite(r):
            return math.inf
        # non-integer orders are bounded by the next integer moment (Lyapunov)
        order = max(int(math.ceil(q - 1e-12)), 1)
        return 0.5 * _ncx2_raw_moment(order, dim, r * r) ** (1.0 / order)

    def optimum(spec, mu=0.0):
        # the law of F(x + mu U, W) - mu U depends on x only through ||x - m||
        if region.contains(m):
            return m.copy()
        if spec.c == 0.0:
            return project(region, m)
        return None

    return Problem(
        name="quadratic-tracking", dim=dim, scenario_dim=dim, region=region, sampler=sampler,
        cost_batch=cost_batch, cls="smooth", G=0.5, V=lp_norm(2.0), V_p=lambda p: lp_norm(2.0 * p),
        sigma=0.5, optimum=optimum,
        mean_cost=lambda x: 0.5 * float(np.sum((np.asarray(x, float) - m) ** 2)) + 0.5 * dim,
        kernel_code=KERNEL_QTRACK, kernel_theta=m.copy(),
        params={"dim": dim, "mean": m.tolist()},
    )


def quadratic_fit(A=None, y=None, noise: float = 0.0, region: Optional[FeasibleRegion] = None) -> Problem:
    """``||y + W - A x||^2`` with ``W`` uniform on ``[-noise, noise]^k``."""
    A = np.eye(2) if A is None else np.atleast_2d(np.asarray(A, dtype=float))
    k, dim = A.shape
    y = np.zeros(k) if y is None else np.broadcast_to(np.asarray(y, float), (k,)).copy()
    b = float(noise)
    if b < 0:
        raise ConfigError("quadratic-fit noise half-width must be >= 0")
    if region is None:
        region = FeasibleRegion.ball(np.zeros(dim), 5.0)
    AtA = A.T @ A
    eig = np.linalg.eigvalsh(AtA)

    def sampler(rng, count):
        return rng.uniform(-b, b, size=(count, k)) if b > 0 else np.zeros((count, k))

    def cost_batch(X, W):
        r = y + W - X @ A.T
        return np.einsum("ij,ij->i", r, r)

    # largest residual norm ||y - A x|| over the region (an upper bound for boxes)
    if region.kind == "all-space":
        e_max = math.inf
    else:
        ctr = region.center if region.kind == "l2-ball" else 0.5 * (region.lower + region.upper)
        rad = region.radius if region.kind == "l2-ball" else 0.5 * float(np.linalg.norm(region.upper - region.lower))
        e_max = float(np.linalg.norm(y - A @ ctr) + math.sqrt(eig[-1]) * rad)
    s2 = b * b / 3.0
    ew4 = k * b**4 / 5.0 + k * (k - 1) * s2 * s2
    V = math.sqrt(e_max**4 + 4 * s2 * e_max**2 + 2 * k * s2 * e_max**2 + ew4) if math.isfinite(e_max) else math.inf

    def V_p(p):
        if p == 1.0:
            return V
        return (e_max + b * math.sqrt(k)) ** 2  # sup-norm bound

    isotropic = bool(np.allclose(AtA, eig[-1] * np.eye(dim)))

    def optimum(spec, mu=0.0):
        if spec.c == 0.0 or (b == 0.0 and mu == 0.0):
            x_ls = np.linalg.lstsq(A, y, rcond=None)[0]
            if region.contains(x_ls):
                return x_ls
            if isotropic:
                return project(region, x_ls)
        return None

    return Problem(
        name="quadratic-fit", dim=dim, scenario_dim=k, region=region, sampler=sampler,
        cost_batch=cost_batch, cls="smooth", G=float(eig[-1]), V=V, V_p=V_p,
        sigma=max(float(eig[0]), 0.0), optimum=optimum,
        mean_cost=lambda x: float(np.sum((y - A @ np.asarray(x, float)) ** 2)) + k * s2,
        kernel_code=KERNEL_QFIT, kernel_theta=np.concatenate([[float(k)], y, A.ravel()]),
        params={"A": A.tolist(), "y": y.tolist(), "noise": b},
    )


def piecewise_linear(a=None, noise: float = 0.5, region: Optional[FeasibleRegion] = None) -> Problem:
    """``max_i (a_i . x - W_i)`` with ``W`` uniform on ``[-noise, noise]^k``; nonsmooth."""
    a = np.array([[1.0, 0.0], [-1.0, 0.0], [0.0, 1.0], [0.0, -1.0]]) if a is None else np.atleast_2d(np.asarray(a, float))
    k, dim = a.shape
    b = float(noise)
    if b < 0:
        raise ConfigError("piecewise-linear noise half-width must be >= 0")
    if region is None:
        region = FeasibleRegion.box(-np.ones(dim), np.ones(dim))
    scale = float(np.max(np.abs(a))) or 1.0
    G = scale * float(np.max(np.linalg.norm(a / scale, axis=1)))  # overflow-safe row norms

    def sampler(rng, count):
        return rng.uniform(-b, b, size=(count, k)) if b > 0 else np.zeros((count, k))

    def cost_batch(X, W):
        return np.max(X @ a.T - W, axis=1)

    # |F| <= G sup||x|| + noise, used as a moment bound for every order
    bound = G * region.sup_distance(np.zeros(dim)) + b
    rows = {tuple(r) for r in a.tolist()}
    symmetric = all(tuple(-v for v in r) in rows for r in rows)

    def optimum(spec, mu=0.0):
        # rows closed under negation make the objective even, so its minimum sits at 0
        if symmetric and region.contains(np.zeros(dim)):
            return np.zeros(dim)
        return None

    return Problem(
        name="piecewise-linear", dim=dim, scenario_dim=k, region=region, sampler=sampler,
        cost_batch=cost_batch, cls="lipschitz", G=G, V=bound, V_p=lambda p: bound, sigma=0.0,
        optimum=optimum, kernel_code=KERNEL_PIECEWISE, kernel_theta=np.concatenate([[float(k)], a.ravel()]),
        params={"a": a.tolist(), "noise": b},
    )


def constant_cost(value: float = 1.0, dim: int = 1, region: Optional[FeasibleRegion] = None) -> Problem:
    """``F = value`` everywhere; a degenerate fixture for accounting checks."""
    value = float(value)
    region = region or FeasibleRegion.box(-np.ones(dim), np.ones(dim))

    def sampler(rng, count):
        return np.zeros((count, 1))

    return Problem(
        name="constant", dim=dim, scenario_dim=1, region=region, sampler=sampler,
        cost_batch=lambda X, W: np.full(X.shape[0], value), cls="lipschitz", G=0.0,
        V=abs(value), V_p=lambda p: abs(value), mean_cost=lambda x: value,
        params={"value": value},
    )


PROBLEM_NAMES = ("newsvendor", "quadratic-tracking", "quadratic-fit", "piecewise-linear", "constant")


def make_problem(name: str, params: Optional[dict] = None) -> Problem:
    """Build a named problem from a flat parameter map (used by the CLI)."""
    params = dict(params or {})
    if name == "newsvendor":
        return newsvendor(params.get("support", (0.0, 1.0)), params.get("lower", -1.0), params.get("upper", 2.0))
    if name == "quadratic-tracking":
        dim = int(params.get("dim", 2))
        m = np.broadcast_to(np.asarray(params.get("mean", 0.0), float), (dim,))
        default = FeasibleRegion.ball(m, float(params.get("radius", 5.0)))
        return quadratic_tracking(dim, m, _region_from(params, dim, default))
    if name == "quadratic-fit":
        A = np.atleast_2d(np.asarray(params.get("A", np.eye(2)), float))
        default = FeasibleRegion.ball(np.zeros(A.shape[1]), float(params.get("radius", 5.0)))
        return quadratic_fit(A, params.get("y"), params.get("noise", 0.0), _region_from(params, A.shape[1], default))
    if name == "piecewise-linear":
        a = params.get("a")
        if a is None and "dim" in params:
            eye = np.eye(int(params["dim"]))
            a = np.vstack([eye, -eye])
        dim = np.atleast_2d(np.asarray(a, float)).shape[1] if a is not None else 2
        default = FeasibleRegion.box(-np.ones(dim), np.ones(dim))
        return piecewise_linear(a, params.get("noise", 0.5), _region_from(params, dim, default))
    if name == "constant":
        dim = int(params.get("dim", 1))
        return constant_cost(params.get("value", 1.0), dim)
    raise ConfigError(f"unknown problem {name!r}; expected one of {PROBLEM_NAMES}")
