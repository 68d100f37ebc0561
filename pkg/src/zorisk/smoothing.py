"""Gaussian smoothing: estimators, divergence-pair constants, surrogate bounds, mu selection."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np
from scipy.special import gammaln

from .core import ConfigError, RandomStreams, RiskSpec

__all__ = [
    "SmoothingPlan",
    "PairConstantsReport",
    "smoothed_value",
    "smoothed_gradient",
    "pair_constants",
    "surrogate_gap_bound",
    "sigma_o",
    "neighborhood_radius",
    "choose_mu",
    "slipschitz_check",
    "chi_mean",
]

_CHUNK = 1 << 16


def _gen(stream) -> np.random.Generator:
    return stream.gauss if isinstance(stream, RandomStreams) else stream


def chi_mean(N: int) -> float:
    """E||U|| for U ~ N(0, I_N)."""
    return math.sqrt(2.0) * math.exp(gammaln((N + 1) / 2.0) - gammaln(N / 2.0))


@dataclass(frozen=True)
class PairConstantsReport:
    cls: str
    dim: int
    D1: float
    D2: float
    T2: float
    epsilon: float
    T2_stderr: float = 0.0

    def __post_init__(self):
        vals = (self.D1, self.D2, self.T2, self.T2_stderr)
        if not all(math.isfinite(v) and v >= 0 for v in vals):
            raise ValueError(f"pair constants must be finite and nonnegative: {vals}")


@dataclass(frozen=True)
class SmoothingPlan:
    """Smoothing radius ``mu`` with the divergence-pair constants of its class.

    Validity of the pair is assumed for every ``mu`` (no upper cap).
    """

    mu: float
    cls: str
    epsilon: float
    D1: float
    D2: float
    T2: float = 0.0

    def __post_init__(self):
        if not (math.isfinite(self.mu) and self.mu > 0):
            raise ConfigError(f"smoothing radius mu must be > 0, got {self.mu!r}")
        if self.cls == "lipschitz":
            if self.epsilon != 0.0 or self.T2 != 0.0:
                raise ConfigError("the lipschitz pair has epsilon = 0 and T2 = 0")
        elif self.cls == "smooth":
            if self.epsilon != 1.0:
                raise ConfigError("the smooth pair has epsilon = 1")
        else:
            raise ConfigError(f"unknown smoothing class {self.cls!r}")
        if not (0 <= self.D1 <= self.D2 * (1 + 1e-12)):
            raise ConfigError(f"pair constants need 0 <= D1 <= D2, got D1={self.D1}, D2={self.D2}")
        if not self.T2 >= 0:
            raise ConfigError("T2 must be >= 0")

    @classmethod
    def from_report(cls, mu: float, report: PairConstantsReport) -> "SmoothingPlan":
        return cls(mu=float(mu), cls=report.cls, epsilon=report.epsilon, D1=report.D1, D2=report.D2, T2=report.T2)

    @property
    def mu_pow(self) -> float:
        """mu^(1+epsilon)."""
        return self.mu ** (1.0 + self.epsilon)


# ---------------------------------------------------------------------------
# Estimators
# ---------------------------------------------------------------------------


def _apply(f, X, vectorized):
    if vectorized:
        return np.asarray(f(X), dtype=float).reshape(X.shape[0])
    return np.array([float(f(row)) for row in X])


def smoothed_value(f: Callable, x, mu: float, stream, K: int, vectorized: bool = False):
    """Sample mean of ``f(x + mu U)`` and its standard error.

    With ``vectorized=True`` ``f`` receives a ``(k, N)`` array and returns ``k`` values.
    """
    if mu < 0:
        raise ValueError("mu must be >= 0")
    if K < 2:
        raise ValueError("K must be >= 2")
    x = np.atleast_1d(np.asarray(x, dtype=float))
    rng = _gen(stream)
    total = 0.0
    total_sq = 0.0
    done = 0
    # Welford-free chunking: shift by the first chunk mean for stability
    shift = None
    while done < K:
        k = min(_CHUNK, K - done)
        vals = _apply(f, x + mu * rng.standard_normal((k, x.size)), vectorized)
        if not np.all(np.isfinite(vals)):
            raise FloatingPointError("non-finite function value in smoothed_value")
        if shift is None:
            shift = float(vals.mean())
        d = vals - shift
        total += float(d.sum())
        total_sq += float(d @ d)
        done += k
    mean = total / K
    var = max(total_sq / K - mean * mean, 0.0) * K / (K - 1)
    return shift + mean, math.sqrt(var / K)


def smoothed_gradient(f: Callable, x, mu: float, stream, K: int, vectorized: bool = False):
    """Sample mean of ``(f(x + mu U) - f(x)) / mu * U`` with componentwise standard errors."""
    if not mu > 0:
        raise ValueError("mu must be > 0")
    if K < 2:
        raise ValueError("K must be >= 2")
    x = np.atleast_1d(np.asarray(x, dtype=float))
    rng = _gen(stream)
    fx = float(_apply(f, x[None, :], vectorized)[0])
    s1 = np.zeros(x.size)
    s2 = np.zeros(x.size)
    done = 0
    while done < K:
        k = min(_CHUNK, K - done)
        U = rng.standard_normal((k, x.size))
        g = ((_apply(f, x + mu * U, vectorized) - fx) / mu)[:, None] * U
        if not np.all(np.isfinite(g)):
            raise FloatingPointError("non-finite value in smoothed_gradient")
        s1 += g.sum(axis=0)
        s2 += (g * g).sum(axis=0)
        done += k
    mean = s1 / K
    var = np.maximum(s2 / K - mean * mean, 0.0) * K / (K - 1)
    return mean, np.sqrt(var / K)


# ---------------------------------------------------------------------------
# Pair constants and bounds
# ---------------------------------------------------------------------------


def _t2_grid(problem, rng, count=32):
    region = problem.region
    half = count // 2
    inner = region.sample(rng, count - half)
    if region.kind == "l2-ball":
        d = rng.standard_normal((half, region.dim))
        outer = region.center + region.radius * d / np.linalg.norm(d, axis=1, keepdims=True)
    elif region.kind == "box" and region.bounded:
        corner = rng.random((half, region.dim)) < 0.5
        outer = np.where(corner, region.upper, region.lower)
    else:
        outer = region.sample(rng, half)
    return np.vstack([inner, outer])


def pair_constants(cls: str, N: int, problem=None, stream=None, K: int = 4096,
                   grid: Optional[np.ndarray] = None, fd_step: float = 1e-5) -> PairConstantsReport:
    """Constants of the Lipschitz pair (closed form) or the smooth pair.

    For the smooth pair ``T2 = sup_x sqrt(E||grad F(x, W)||^2)`` is estimated
    on a 32-point grid (half interior, half on the region's boundary) with
    per-scenario central differences.
    """
    N = int(N)
    if N < 1:
        raise ValueError("N must be >= 1")
    if cls == "lipschitz":
        return PairConstantsReport("lipschitz", N, chi_mean(N), math.sqrt(N), 0.0, 0.0)
    if cls != "smooth":
        raise ConfigError(f"unknown smoothing class {cls!r}")
    if problem is None:
        raise ValueError("the smooth pair needs a problem to estimate T2")
    rng = np.random.default_rng(0) if stream is None else _gen(stream)
    pts = _t2_grid(problem, rng) if grid is None else np.atleast_2d(np.asarray(grid, float))
    best, best_se = 0.0, 0.0
    eye = np.eye(N) * fd_step
    for x in pts:
        W = problem.sampler(rng, K)
        sq = np.zeros(K)
        for j in range(N):
            fp = problem.cost_batch(np.repeat((x + eye[j])[None, :], K, 0), W)
            fm = problem.cost_batch(np.repeat((x - eye[j])[None, :], K, 0), W)
            sq += ((fp - fm) / (2 * fd_step)) ** 2
        m2 = float(sq.mean())
        if not math.isfinite(m2):
            raise FloatingPointError("non-finite T2 estimate")
        t = math.sqrt(m2)
        if t > best:
            best = t
            best_se = float(sq.std(ddof=1) / math.sqrt(K)) / (2 * t) if t > 0 else 0.0
    return PairConstantsReport("smooth", N, float(N), math.sqrt(N * (N + 2.0)), best, 1.0, best_se)


def _check_floor(spec: RiskSpec):
    if spec.p > 1.0 and not spec.eta > 0.0:
        raise ConfigError("p > 1 requires a risk profile floor eta > 0")


def _C(spec: RiskSpec, plan: SmoothingPlan, G: float, V: float, R0: float) -> float:
    if spec.p == 1.0:
        return 1.0
    _check_floor(spec)
    inner = R0 + 2 * V + plan.mu_pow * G * (plan.D1 + plan.D2) + plan.mu * (plan.T2 + 1.0)
    return spec.eta ** (-spec.p / 2.0) * inner ** (spec.p / 2.0)


def surrogate_gap_bound(spec: RiskSpec, plan: SmoothingPlan, G: float, V: float, R0: Optional[float] = None) -> float:
    """Uniform bound on ``|phi_mu - phi|`` over the feasible region."""
    _check_floor(spec)
    R0 = spec.R0 if R0 is None else R0
    C = _C(spec, plan, G, V, R0)
    return plan.mu_pow * G * plan.D1 + spec.c * C * (plan.mu_pow * G * (plan.D1 + plan.D2) + plan.mu * (plan.T2 + 1.0))


def sigma_o(spec: RiskSpec, plan: SmoothingPlan, G: float, V: Optional[float] = None, R0: Optional[float] = None) -> float:
    """Constant multiplying ``mu (mu^eps + c)`` in the limiting neighborhood radius."""
    _check_floor(spec)
    if spec.p > 1.0 and V is None:
        raise ValueError("V is required when p > 1")
    R0 = spec.R0 if R0 is None else R0
    C = _C(spec, plan, G, 0.0 if V is None else V, R0)
    eps_pow = plan.mu ** plan.epsilon
    return 2.0 * max(G * plan.D1, C * (eps_pow * G * (plan.D1 + plan.D2) + (plan.T2 + 1.0)))


def neighborhood_radius(spec: RiskSpec, plan: SmoothingPlan, G: float, V: Optional[float] = None,
                        R0: Optional[float] = None) -> float:
    return sigma_o(spec, plan, G, V, R0) * plan.mu * (plan.mu ** plan.epsilon + spec.c)


def choose_mu(cls: str, N: int, M: float) -> float:
    if N < 1 or not M > 0:
        raise ValueError("choose_mu needs N >= 1 and M > 0")
    if cls == "lipschitz":
        return M / math.sqrt(N)
    if cls == "smooth":
        return M / N**1.5
    raise ConfigError(f"unknown smoothing class {cls!r}")


def slipschitz_check(f: Callable, D: Callable, T: Callable, L: float, xs, us, vectorized: bool = True) -> float:
    """``max |f(x+u) - f(x) - T(x,u)| - L D(u)`` over the grid product.

    Scalar grids are 1-D arrays; vector grids are ``(n, N)`` arrays and the
    callbacks then reduce over the last axis. Callbacks must broadcast when
    ``vectorized`` is set.
    """
    xs = np.asarray(xs, dtype=float)
    us = np.asarray(us, dtype=float)
    if not vectorized:
        worst = -math.inf
        for x in xs:
            for u in us:
                worst = max(worst, abs(f(x + u) - f(x) - T(x, u)) - L * D(u))
        return float(worst)
    scalar = xs.ndim == 1
    U = us[None, :] if scalar else us[None, :, :]
    Du = np.asarray(D(us), dtype=float)[None, :]
    worst = -math.inf
    step = max(1, (1 << 22) // max(us.shape[0], 1))
    for i in range(0, xs.shape[0], step):
        X = xs[i:i + step, None] if scalar else xs[i:i + step, None, :]
        fx = np.asarray(f(X), dtype=float)
        viol = np.abs(f(X + U) - fx - T(X, U)) - L * Du
        worst = max(worst, float(np.max(viol)))
    return worst
