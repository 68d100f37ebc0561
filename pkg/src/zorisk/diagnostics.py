"""Monte Carlo oracles, tracking errors, reference optima, rate fits and iteration budgets."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .core import RandomStreams, RiskSpec, project
from .problems import Problem

__all__ = [
    "McEstimate",
    "RateFit",
    "TrackingSeries",
    "InsufficientDataError",
    "NonPositiveValuesError",
    "StabilizationError",
    "estimate_s_mu",
    "estimate_g_mu",
    "estimate_phi",
    "estimate_grad_phi",
    "tracking_errors",
    "reference_optimum",
    "fit_rate",
    "iteration_budget",
]

_CHUNK = 1 << 15


class InsufficientDataError(ValueError):
    pass


class NonPositiveValuesError(ValueError):
    pass


class StabilizationError(RuntimeError):
    pass


@dataclass(frozen=True)
class McEstimate:
    value: float
    stderr: float
    samples: int

    def __post_init__(self):
        if self.stderr < 0 or self.samples < 2:
            raise ValueError("McEstimate needs stderr >= 0 and at least 2 samples")


@dataclass(frozen=True)
class RateFit:
    slope: float
    intercept: float
    r2: float
    window: tuple


def _gens(stream):
    """(gaussian generator, scenario generator) from a RandomStreams or a bare Generator."""
    if isinstance(stream, RandomStreams):
        return stream.gauss, stream.w1
    return stream, stream


def _check(vals, what):
    if not np.all(np.isfinite(vals)):
        raise FloatingPointError(f"non-finite values while estimating {what}")
    return vals


def _summary(vals) -> McEstimate:
    K = vals.size
    return McEstimate(float(vals.mean()), float(vals.std(ddof=1) / math.sqrt(K)), K)


def _risk_pow(spec: RiskSpec, v):
    r = spec.R(v)
    return r if spec.p == 1.0 else np.power(r, spec.p)


def _perturbed_costs(problem: Problem, x, mu, stream, K):
    """``F(x + mu U, W)`` for K fresh pairs plus the scalar perturbations ``U``."""
    ga, gw = _gens(stream)
    x = np.asarray(x, dtype=float)
    N = problem.dim
    out = np.empty(K)
    us = np.empty(K)
    for i in range(0, K, _CHUNK):
        k = min(_CHUNK, K - i)
        G = ga.standard_normal((k, N + 1))
        W = problem.sampler(gw, k)
        out[i:i + k] = problem.cost_batch(x + mu * G[:, :N], W)
        us[i:i + k] = G[:, N]
    return _check(out, "perturbed cost"), us


def estimate_s_mu(problem: Problem, x, mu: float, stream, K: int) -> McEstimate:
    """Mean of ``F(x + mu U, W)``."""
    if K < 2:
        raise ValueError("K must be >= 2")
    vals, _ = _perturbed_costs(problem, x, mu, stream, K)
    return _summary(vals)


def estimate_g_mu(problem: Problem, spec: RiskSpec, x, y: float, mu: float, stream, K: int) -> McEstimate:
    """Mean of ``R(F(x + mu U, W) - y - mu u)^p`` with ``(U, u)`` jointly standard normal."""
    if K < 2:
        raise ValueError("K must be >= 2")
    vals, us = _perturbed_costs(problem, x, mu, stream, K)
    return _summary(_check(_risk_pow(spec, vals - float(y) - mu * us), "g_mu"))


def estimate_phi(problem: Problem, spec: RiskSpec, x, mu: float, stream, K: int) -> McEstimate:
    """Nested estimate of ``mean + c * (E R(cost - mean)^p)^(1/p)``.

    The mean comes from the first half of the sample and the deviation moment
    from an independent second half. The standard error propagates both
    halves through the p-th root by the delta method, including the
    sensitivity of the moment to the estimated mean.
    """
    if K < 4:
        raise ValueError("K must be >= 4")
    K1 = K // 2
    K2 = K - K1
    s = estimate_s_mu(problem, x, mu, stream, K1)
    vals, us = _perturbed_costs(problem, x, mu, stream, K2)
    dev = vals - mu * us
    terms = _check(_risk_pow(spec, dev - s.value), "phi")
    g = float(terms.mean())
    g_se = float(terms.std(ddof=1) / math.sqrt(K2))
    if spec.c == 0.0:
        return McEstimate(s.value, s.stderr, K)
    p = spec.p
    h = 1e-6 * max(1.0, abs(s.value))
    dg_dy = float((_risk_pow(spec, dev - s.value - h) - _risk_pow(spec, dev - s.value + h)).mean() / (-2 * h))
    root = g ** (1.0 / p)
    if g > 0:
        k = spec.c * (1.0 / p) * g ** (1.0 / p - 1.0)
        var = (1.0 + k * dg_dy) ** 2 * s.stderr**2 + k**2 * g_se**2
    else:
        var = s.stderr**2 + (spec.c * g_se ** (1.0 / p)) ** 2
    return McEstimate(s.value + spec.c * root, math.sqrt(var), K)


def _central_grad(values_plus, values_minus, V, mu):
    """Mean and stderr of ``(f+ - f-) / (2 mu) * V`` row-wise."""
    g = ((values_plus - values_minus) / (2.0 * mu))[:, None] * V
    _check(g, "gradient")
    K = g.shape[0]
    return g.mean(axis=0), g.std(axis=0, ddof=1) / math.sqrt(K)


def estimate_grad_phi(problem: Problem, spec: RiskSpec, x, mu: float, stream, K: int,
                      y: Optional[float] = None, z: Optional[float] = None):
    """Gradient of the smoothed objective assembled from separate estimators.

    ``grad s_mu`` and the joint ``(grad_x g_mu, d g_mu / dy)`` come from
    independent batches of antithetic Gaussian differences. ``y`` and ``z``
    default to fresh estimates of ``s_mu(x)`` and ``g_mu(x, y)``. Returns
    ``(estimate, stderr)`` vectors.
    """
    if not mu > 0 or K < 2:
        raise ValueError("need mu > 0 and K >= 2")
    ga, gw = _gens(stream)
    x = np.asarray(x, dtype=float)
    N = problem.dim
    if y is None:
        y = estimate_s_mu(problem, x, mu, stream, K).value
    if z is None:
        z = estimate_g_mu(problem, spec, x, y, mu, stream, K).value

    U = ga.standard_normal((K, N))
    W = problem.sampler(gw, K)
    ds, ds_se = _central_grad(problem.cost_batch(x + mu * U, W), problem.cost_batch(x - mu * U, W), U, mu)

    V = ga.standard_normal((K, N + 1))
    W = problem.sampler(gw, K)
    Ux, u = V[:, :N], V[:, N]
    hp = _risk_pow(spec, problem.cost_batch(x + mu * Ux, W) - mu * u - y)
    hm = _risk_pow(spec, problem.cost_batch(x - mu * Ux, W) + mu * u - y)
    dg, dg_se = _central_grad(hp, hm, V, mu)
    gx, gy = dg[:N], dg[N]
    gx_se, gy_se = dg_se[:N], dg_se[N]

    k = 1.0 if spec.p == 1.0 else (1.0 / spec.p) * z ** ((1.0 - spec.p) / spec.p)
    ck = spec.c * k
    est = ds + ck * (gx + gy * ds)
    var = (1.0 + ck * gy) ** 2 * ds_se**2 + ck**2 * (gx_se**2 + ds**2 * gy_se**2)
    return est, np.sqrt(var)


@dataclass(frozen=True)
class TrackingSeries:
    """Squared tracking errors; NaN where a row was skipped by the cadence."""

    n: np.ndarray
    y_err_sq: np.ndarray
    z_err_sq: np.ndarray
    z_applicable: bool


def tracking_errors(trajectory, problem: Problem, spec: RiskSpec, plan, stream, K: int,
                    cadence: int = 1) -> TrackingSeries:
    """``|y - s_mu(x)|^2`` and ``|z - g_mu(x, y)|^2`` at every ``cadence``-th record.

    For p = 1 the second series is computed against ``z = 1`` but flagged
    not applicable, since that level is inactive.
    """
    R = len(trajectory)
    if R == 0:
        raise ValueError("empty trajectory")
    cadence = max(1, int(cadence))
    ye = np.full(R, np.nan)
    ze = np.full(R, np.nan)
    for i in range(0, R, cadence):
        x = trajectory.x[i]
        y = float(trajectory.y[i])
        ye[i] = (y - estimate_s_mu(problem, x, plan.mu, stream, K).value) ** 2
        ze[i] = (float(trajectory.z[i]) - estimate_g_mu(problem, spec, x, y, plan.mu, stream, K).value) ** 2
    if (R - 1) % cadence:
        i = R - 1
        x, y = trajectory.x[i], float(trajectory.y[i])
        ye[i] = (y - estimate_s_mu(problem, x, plan.mu, stream, K).value) ** 2
        ze[i] = (float(trajectory.z[i]) - estimate_g_mu(problem, spec, x, y, plan.mu, stream, K).value) ** 2
    return TrackingSeries(trajectory.n.copy(), ye, ze, spec.p > 1.0)


def _saa_phi(problem, spec, X, mu, Ug, u, W):
    """Sample-average objective at each row of X on one fixed sample (common random numbers)."""
    out = np.empty(X.shape[0])
    for i, x in enumerate(X):
        vals = problem.cost_batch(x + mu * Ug, W)
        s = vals.mean()
        if spec.c == 0.0:
            out[i] = s
            continue
        g = _risk_pow(spec, vals - mu * u - s).mean()
        out[i] = s + spec.c * g ** (1.0 / spec.p)
    return out


def reference_optimum(problem: Problem, spec: RiskSpec, mu: float, budget: Optional[dict] = None,
                      stream=None, x0=None, analytic: bool = True) -> np.ndarray:
    """Minimizer of the (smoothed) objective: closed form when known, else brute force.

    The brute-force path runs projected descent with central differences
    (step ``fd_step``) on a sample-average objective over ``batch`` fixed
    draws, for ``iterations`` steps of size ``lr / sqrt(k + 1)``, and returns
    the best iterate. It raises ``StabilizationError`` if the projected
    gradient at that iterate exceeds ``tol``. ``analytic=False`` skips the
    closed form.
    """
    exact = problem.optimum(spec, mu) if analytic else None
    if exact is not None:
        return np.asarray(exact, dtype=float)
    cfg = {"fd_step": 1e-3, "batch": 100_000, "iterations": 500, "lr": 0.5, "tol": 1e-2}
    cfg.update(budget or {})
    rng = np.random.default_rng(0x5EED) if stream is None else _gens(stream)[0]
    N = problem.dim
    K = int(cfg["batch"])
    G = rng.standard_normal((K, N + 1))
    Ug, u = G[:, :N], G[:, N]
    W = problem.sampler(rng, K)
    h = float(cfg["fd_step"])
    eye = np.eye(N) * h
    if x0 is None:
        x = problem.region.anchor()
    else:
        x = project(problem.region, np.asarray(x0, dtype=float))

    def fd_grad(x):
        pts = np.vstack([x + eye, x - eye])
        f = _saa_phi(problem, spec, pts, mu, Ug, u, W)
        return (f[:N] - f[N:]) / (2 * h)

    best_x = x.copy()
    best_f = float(_saa_phi(problem, spec, x[None, :], mu, Ug, u, W)[0])
    lr = float(cfg["lr"])
    for k in range(int(cfg["iterations"])):
        x = project(problem.region, x - lr / math.sqrt(k + 1) * fd_grad(x))
        f = float(_saa_phi(problem, spec, x[None, :], mu, Ug, u, W)[0])
        if f < best_f:
            best_f, best_x = f, x.copy()
    g = fd_grad(best_x)
    pg = np.linalg.norm(best_x - project(problem.region, best_x - g))
    if pg > float(cfg["tol"]):
        raise StabilizationError(f"reference descent did not stabilize: projected gradient norm {pg:.3g}")
    return best_x


def fit_rate(n, values, window_fraction: float = 0.5) -> RateFit:
    """Least-squares slope of log(value) against log(n) over the trailing fraction of iterations.

    The window keeps points with ``n >= (1 - window_fraction) * n_last`` (and ``n >= 1``).
    """
    n = np.asarray(n, dtype=float)
    v = np.asarray(values, dtype=float)
    ok = np.isfinite(v)
    n, v = n[ok], v[ok]
    if n.size == 0:
        raise InsufficientDataError("empty series")
    if not (0.0 < window_fraction <= 1.0):
        raise ValueError("window_fraction must lie in (0, 1]")
    start = max(1.0, (1.0 - window_fraction) * n.max())
    sel = n >= start
    nw, vw = n[sel], v[sel]
    if nw.size < 10:
        raise InsufficientDataError(f"only {nw.size} points in the fit window (need 10)")
    if np.any(vw <= 0):
        raise NonPositiveValuesError("nonpositive values in the fit window")
    lx, ly = np.log(nw), np.log(vw)
    A = np.vstack([lx, np.ones_like(lx)]).T
    (slope, intercept), *_ = np.linalg.lstsq(A, ly, rcond=None)
    resid = ly - (slope * lx + intercept)
    ss = float(((ly - ly.mean()) ** 2).sum())
    r2 = 1.0 - float((resid**2).sum()) / ss if ss > 0 else 1.0
    return RateFit(float(slope), float(intercept), r2, (int(nw.min()), int(nw.max())))


def iteration_budget(p: float, cls: str, delta: float, epsilon: float, n_o: int, Sigma_p_sigma: float) -> int:
    """Iterations sufficient for a ``delta``-accurate strongly convex solve.

    ``Sigma_p_sigma`` is a caller-supplied surrogate for the problem constant.
    """
    if cls not in ("lipschitz", "smooth"):
        raise ValueError(f"unknown class {cls!r}")
    if not (delta > 0 and Sigma_p_sigma > 0):
        raise ValueError("delta and Sigma_p_sigma must be > 0")
    if p == 1.0:
        v = (2.0 * Sigma_p_sigma / delta * (n_o + 3)) ** 1.5
    else:
        if epsilon >= 1.0:
            raise ValueError("epsilon must be < 1 when p > 1")
        e = 2.0 / (1.0 - epsilon)
        v = (2.0 * Sigma_p_sigma / delta * (n_o + e)) ** e
    return int(max(n_o, math.ceil(v * (1.0 - 1e-12))))
