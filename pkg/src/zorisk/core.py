"""Domain primitives: risk profiles, feasible regions and seeded random streams."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

__all__ = [
    "ConfigError",
    "RiskProfile",
    "RiskSpec",
    "FeasibleRegion",
    "RandomStreams",
    "risk_profile_eval",
    "project",
    "project_interval",
    "gaussian_vector",
]

PROFILE_KINDS = ("relu-shift", "softplus-shift", "custom")
REGION_KINDS = ("all-space", "box", "l2-ball")

# Domain-separation tags for the three sub-streams of one master seed.
_W1_TAG = 0x57315F31
_W2_TAG = 0x57325F32
_GAUSS_TAG = 0x47415553

_SOFTPLUS_CUTOFF = 30.0


class ConfigError(ValueError):
    """Raised when a configuration object violates its domain constraints."""


# ---------------------------------------------------------------------------
# Risk profiles
# ---------------------------------------------------------------------------


def _softplus(x, t, eta):
    tx = t * x
    if tx > _SOFTPLUS_CUTOFF:
        return x + eta
    if tx < -_SOFTPLUS_CUTOFF:
        return eta
    return math.log1p(math.exp(tx)) / t + eta


def _check_profile_samples(func: Callable[[float], float], eta: float, seed: int = 20240611) -> None:
    rng = np.random.default_rng(seed)
    a = rng.uniform(-50.0, 50.0, 10_000)
    b = rng.uniform(-50.0, 50.0, 10_000)
    ra = np.array([func(v) for v in a])
    rb = np.array([func(v) for v in b])
    if not (np.all(np.isfinite(ra)) and np.all(np.isfinite(rb))):
        raise ConfigError("custom risk profile returned non-finite values")
    if np.any(np.abs(ra - rb) > np.abs(a - b) + 1e-12):
        raise ConfigError("custom risk profile is not nonexpansive")
    lo, hi = np.minimum(a, b), np.maximum(a, b)
    rlo = np.where(a <= b, ra, rb)
    rhi = np.where(a <= b, rb, ra)
    if np.any(rlo > rhi + 1e-12):
        raise ConfigError("custom risk profile is not nondecreasing")
    mid = np.array([func(v) for v in 0.5 * (lo + hi)])
    if np.any(mid > 0.5 * (rlo + rhi) + 1e-12):
        raise ConfigError("custom risk profile failed the midpoint convexity test")
    grid = np.linspace(-50.0, 50.0, 2001)
    if any(func(v) < eta - 1e-12 for v in grid):
        raise ConfigError(f"custom risk profile drops below its floor eta={eta}")


@dataclass(frozen=True)
class RiskProfile:
    """Convex, nonnegative, nondecreasing, nonexpansive weighting of deviations.

    ``relu-shift`` is ``max(x, 0) + eta``; ``softplus-shift`` is
    ``log(1 + exp(t x)) / t + eta``; ``custom`` wraps a user callback that is
    screened by sampled property checks on construction.
    """

    kind: str = "relu-shift"
    eta: float = 0.0
    t: float = 1.0
    func: Optional[Callable[[float], float]] = field(default=None, compare=False, repr=False)

    def __post_init__(self):
        if self.kind not in PROFILE_KINDS:
            raise ConfigError(f"unknown risk profile kind {self.kind!r}; expected one of {PROFILE_KINDS}")
        if not (math.isfinite(self.eta) and self.eta >= 0.0):
            raise ConfigError(f"risk profile floor eta must be finite and >= 0, got {self.eta!r}")
        if self.kind == "softplus-shift" and not (math.isfinite(self.t) and self.t > 0.0):
            raise ConfigError(f"softplus softness t must be > 0, got {self.t!r}")
        if self.kind == "custom":
            if not callable(self.func):
                raise ConfigError("custom risk profile requires a callable func")
            _check_profile_samples(self.func, self.eta)

    def __call__(self, x: float) -> float:
        return risk_profile_eval(self, x)

    def evaluate_array(self, x: np.ndarray) -> np.ndarray:
        """Vectorized evaluation, same branch rules as the scalar path."""
        x = np.asarray(x, dtype=float)
        if self.kind == "relu-shift":
            return np.maximum(x, 0.0) + self.eta
        if self.kind == "softplus-shift":
            tx = self.t * x
            mid = np.log1p(np.exp(np.clip(tx, -_SOFTPLUS_CUTOFF, _SOFTPLUS_CUTOFF))) / self.t
            out = np.where(tx > _SOFTPLUS_CUTOFF, x, np.where(tx < -_SOFTPLUS_CUTOFF, 0.0, mid))
            return out + self.eta
        return np.vectorize(self.func, otypes=[float])(x)

    @property
    def kernel_code(self) -> Optional[int]:
        return {"relu-shift": 0, "softplus-shift": 1}.get(self.kind)


def risk_profile_eval(profile: RiskProfile, x: float) -> float:
    x = float(x)
    if profile.kind == "relu-shift":
        return max(x, 0.0) + profile.eta
    if profile.kind == "softplus-shift":
        return _softplus(x, profile.t, profile.eta)
    return float(profile.func(x))


@dataclass(frozen=True)
class RiskSpec:
    """Order ``p``, penalty ``c`` and profile of the mean-semideviation measure.

    ``enforce_floor=False`` admits ``p > 1`` with ``eta = 0``; it exists only
    for Monte Carlo diagnostics and is rejected by the solver.
    """

    p: float = 1.0
    c: float = 0.0
    profile: RiskProfile = field(default_factory=RiskProfile)
    enforce_floor: bool = True

    def __post_init__(self):
        if not (1.0 <= self.p <= 2.0):
            raise ConfigError(f"risk order p must lie in [1, 2], got {self.p!r}")
        if not (0.0 <= self.c <= 1.0):
            raise ConfigError(f"penalty c must lie in [0, 1], got {self.c!r}")
        if self.enforce_floor and self.p > 1.0 and not self.profile.eta > 0.0:
            raise ConfigError("p > 1 requires a risk profile floor eta > 0")

    @property
    def eta(self) -> float:
        return self.profile.eta

    def R(self, x):
        if np.ndim(x) == 0:
            return risk_profile_eval(self.profile, x)
        return self.profile.evaluate_array(x)

    @property
    def R0(self) -> float:
        return risk_profile_eval(self.profile, 0.0)


# ---------------------------------------------------------------------------
# Feasible regions
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class FeasibleRegion:
    kind: str
    dim: int
    lower: Optional[np.ndarray] = None
    upper: Optional[np.ndarray] = None
    center: Optional[np.ndarray] = None
    radius: float = math.inf

    def __post_init__(self):
        if self.kind not in REGION_KINDS:
            raise ConfigError(f"unknown region kind {self.kind!r}; expected one of {REGION_KINDS}")
        if int(self.dim) < 1:
            raise ConfigError(f"region dimension must be >= 1, got {self.dim!r}")
        if self.kind == "box":
            lo = np.asarray(self.lower, dtype=float).reshape(-1)
            hi = np.asarray(self.upper, dtype=float).reshape(-1)
            if lo.shape != (self.dim,) or hi.shape != (self.dim,):
                raise ConfigError("box bounds must both have length dim")
            if np.any(lo > hi) or np.any(np.isnan(lo)) or np.any(np.isnan(hi)):
                raise ConfigError("box requires lower <= upper componentwise")
            lo.setflags(write=False)
            hi.setflags(write=False)
            object.__setattr__(self, "lower", lo)
            object.__setattr__(self, "upper", hi)
        elif self.kind == "l2-ball":
            ctr = np.asarray(self.center, dtype=float).reshape(-1)
            if ctr.shape != (self.dim,) or not np.all(np.isfinite(ctr)):
                raise ConfigError("ball center must be a finite vector of length dim")
            if not (math.isfinite(self.radius) and self.radius > 0.0):
                raise ConfigError(f"ball radius must be finite and > 0, got {self.radius!r}")
            ctr.setflags(write=False)
            object.__setattr__(self, "center", ctr)

    @classmethod
    def all_space(cls, dim: int) -> "FeasibleRegion":
        return cls("all-space", int(dim))

    @classmethod
    def box(cls, lower, upper) -> "FeasibleRegion":
        lower = np.atleast_1d(np.asarray(lower, dtype=float))
        return cls("box", lower.size, lower=lower, upper=upper)

    @classmethod
    def ball(cls, center, radius: float) -> "FeasibleRegion":
        center = np.atleast_1d(np.asarray(center, dtype=float))
        return cls("l2-ball", center.size, center=center, radius=float(radius))

    @property
    def bounded(self) -> bool:
        return self.kind != "all-space" and bool(
            self.kind == "l2-ball" or np.all(np.isfinite(self.lower)) and np.all(np.isfinite(self.upper))
        )

    def contains(self, x, tol: float = 1e-12) -> bool:
        x = np.asarray(x, dtype=float)
        if self.kind == "all-space":
            return True
        if self.kind == "box":
            return bool(np.all(x >= self.lower - tol) and np.all(x <= self.upper + tol))
        return bool(np.linalg.norm(x - self.center) <= self.radius + tol)

    def sup_distance(self, point) -> float:
        """Largest Euclidean distance from ``point`` to any feasible x."""
        point = np.asarray(point, dtype=float)
        if self.kind == "all-space":
            return math.inf
        if self.kind == "box":
            far = np.maximum(np.abs(self.lower - point), np.abs(self.upper - point))
            return float(np.linalg.norm(far))
        return float(np.linalg.norm(self.center - point) + self.radius)

    def anchor(self) -> np.ndarray:
        """A canonical interior point: ball center, box midpoint (finite sides), else the origin."""
        if self.kind == "l2-ball":
            return self.center.copy()
        if self.kind == "box":
            lo = np.where(np.isfinite(self.lower), self.lower, 0.0)
            hi = np.where(np.isfinite(self.upper), self.upper, 0.0)
            return project(self, 0.5 * (lo + hi))
        return np.zeros(self.dim)

    def sample(self, rng: np.random.Generator, count: int) -> np.ndarray:
        """Deterministic-given-rng points inside the region (a standard cloud if unbounded)."""
        if self.kind == "box" and self.bounded:
            return rng.uniform(self.lower, self.upper, size=(count, self.dim))
        if self.kind == "l2-ball":
            d = rng.standard_normal((count, self.dim))
            d /= np.linalg.norm(d, axis=1, keepdims=True)
            r = self.radius * rng.random(count) ** (1.0 / self.dim)
            return self.center + d * r[:, None]
        return project(self, rng.standard_normal((count, self.dim)))


def project(region: FeasibleRegion, x) -> np.ndarray:
    """Euclidean projection onto ``region``; accepts one point or a stack of points."""
    x = np.asarray(x, dtype=float)
    if x.shape[-1:] != (region.dim,):
        raise ValueError(f"dimension mismatch: region has dim {region.dim}, x has shape {x.shape}")
    if not np.all(np.isfinite(x)):
        raise ValueError("cannot project a non-finite point")
    if region.kind == "all-space":
        return x.copy()
    if region.kind == "box":
        return np.clip(x, region.lower, region.upper)
    d = x - region.center
    nrm = np.linalg.norm(d, axis=-1, keepdims=True)
    scale = np.where(nrm > region.radius, region.radius / np.where(nrm > 0, nrm, 1.0), 1.0)
    return region.center + d * scale


def project_interval(v: float, lo: float, hi: float) -> float:
    if lo > hi:
        raise ValueError(f"empty interval [{lo}, {hi}]")
    return min(max(v, lo), hi)


# ---------------------------------------------------------------------------
# Random streams
# ---------------------------------------------------------------------------


class RandomStreams:
    """Three independent generators derived from one 64-bit master seed.

    ``w1`` and ``w2`` feed scenario sampling for the two information
    streams; ``gauss`` feeds the smoothing perturbations.  The replication
    index enters the seed entropy so replications never share a stream.
    Single-owner: the generators are mutable.
    """

    def __init__(self, master_seed: int, replication: int = 0):
        master_seed = int(master_seed)
        if not (0 <= master_seed < 2**64):
            raise ConfigError(f"master seed must be a 64-bit unsigned integer, got {master_seed}")
        self.master_seed = master_seed
        self.replication = int(replication)
        entropy = [master_seed, self.replication]
        self.w1 = self._make(entropy, _W1_TAG)
        self.w2 = self._make(entropy, _W2_TAG)
        self.gauss = self._make(entropy, _GAUSS_TAG)

    @staticmethod
    def _make(entropy, tag) -> np.random.Generator:
        return np.random.Generator(np.random.PCG64(np.random.SeedSequence(entropy, spawn_key=(tag,))))

    def spawn(self, replication: int) -> "RandomStreams":
        return RandomStreams(self.master_seed, replication)

    def __repr__(self):
        return f"RandomStreams(master_seed={self.master_seed}, replication={self.replication})"


def gaussian_vector(streams: RandomStreams, dim: int) -> np.ndarray:
    if int(dim) < 1:
        raise ValueError(f"dim must be >= 1, got {dim}")
    return streams.gauss.standard_normal(int(dim))
