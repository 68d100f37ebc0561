"""Stepsize schedules for the three coupled recursions."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ..core import ConfigError

__all__ = ["Schedule", "stepsizes", "stepsizes_array", "burn_in", "schedule_tau2"]

VARIANTS = ("convex-subharmonic", "strongly-convex-subharmonic", "constant")


def _open01(name, v):
    if not (0.0 < v < 1.0):
        raise ConfigError(f"schedule parameter {name} must lie in (0, 1), got {v!r}")


@dataclass(frozen=True)
class Schedule:
    """Stepsize rule. Only the fields relevant to ``variant`` are read.

    convex-subharmonic: epsilon in [0,1), delta, zeta in (0,1), delta >= zeta.
    strongly-convex-subharmonic: sigma > 0, epsilon in [0,1), delta in (0,1).
    constant: alpha in (0,1), beta, gamma in (0,1], alpha < min(beta, gamma), sigma > 0.
    """

    variant: str
    epsilon: float = 0.0
    delta: float = 0.5
    zeta: float = 0.5
    sigma: float = 1.0
    alpha: float = 0.05
    beta: float = 0.3
    gamma: float = 0.3

    def __post_init__(self):
        v = self.variant
        if v not in VARIANTS:
            raise ConfigError(f"unknown schedule variant {v!r}; expected one of {VARIANTS}")
        if v in ("convex-subharmonic", "strongly-convex-subharmonic"):
            if not (0.0 <= self.epsilon < 1.0):
                raise ConfigError(f"schedule epsilon must lie in [0, 1), got {self.epsilon!r}")
            _open01("delta", self.delta)
        if v == "convex-subharmonic":
            _open01("zeta", self.zeta)
            if self.delta < self.zeta:
                raise ConfigError("convex schedule requires delta >= zeta")
        if v in ("strongly-convex-subharmonic", "constant") and not self.sigma > 0.0:
            raise ConfigError(f"schedule sigma must be > 0, got {self.sigma!r}")
        if v == "constant":
            _open01("alpha", self.alpha)
            for name in ("beta", "gamma"):
                val = getattr(self, name)
                if not (0.0 < val <= 1.0):
                    raise ConfigError(f"schedule parameter {name} must lie in (0, 1], got {val!r}")
            if not self.alpha < min(self.beta, self.gamma):
                raise ConfigError("constant schedule requires alpha < min(beta, gamma)")

    def exponents(self, p: float):
        """(tau1, tau2, tau3) of the subharmonic variants; tau1 is None when alpha ~ 1/n."""
        e = self.epsilon
        if self.variant == "convex-subharmonic":
            if p == 1.0:
                return (3 + e) / 4, (1 + self.delta * e) / 2, None
            return (7 + e) / 8, (3 + self.delta * e) / 4, (1 + self.zeta * e) / 2
        if self.variant == "strongly-convex-subharmonic":
            if p == 1.0:
                return None, 2.0 / 3.0, None
            return None, (3 + e) / 4, (1 + self.delta * e) / 2
        raise ValueError("constant schedule has no exponents")


def stepsizes_array(schedule: Schedule, p: float, n) -> tuple:
    """Vectorized ``stepsizes``; the scalar form calls this so both agree bitwise.

    When p = 1 the third entry mirrors beta; it is never read by the solver.
    """
    n = np.asarray(n, dtype=np.int64)
    if np.any(n < 0):
        raise ValueError("iteration index must be >= 0")
    nf = np.maximum(n, 1).astype(float)
    zero = n == 0
    if schedule.variant == "constant":
        shape = n.shape
        return (np.full(shape, schedule.alpha / schedule.sigma), np.full(shape, schedule.beta),
                np.full(shape, schedule.gamma))
    t1, t2, t3 = schedule.exponents(p)
    if schedule.variant == "convex-subharmonic":
        alpha = np.where(zero, 1.0, np.power(nf, -t1))
    else:
        alpha = np.where(zero, 1.0 / schedule.sigma, 1.0 / (schedule.sigma * nf))
    beta = np.where(zero, 1.0, np.power(nf, -t2))
    gamma = beta.copy() if t3 is None else np.where(zero, 1.0, np.power(nf, -t3))
    return alpha, beta, gamma


def stepsizes(schedule: Schedule, p: float, n: int):
    a, b, g = stepsizes_array(schedule, p, np.array([int(n)]))
    return float(a[0]), float(b[0]), float(g[0])


def schedule_tau2(schedule: Schedule, p: float) -> float:
    return schedule.exponents(p)[1]


def burn_in(tau2: float) -> int:
    """Iteration index from which the strongly convex rate bound applies."""
    if not (0.0 < tau2 < 1.0):
        raise ValueError(f"tau2 must lie in (0, 1), got {tau2!r}")
    return int(math.ceil(1.0 / (1.0 - tau2 ** (1.0 / (tau2 + 1.0)))))
