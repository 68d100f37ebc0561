import numpy as np
import pytest

from zorisk.core import RiskProfile, RiskSpec
from zorisk.problems import constant_cost, newsvendor, piecewise_linear, quadratic_fit, quadratic_tracking
from zorisk.smoothing import SmoothingPlan, pair_constants


def plan_for(problem, mu, T2=None, K=512):
    """Smoothing plan matching the problem's class; T2 is estimated cheaply unless given."""
    if problem.cls == "lipschitz":
        return SmoothingPlan.from_report(mu, pair_constants("lipschitz", problem.dim))
    if T2 is None:
        rep = pair_constants("smooth", problem.dim, problem, np.random.default_rng(0), K=K)
        return SmoothingPlan.from_report(mu, rep)
    N = problem.dim
    return SmoothingPlan(mu, "smooth", 1.0, float(N), float(np.sqrt(N * (N + 2.0))), T2)


def spec_for(p, c=0.5, eta=0.1):
    return RiskSpec(p, c, RiskProfile("relu-shift", eta if p > 1 else 0.0))


BUILTINS = {
    "newsvendor": lambda: newsvendor(),
    "quadratic-tracking": lambda: quadratic_tracking(3, mean=[0.5, -0.5, 1.0]),
    "quadratic-fit": lambda: quadratic_fit(np.array([[2.0, 0.0], [0.5, 1.0]]), y=[1.0, 0.0], noise=0.2),
    "piecewise-linear": lambda: piecewise_linear(),
    "constant": lambda: constant_cost(2.0, dim=2),
}


@pytest.fixture(params=sorted(BUILTINS))
def builtin(request):
    return BUILTINS[request.param]()
