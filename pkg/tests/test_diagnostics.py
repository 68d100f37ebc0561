import math

import numpy as np
import pytest

from zorisk.core import FeasibleRegion, RandomStreams, RiskProfile, RiskSpec
from zorisk.diagnostics import (
    InsufficientDataError,
    McEstimate,
    NonPositiveValuesError,
    StabilizationError,
    estimate_g_mu,
    estimate_grad_phi,
    estimate_phi,
    estimate_s_mu,
    fit_rate,
    iteration_budget,
    reference_optimum,
    tracking_errors,
)
from zorisk.problems import Problem, constant_cost, newsvendor, quadratic_tracking
from zorisk.smoothing import surrogate_gap_bound
from zorisk.solver import RunOptions, Schedule, run

from conftest import BUILTINS, plan_for, spec_for

K = 10**5


def rng(seed=0):
    return np.random.default_rng(seed)


def two_outcome():
    """F(x, W) = x + W with W uniform on {-1, +1}."""
    return Problem(
        name="two-outcome", dim=1, scenario_dim=1, region=FeasibleRegion.all_space(1),
        sampler=lambda g, k: np.where(g.random(k) < 0.5, -1.0, 1.0)[:, None],
        cost_batch=lambda X, W: X[:, 0] + W[:, 0], cls="lipschitz", G=1.0, V=math.inf,
        V_p=lambda p: math.inf,
    )


class TestEstimators:
    def test_s_mu_quadratic_tracking(self):
        m = np.array([1.0, 2.0, -1.0])
        est = estimate_s_mu(quadratic_tracking(3, m), m, 0.0, rng(1), K)
        assert abs(est.value - 1.5) <= 4 * est.stderr
        assert est.samples == K

    def test_s_mu_constant(self):
        est = estimate_s_mu(constant_cost(2.5), [0.0], 0.7, rng(), 100)
        assert est.value == 2.5 and est.stderr == 0.0

    def test_s_mu_newsvendor(self):
        est = estimate_s_mu(newsvendor(), [0.5], 0.0, rng(2), K)
        assert abs(est.value - 0.5) <= 4 * est.stderr + 1e-15

    def test_g_mu_newsvendor(self):
        est = estimate_g_mu(newsvendor(), RiskSpec(1.0, 1.0), [0.5], 0.5, 0.0, rng(3), K)
        assert abs(est.value) <= 4 * est.stderr + 1e-15

    def test_g_mu_floor(self):
        spec = RiskSpec(2.0, 1.0, RiskProfile("relu-shift", 0.3))
        est = estimate_g_mu(newsvendor(), spec, [0.5], 5.0, 0.2, rng(4), 1000)
        assert est.value >= 0.09 - 1e-15

    def test_g_mu_constant_zero(self):
        est = estimate_g_mu(constant_cost(2.0), RiskSpec(1.0, 1.0), [0.0], 2.0, 0.0, rng(), 500)
        assert est.value == 0.0

    def test_phi_c_zero(self):
        prob = quadratic_tracking(2)
        a = estimate_phi(prob, RiskSpec(1.0, 0.0), [1.0, 0.0], 0.1, RandomStreams(5), K)
        b = estimate_s_mu(prob, [1.0, 0.0], 0.1, RandomStreams(6), K)
        assert abs(a.value - b.value) <= 4 * math.hypot(a.stderr, b.stderr)

    def test_phi_newsvendor(self):
        est = estimate_phi(newsvendor(), RiskSpec(1.0, 1.0), [0.5], 0.0, rng(7), K)
        assert abs(est.value - 0.5) <= 4 * est.stderr + 1e-12

    def test_phi_two_outcome(self):
        spec = RiskSpec(2.0, 1.0, RiskProfile("relu-shift", 0.0), enforce_floor=False)
        x = 0.3
        est = estimate_phi(two_outcome(), spec, [x], 0.0, rng(8), K)
        assert abs(est.value - (x + math.sqrt(0.5))) <= 4 * est.stderr

    def test_phi_finite_on_builtins(self):
        for name, make in BUILTINS.items():
            prob = make()
            for p in (1.0, 2.0):
                for mu in (0.0, 0.5, 1.0):
                    for x in prob.region.sample(rng(9), 5):
                        est = estimate_phi(prob, spec_for(p), x, mu, rng(10), 2000)
                        assert math.isfinite(est.value) and math.isfinite(est.stderr), name

    def test_grad_phi_risk_neutral(self):
        prob = quadratic_tracking(2)
        x = np.array([1.0, -2.0])
        est, se = estimate_grad_phi(prob, RiskSpec(1.0, 0.0), x, 0.1, rng(11), K)
        assert np.all(np.abs(est - x) <= 4 * se)

    def test_mc_estimate_invariants(self):
        with pytest.raises(ValueError):
            McEstimate(0.0, -1.0, 10)
        with pytest.raises(ValueError):
            McEstimate(0.0, 0.0, 1)
        with pytest.raises(ValueError):
            estimate_s_mu(newsvendor(), [0.0], 0.0, rng(), 1)


def test_surrogate_sandwich_newsvendor():
    prob = newsvendor()
    spec = RiskSpec(1.0, 1.0)
    plan = plan_for(prob, 0.1)
    bound = surrogate_gap_bound(spec, plan, prob.G, prob.V)
    for i, x in enumerate(np.linspace(-1, 2, 10)):
        a = estimate_phi(prob, spec, [x], plan.mu, rng(100 + i), K)
        b = estimate_phi(prob, spec, [x], 0.0, rng(200 + i), K)
        assert abs(a.value - b.value) <= bound + 4 * math.hypot(a.stderr, b.stderr)


class TestTracking:
    def setup(self, p, iterations):
        prob = newsvendor()
        spec = spec_for(p)
        plan = plan_for(prob, 0.1)
        traj = run(prob, spec, plan, Schedule("convex-subharmonic"), iterations, RandomStreams(1))
        return prob, spec, plan, traj

    def test_p1_not_applicable(self):
        prob, spec, plan, traj = self.setup(1.0, 20)
        ts = tracking_errors(traj, prob, spec, plan, rng(), 500)
        assert not ts.z_applicable
        assert np.all(np.isfinite(ts.z_err_sq))

    def test_single_record(self):
        prob, spec, plan, traj = self.setup(2.0, 0)
        ts = tracking_errors(traj, prob, spec, plan, rng(), 500)
        assert ts.y_err_sq.size == 1 and ts.z_applicable

    def test_cadence(self):
        prob, spec, plan, traj = self.setup(2.0, 24)
        ts = tracking_errors(traj, prob, spec, plan, rng(), 200, cadence=10)
        done = np.isfinite(ts.y_err_sq)
        np.testing.assert_array_equal(np.flatnonzero(done), [0, 10, 20, 24])

    def test_decay_strongly_convex(self):
        prob = quadratic_tracking(2)
        spec = spec_for(1.0)
        plan = plan_for(prob, 0.05, K=2048)
        sched = Schedule("strongly-convex-subharmonic", sigma=prob.sigma)
        traj = run(prob, spec, plan, sched, 10**4, RandomStreams(3), RunOptions(x0=[2.0, 2.0]))
        ts = tracking_errors(traj, prob, spec, plan, rng(12), 2000, cadence=10)
        v = ts.y_err_sq[np.isfinite(ts.y_err_sq)]
        k = max(1, v.size // 10)
        assert v[-k:].mean() <= 0.1 * v[:k].mean()


class TestReferenceOptimum:
    def test_quadratic_tracking_analytic(self):
        np.testing.assert_array_equal(reference_optimum(quadratic_tracking(2, [1.0, -1.0]), spec_for(1.0, 0.0), 0.0),
                                      [1.0, -1.0])

    def test_quadratic_tracking_descent(self):
        m = np.array([1.0, -1.0])
        x = reference_optimum(quadratic_tracking(2, m), spec_for(1.0, 0.0), 0.0, analytic=False)
        assert np.all(np.abs(x - m) < 1e-3)

    def test_newsvendor_flat_min(self):
        prob = newsvendor()
        for analytic in (True, False):
            x = reference_optimum(prob, spec_for(1.0, 0.0), 0.0, analytic=analytic, x0=[1.7])
            assert abs(prob.mean_cost(x) - 0.5) < 1e-3

    def test_risk_averse_descent_is_stationary(self):
        prob = quadratic_tracking(2, [1.0, 0.0], FeasibleRegion.ball([0.0, 0.0], 0.5))
        spec = spec_for(2.0, 0.5)
        assert prob.optimum(spec, 0.1) is None
        x = reference_optimum(prob, spec, 0.1, budget={"batch": 20_000})
        assert prob.region.contains(x, tol=1e-12)
        # the objective depends on x only through its distance to m, so the minimizer is the boundary point
        np.testing.assert_allclose(x, [0.5, 0.0], atol=5e-3)

    def test_unstable_budget_raises(self):
        with pytest.raises(StabilizationError):
            reference_optimum(quadratic_tracking(2, [3.0, 0.0]), spec_for(1.0, 0.0), 0.0,
                              budget={"iterations": 1, "lr": 1e-4, "batch": 1000}, analytic=False)


class TestFitRate:
    n = np.arange(1, 1001)

    def test_exact_power_law(self):
        fit = fit_rate(self.n, self.n ** (-2 / 3))
        assert abs(fit.slope + 2 / 3) < 1e-9
        assert fit.window == (500, 1000)

    def test_constant(self):
        assert abs(fit_rate(self.n, np.full(self.n.size, 3.0)).slope) < 1e-9

    def test_noisy(self):
        v = self.n ** -0.5 * (1 + 0.01 * rng(13).standard_normal(self.n.size))
        assert abs(fit_rate(self.n, v).slope + 0.5) < 0.02

    def test_errors(self):
        with pytest.raises(InsufficientDataError):
            fit_rate(np.arange(1, 10), np.ones(9))
        v = self.n ** -0.5
        v[-1] = 0.0
        with pytest.raises(NonPositiveValuesError):
            fit_rate(self.n, v)


class TestIterationBudget:
    def test_examples(self):
        assert iteration_budget(1.0, "lipschitz", 1.0, 0.0, 5, 1.0) == 64
        assert iteration_budget(2.0, "smooth", 1.0, 0.0, 5, 1.0) == 196

    def test_monotone_in_delta(self):
        for p in (1.0, 2.0):
            vals = [iteration_budget(p, "smooth", d, 0.2, 5, 1.0) for d in np.geomspace(1e-3, 1e3, 40)]
            assert np.all(np.diff(vals) <= 0)

    def test_errors(self):
        with pytest.raises(ValueError):
            iteration_budget(2.0, "smooth", 1.0, 1.0, 5, 1.0)
        with pytest.raises(ValueError):
            iteration_budget(1.0, "smooth", 0.0, 0.0, 5, 1.0)
