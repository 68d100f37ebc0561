import math

import numpy as np
import pytest

from zorisk.core import ConfigError, FeasibleRegion, RandomStreams
from zorisk.problems import (
    OracleCounter,
    OracleError,
    _ncx2_raw_moment,
    evaluate,
    evaluate_batch,
    make_problem,
    newsvendor,
    piecewise_linear,
    quadratic_fit,
    quadratic_tracking,
    sample_scenarios,
)
from zorisk.solver import RunOptions, Schedule, run

from conftest import plan_for, spec_for


class TestEvaluate:
    def test_newsvendor_value(self):
        ctr = OracleCounter()
        assert evaluate(newsvendor(), [0.5], [0.0], ctr) == 0.5
        assert ctr.calls == 1

    def test_quadratic_tracking_value(self):
        assert evaluate(quadratic_tracking(2), [0.0, 0.0], [3.0, 4.0], OracleCounter()) == 12.5

    def test_quadratic_fit_exact(self):
        prob = quadratic_fit(np.eye(2), y=[1.0, 0.0])
        assert evaluate(prob, [1.0, 0.0], [0.0, 0.0], OracleCounter()) == 0.0

    def test_dimension_mismatch(self):
        ctr = OracleCounter()
        with pytest.raises(OracleError):
            evaluate(quadratic_tracking(2), [0.0, 0.0, 0.0], [0.0, 0.0], ctr)
        assert ctr.calls == 0

    def test_non_finite(self):
        prob = piecewise_linear(a=[[1e300], [-1e300]], noise=0.0, region=FeasibleRegion.all_space(1))
        with np.errstate(all="ignore"), pytest.raises(OracleError, match="non-finite"):
            evaluate(prob, [1e300], [0.0, 0.0], OracleCounter())

    def test_batch_counts_rows(self):
        prob = quadratic_tracking(2)
        ctr = OracleCounter()
        vals = evaluate_batch(prob, np.zeros((7, 2)), np.ones((7, 2)), ctr)
        np.testing.assert_allclose(vals, 1.0)
        assert ctr.calls == 7

    def test_counter_monotone(self):
        ctr = OracleCounter()
        with pytest.raises(ValueError):
            ctr.add(-1)


class TestSampling:
    def test_newsvendor_mean(self):
        W = sample_scenarios(newsvendor(), np.random.default_rng(3), 10**5)
        assert abs(W.mean() - 0.5) < 0.006
        assert set(np.unique(W)) == {0.0, 1.0}

    def test_quadratic_tracking_mean(self):
        m = np.array([1.0, -2.0, 0.5])
        K = 10**5
        W = sample_scenarios(quadratic_tracking(3, m), np.random.default_rng(4), K)
        assert np.all(np.abs(W.mean(0) - m) < 4 / math.sqrt(K))

    def test_truncation_radius(self):
        W = sample_scenarios(quadratic_tracking(1), np.random.default_rng(5), 10**5)
        assert np.all(np.abs(W) <= 10.0)

    def test_determinism(self):
        prob = piecewise_linear()
        a = sample_scenarios(prob, RandomStreams(8).w1, 50)
        b = sample_scenarios(prob, RandomStreams(8).w1, 50)
        assert a.tobytes() == b.tobytes()

    def test_block_equals_sequential(self):
        prob = newsvendor((0.0, 1.0, 3.0))
        r1, r2 = np.random.default_rng(6), np.random.default_rng(6)
        block = sample_scenarios(prob, r1, 20)
        seq = np.vstack([sample_scenarios(prob, r2, 1) for _ in range(20)])
        np.testing.assert_array_equal(block, seq)


class TestMetadata:
    def test_ncx2_moments_central(self):
        # central chi-square: E X = k, E X^2 = k(k+2), E X^3 = k(k+2)(k+4)
        assert _ncx2_raw_moment(1, 3, 0.0) == 3
        assert _ncx2_raw_moment(2, 3, 0.0) == 15
        assert _ncx2_raw_moment(3, 3, 0.0) == 105

    def test_ncx2_moments_noncentral(self):
        rng = np.random.default_rng(0)
        Z = rng.standard_normal((10**6, 2)) + np.array([1.5, 0.0])
        X = (Z**2).sum(1)
        for order in (1, 2):
            mc = (X**order).mean()
            se = (X**order).std() / 1e3
            assert abs(_ncx2_raw_moment(order, 2, 2.25) - mc) < 4 * se

    @pytest.mark.parametrize("make", [
        lambda: newsvendor(),
        lambda: quadratic_tracking(2),
        lambda: quadratic_fit(np.eye(2), y=[1.0, 0.0], noise=0.3),
        lambda: piecewise_linear(),
    ])
    def test_V_bounds_sampled_L2_norms(self, make):
        prob = make()
        gen = np.random.default_rng(1)
        W = prob.sampler(gen, 20_000)
        for x in prob.region.sample(gen, 20):
            F = prob.cost_batch(np.repeat(x[None, :], W.shape[0], 0), W)
            l2 = math.sqrt(np.mean(F**2))
            l4 = np.mean(F**4) ** 0.25
            assert l2 <= prob.V * 1.01
            assert l4 <= prob.V_p(2.0) * 1.01

    def test_newsvendor_V_exact(self):
        # endpoints -1 and 2 with W in {0,1}: E|2-W|^2 = (4+1)/2
        assert newsvendor().V == pytest.approx(math.sqrt(2.5))

    def test_declared_sigma(self):
        assert quadratic_tracking(3).sigma == 0.5
        prob = quadratic_fit(np.diag([2.0, 1.0]))
        assert prob.sigma == pytest.approx(1.0)
        assert prob.G == pytest.approx(4.0)

    def test_analytic_optima(self):
        spec0 = spec_for(1.0, c=0.0)
        np.testing.assert_allclose(quadratic_tracking(2, [1.0, 1.0]).optimum(spec0), [1.0, 1.0])
        out = quadratic_tracking(2, [10.0, 0.0], FeasibleRegion.ball([0.0, 0.0], 1.0))
        np.testing.assert_allclose(out.optimum(spec0), [1.0, 0.0])
        assert out.optimum(spec_for(1.0, c=0.5)) is None
        assert newsvendor((0.0, 1.0, 3.0)).optimum(spec0)[0] == 1.0
        np.testing.assert_allclose(piecewise_linear().optimum(spec0), [0.0, 0.0])
        assert piecewise_linear(a=[[1.0, 0.0], [0.0, 1.0]]).optimum(spec0) is None

    def test_make_problem(self):
        prob = make_problem("quadratic-tracking", {"dim": 3, "mean": 1.0, "region": "box",
                                                   "lower": -2.0, "upper": 2.0})
        assert prob.dim == 3 and prob.region.kind == "box"
        assert make_problem("piecewise-linear", {"dim": 3}).scenario_dim == 6
        with pytest.raises(ConfigError, match="unknown problem"):
            make_problem("rosenbrock")


def _lipschitz_spot_check(prob, pairs=1000, K=10_000, seed=2):
    rng = np.random.default_rng(seed)
    W = prob.sampler(rng, K)
    worst = -math.inf
    X = prob.region.sample(rng, pairs)
    U = rng.normal(0, 0.5, X.shape)
    for x, u in zip(X, U):
        a = prob.cost_batch(np.repeat((x + u)[None, :], K, 0), W)
        b = prob.cost_batch(np.repeat(x[None, :], K, 0), W)
        d2 = (a - b) ** 2
        l2 = math.sqrt(d2.mean())
        se = d2.std(ddof=1) / math.sqrt(K) / (2 * l2) if l2 > 0 else 0.0
        worst = max(worst, l2 - prob.G * np.linalg.norm(u) - 3 * se)
    return worst


@pytest.mark.parametrize("make", [lambda: newsvendor(), lambda: piecewise_linear()])
def test_lipschitz_spot_check(make):
    assert _lipschitz_spot_check(make()) <= 1e-12


def test_convexity_spot_check(builtin):
    rng = np.random.default_rng(3)
    n = 1000
    X1 = builtin.region.sample(rng, n) + rng.normal(0, 1, (n, builtin.dim))
    X2 = builtin.region.sample(rng, n) + rng.normal(0, 1, (n, builtin.dim))
    lam = rng.random(n)[:, None]
    W = builtin.sampler(rng, n)
    mid = builtin.cost_batch(lam * X1 + (1 - lam) * X2, W)
    ends = lam[:, 0] * builtin.cost_batch(X1, W) + (1 - lam[:, 0]) * builtin.cost_batch(X2, W)
    assert np.all(mid <= ends + 1e-10)


@pytest.mark.parametrize("p", [1.0, 2.0])
def test_four_calls_per_iteration(builtin, p):
    spec = spec_for(p)
    plan = plan_for(builtin, 0.1, T2=3.0)
    sched = Schedule("convex-subharmonic", epsilon=0.1)
    for use_kernel in (False, None):
        traj = run(builtin, spec, plan, sched, 250, RandomStreams(1),
                   RunOptions(use_kernel=use_kernel, block_size=64))
        assert traj.calls[-1] == 1000
        np.testing.assert_array_equal(traj.calls, 4 * traj.n)
