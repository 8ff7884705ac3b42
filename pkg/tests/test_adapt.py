import math

import numpy as np
import pytest
from scipy import stats

from adaptsmc.adapt import (
    AdaptConfig,
    AdaptInfo,
    IncrementalKL,
    KLMCAdaptation,
    MALAAdaptation,
    MALAObjective,
    ObjectiveContext,
    StepsizeAdaptation,
    adapt_klmc,
    adapt_mala,
    adapt_stepsize,
    build_objective,
    draw_context,
    make_policy,
)
from adaptsmc.kernels import AugmentedState, NoiseBlock, make_family
from adaptsmc.model import AnnealedPath, funnel, make_schedule, shifted_gaussian
from adaptsmc.smc import ParticleSystem, RunConfig, smc_run


def gaussian_ctx(x, eps, t=2, h_prev=0.1, tau=0.0, values=(0.0, 0.3, 0.6, 1.0), mu=2.0, family="lmc", u=None):
    path = AnnealedPath(shifted_gaussian(1, mu), make_schedule("explicit", values=list(values)))
    fam = make_family(family)
    x = np.atleast_2d(np.asarray(x, dtype=float)).reshape(-1, 1)
    eps = np.atleast_2d(np.asarray(eps, dtype=float)).reshape(-1, 1)
    noise = NoiseBlock(eps, None if u is None else np.asarray(u, dtype=float))
    prev = fam.make_params(h_prev)
    return ObjectiveContext(fam, path, t, AugmentedState(x), noise, h_prev, prev, tau)


class TestAdaptConfig:
    def test_lmc_defaults(self):
        c = AdaptConfig.lmc()
        assert (c.tau, c.epsilon, c.c, c.r, c.delta) == (0.1, 0.01, 0.1, 2.0, -1.0)
        assert c.h_guess == pytest.approx(math.exp(-10))

    def test_klmc_defaults(self):
        c = AdaptConfig.klmc()
        assert (c.tau, c.epsilon, c.c, c.r, c.delta) == (5.0, 0.01, 0.01, 3.0, -1.0)
        assert c.Xi == (0.1, 0.9) and c.rho_guess == 0.1
        assert c.h_guess == pytest.approx(math.exp(-7.5))

    @pytest.mark.parametrize(
        "kw", [dict(tau=-1), dict(h_guess=0), dict(B=0), dict(Xi=()), dict(Xi=(0.0, 0.5)), dict(rho_guess=1.0),
               dict(r=1.0), dict(epsilon=0.0)]
    )
    def test_rejects(self, kw):
        with pytest.raises(ValueError):
            AdaptConfig(**kw)


class TestObjective:
    def test_regularizer_zero_at_h_prev(self):
        ctx0 = gaussian_ctx([0.2, -0.5], [0.3, 1.1], tau=0.0)
        ctx1 = gaussian_ctx([0.2, -0.5], [0.3, 1.1], tau=7.0)
        assert IncrementalKL(ctx1)(0.1) == IncrementalKL(ctx0)(0.1)

    def test_regularizer_value(self):
        a = IncrementalKL(gaussian_ctx([0.2], [0.3], tau=0.0))
        b = IncrementalKL(gaussian_ctx([0.2], [0.3], tau=2.0))
        assert b(0.4) - a(0.4) == pytest.approx(2.0 * math.log(4.0) ** 2, rel=1e-12)

    def test_scalar_oracle_tc_fwd(self):
        x, e, h, h_prev, tau, mu = 0.2, -0.7, 0.25, 0.1, 0.5, 2.0
        lam_prev, lam = 0.3, 0.6
        ctx = gaussian_ctx([x], [e], h_prev=h_prev, tau=tau, mu=mu)

        def score(l, y):
            return l * mu - y

        def log_gamma(l, y):
            return (1 - l) * stats.norm.logpdf(y) + l * stats.norm.logpdf(y, mu)

        y = x + h * score(lam, x) + math.sqrt(2 * h) * e
        log_g = (
            log_gamma(lam, y)
            + stats.norm.logpdf(x, y + h_prev * score(lam_prev, y), math.sqrt(2 * h_prev))
            - log_gamma(lam_prev, x)
            - stats.norm.logpdf(y, x + h * score(lam, x), math.sqrt(2 * h))
        )
        want = -log_g + tau * (math.log(h) - math.log(h_prev)) ** 2
        assert IncrementalKL(ctx)(h) == pytest.approx(want, abs=1e-12)

    def test_huge_step_on_funnel_is_inf(self):
        path = AnnealedPath(funnel(10), make_schedule("quadratic", 8))
        fam = make_family("lmc")
        rng = np.random.default_rng(0)
        ctx = ObjectiveContext(
            fam, path, 3, AugmentedState(rng.normal(size=(16, 10))), NoiseBlock(rng.normal(size=(16, 10))),
            0.1, fam.make_params(0.1), 0.1,
        )
        assert IncrementalKL(ctx)(1e6) == math.inf
        assert math.isfinite(IncrementalKL(ctx)(1e-3))

    def test_kl_estimate_is_normalizer_corrected(self):
        ctx = gaussian_ctx([0.2, -0.5, 1.0], [0.3, 1.1, -0.4])
        obj = IncrementalKL(ctx)
        lg = -np.array([IncrementalKL(gaussian_ctx([x], [e])).kl_term(0.2) for x, e in
                        zip([0.2, -0.5, 1.0], [0.3, 1.1, -0.4])])
        want = -lg.mean() + math.log(np.mean(np.exp(lg)))
        assert obj.kl_estimate(0.2) == pytest.approx(want, rel=1e-12)
        # Jensen: the corrected estimate is never negative
        assert obj.kl_estimate(0.2) >= 0

    def test_build_objective_variants(self):
        ctx = gaussian_ctx([0.0], [0.0], family="mala", u=[0.5])
        assert isinstance(build_objective(ctx), IncrementalKL)
        assert isinstance(build_objective(ctx, "arc"), MALAObjective)
        with pytest.raises(ValueError):
            build_objective(ctx, "rwm")


class TestAdaptStepsize:
    def test_warm_start_contract(self):
        h_star = 0.037
        cfg = AdaptConfig.lmc()
        h = adapt_stepsize(lambda h: (math.log(h) - math.log(h_star)) ** 2, 5, cfg, h_guess=h_star)
        assert abs(math.log(h) - math.log(h_star)) <= cfg.epsilon

    def test_feasible_back_off(self):
        calls = []

        def obj(h):
            calls.append(h)
            return (math.log(h) + 2) ** 2 if h < 1 else math.inf

        cfg = AdaptConfig.lmc()
        h = adapt_stepsize(obj, 1, cfg, h_guess=5.0)
        assert abs(math.log(h) + 2) <= cfg.epsilon
        # first probes walk down from 5 on the delta grid in log h until finite
        assert calls[0] == pytest.approx(5.0)
        assert calls[1] == pytest.approx(5.0 * math.exp(-1))
        assert calls[2] == pytest.approx(5.0 * math.exp(-2))

    def test_warm_budget(self):
        cfg = AdaptConfig.lmc()
        rng = np.random.default_rng(1)
        for _ in range(50):
            a = rng.uniform(-6, 0)
            info = AdaptInfo()
            adapt_stepsize(lambda h: (math.log(h) - a) ** 2, 3, cfg, h_guess=math.exp(a + rng.uniform(-0.05, 0.05)),
                           info=info)
            assert info.evals <= 15

    def test_constant_shift_invariance(self):
        cfg = AdaptConfig.lmc()
        f = lambda h: (math.log(h) + 1.3) ** 2 + 0.1 * math.sin(math.log(h))
        a = adapt_stepsize(f, 1, cfg, h_guess=0.5)
        b = adapt_stepsize(lambda h: f(h) + 123.0, 1, cfg, h_guess=0.5)
        assert a == b

    def test_saa_determinism(self):
        rng = np.random.default_rng(2)
        ctx = gaussian_ctx(rng.normal(size=32), rng.normal(size=32), tau=0.1)
        cfg = AdaptConfig.lmc()
        assert adapt_stepsize(IncrementalKL(ctx), 2, cfg, 0.1) == adapt_stepsize(IncrementalKL(ctx), 2, cfg, 0.1)


class TestAdaptKlmc:
    def test_separable(self):
        a = -2.5
        cfg = AdaptConfig.klmc()
        info = AdaptInfo()
        h, rho = adapt_klmc(lambda h, r: (math.log(h) - a) ** 2 + (r - 0.9) ** 2, 1, cfg, info=info)
        assert abs(math.log(h) - a) <= cfg.epsilon
        assert rho == 0.9
        assert info.sweeps <= 2 and info.converged

    def test_singleton_grid(self):
        cfg = AdaptConfig.klmc(Xi=(0.5,), rho_guess=0.5)
        seen = set()

        def obj(h, r):
            seen.add(r)
            return (math.log(h) + 1) ** 2

        h, rho = adapt_klmc(obj, 1, cfg)
        assert rho == 0.5 and seen == {0.5}
        assert abs(math.log(h) + 1) <= cfg.epsilon

    def test_tie_goes_to_first(self):
        cfg = AdaptConfig.klmc(Xi=(0.7, 0.2, 0.9), rho_guess=0.2)
        _, rho = adapt_klmc(lambda h, r: (math.log(h) + 1) ** 2, 1, cfg)
        assert rho == 0.7

    def test_sweep_cap_returns_iterate(self):
        # sweep 1 tunes log h = -1 at rho = 0.1 and switches to rho = 0.9, sweep 2
        # moves log h to -2, and only a third sweep would confirm convergence
        def obj(h, r):
            ell = math.log(h)
            return (ell + 1) ** 2 + 2 if r == 0.1 else (ell + 2) ** 2

        info = AdaptInfo()
        h, rho = adapt_klmc(obj, 1, AdaptConfig.klmc(max_sweeps=2), info=info)
        assert info.sweeps == 2 and not info.converged
        assert rho == 0.9 and abs(math.log(h) + 2) <= 0.01

        info = AdaptInfo()
        adapt_klmc(obj, 1, AdaptConfig.klmc(), info=info)
        assert info.sweeps == 3 and info.converged


class TestAdaptMala:
    def setup_method(self):
        rng = np.random.default_rng(3)
        self.ctx = gaussian_ctx(rng.normal(size=64) + 0.6, rng.normal(size=64), family="mala",
                                u=rng.uniform(size=64), tau=0.0)

    def test_arc_small_h_limit_and_monotone(self):
        obj = MALAObjective(self.ctx, "arc")
        grid = np.logspace(-6, 1, 30)
        abar = np.array([np.mean(obj.alphas(h)[0]) for h in grid])
        assert abar[0] == pytest.approx(1.0, abs=1e-3)
        assert obj.kl_term(grid[0]) == pytest.approx((1 - 0.574) ** 2, abs=1e-3)
        assert np.all(np.diff(abar) <= 1e-12)

    def test_arc_hits_target(self):
        cfg = AdaptConfig.mala(tau=0.0)
        h = adapt_mala("arc", self.ctx, cfg, h_guess=0.1)
        assert np.mean(MALAObjective(self.ctx, "arc").alphas(h)[0]) == pytest.approx(0.574, abs=0.02)

    def test_esjd_interior_minimizer(self):
        obj = MALAObjective(self.ctx, "esjd")
        grid = np.logspace(-6, 2, 60)
        vals = np.array([obj.kl_term(h) for h in grid])
        assert vals[0] == pytest.approx(0.0, abs=1e-4) and vals[0] <= 0
        k = int(np.argmin(vals))
        assert 0 < k < grid.size - 1
        h = adapt_mala("esjd", self.ctx, AdaptConfig.mala(tau=0.0), h_guess=0.1)
        assert obj.kl_term(h) <= vals[k] + 1e-3

    def test_degenerate_proposal_is_inf(self):
        path = AnnealedPath(funnel(5), make_schedule("linear", 3))
        fam = make_family("mala")
        rng = np.random.default_rng(4)
        x = rng.normal(size=(8, 5))
        x[:, 0] = -30.0  # score components of order exp(30)
        ctx = ObjectiveContext(fam, path, 2, AugmentedState(x),
                               NoiseBlock(rng.normal(size=(8, 5)), rng.uniform(size=8)), 0.1, None, 0.0)
        for mode in ("arc", "esjd"):
            assert MALAObjective(ctx, mode)(1e300) == math.inf

    def test_unknown_mode(self):
        with pytest.raises(ValueError):
            MALAObjective(self.ctx, "both")


class TestPolicies:
    def test_subsample_follows_resampling_contract(self):
        fam = make_family("lmc")
        path = AnnealedPath(shifted_gaussian(1, 1.0), make_schedule("linear", 2))
        w = np.array([0.5, 0.3, 0.15, 0.05])
        ps = ParticleSystem(np.arange(4.0)[:, None], np.log(w))
        cfg = AdaptConfig.lmc(B=20)
        for seed in range(10):
            ctx = draw_context(1, ps, path, fam, np.random.default_rng(seed), None, cfg)
            counts = np.bincount(ctx.state.x[:, 0].astype(int), minlength=4)
            assert np.all(counts >= np.floor(20 * w)) and np.all(counts <= np.ceil(20 * w))
            assert ctx.h_prev == cfg.h_guess

    def test_make_policy(self):
        assert isinstance(make_policy("klmc"), KLMCAdaptation)
        assert isinstance(make_policy("mala", mala_mode="esjd"), MALAAdaptation)
        assert make_policy("mala", mala_mode="esjd").mode == "esjd"
        assert isinstance(make_policy("lmc"), StepsizeAdaptation)

    @pytest.mark.parametrize("name", ["lmc", "klmc", "mala"])
    def test_run_records_telemetry(self, name):
        path = AnnealedPath(shifted_gaussian(2, 1.0), make_schedule("quadratic", 4))
        res = smc_run(path, make_family(name), make_policy(name), RunConfig(N=128, seed=0))
        for r in res.records:
            assert r.evals > 0 and math.isfinite(r.objective_value) and r.h > 0
            assert "evals" in r.to_dict() and "objective_value" in r.to_dict()
        if name == "klmc":
            assert all(r.rho in (0.1, 0.9) for r in res.records)
        assert math.isfinite(res.log_z_hat)

    def test_adaptive_run_is_deterministic(self):
        path = AnnealedPath(shifted_gaussian(2, 1.0), make_schedule("quadratic", 4))
        a = smc_run(path, make_family("lmc"), make_policy("lmc"), RunConfig(N=64, seed=5))
        b = smc_run(path, make_family("lmc"), make_policy("lmc"), RunConfig(N=64, seed=5))
        assert a.log_z_hat == b.log_z_hat
        np.testing.assert_array_equal(a.step_sizes, b.step_sizes)
