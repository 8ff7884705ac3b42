import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from adaptsmc.optim1d import (
    INV_PHI,
    PHI,
    BracketNotFoundError,
    InvalidTripletError,
    MemoizedObjective,
    NoFeasiblePointError,
    SearchParams,
    Triplet,
    bracket_minimum,
    extended,
    find_feasible,
    golden_section_search,
    gss_iteration_bound,
    minimize,
)

INF = math.inf


def bracket_oracle(f, x0, c, r):
    """Straight transcription of the two-stage exponential search."""
    x, y = x0, f(x0)
    k = 0
    while True:
        xp = x0 + c * r**k
        yp = f(xp)
        if y < yp:
            xplus, anchor = xp, x
            break
        x, y, k = xp, yp, k + 1
    k = 0
    while True:
        xp = anchor - c * r**k
        yp = f(xp)
        if y < yp:
            return xp, x, xplus
        x, y, k = xp, yp, k + 1


def golden_triplet(f, a, width):
    return Triplet.from_points(f, a, a + (1.0 - INV_PHI) * width, a + width)


class TestExtendedValue:
    def test_nan_maps_to_inf(self):
        assert extended(float("nan")) == INF

    def test_finite_passthrough(self):
        assert extended(2.5) == 2.5

    def test_minus_inf_rejected(self):
        with pytest.raises(ValueError):
            extended(-INF)

    def test_memo_counts_distinct_points(self):
        calls = []
        f = MemoizedObjective(lambda x: calls.append(x) or x * x)
        for x in (1.0, 2.0, 1.0, 2.0, 3.0):
            f(x)
        assert f.calls == 3
        assert calls == [1.0, 2.0, 3.0]


class TestTriplet:
    def test_valid(self):
        t = Triplet(0.0, 1.0, 2.0, 1.0, 0.0, 1.0)
        assert t.width == 2.0

    def test_non_strict_allowed(self):
        Triplet(0.0, 1.0, 2.0, 1.0, 1.0, 1.0)

    def test_infinite_right_end_allowed(self):
        Triplet(0.0, 1.0, 2.0, 1.0, 0.5, INF)

    @pytest.mark.parametrize(
        "args",
        [
            (1.0, 0.0, 2.0, 1.0, 0.0, 1.0),  # unordered
            (0.0, 1.0, 1.0, 1.0, 0.0, 1.0),  # b == c
            (0.0, 1.0, 2.0, INF, 0.0, 1.0),  # f(a) infinite
            (0.0, 1.0, 2.0, 1.0, 2.0, 3.0),  # f(b) > f(a)
            (0.0, 1.0, 2.0, 3.0, 2.0, 1.0),  # f(b) > f(c)
        ],
    )
    def test_invalid(self, args):
        with pytest.raises(InvalidTripletError):
            Triplet(*args)


class TestSearchParams:
    @pytest.mark.parametrize("kw", [dict(c=0.0), dict(r=1.0), dict(epsilon=0.0), dict(delta=0.0)])
    def test_rejects(self, kw):
        with pytest.raises(ValueError):
            SearchParams(**kw)


class TestFindFeasible:
    def test_backs_off_to_first_finite(self):
        f = lambda x: INF if x >= 0 else x * x
        assert find_feasible(f, 3.0, -1.0) == -1.0

    def test_already_feasible(self):
        assert find_feasible(lambda x: x * x, 5.0, -1.0) == 5.0

    def test_log_scale_boundary(self):
        # +inf beyond log(h_inf) = 0
        f = lambda x: INF if x > math.log(1.0) else 1.0
        assert find_feasible(f, 2.0, -1.0) == 0.0

    def test_grid_is_exact(self):
        f = lambda x: INF if x > -7.0 else 0.0
        x = find_feasible(f, 0.3, -0.1)
        assert x == 0.3 + 73 * -0.1

    def test_cap(self):
        with pytest.raises(NoFeasiblePointError):
            find_feasible(lambda x: INF, 0.0, -1.0, max_steps=50)

    def test_nan_is_infeasible(self):
        f = lambda x: float("nan") if x > 0 else 1.0
        assert find_feasible(f, 2.0, -1.0) == 0.0


class TestBracketMinimum:
    def test_quadratic_hand_trace(self):
        t = bracket_minimum(lambda x: x * x, 1.0, 0.1, 2.0)
        assert (t.a, t.b, t.c) == pytest.approx((-0.6, 0.2, 1.1), abs=1e-12)

    def test_shifted_quadratic_matches_oracle(self):
        f = lambda x: (x - 10.0) ** 2
        t = bracket_minimum(f, 0.0, 1.0, 2.0)
        assert (t.a, t.b, t.c) == bracket_oracle(f, 0.0, 1.0, 2.0)
        assert t.a < 10.0 < t.c
        assert t.c == 16.0

    def test_right_infinite_region(self):
        f = lambda x: INF if x >= 2.0 else x * x
        t = bracket_minimum(f, 1.0, 0.1, 2.0)
        assert (t.a, t.b, t.c) == bracket_oracle(f, 1.0, 0.1, 2.0)
        assert t.a < t.b < 2.0

    def test_infinite_counts_as_increase(self):
        f = lambda x: INF if x > 1.05 else -x
        t = bracket_minimum(f, 1.0, 0.1, 2.0)
        assert t.c == pytest.approx(1.1)
        assert t.fc == INF

    def test_infeasible_start(self):
        with pytest.raises(ValueError):
            bracket_minimum(lambda x: INF, 0.0, 0.1, 2.0)

    def test_unbounded_left(self):
        with pytest.raises(BracketNotFoundError):
            bracket_minimum(lambda x: x, 0.0, 0.1, 2.0, max_steps=30)

    def test_randomized_triplet_invariant(self):
        rng = np.random.default_rng(7)
        for i in range(1000):
            kind = i % 3
            m = rng.uniform(-3, 3)
            s = rng.uniform(0.1, 5)
            if kind == 0:
                f = lambda x, m=m, s=s: s * (x - m) ** 2
            elif kind == 1:
                f = lambda x, m=m, s=s: s * (x - m) ** 4 + 0.1 * (x - m) ** 2
            else:
                xinf = m + rng.uniform(0.05, 3)
                f = lambda x, m=m, s=s, xinf=xinf: INF if x >= xinf else s * abs(x - m)
            x0 = m + rng.uniform(-4, 0.04)
            t = bracket_minimum(f, x0, rng.uniform(0.01, 1), rng.uniform(1.5, 3))
            assert t.a < t.b < t.c
            assert t.fb <= t.fa < INF and t.fb <= t.fc


class TestGoldenSectionSearch:
    def test_quadratic(self):
        f = lambda x: (x - 2.0) ** 2
        x = golden_section_search(f, Triplet.from_points(f, 0.0, 1.0, 5.0), 1e-3)
        assert abs(x - 2.0) <= 1e-3

    def test_abs_vertex(self):
        x = golden_section_search(abs, Triplet.from_points(abs, -1.0, -0.1, 2.0), 1e-4)
        assert abs(x) <= 1e-4

    def test_rejects_non_triplet(self):
        with pytest.raises(TypeError):
            golden_section_search(abs, (-1, 0, 1), 0.1)

    def test_rejects_bad_epsilon(self):
        with pytest.raises(ValueError):
            golden_section_search(abs, Triplet.from_points(abs, -1.0, 0.0, 1.0), 0.0)

    def test_iteration_bound_formula(self):
        # bound = ceil(log(2 (2/phi - 1) w / eps) / log phi)
        w, eps = 10.0, 1e-3
        expected = math.ceil(math.log(2 * (2 * INV_PHI - 1) * w / eps) / math.log(PHI))
        assert gss_iteration_bound(w, eps) == expected == 18

    def test_golden_probe_positions_and_contraction(self):
        m = 0.7123
        f = lambda x: (x - m) ** 2
        t = golden_triplet(f, -2.0, 5.0)
        hist = []
        golden_section_search(f, t, 1e-6, hist)
        w0 = hist[0][3] - hist[0][0]
        for k, (x0, x1, x2, x3, _, _) in enumerate(hist):
            assert x1 == pytest.approx(INV_PHI * x0 + (1 - INV_PHI) * x3, rel=1e-9, abs=1e-9)
            assert x2 == pytest.approx((1 - INV_PHI) * x0 + INV_PHI * x3, rel=1e-9, abs=1e-9)
            assert x3 - x0 == pytest.approx(INV_PHI**k * w0, rel=1e-12)
        assert len(hist) - 1 <= gss_iteration_bound(5.0, 1e-6)

    def test_golden_matches_printed_iteration_count(self):
        rng = np.random.default_rng(3)
        for _ in range(100):
            a, w = rng.uniform(-5, 0), rng.uniform(0.1, 20)
            eps = 10 ** rng.uniform(-6, -1)
            m = rng.uniform(a, a + w)
            f = lambda x, m=m: (x - m) ** 2
            try:
                t = golden_triplet(f, a, w)
            except InvalidTripletError:
                continue
            hist = []
            golden_section_search(f, t, eps, hist)
            # stop rule on golden brackets: |x1 - x2| = (2/phi - 1) |x3 - x0|
            widths = [h[3] - h[0] for h in hist]
            assert all((2 * INV_PHI - 1) * wk > eps / 2 for wk in widths[:-1])
            assert (2 * INV_PHI - 1) * widths[-1] <= eps / 2 * (1 + 1e-9)

    def test_triplet_preserved_each_iteration(self):
        rng = np.random.default_rng(11)
        for _ in range(50):
            m, xinf = rng.uniform(-1, 1), rng.uniform(1.2, 3)
            f = MemoizedObjective(lambda x, m=m, xinf=xinf: INF if x >= xinf else (x - m) ** 2)
            t = bracket_minimum(f, rng.uniform(-3, 1), 0.1, 2.0)
            hist = []
            golden_section_search(f, t, 1e-4, hist)
            for x0, x1, x2, x3, f1, f2 in hist:
                assert x0 < x1 <= x2 < x3
                lo = min(f1, f2)
                assert lo <= f(x0) < INF
                assert lo <= f(x3)

    def test_tie_shrinks_left(self):
        f = lambda x: 0.0
        hist = []
        golden_section_search(f, Triplet.from_points(f, 0.0, 1.0, 2.0), 0.5, hist)
        x0, x1, x2, x3, _, _ = hist[1]
        assert x0 == 0.0 and x3 < 2.0

    def test_infinite_right_end(self):
        f = lambda x: INF if x >= 1.0 else (x - 0.9) ** 2
        t = Triplet.from_points(f, 0.0, 0.5, 1.5)
        x = golden_section_search(f, t, 1e-5)
        assert abs(x - 0.9) <= 1e-5

    def test_nan_same_as_inf(self):
        f_inf = lambda x: INF if x >= 1.0 else (x - 0.9) ** 2
        f_nan = lambda x: float("nan") if x >= 1.0 else (x - 0.9) ** 2
        x_inf = minimize(f_inf, 0.0, SearchParams())
        x_nan = minimize(f_nan, 0.0, SearchParams())
        assert x_inf == x_nan

    def test_non_golden_bracket_still_eps_close(self):
        # b sits close to a, so the printed probe-gap test alone would stop early
        m = -1.9965324707582255
        f = lambda x: abs(x - m)
        t = Triplet.from_points(f, -2.1296561977178716, -2.0296561977178715, 1.1703438022821286)
        x = golden_section_search(f, t, 0.01)
        assert abs(x - m) <= 0.01


class TestMinimize:
    def test_quadratic(self):
        x = minimize(lambda x: (x + 2.0) ** 2, 0.0, SearchParams(c=0.1, r=2, epsilon=0.01))
        assert abs(x + 2.0) <= 0.01

    def test_warm_start_budget(self):
        f = MemoizedObjective(lambda x: INF if x >= 7 else (x - 5.0) ** 2)
        x = minimize(f, 5.0, SearchParams())
        assert abs(x - 5.0) <= 0.01
        assert f.calls <= 12

    def test_randomized_unimodal(self):
        rng = np.random.default_rng(5)
        for _ in range(200):
            m = rng.uniform(-10, 10)
            xinf = m + rng.uniform(0.1, 10)
            p = rng.choice([1.0, 2.0, 4.0])
            f = lambda x, m=m, xinf=xinf, p=p: INF if x >= xinf else abs(x - m) ** p
            x0 = rng.uniform(m - 10, xinf - 1e-6)
            eps = 10 ** rng.uniform(-4, -1)
            x = minimize(f, x0, SearchParams(epsilon=eps))
            assert abs(x - m) <= eps

    def test_constant_shift_invariance(self):
        f = lambda x: (x - 1.3) ** 2
        g = lambda x: (x - 1.3) ** 2 + 100.0
        assert minimize(f, 0.0, SearchParams()) == minimize(g, 0.0, SearchParams())


@settings(max_examples=60, deadline=None)
@given(
    m=st.floats(-50, 50),
    gap=st.floats(0.05, 20),
    start=st.floats(0.0, 1.0),
    eps=st.floats(1e-4, 0.5),
)
def test_minimize_property(m, gap, start, eps):
    xinf = m + gap
    f = lambda x: INF if x >= xinf else (x - m) ** 2
    x0 = (m - 20) + start * (xinf - (m - 20)) * 0.999
    x = minimize(f, x0, SearchParams(epsilon=eps))
    assert abs(x - m) <= eps
