import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy.optimize import linprog

from supremal.domain import build_domain
from supremal.supremand import Region, Supremand, SupremandError, envelope_1d, envelope_hull

EX4 = [([-1, 1], "max(1 - |xi|, 0)"), ([[-2, -1], [1, 2]], "2 + |xi|")]
WELLS = "min((xi + 1)^2, (xi - 1)^2)"


@pytest.fixture(scope="module")
def ex4():
    return Supremand(EX4, name="boh")


def test_eval_examples(ex4):
    assert ex4.eval([0.5], [0.0]) == 1.0
    assert ex4.eval([1.5], [2.0]) == 4.0
    assert Supremand.homogeneous("|xi|").eval([0.3], [0.0]) == 0.0


def test_eval_batch(ex4):
    vals = ex4.eval(np.array([[0.0], [1.5], [-1.9]]), np.array([[0.5], [-1.0], [3.0]]))
    assert vals.tolist() == [0.5, 3.0, 5.0]


def test_uncovered_point_is_an_error():
    f = Supremand([([0, 1], "|xi|")])
    with pytest.raises(SupremandError, match="not covered"):
        f.eval([1.5], [0.0])


def test_cover_check():
    dom = build_domain([(-2, 2)], 0.1)
    Supremand(EX4).check_cover(dom)
    with pytest.raises(SupremandError, match="not covered"):
        Supremand([([-2, 0], "1")]).check_cover(dom)
    with pytest.raises(SupremandError, match="covered by 2"):
        Supremand([("all", "1"), ([0, 1], "2")]).check_cover(dom)


def test_profile_variables_checked():
    with pytest.raises(SupremandError):
        Supremand.homogeneous("xi2", dim=1)
    with pytest.raises(SupremandError):
        Supremand.homogeneous("x + |xi|", dim=2)


def test_nan_profile_rejected():
    f = Supremand.homogeneous("sqrt(xi)")
    with pytest.raises(SupremandError, match="nan"):
        f.support_function([0.0], 1.0, [1.0])


def test_support_examples(ex4):
    unit = Supremand.homogeneous("|xi|")
    assert unit.support_function([0.0], 2.0, [1.0]) == pytest.approx(2.0, abs=1e-9)
    assert unit.support_function([0.0], 2.0, [-1.0]) == pytest.approx(2.0, abs=1e-9)
    assert ex4.support_function([0.0], 0.5, [1.0]) == math.inf
    assert ex4.support_function([1.5], 3.0, [1.0]) == pytest.approx(1.0, abs=1e-9)
    assert ex4.support_function([1.5], 1.0, [1.0]) == -math.inf


def test_support_2d_ball():
    f = Supremand.homogeneous("|xi|", dim=2, dxi=0.1)
    for t in np.linspace(0, 2 * np.pi, 7):
        d = [math.cos(t), math.sin(t)]
        assert f.support_function([0.0, 0.0], 2.0, d) == pytest.approx(2.0, abs=1e-9)


def test_support_needs_unit_direction():
    with pytest.raises(ValueError, match="unit"):
        Supremand.homogeneous("|xi|").support_function([0.0], 1.0, [2.0])


def test_support_is_attained():
    f = Supremand.homogeneous(WELLS)
    s = f.support_function([0.0], 0.49, [1.0])
    assert f.eval([0.0], [s]) <= 0.49 + 1e-9


@given(st.floats(-3, 3), st.floats(0.01, 4))
def test_support_shifted_parabola_both_directions(a, lam):
    # section of (xi - a)^2 <= lam is [a - sqrt(lam), a + sqrt(lam)]
    f = Supremand.homogeneous("(xi - %r)^2" % a)
    r = math.sqrt(lam)
    assert f.support_function([0.0], lam, [1.0]) == pytest.approx(a + r, abs=1e-6)
    assert f.support_function([0.0], lam, [-1.0]) == pytest.approx(r - a, abs=1e-6)


@given(st.floats(0.5, 2), st.floats(0.5, 2), st.floats(0, 2 * math.pi), st.floats(0.1, 2))
def test_support_ellipse(a, b, t, lam):
    # sup of xi.d over (xi1/a)^2 + (xi2/b)^2 <= lam is sqrt(lam) * |(a d1, b d2)|
    f = Supremand.homogeneous("(xi1 / %r)^2 + (xi2 / %r)^2" % (a, b), dim=2, dxi=0.1, window=5)
    d = np.array([math.cos(t), math.sin(t)])
    want = math.sqrt(lam) * math.hypot(a * d[0], b * d[1])
    got = f.support_function([0.0, 0.0], lam, d)
    assert got <= want + 1e-9
    assert got >= want - 1e-6


@given(st.floats(0, 3), st.floats(0, 3), st.sampled_from([1.0, -1.0]))
def test_support_monotone_in_level(l1, l2, d):
    f = Supremand.homogeneous(WELLS)
    lo, hi = sorted((l1, l2))
    assert f.support_function([0.0], lo, [d]) <= f.support_function([0.0], hi, [d])


def test_section_samples_respect_level():
    f = Supremand.homogeneous(WELLS)
    sec = f.section([0.0], 0.25)
    assert not sec.empty
    assert np.all(f.eval([0.0], sec.samples) <= 0.25 + 1e-12)
    assert f.section([0.0], -0.1).empty


# -- level-convex envelope -----------------------------------------------------


def brute_envelope_1d(vals):
    # for each level, the hull of the sampled sublevel set is [first, last] index
    out = np.full(len(vals), np.inf)
    for lam in sorted(set(vals)):
        idx = np.nonzero(vals <= lam)[0]
        inside = (np.arange(len(vals)) >= idx.min()) & (np.arange(len(vals)) <= idx.max())
        out = np.where(inside & (out == np.inf), lam, out)
    return out


@given(st.lists(st.integers(-5, 5), min_size=1, max_size=25))
def test_envelope_1d_matches_brute_force(values):
    v = np.array(values, dtype=float)
    assert np.array_equal(envelope_1d(v), brute_envelope_1d(v))


def in_hull_lp(points, p):
    # p is a convex combination of points iff this LP is feasible
    n = len(points)
    A = np.vstack([points.T, np.ones(n)])
    res = linprog(np.zeros(n), A_eq=A, b_eq=np.r_[p, 1.0], bounds=[(0, None)] * n, method="highs")
    return res.status == 0


@given(st.lists(st.integers(0, 6), min_size=16, max_size=16))
def test_envelope_hull_matches_lp(values):
    g = np.linspace(-1, 1, 4)
    pts = np.array([(a, b) for a in g for b in g])
    vals = np.array(values, dtype=float)
    got = envelope_hull(pts, vals)
    for k, p in enumerate(pts):
        want = min(lam for lam in sorted(set(vals)) if in_hull_lp(pts[vals <= lam], p))
        assert got[k] == want


def test_envelope_of_convex_profile_unchanged():
    env = Supremand.homogeneous("|xi|").level_convex_envelope([0.0])
    assert np.array_equal(env.flc, env.f)


def test_double_well_envelope():
    f = Supremand.homogeneous(WELLS, dxi=0.01)
    env = f.level_convex_envelope([0.0])
    xi = env.xi[:, 0]
    want = np.maximum(np.abs(xi) - 1, 0) ** 2
    lip = 2 * (f.window - 1)
    assert np.max(np.abs(env.flc - want)) <= 2 * lip * f.dxi
    assert np.array_equal(envelope_1d(env.flc), env.flc)
    assert np.all(env.flc <= env.f)


def test_boh_inner_envelope_is_zero(ex4):
    env = ex4.level_convex_envelope([0.0])
    assert np.all(env.flc == 0.0)
    outer = ex4.level_convex_envelope([1.5])
    assert np.array_equal(outer.flc, outer.f)


@given(st.integers(0, 2000), st.integers(0, 2000), st.floats(0, 1))
def test_envelope_level_convex_on_triples(i, j, theta):
    f = Supremand.homogeneous("min((xi + 1)^2 + 0.3, (xi - 2)^2)", dxi=0.01, window=10)
    env = f.level_convex_envelope([0.0])
    a, b = env.xi[i, 0], env.xi[j, 0]
    mid = theta * a + (1 - theta) * b
    lip = 2 * 12
    assert env(np.array([mid]))[0] <= max(env.flc[i], env.flc[j]) + 2 * lip * f.dxi


def test_envelope_2d_double_well():
    f = Supremand.homogeneous("min(xi1^2 + (xi2 - 1)^2, xi1^2 + (xi2 + 1)^2)", dim=2, dxi=0.25, window=3)
    env = f.level_convex_envelope([0.0, 0.0])
    xi = env.xi
    # segment between the wells gets the value xi1^2 there
    on_axis = (np.abs(xi[:, 1]) <= 1) & (xi[:, 0] == 0)
    assert np.all(env.flc[on_axis] == 0.0)
    assert np.all(env.flc <= env.f)


def test_envelope_csv(tmp_path):
    env = Supremand.homogeneous("|xi|", dxi=0.5, window=1).level_convex_envelope([0.0])
    env.to_csv(tmp_path / "e.csv")
    lines = (tmp_path / "e.csv").read_text().splitlines()
    assert lines == ["xi1,f,flc", "-1.0,1.0,1.0", "-0.5,0.5,0.5", "0.0,0.0,0.0", "0.5,0.5,0.5", "1.0,1.0,1.0"]


# -- combinators ---------------------------------------------------------------


@given(st.floats(-3, 3), st.floats(-1.9, 1.9))
def test_maximum_and_coercive(xi, x):
    f, g = Supremand(EX4), Supremand.homogeneous("xi^2")
    fg = f.maximum(g)
    assert fg.eval([x], [xi]) == max(f.eval([x], [xi]), g.eval([x], [xi]))
    f8 = f.coercive(8)
    assert f8.eval([x], [xi]) == max(f.eval([x], [xi]), abs(xi) / 8)
    assert f8.coercivity == pytest.approx(1 / 8)
    assert f.max_constant(1.5).eval([x], [xi]) == max(f.eval([x], [xi]), 1.5)


def test_coercive_makes_sections_bounded(ex4):
    f4 = ex4.coercive(4)
    # levels with 4*lam inside the gradient window
    for lam in (0.1, 0.5, 2.0):
        assert f4.support_function([0.0], lam, [1.0]) <= 4 * lam + 1e-9


def test_config_round_trip():
    f = Supremand(EX4, coercivity=None, linear_bound=3.0, name="boh")
    g = Supremand.from_config(f.to_config(), 1, name="boh")
    for x in (-1.5, 0.0, 1.2):
        for xi in (-2.0, 0.3):
            assert g.eval([x], [xi]) == f.eval([x], [xi])
    assert g.linear_bound == 3.0


def test_region_parsing():
    r = Region.parse([[-2, -1], [1, 2]], 1)
    assert r.contains(np.array([[-1.5], [0.0], [1.5]])).tolist() == [True, False, True]
    assert Region.parse("all", 2).contains(np.zeros((3, 2))).all()
    assert Region.parse([0, 1], 1).intersect(Region.parse([1, 2], 1)) is None


def test_envelope_interpolation_at_window_edge():
    env = Supremand.homogeneous("|xi|", dxi=0.01, window=10).level_convex_envelope([0.0])
    edge = np.nextafter(-10.0, -np.inf)
    assert env(np.array([edge]))[0] == pytest.approx(10.0)
    assert env(np.array([-10.5]))[0] == np.inf
