import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from supremal.domain import build_domain, estimate_domain_constant, geodesic_distance
from supremal.gridfunc import (
    GridFunction,
    discrete_gradient,
    from_slopes,
    lipschitz_seminorms,
    mcshane_extend,
    sawtooth,
    smooth_field,
    supremal_value,
    zigzag_field,
)
from supremal.supremand import Supremand

LINE = build_domain([(-2, 2)], 0.05)
SQUARE = build_domain([(0, 1), (0, 1)], 0.1)
LSHAPE = build_domain([(0, 2), (0, 2)], 0.1, obstacles=[[[1, 2], [0, 1]]])


def test_gradient_of_constant_and_affine():
    assert np.all(discrete_gradient(GridFunction.constant(SQUARE, 3.0)) == 0)
    g = discrete_gradient(GridFunction.affine(SQUARE, [0.7, -1.3]))
    assert np.allclose(g, [0.7, -1.3], atol=1e-12)


def test_gradient_by_hand():
    dom = build_domain([(0, 1)], 0.25)
    u = GridFunction(dom, [1.0, -2.0, 0.5])
    assert discrete_gradient(u)[:, 0].tolist() == [-12.0, 10.0]


def test_lshape_cells_avoid_obstacle():
    centers = LSHAPE.cells["center"]
    assert not np.any((centers[:, 0] > 1) & (centers[:, 1] < 1))


def test_supremal_value_examples():
    f = Supremand([([-2, 0], "1"), ([0, 2], "3")])
    u = GridFunction.from_expression(LINE, "x^3")
    assert supremal_value(f, u, [[0, 1]]) == 3.0
    assert supremal_value(Supremand.homogeneous("|xi|"), GridFunction.affine(LINE, [-1.7])) == pytest.approx(1.7)
    boh = Supremand([([-1, 1], "max(1 - |xi|, 0)"), ([[-2, -1], [1, 2]], "2 + |xi|")])
    steep = GridFunction.affine(LINE, [1.5]) + sawtooth(LINE, 2, 3.5)
    assert supremal_value(boh, steep, [[-0.9, 0.9]]) == 0.0


def test_supremal_value_needs_a_cell():
    with pytest.raises(ValueError, match="no complete cell"):
        supremal_value(Supremand.homogeneous("|xi|"), GridFunction.constant(LINE), [[0.01, 0.02]])


@given(st.integers(0, 10**6))
def test_join_identity_exact(seed):
    rng = np.random.default_rng(seed)
    f = Supremand([([-2, 0], "(xi - 1)^2"), ([0, 2], "|xi| + x")])
    g = Supremand.homogeneous("max(2 - xi, 0) * 1.5")
    u = zigzag_field(LINE, rng)
    assert supremal_value(f.maximum(g), u) == max(supremal_value(f, u), supremal_value(g, u))


def test_seminorms_affine_convex():
    s = lipschitz_seminorms(GridFunction.affine(SQUARE, [0.6, 0.8]))
    assert s["grad_sup"] == pytest.approx(1.0)
    assert s["lip_euclid"] == pytest.approx(1.0)
    # the graph metric overestimates lengths off the stencil directions
    assert 1.0 / (1 + SQUARE.anisotropy()) - 1e-12 <= s["lip_geodesic"] <= 1.0 + 1e-12


def test_seminorms_constant():
    s = lipschitz_seminorms(GridFunction.constant(LSHAPE, 2.0))
    assert s == {"grad_sup": 0.0, "lip_euclid": 0.0, "lip_geodesic": 0.0}


def test_seminorms_geodesic_distance_field():
    d = geodesic_distance(LSHAPE, LSHAPE.nearest_node((1.9, 1.1))).dist
    s = lipschitz_seminorms(GridFunction(LSHAPE, d))
    assert s["lip_geodesic"] == pytest.approx(1.0)
    assert 1.0 < s["lip_euclid"] <= math.sqrt(2) * (1 + LSHAPE.anisotropy())


@given(st.integers(0, 10**6))
def test_seminorm_ordering(seed):
    u = smooth_field(LSHAPE, np.random.default_rng(seed), wiggle=0.2)
    s = lipschitz_seminorms(u)
    c = estimate_domain_constant(LSHAPE)
    assert s["lip_euclid"] <= c * s["grad_sup"] + 1e-9
    assert abs(s["grad_sup"] - s["lip_geodesic"]) <= 0.09 * s["grad_sup"] + 2 * LSHAPE.h * s["grad_sup"]


def test_mcshane_whole_mask_and_cone():
    u = zigzag_field(LINE, np.random.default_rng(0))
    L = np.max(np.abs(discrete_gradient(u)))
    assert mcshane_extend(u, None, L).values.tolist() == u.values.tolist()
    dom = build_domain([(-1, 1)], 0.1)
    zero = dom.nearest_node([0.0])
    sub = np.zeros(dom.n_nodes, dtype=bool)
    sub[zero] = True
    ext = mcshane_extend(GridFunction.constant(dom), sub, 1.0)
    assert np.allclose(ext.values, np.abs(dom.coords[:, 0]))


def test_mcshane_rejects_small_constant():
    u = GridFunction.affine(LINE, [2.0])
    with pytest.raises(ValueError, match="Lipschitz"):
        mcshane_extend(u, [[-1, 1]], 1.0)


@given(st.integers(0, 10**6))
def test_mcshane_ball_subset(seed):
    rng = np.random.default_rng(seed)
    u = zigzag_field(LINE, rng)
    sub = LINE.region_nodes([[-0.7, 0.9]])
    vals = u.values[sub]
    pts = LINE.coords[sub, 0]
    L = np.max(np.abs(np.diff(vals) / np.diff(pts)))
    ext = mcshane_extend(u, sub, L)
    assert np.array_equal(ext.values[sub], vals)
    q = np.abs(ext.values[:, None] - ext.values[None, :])
    dx = np.abs(LINE.coords[:, 0][:, None] - LINE.coords[:, 0][None, :])
    off = dx > 0
    assert np.max(q[off] / dx[off]) <= L * (1 + 1e-9)


@given(st.integers(0, 10**6))
def test_mcshane_monotone_and_nonexpansive(seed):
    rng = np.random.default_rng(seed)
    sub = LINE.region_nodes([[-1, 1]])
    a = from_slopes(LINE, rng.uniform(-1, 1, LINE.n_nodes - 1))
    b = a + GridFunction(LINE, rng.uniform(0, 0.3, LINE.n_nodes))
    # L = 40 exceeds the Lipschitz constant of every field here on the subset
    ea, eb = mcshane_extend(a, sub, 40.0), mcshane_extend(b, sub, 40.0)
    assert np.all(eb.values >= ea.values - 1e-12)
    c = a + GridFunction(LINE, rng.uniform(-0.2, 0.2, LINE.n_nodes))
    ec = mcshane_extend(c, sub, 40.0)
    assert ec.sup_distance(ea) <= c.sup_distance(a) + 1e-12


@pytest.mark.parametrize("n", [1, 2, 5, 10, 20])
def test_sawtooth(n):
    dom = build_domain([(-2, 2)], 0.0125)
    psi = sawtooth(dom, n, 3.0)
    assert psi.values[dom.nearest_node([0.0])] == 0.0
    assert np.max(np.abs(psi.values)) <= 3.0 / (2 * n) + 1e-12
    assert np.allclose(np.abs(discrete_gradient(psi)), 3.0)
    # odd
    assert np.allclose(psi.values, -psi.values[::-1])


def test_sawtooth_recovery_slopes():
    dom = build_domain([(-2, 2)], 0.0125)
    u = GridFunction.from_expression(dom, "0.8 * sin(x)")
    C = np.max(np.abs(discrete_gradient(u)))
    un = u + sawtooth(dom, 8, C + 1)
    inner = dom.cells_in(dom.region_nodes([[-1, 1]]))
    assert np.all(np.abs(discrete_gradient(un)[inner]) > 1 - 1e-12)


def test_sawtooth_grid_alignment():
    with pytest.raises(ValueError, match="whole number"):
        sawtooth(build_domain([(-2, 2)], 0.03), 4, 1.0)


def test_csv_round_trip(tmp_path):
    u = smooth_field(LSHAPE, np.random.default_rng(3))
    u.to_csv(tmp_path / "u.csv")
    v = GridFunction.from_csv(LSHAPE, tmp_path / "u.csv")
    assert np.array_equal(u.values, v.values)
