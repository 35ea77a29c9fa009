"""Scalar fields on grid nodes, forward-difference gradients and Lipschitz tools."""

import csv
from dataclasses import dataclass

import numpy as np
from scipy.spatial.distance import cdist

from . import expr as ex
from .domain import geodesic_matrix

__all__ = [
    "GridFunction",
    "discrete_gradient",
    "region_mask",
    "supremal_value",
    "lipschitz_seminorms",
    "mcshane_extend",
    "sawtooth",
    "from_slopes",
    "zigzag_field",
    "well_field",
    "smooth_field",
]

_ALL_PAIRS = 2500


@dataclass(frozen=True, eq=False)
class GridFunction:
    """Values of a field on the nodes of ``dom``."""

    dom: object
    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float).reshape(-1)
        if len(v) != self.dom.n_nodes:
            raise ValueError("field has %d values for %d nodes" % (len(v), self.dom.n_nodes))
        if not np.all(np.isfinite(v)):
            raise ValueError("field values must be finite")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @classmethod
    def constant(cls, dom, c=0.0):
        return cls(dom, np.full(dom.n_nodes, float(c)))

    @classmethod
    def affine(cls, dom, slope, offset=0.0):
        """u(x) = slope . x + offset."""
        slope = np.asarray(slope, dtype=float).reshape(dom.dim)
        return cls(dom, dom.coords @ slope + offset)

    @classmethod
    def from_expression(cls, dom, text):
        e = ex.parse(text)
        vals = e(**ex.position_env(dom.coords, dom.dim))
        return cls(dom, np.broadcast_to(vals, (dom.n_nodes,)))

    @classmethod
    def from_csv(cls, dom, path):
        """Read a field written by :meth:`to_csv`; rows are matched to nodes by position."""
        with open(path, newline="") as fh:
            rows = list(csv.reader(fh))
        if not rows:
            raise ValueError("%s is empty" % path)
        data = np.array(rows[1:], dtype=float)
        if data.ndim != 2 or data.shape[1] != dom.dim + 1:
            raise ValueError("%s: expected %d columns" % (path, dom.dim + 1))
        values = np.full(dom.n_nodes, np.nan)
        for row in data:
            k = dom.nearest_node(row[:-1])
            if np.linalg.norm(dom.coords[k] - row[:-1]) > 1e-6 * dom.h:
                raise ValueError("%s: point %s is not a grid node" % (path, row[:-1].tolist()))
            values[k] = row[-1]
        if np.any(np.isnan(values)):
            raise ValueError("%s does not cover every node" % path)
        return cls(dom, values)

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["x%d" % (k + 1) for k in range(self.dom.dim)] + ["u"])
            for p, v in zip(self.dom.coords, self.values):
                w.writerow([repr(float(c)) for c in p] + [repr(float(v))])

    def __add__(self, other):
        other = other.values if isinstance(other, GridFunction) else other
        return GridFunction(self.dom, self.values + other)

    __radd__ = __add__

    def __sub__(self, other):
        other = other.values if isinstance(other, GridFunction) else other
        return GridFunction(self.dom, self.values - other)

    def __mul__(self, c):
        return GridFunction(self.dom, self.values * float(c))

    __rmul__ = __mul__

    def __neg__(self):
        return GridFunction(self.dom, -self.values)

    def blend(self, other, theta):
        """theta*self + (1-theta)*other."""
        return GridFunction(self.dom, theta * self.values + (1.0 - theta) * other.values)

    def sup_distance(self, other):
        return float(np.max(np.abs(self.values - other.values)))


def discrete_gradient(u):
    """Forward-difference gradient on every cell, shape (n_cells, dim)."""
    c = u.dom.cells
    v = u.values
    return (v[c["forward"]] - v[c["base"]][:, None]) / u.dom.h


def region_mask(dom, region):
    """Node mask for ``region``: None (whole domain), a boolean mask or open boxes."""
    if region is None:
        return np.ones(dom.n_nodes, dtype=bool)
    arr = np.asarray(region) if not isinstance(region, (list, tuple)) else None
    if arr is not None and arr.dtype == bool:
        if arr.shape != (dom.n_nodes,):
            raise ValueError("node mask has the wrong length")
        return arr
    return dom.region_nodes(region)


def supremal_value(f, u, region=None):
    """max over cells of ``region`` of f(cell centre, gradient).

    ``region`` may be a node mask or a list of open boxes; a cell belongs to it
    when all its stencil nodes do.
    """
    cells = u.dom.cells_in(region_mask(u.dom, region))
    if not cells.any():
        raise ValueError("region contains no complete cell")
    grad = discrete_gradient(u)[cells]
    centers = u.dom.cells["center"][cells]
    return float(np.max(f.eval(centers, grad)))


def _pairs_rows(n, seed):
    if n <= _ALL_PAIRS:
        return np.arange(n)
    k = max(1, -(-100_000 // n))
    return np.sort(np.random.default_rng(seed).choice(n, size=min(k, n), replace=False))


def lipschitz_seminorms(u, seed=0):
    """Largest cell gradient norm and Lipschitz quotients for both metrics.

    Returns a dict with ``grad_sup``, ``lip_euclid`` and ``lip_geodesic``.
    All pairs are used up to 2500 nodes; beyond that about 1e5 pairs from
    random source rows (fixed ``seed``).
    """
    dom = u.dom
    grad = discrete_gradient(u)
    grad_sup = float(np.max(np.linalg.norm(grad, axis=1))) if len(grad) else 0.0
    rows = _pairs_rows(dom.n_nodes, seed)
    diff = np.abs(u.values[rows][:, None] - u.values[None, :])
    eu = cdist(dom.coords[rows], dom.coords)
    geo = geodesic_matrix(dom, rows)
    off = eu > 0
    lip_e = float(np.max(diff[off] / eu[off])) if off.any() else 0.0
    lip_g = float(np.max(diff[off] / geo[off])) if off.any() else 0.0
    return {"grad_sup": grad_sup, "lip_euclid": lip_e, "lip_geodesic": lip_g}


def mcshane_extend(u, sub, L):
    """Largest L-Lipschitz (euclidean) function agreeing with ``u`` on ``sub``.

    Raises ``ValueError`` when ``u`` restricted to ``sub`` is not L-Lipschitz.
    """
    dom = u.dom
    sub = region_mask(dom, sub)
    if not sub.any():
        raise ValueError("empty subset")
    pts = dom.coords[sub]
    vals = u.values[sub]
    eu = cdist(pts, pts)
    off = eu > 0
    if off.any():
        lip = np.max(np.abs(vals[:, None] - vals[None, :])[off] / eu[off])
        if lip > L * (1 + 1e-12) + 1e-12:
            raise ValueError("u is %.6g-Lipschitz on the subset, above L=%g" % (lip, L))
    ext = np.min(vals[:, None] + L * cdist(pts, dom.coords), axis=0)
    ext[sub] = vals
    return GridFunction(dom, ext)


def sawtooth(dom, n, slope, center=0.0):
    """Odd zigzag about ``center`` with slopes +-slope on intervals of width 1/(2n).

    The slope is +slope next to the centre on both sides.  Breakpoints must be
    grid nodes, so 1/(2n) has to be a whole number of steps and ``center`` a
    node position.
    """
    if dom.dim != 1:
        raise ValueError("sawtooth is defined on 1-D domains")
    if n < 1 or not slope > 0:
        raise ValueError("need n >= 1 and slope > 0")
    half = 1.0 / (2 * n)
    steps = half / dom.h
    if abs(steps - round(steps)) > 1e-6 or round(steps) < 1:
        raise ValueError("1/(2n)=%g is not a whole number of steps h=%g" % (half, dom.h))
    shift = (center - dom.origin[0]) / dom.h
    if abs(shift - round(shift)) > 1e-6:
        raise ValueError("center %g is not on the grid" % center)
    t = dom.coords[:, 0] - center
    period = 2 * half
    r = np.abs(t) % period
    tri = np.minimum(r, period - r)
    return GridFunction(dom, np.sign(t) * slope * tri)


def from_slopes(dom, slopes, start=0.0):
    """1-D field with the given per-cell slopes and value ``start`` at the first node."""
    if dom.dim != 1:
        raise ValueError("slope integration is for 1-D domains")
    slopes = np.asarray(slopes, dtype=float)
    if len(slopes) != dom.n_nodes - 1:
        raise ValueError("need %d slopes" % (dom.n_nodes - 1))
    return GridFunction(dom, start + dom.h * np.concatenate([[0.0], np.cumsum(slopes)]))


def zigzag_field(dom, rng, tilt=(-0.5, 0.5), swing=(0.5, 2.5)):
    """1-D field with cell slopes t + s*sign_c (t, s uniform; signs random)."""
    t = rng.uniform(*tilt)
    s = rng.uniform(*swing)
    signs = rng.choice([-1.0, 1.0], size=dom.n_nodes - 1)
    return from_slopes(dom, t + s * signs, start=rng.normal())


def well_field(dom, rng, low=0.5, high=1.5):
    """1-D field whose cell slopes are +-s_c with s_c uniform in [low, high]."""
    signs = rng.choice([-1.0, 1.0], size=dom.n_nodes - 1)
    return from_slopes(dom, signs * rng.uniform(low, high, size=dom.n_nodes - 1), start=rng.normal())


def smooth_field(dom, rng, slope_scale=1.0, wiggle=0.05, modes=3):
    """Affine field plus a few low-frequency sine modes of small amplitude."""
    xi = rng.normal(size=dom.dim)
    xi *= slope_scale / max(np.linalg.norm(xi), 1e-12)
    vals = dom.coords @ xi
    for _ in range(modes):
        k = rng.normal(size=dom.dim) * 2.0
        vals = vals + wiggle * np.sin(dom.coords @ k + rng.uniform(0, 2 * np.pi))
    return GridFunction(dom, vals)
