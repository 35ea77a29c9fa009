"""Sublevel pseudo-distances d(x, y) = sup{u(x) - u(y) : F(u) <= lam}.

The admissible set is relaxed to the difference constraints

    u(b) - u(a) <= w(a -> b) = sigma(midpoint, lam, e_ab) * |b - a|

over directed stencil edges, where sigma is the support function of the
sublevel section.  d(., y) is then the shortest-path distance from y.  On
1-D grids every edge is a cell and the constraints are exactly "each cell
gradient lies in the convex hull of its section".
"""

import csv
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import linprog
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import NegativeCycleError, shortest_path

from .domain import _node, geodesic_matrix
from .gridfunc import region_mask

__all__ = [
    "EdgeWeights",
    "PseudoDistanceField",
    "DistanceMatrix",
    "SandwichReport",
    "edge_weights",
    "pseudo_distance_fast",
    "pseudo_distance_oracle",
    "pseudo_distance_lp",
    "search_lower_bound",
    "distance_matrix",
    "sandwich_check",
]


@dataclass(frozen=True)
class EdgeWeights:
    """Constraint bounds on the directed edges inside a node region."""

    lam: float
    src: np.ndarray
    dst: np.ndarray
    weight: np.ndarray
    nodes: np.ndarray
    empty: bool

    def graph(self, n):
        keep = np.isfinite(self.weight)
        return csr_matrix((self.weight[keep], (self.src[keep], self.dst[keep])), shape=(n, n))


def edge_weights(f, dom, lam, region=None):
    """Edge bounds at level ``lam``; ``empty`` is set when some section is empty."""
    nodes = region_mask(dom, region)
    e = dom.edges
    keep = nodes[e["src"]] & nodes[e["dst"]]
    sig = f.support_many(e["midpoint"][keep], lam, e["direction"][keep])
    with np.errstate(invalid="ignore"):
        w = sig * e["length"][keep]
    return EdgeWeights(
        lam=float(lam),
        src=e["src"][keep],
        dst=e["dst"][keep],
        weight=w,
        nodes=nodes,
        empty=bool(np.any(sig == -math.inf)),
    )


@dataclass
class PseudoDistanceField:
    """d(x, source) for every node x; ``empty`` marks a level with no admissible field."""

    lam: float
    source: int
    dist: np.ndarray
    method: str
    empty: bool = False
    diagnostic: str = ""

    def to_csv(self, path, dom):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            xs = ["x%d" % (k + 1) for k in range(dom.dim)]
            ys = ["y%d" % (k + 1) for k in range(dom.dim)]
            w.writerow(xs + ys + ["lambda", "d", "method"])
            y = [repr(float(c)) for c in dom.coords[self.source]]
            for p, d in zip(dom.coords, self.dist):
                w.writerow([repr(float(c)) for c in p] + y + [repr(self.lam), repr(float(d)), self.method])


def _empty_field(dom, lam, source, method, why):
    return PseudoDistanceField(lam, source, np.full(dom.n_nodes, -math.inf), method, True, why)


def _shortest(graph, sources, negative):
    return shortest_path(graph, method="J" if negative else "D", directed=True, indices=sources)


def pseudo_distance_fast(f, dom, lam, source, region=None, weights=None):
    """Single-source values by Dijkstra (Johnson when some bound is negative)."""
    y = _node(dom, source)
    w = weights if weights is not None else edge_weights(f, dom, lam, region)
    if not w.nodes[y]:
        raise ValueError("source node %d is outside the region" % y)
    if w.empty:
        return _empty_field(dom, lam, y, "fast", "empty sublevel section")
    finite = w.weight[np.isfinite(w.weight)]
    try:
        dist = _shortest(w.graph(dom.n_nodes), y, bool(np.any(finite < 0)))
    except NegativeCycleError:
        return _empty_field(dom, lam, y, "fast", "inconsistent constraints (negative cycle)")
    dist[~w.nodes] = np.nan
    return PseudoDistanceField(float(lam), y, dist, "fast")


def pseudo_distance_oracle(f, dom, lam, source, region=None, weights=None, max_sweeps=None):
    """Label-correcting fixed point over the difference constraints.

    Relaxes every edge simultaneously until nothing changes; a change after
    n sweeps means a negative cycle, reported as an empty level.
    """
    y = _node(dom, source)
    w = weights if weights is not None else edge_weights(f, dom, lam, region)
    if w.empty:
        return _empty_field(dom, lam, y, "oracle", "empty sublevel section")
    keep = np.isfinite(w.weight)
    src, dst, wt = w.src[keep], w.dst[keep], w.weight[keep]
    dist = np.full(dom.n_nodes, math.inf)
    dist[y] = 0.0
    sweeps = max_sweeps or dom.n_nodes + 1
    for _ in range(sweeps):
        cand = dist[src] + wt
        new = dist.copy()
        np.minimum.at(new, dst, cand)
        if np.array_equal(new, dist):
            break
        dist = new
    else:
        return _empty_field(dom, lam, y, "oracle", "inconsistent constraints (negative cycle)")
    dist[~w.nodes] = np.nan
    return PseudoDistanceField(float(lam), y, dist, "oracle")


def pseudo_distance_lp(f, dom, lam, source, target, region=None):
    """max u(target) - u(source) under the edge constraints, by linear programming.

    Returns ``inf`` when unbounded and ``-inf`` when infeasible.
    """
    y = _node(dom, source)
    x = _node(dom, target)
    w = edge_weights(f, dom, lam, region)
    if w.empty:
        return -math.inf
    keep = np.isfinite(w.weight)
    n = dom.n_nodes
    m = int(keep.sum())
    A = csr_matrix(
        (np.r_[np.ones(m), -np.ones(m)], (np.r_[np.arange(m), np.arange(m)], np.r_[w.dst[keep], w.src[keep]])),
        shape=(m, n),
    )
    c = np.zeros(n)
    c[x] = -1.0
    bounds = [(None, None)] * n
    bounds[y] = (0.0, 0.0)
    res = linprog(c, A_ub=A, b_ub=w.weight[keep], bounds=bounds, method="highs")
    if res.status == 3:
        return math.inf
    if res.status == 2:
        return -math.inf
    if res.status != 0:
        raise RuntimeError("linear program failed: %s" % res.message)
    return float(-res.fun)


def search_lower_bound(f, dom, lam, source, target, rng, rounds=2000):
    """Best u(target) - u(source) found by random search over admissible 1-D fields.

    Fields are parametrised by their cell slopes; each slope is drawn from
    the sampled section of its cell, so every visited field satisfies
    F(u) <= lam exactly.  The result is a lower bound for d(target, source).
    """
    if dom.dim != 1:
        raise ValueError("the admissible-field search is implemented for 1-D grids")
    y = _node(dom, source)
    x = _node(dom, target)
    centers = dom.cells["center"]
    sections = []
    for c in centers:
        s = f.section(c, lam).samples[:, 0]
        if len(s) == 0:
            return -math.inf
        sections.append(s)
    lo, hi = min(x, y), max(x, y)
    sign = 1.0 if x > y else -1.0
    # cells between the two nodes; the rest do not affect the objective
    between = range(lo, hi)
    slopes = np.array([s[np.argmin(np.abs(s))] for s in sections])

    def objective(sl):
        return sign * dom.h * float(np.sum(sl[lo:hi]))

    best = objective(slopes)
    for _ in range(rounds):
        if hi == lo:
            break
        c = int(rng.choice(list(between)))
        trial = slopes.copy()
        trial[c] = rng.choice(sections[c])
        val = objective(trial)
        if val >= best:
            slopes, best = trial, val
    # admissibility is by construction; confirm it against f itself
    assert np.all(f.eval(centers, slopes.reshape(-1, 1)) <= lam + 1e-12)
    return best


@dataclass
class DistanceMatrix:
    """Rows ``values[i, x] = d(x, sources[i])`` at one level."""

    lam: float
    sources: np.ndarray
    values: np.ndarray
    nodes: np.ndarray
    empty: bool = False
    diagnostic: str = ""
    extra: dict = field(default_factory=dict)


def distance_matrix(f, dom, lam, sources=None, region=None, method="fast"):
    """d(., y) for each y in ``sources`` (all region nodes by default)."""
    w = edge_weights(f, dom, lam, region)
    nodes = w.nodes
    if sources is None:
        sources = np.nonzero(nodes)[0]
    sources = np.asarray(sources, dtype=np.int64)
    if w.empty:
        vals = np.full((len(sources), dom.n_nodes), -math.inf)
        return DistanceMatrix(float(lam), sources, vals, nodes, True, "empty sublevel section")
    if method == "oracle":
        rows = [pseudo_distance_oracle(f, dom, lam, int(s), weights=w) for s in sources]
        if any(r.empty for r in rows):
            vals = np.full((len(sources), dom.n_nodes), -math.inf)
            return DistanceMatrix(float(lam), sources, vals, nodes, True, rows[0].diagnostic)
        vals = np.vstack([r.dist for r in rows])
    elif method == "fast":
        finite = w.weight[np.isfinite(w.weight)]
        try:
            vals = _shortest(w.graph(dom.n_nodes), sources, bool(np.any(finite < 0)))
        except NegativeCycleError:
            vals = np.full((len(sources), dom.n_nodes), -math.inf)
            return DistanceMatrix(float(lam), sources, vals, nodes, True, "negative cycle")
        vals = np.atleast_2d(vals)
    else:
        raise ValueError("method must be 'fast' or 'oracle'")
    vals[:, ~nodes] = np.nan
    return DistanceMatrix(float(lam), sources, vals, nodes)


@dataclass
class SandwichReport:
    ok: bool
    lower_coeff: float
    upper_coeff: float
    worst_lower: float
    worst_upper: float
    worst_lower_pair: tuple
    worst_upper_pair: tuple

    def __str__(self):
        return "%s: lower slack %.3g at %s, upper slack %.3g at %s" % (
            "ok" if self.ok else "VIOLATED",
            self.worst_lower, self.worst_lower_pair, self.worst_upper, self.worst_upper_pair)


def sandwich_check(dmat, dom, lower_coeff, upper_coeff, tol=None):
    """Check lower*|x-y| <= d(x,y) <= upper*|x-y|_geo for every computed pair.

    Slack is measured as (violation amount); a pair passes when it is within
    ``coeff * (anisotropy*|x-y| + 2h)`` of the bound unless ``tol`` is given.
    """
    from scipy.spatial.distance import cdist

    src = dmat.sources
    eu = cdist(dom.coords[src], dom.coords)
    geo = geodesic_matrix(dom, src)
    d = dmat.values
    valid = dmat.nodes[None, :] & np.isfinite(geo) & ~np.isnan(d)
    aniso = dom.anisotropy()
    if tol is None:
        tol_lo = lower_coeff * (aniso * eu + 2 * dom.h)
        tol_hi = upper_coeff * (aniso * eu + 2 * dom.h)
    else:
        tol_lo = tol_hi = np.full(eu.shape, float(tol))
    with np.errstate(invalid="ignore"):
        low = np.where(valid, lower_coeff * eu - d - tol_lo, -np.inf)
        up = np.where(valid, d - upper_coeff * geo - tol_hi, -np.inf)
    i, j = np.unravel_index(np.argmax(low), low.shape)
    k, m = np.unravel_index(np.argmax(up), up.shape)

    def pair(r, c):
        return (tuple(np.round(dom.coords[c], 9).tolist()), tuple(np.round(dom.coords[src[r]], 9).tolist()))

    return SandwichReport(
        ok=bool(low.max() <= 0 and up.max() <= 0),
        lower_coeff=lower_coeff,
        upper_coeff=upper_coeff,
        worst_lower=float(low.max() + tol_lo[i, j]),
        worst_upper=float(up.max() + tol_hi[k, m]),
        worst_lower_pair=pair(i, j),
        worst_upper_pair=pair(k, m),
    )
