"""Level-convex representation supremand and localized relaxed supremands.

``representation_supremand`` bounds phi(x, xi) = inf{F(u) : Du(x) = xi}
from above by searching competitor fields whose gradient on the cell at x
is xi.  On 1-D grids the cellwise competitor (xi on the chosen cell, a
minimiser of f elsewhere) is optimal, so the search is exact there.
"""

import csv
from dataclasses import dataclass, field

import numpy as np

from .gridfunc import GridFunction, discrete_gradient, region_mask, supremal_value
from .relaxation import relax_value

__all__ = [
    "cell_at",
    "cell_minima",
    "representation_supremand",
    "RepresentationTable",
    "representation_table",
    "LocalizedRow",
    "localized_relaxed_supremand",
]


def cell_at(dom, x):
    """Index of the cell whose centre is closest to ``x``."""
    x = np.asarray(x, dtype=float).reshape(dom.dim)
    return int(np.argmin(np.sum((dom.cells["center"] - x) ** 2, axis=1)))


def cell_minima(f, dom):
    """Sampled minimum of f(centre, .) for every cell."""
    return np.array([f.min_value(p) for p in dom.cells["center"]])


def _cellwise_value(f, dom, c, xi, minima=None):
    # 1-D: slopes are independent, so pick xi on cell c and a minimiser elsewhere
    minima = cell_minima(f, dom) if minima is None else minima
    others = np.delete(minima, c)
    rest = float(others.max()) if len(others) else -np.inf
    return max(float(f.eval(dom.cells["center"][c], xi)), rest)


def _cone_competitors(f, dom, c, xi, budget, rng):
    """Fields equal to the affine field near cell c, glued to a flat field elsewhere."""
    base_node = dom.cells["base"][c]
    z0 = dom.coords[base_node]
    affine = dom.coords @ xi - z0 @ xi
    dist = np.linalg.norm(dom.coords - z0, axis=1)
    stencil = np.r_[base_node, dom.cells["forward"][c]]
    r_min = float(dist[stencil].max()) + 1e-9
    best = np.inf
    for _ in range(budget):
        L = rng.uniform(0.0, 2.0) * max(1.0, np.linalg.norm(xi))
        r = r_min + rng.uniform(0.0, 4.0) * dom.h
        # clip the affine field to a cone of slope L that vanishes beyond r
        cap = np.maximum(r - L * np.maximum(dist - r_min, 0.0), 0.0) if L > 0 else np.full(len(dist), r)
        vals = np.clip(affine, -cap, cap)
        vals[stencil] = affine[stencil]
        u = GridFunction(dom, vals)
        g = discrete_gradient(u)[c]
        if np.allclose(g, xi, atol=1e-9):
            best = min(best, supremal_value(f, u))
    return best


def representation_supremand(f, dom, x, xi, budget=200, seed=0, detail=False, minima=None):
    """Smallest F(u) found over competitors with gradient ``xi`` on the cell at ``x``.

    Families: the affine field, the cellwise field (1-D) and ``budget`` cone
    clips of the affine field.  With ``detail`` a dict of per-family values
    is returned as well.
    """
    xi = np.asarray(xi, dtype=float).reshape(dom.dim)
    c = cell_at(dom, x)
    values = {"affine": supremal_value(f, GridFunction.affine(dom, xi))}
    if dom.dim == 1:
        values["cellwise"] = _cellwise_value(f, dom, c, xi, minima)
    if budget > 0:
        values["cone"] = _cone_competitors(f, dom, c, xi, budget, np.random.default_rng(seed))
    best = min(values.values())
    return (best, values) if detail else best


@dataclass
class RepresentationTable:
    x: np.ndarray
    xi: np.ndarray
    f: np.ndarray
    phi: np.ndarray
    g: np.ndarray
    above: np.ndarray = field(default=None)

    def __post_init__(self):
        if self.above is None:
            self.above = self.phi > self.f + 1e-12

    def to_csv(self, path):
        dim = self.x.shape[1]
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["x%d" % (k + 1) for k in range(dim)] + ["xi%d" % (k + 1) for k in range(dim)]
                       + ["f", "phi", "g"])
            for p, q, a, b, c in zip(self.x, self.xi, self.f, self.phi, self.g):
                w.writerow([repr(float(v)) for v in p] + [repr(float(v)) for v in q]
                           + [repr(float(a)), repr(float(b)), repr(float(c))])


def representation_table(f, dom, xs, xis, budget=200, seed=0):
    """phi, f and the level-convex envelope g of f(x, .) on a grid of (x, xi)."""
    rows_x, rows_xi, fv, phi, gv = [], [], [], [], []
    for x in xs:
        x = np.asarray(x, dtype=float).reshape(dom.dim)
        center = dom.cells["center"][cell_at(dom, x)]
        env = f.level_convex_envelope(center)
        for xi in xis:
            xi = np.asarray(xi, dtype=float).reshape(dom.dim)
            rows_x.append(x)
            rows_xi.append(xi)
            fv.append(float(f.eval(center, xi)))
            phi.append(representation_supremand(f, dom, x, xi, budget=budget, seed=seed))
            gv.append(float(env(xi.reshape(1, -1))[0]))
    return RepresentationTable(np.array(rows_x), np.array(rows_xi), np.array(fv), np.array(phi), np.array(gv))


@dataclass
class LocalizedRow:
    region: object
    probe: int
    relaxed: float
    predicted: float
    phi_bound: float
    bracket: tuple

    @property
    def residual(self):
        return abs(self.relaxed - self.predicted)


def localized_relaxed_supremand(f, dom, regions, probes, tol=1e-4, phi_budget=0):
    """Relaxed values G(u, A) against ess sup_A g(x, Du), g the cellwise envelope.

    For each region and probe field this records the bisection value, the
    prediction max over cells of A of f^lc(cell, Du) and, as a reference,
    max over cells of A of phi(cell, Du) (with the cellwise competitor, 1-D).
    """
    centers = dom.cells["center"]
    minima = cell_minima(f, dom) if dom.dim == 1 else None
    envelopes = {}
    rows = []
    for region in regions:
        mask = region_mask(dom, region)
        cells = np.nonzero(dom.cells_in(mask))[0]
        if len(cells) == 0:
            raise ValueError("region %r contains no cell" % (region,))
        for k, u in enumerate(probes):
            grad = discrete_gradient(u)
            pred, phi = -np.inf, -np.inf
            for c in cells:
                piece = int(f.piece_index(centers[c])[0])
                xkey = tuple(np.round(centers[c], 12)) if f.pieces[piece].x_dependent else None
                key = (piece, xkey)
                if key not in envelopes:
                    envelopes[key] = f.level_convex_envelope(centers[c])
                pred = max(pred, float(envelopes[key](grad[c].reshape(1, -1))[0]))
                if dom.dim == 1:
                    phi = max(phi, representation_supremand(f, dom, centers[c], grad[c], budget=phi_budget,
                                                            minima=minima))
            res = relax_value(f, u, tol=tol, region=mask)
            rows.append(LocalizedRow(region, k, res.value, pred, phi, res.bracket))
    return rows
