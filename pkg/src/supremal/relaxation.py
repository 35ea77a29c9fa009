"""Relaxed envelopes through difference quotients, and lattice/limit checks.

The relaxed value at u is the infimal level mu for which u has difference
quotient at most 1 with respect to d at every level above mu:

    relax(u) <= mu  iff  R_{mu+eps}(u) <= 1 for all eps > 0,
    R_lam(u) = max{(u(x) - u(y)) / d_lam(x, y) : d_lam(x, y) > 0}.

It is found by bisection on mu.
"""

import math
from dataclasses import dataclass, field

import numpy as np

from .distance import distance_matrix
from .gridfunc import discrete_gradient, region_mask, supremal_value

__all__ = [
    "difference_quotient",
    "EnvelopeResult",
    "relax_value",
    "relaxed_functional",
    "coercive_approximation",
    "check_max_identity",
    "check_max_constant",
    "meet_locality",
    "level_convexity_test",
    "LevelConvexityReport",
    "monotone_gamma_limit",
    "min_level",
]

_PAIR_CAP = 2500


def difference_quotient(dmat, u, detail=False):
    """Largest (u(x) - u(y)) / d(x, y) over computed pairs with 0 < d < inf.

    Pairs at infinite distance impose nothing and are skipped; with no
    surviving pair the value is 0.  With ``detail`` the maximising pair is
    returned too (``None`` when there is none).
    """
    d = dmat.values
    du = u.values[None, :] - u.values[dmat.sources][:, None]
    with np.errstate(invalid="ignore"):
        ok = dmat.nodes[None, :] & (d > 0) & np.isfinite(d)
    if not ok.any():
        return (0.0, None) if detail else 0.0
    q = np.where(ok, du / np.where(ok, d, 1.0), -np.inf)
    i, j = np.unravel_index(np.argmax(q), q.shape)
    val = max(0.0, float(q[i, j]))
    return (val, (int(j), int(dmat.sources[i]))) if detail else val


@dataclass
class EnvelopeResult:
    """Bisection outcome: value is the midpoint of the final bracket."""

    value: float
    bracket: tuple
    eps: float
    probes: list = field(default_factory=list)
    diagnostics: list = field(default_factory=list)
    converged: bool = True

    @property
    def monotone(self):
        return "non-monotone predicate" not in " ".join(self.diagnostics)


def min_level(f, dom, region=None):
    """Largest over cells of the sampled minimum of f(cell, .), a lower bound for relax."""
    cells = dom.cells_in(region_mask(dom, region))
    centers = dom.cells["center"][cells]
    return max(f.min_value(c) for c in centers)


def _sources(dom, nodes, seed):
    idx = np.nonzero(nodes)[0]
    if len(idx) <= _PAIR_CAP:
        return idx
    k = max(1, -(-100_000 // len(idx)))
    return np.sort(np.random.default_rng(seed).choice(idx, size=min(k, len(idx)), replace=False))


def relax_value(f, u, eps=None, bracket=None, tol=1e-4, region=None, seed=0, max_probes=200):
    """Relaxed value of the supremal functional of ``f`` at ``u``.

    Bisects mu over ``bracket`` (default: [min level - tol, F(u) + tol]) on
    the predicate R_{mu+eps}(u) <= 1.  ``eps`` defaults to a quarter of the
    current bracket width and is capped by the user value when given.  A
    true probe moves the upper end to mu + eps, a false probe moves the lower
    end to mu, so the bracket always contains the relaxed value.
    """
    dom = u.dom
    nodes = region_mask(dom, region)
    sources = _sources(dom, nodes, seed)
    diagnostics = []
    if bracket is None:
        lo = min_level(f, dom, nodes) - tol
        hi = supremal_value(f, u, nodes) + tol
    else:
        lo, hi = map(float, bracket)
        if not lo < hi:
            raise ValueError("bracket must satisfy lo < hi")
    if eps is not None and not eps > 0:
        raise ValueError("eps must be positive")
    probes = []

    def predicate(mu):
        dmat = distance_matrix(f, dom, mu, sources=sources, region=nodes)
        if dmat.empty:
            diagnostics.append("empty level at %.6g (%s)" % (mu, dmat.diagnostic))
            probes.append((mu, math.inf, False))
            return False
        r = difference_quotient(dmat, u)
        ok = r <= 1.0 + 1e-12
        probes.append((mu, r, ok))
        return ok

    if not predicate(hi):
        diagnostics.append("no level with R <= 1 in bracket; upper end %.6g returned" % hi)
        return EnvelopeResult(hi, (lo, hi), 0.0, probes, diagnostics, converged=False)
    used = 0.0
    while hi - lo > tol and len(probes) < max_probes:
        width = hi - lo
        step = width / 4.0 if eps is None else min(eps, width / 4.0)
        mid = lo + width / 2.0
        used = step
        if predicate(mid + step):
            hi = min(hi, mid + step)
        else:
            lo = mid
    converged = hi - lo <= tol
    trues = [p[0] for p in probes if p[2]]
    falses = [p[0] for p in probes if not p[2]]
    if trues and falses and min(trues) < max(falses) - 1e-12:
        diagnostics.append("non-monotone predicate: true at %.6g but false at %.6g" % (min(trues), max(falses)))
    return EnvelopeResult(0.5 * (lo + hi), (lo, hi), used, probes, diagnostics, converged)


def relaxed_functional(f, **kw):
    """u -> relax_value(f, u).value, with keyword arguments forwarded."""
    return lambda u: relax_value(f, u, **kw).value


def coercive_approximation(f, n):
    """Supremand f v |xi|/n."""
    return f.coercive(n)


# -- lattice identities -----------------------------------------------------


def check_max_identity(f, g, fields, region=None):
    """Worst |F v G (u) - max(F(u), G(u))| over ``fields`` (exact arithmetic expected)."""
    fg = f.maximum(g)
    worst = 0.0
    for u in fields:
        lhs = supremal_value(fg, u, region)
        rhs = max(supremal_value(f, u, region), supremal_value(g, u, region))
        worst = max(worst, abs(lhs - rhs))
    return worst


def check_max_constant(f, c, fields, tol=1e-4, region=None):
    """Rows (relax(F v c)(u), max(relax(F)(u), c)) for each field."""
    fc = f.max_constant(c)
    rows = []
    for u in fields:
        lhs = relax_value(fc, u, tol=tol, region=region).value
        rhs = max(relax_value(f, u, tol=tol, region=region).value, c)
        rows.append((lhs, rhs))
    return rows


def meet_locality(f, g, u, parts):
    """Compare (F ^ G) on a union of open sets with the max over the parts.

    Returns ``(union_value, max_of_parts)``; a supremal functional would make
    them equal.
    """
    dom = u.dom
    masks = [region_mask(dom, p) for p in parts]
    union = np.logical_or.reduce(masks)

    def meet(mask):
        return min(supremal_value(f, u, mask), supremal_value(g, u, mask))

    return meet(union), max(meet(m) for m in masks)


# -- level convexity and monotone limits ------------------------------------


@dataclass
class LevelConvexityReport:
    ok: bool
    worst: float
    witness: tuple
    checked: int
    violations: int

    def __str__(self):
        if self.ok:
            return "level convex on %d samples (worst excess %.3g)" % (self.checked, self.worst)
        return "%d/%d violations, worst excess %.3g at theta=%g" % (
            self.violations, self.checked, self.worst, self.witness[2])


def level_convexity_test(value, pairs, thetas=(0.1, 0.3, 0.5, 0.7, 0.9), tol=1e-3):
    """Check value(theta*u + (1-theta)*v) <= max(value(u), value(v)) + tol.

    ``witness`` holds the (u, v, theta) with the largest excess.
    """
    worst, witness, checked, bad = -math.inf, None, 0, 0
    for u, v in pairs:
        vu, vv = value(u), value(v)
        for t in thetas:
            excess = value(u.blend(v, t)) - max(vu, vv)
            checked += 1
            if excess > tol:
                bad += 1
            if excess > worst:
                worst, witness = excess, (u, v, t)
    return LevelConvexityReport(bad == 0, worst, witness, checked, bad)


def monotone_gamma_limit(f, ns, fields, tol=1e-4, limit_tol=None):
    """Relaxations of the coercive approximations along increasing ``ns``.

    Returns a dict with the table ``relax_n[i][k]`` (field i, index k),
    ``limit`` (relax of f itself), ``decreasing`` and the largest gap between
    the last approximation and the limit.  Raises ``ValueError`` if the
    approximations themselves are not decreasing on the samples.
    """
    ns = list(ns)
    if ns != sorted(ns):
        raise ValueError("ns must be increasing")
    approx = [f.coercive(n) for n in ns]
    for u in fields:
        vals = [supremal_value(a, u) for a in approx]
        if any(b > a + 1e-12 for a, b in zip(vals, vals[1:])):
            raise ValueError("approximating sequence is not decreasing on the samples")
    table, limit = [], []
    for u in fields:
        table.append([relax_value(a, u, tol=tol).value for a in approx])
        limit.append(relax_value(f, u, tol=tol).value)
    slack = 2 * tol
    decreasing = all(b <= a + slack for row in table for a, b in zip(row, row[1:]))
    gaps = [abs(row[-1] - lim) for row, lim in zip(table, limit)]
    out = {"ns": ns, "relax_n": table, "limit": limit, "decreasing": decreasing, "gap": max(gaps) if gaps else 0.0}
    if limit_tol is not None:
        out["ok"] = decreasing and out["gap"] <= limit_tol
    return out


def lipschitz_1d(u):
    """Largest absolute cell slope of a 1-D field."""
    return float(np.max(np.abs(discrete_gradient(u))))
