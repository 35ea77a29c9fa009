"""Piecewise supremands f(x, xi) and queries on their sublevel sections.

A supremand is a list of pieces, each a region of space (a union of closed
boxes, or everywhere) with a profile expression in ``xi`` and optionally
``x``.  Sublevel sections {xi : f(x, xi) <= lam} are sampled on a gradient
window [-W, W]^dim with spacing ``dxi``.
"""

import math
from dataclasses import dataclass

import numpy as np

from . import expr as ex
from .domain import _as_boxes, in_boxes

__all__ = [
    "SupremandError",
    "Region",
    "Piece",
    "Supremand",
    "SublevelSection",
    "EnvelopeProfile",
    "envelope_1d",
    "envelope_hull",
]

SLACK = 1e-12
_BISECT = 60


class SupremandError(ValueError):
    """Structural problem with a supremand (uncovered cell, bad profile)."""


@dataclass(frozen=True)
class Region:
    """Union of closed axis-aligned boxes; ``boxes=None`` means everywhere."""

    boxes: tuple = None

    @classmethod
    def everywhere(cls):
        return cls(None)

    @classmethod
    def parse(cls, obj, dim):
        if obj is None or (isinstance(obj, str) and obj.strip().lower() in ("all", "everywhere", "*")):
            return cls(None)
        if isinstance(obj, Region):
            return obj
        obj = list(obj)
        if dim == 1 and obj and np.ndim(obj[0]) == 0:
            obj = [obj]
        return cls(_as_boxes(obj, dim))

    def contains(self, points):
        points = np.atleast_2d(points)
        if self.boxes is None:
            return np.ones(len(points), dtype=bool)
        return in_boxes(points, self.boxes, closed=True, pad=1e-12)

    def intersect(self, other):
        if self.boxes is None:
            return other
        if other.boxes is None:
            return self
        out = []
        for a in self.boxes:
            for b in other.boxes:
                box = tuple((max(p[0], q[0]), min(p[1], q[1])) for p, q in zip(a, b))
                # lower-dimensional overlaps are null sets
                if all(hi - lo > 0 for lo, hi in box):
                    out.append(box)
        return Region(tuple(out)) if out else None

    def to_config(self):
        if self.boxes is None:
            return "all"
        return [[list(iv) for iv in box] for box in self.boxes]

    def __str__(self):
        if self.boxes is None:
            return "everywhere"
        return " u ".join("x".join("[%g,%g]" % iv for iv in box) for box in self.boxes)


@dataclass(frozen=True)
class Piece:
    region: Region
    profile: ex.Expr

    @property
    def x_dependent(self):
        return bool(self.profile.variables() & {"x", "x1", "x2"})


@dataclass(frozen=True)
class SublevelSection:
    """Sampled points of {xi : f(x, xi) <= lam} inside the gradient window."""

    x: tuple
    lam: float
    samples: np.ndarray

    @property
    def empty(self):
        return len(self.samples) == 0


@dataclass(frozen=True)
class EnvelopeProfile:
    """Sampled profile of f(x, .) and of its level-convex envelope."""

    x: tuple
    xi: np.ndarray
    f: np.ndarray
    flc: np.ndarray

    def __call__(self, xi):
        """Interpolate the envelope at gradients ``xi`` (1-D: linear; 2-D: nearest sample)."""
        xi = np.asarray(xi, dtype=float)
        if self.xi.shape[1] == 1:
            t = xi.reshape(-1)
            a, b = self.xi[0, 0], self.xi[-1, 0]
            # snap rounding noise at the window ends back onto the grid
            slack = 1e-12 * max(1.0, abs(a), abs(b))
            t = np.where((t < a) & (t >= a - slack), a, np.where((t > b) & (t <= b + slack), b, t))
            return np.interp(t, self.xi[:, 0], self.flc, left=np.inf, right=np.inf)
        from scipy.spatial import cKDTree

        _, k = cKDTree(self.xi).query(xi.reshape(-1, 2))
        return self.flc[k]

    def to_csv(self, path):
        import csv

        dim = self.xi.shape[1]
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["xi%d" % (k + 1) for k in range(dim)] + ["f", "flc"])
            for p, a, b in zip(self.xi, self.f, self.flc):
                w.writerow([repr(float(v)) for v in p] + [repr(float(a)), repr(float(b))])


def _axis(window, dxi):
    if not window > 0 or not dxi > 0:
        raise SupremandError("gradient window and spacing must be positive (got W=%r, dxi=%r)" % (window, dxi))
    m = max(1, int(round(window / dxi)))
    return np.linspace(-window, window, 2 * m + 1)


def _grid(dim, window, dxi):
    ax = _axis(window, dxi)
    if dim == 1:
        return ax.reshape(-1, 1)
    g1, g2 = np.meshgrid(ax, ax, indexing="ij")
    return np.column_stack([g1.ravel(), g2.ravel()])


def envelope_1d(values):
    """Level-convex envelope of values sampled on an increasing 1-D grid.

    A sample lies in the hull of the sublevel set at ``lam`` iff some sample
    to its left and some sample to its right are both at most ``lam``, so the
    envelope is the larger of the running minima from each end.
    """
    values = np.asarray(values, dtype=float)
    left = np.minimum.accumulate(values)
    right = np.minimum.accumulate(values[::-1])[::-1]
    return np.maximum(left, right)


def envelope_hull(points, values):
    """Level-convex envelope of values sampled at 2-D ``points``.

    Levels are swept upwards over the sorted distinct values; each point
    receives the first level whose sampled sublevel set has it in its convex
    hull.  The hull is recomputed only when a new point falls outside it.
    """
    from scipy.spatial import ConvexHull, QhullError

    points = np.asarray(points, dtype=float)
    values = np.asarray(values, dtype=float)
    out = np.full(len(values), np.inf)
    order = np.argsort(values, kind="stable")
    levels, starts = np.unique(values[order], return_index=True)
    active = np.zeros(len(values), dtype=bool)
    hull_eq = None
    scale = max(1.0, float(np.abs(points).max()))
    tol = 1e-9 * scale

    def inside(eq, pts):
        if eq is None:
            return np.zeros(len(pts), dtype=bool)
        kind, data = eq
        if kind == "hull":
            return np.all(pts @ data[:, :-1].T + data[:, -1] <= tol, axis=1)
        if kind == "segment":
            a, b = data
            ab = b - a
            t = np.clip(((pts - a) @ ab) / (ab @ ab), 0.0, 1.0)
            return np.linalg.norm(pts - (a + t[:, None] * ab), axis=1) <= tol
        return np.linalg.norm(pts - data, axis=1) <= tol

    ends = list(starts[1:]) + [len(values)]
    for lam, s, e in zip(levels, starts, ends):
        if not np.isfinite(lam):
            break
        new = order[s:e]
        if not np.all(inside(hull_eq, points[new])):
            active[new] = True
            pts = points[active]
            try:
                hull_eq = ("hull", ConvexHull(pts).equations)
            except (QhullError, ValueError):
                # collinear or single point
                centred = pts - pts.mean(axis=0)
                if np.allclose(centred, 0.0, atol=tol):
                    hull_eq = ("point", pts[0])
                else:
                    d = np.linalg.svd(centred, full_matrices=False)[2][0]
                    t = centred @ d
                    hull_eq = ("segment", (pts[np.argmin(t)], pts[np.argmax(t)]))
        else:
            active[new] = True
        todo = ~np.isfinite(out)
        hit = inside(hull_eq, points[todo])
        idx = np.nonzero(todo)[0][hit]
        out[idx] = lam
    return out


class Supremand:
    """Piecewise-defined density f(x, xi).

    Parameters
    ----------
    pieces : list of (region, profile)
        Regions are :class:`Region` objects or config-style box lists; profiles
        are expression strings or :class:`~supremal.expr.Expr` trees.
    dim : int
        Dimension of the gradient (and of the domain).
    window : float
        Half-width W of the sampled gradient window [-W, W]^dim.
    dxi : float, optional
        Sampling step; defaults to 0.01 in 1-D and 0.05 in 2-D.
    coercivity, linear_bound : float, optional
        Declared constants with f >= coercivity*|xi| and f <= linear_bound*|xi|.
    """

    def __init__(self, pieces, dim=1, window=10.0, dxi=None, coercivity=None, linear_bound=None, name="f"):
        if dim not in (1, 2):
            raise SupremandError("gradient dimension must be 1 or 2")
        self.dim = dim
        self.window = float(window)
        self.dxi = float(dxi if dxi is not None else (0.01 if dim == 1 else 0.05))
        self.coercivity = coercivity
        self.linear_bound = linear_bound
        self.name = name
        self.pieces = tuple(
            p if isinstance(p, Piece) else Piece(Region.parse(p[0], dim), ex.parse(p[1])) for p in pieces
        )
        if not self.pieces:
            raise SupremandError("supremand %r has no pieces" % name)
        for p in self.pieces:
            bad = p.profile.variables() - {"x", "x1", "x2", "xi", "xi1", "xi2"}
            if dim == 1 and p.profile.variables() & {"x2", "xi2"}:
                bad |= p.profile.variables() & {"x2", "xi2"}
            if dim == 2 and "x" in p.profile.variables():
                bad.add("x")
            if bad:
                raise SupremandError("profile %s uses %s, not defined in %d-D" % (p.profile, sorted(bad), dim))
        self._samples = _grid(dim, self.window, self.dxi)
        self._values = {}
        self._support = {}

    # -- construction helpers ------------------------------------------------

    @classmethod
    def homogeneous(cls, profile, dim=1, **kw):
        return cls([(None, profile)], dim=dim, **kw)

    @classmethod
    def from_config(cls, cfg, dim, name="f"):
        cfg = dict(cfg)
        if "pieces" in cfg:
            pieces = [(p.get("region", "all"), p["profile"]) for p in cfg["pieces"]]
        elif "profile" in cfg:
            pieces = [("all", cfg["profile"])]
        else:
            raise SupremandError("supremand %r needs 'profile' or 'pieces'" % name)
        dim = int(cfg.get("dim", dim))
        return cls(
            pieces,
            dim=dim,
            window=cfg.get("window", 10.0),
            dxi=cfg.get("dxi"),
            coercivity=cfg.get("coercivity"),
            linear_bound=cfg.get("linear_bound"),
            name=name,
        )

    def to_config(self):
        cfg = {
            "dim": self.dim,
            "window": self.window,
            "dxi": self.dxi,
            "pieces": [{"region": p.region.to_config(), "profile": str(p.profile)} for p in self.pieces],
        }
        if self.coercivity is not None:
            cfg["coercivity"] = self.coercivity
        if self.linear_bound is not None:
            cfg["linear_bound"] = self.linear_bound
        return cfg

    def _derive(self, pieces, name, **kw):
        opts = dict(dim=self.dim, window=self.window, dxi=self.dxi, name=name)
        opts.update(kw)
        return Supremand(pieces, **opts)

    def maximum(self, other):
        """The supremand f v g, representing F v G."""
        if other.dim != self.dim:
            raise SupremandError("cannot combine supremands of different dimension")
        pieces = []
        for p in self.pieces:
            for q in other.pieces:
                region = p.region.intersect(q.region)
                if region is not None:
                    pieces.append(Piece(region, ex.maximum(p.profile, q.profile)))
        coer = max((c for c in (self.coercivity, other.coercivity) if c is not None), default=None)
        return self._derive(pieces, "max(%s,%s)" % (self.name, other.name), coercivity=coer)

    def max_constant(self, c):
        """The supremand f v c."""
        pieces = [Piece(p.region, ex.maximum(p.profile, ex.num(c))) for p in self.pieces]
        return self._derive(pieces, "max(%s,%g)" % (self.name, c), coercivity=self.coercivity)

    def coercive(self, n):
        """f_n = f v |xi|/n, coercive with constant 1/n."""
        if n < 1:
            raise ValueError("n must be >= 1")
        term = ex.divide(ex.norm_xi(), ex.num(n))
        pieces = [Piece(p.region, ex.maximum(p.profile, term)) for p in self.pieces]
        coer = max(1.0 / n, self.coercivity or 0.0)
        return self._derive(pieces, "%s_%d" % (self.name, n), coercivity=coer)

    # -- pointwise evaluation --------------------------------------------------

    def piece_index(self, points):
        """First piece whose region contains each point (-1 when none does)."""
        points = np.asarray(points, dtype=float).reshape(-1, self.dim)
        out = np.full(len(points), -1, dtype=np.int64)
        for k, p in enumerate(self.pieces):
            hit = (out < 0) & p.region.contains(points)
            out[hit] = k
        return out

    def check_cover(self, dom):
        """Every cell centre must lie in exactly one piece region."""
        centers = dom.cells["center"]
        count = np.zeros(len(centers), dtype=int)
        for p in self.pieces:
            count += p.region.contains(centers)
        if np.any(count == 0):
            bad = centers[np.argmax(count == 0)]
            raise SupremandError("cell at %s is not covered by any piece of %r" % (bad.tolist(), self.name))
        if np.any(count > 1):
            bad = centers[np.argmax(count > 1)]
            raise SupremandError("cell at %s is covered by %d pieces of %r" % (bad.tolist(), count.max(), self.name))

    def _profile_values(self, k, x, xi):
        env = ex.gradient_env(xi, self.dim)
        env.update(ex.position_env(np.broadcast_to(x, (len(env["xi1"]), self.dim)), self.dim))
        vals = self.pieces[k].profile.evaluate(env)
        vals = np.broadcast_to(np.asarray(ex._scalar(vals), dtype=float), (len(env["xi1"]),)).copy()
        if np.any(np.isnan(vals)):
            raise SupremandError("profile %s is undefined (nan) at some sampled gradient" % self.pieces[k].profile)
        return vals

    def eval(self, x, xi):
        """f(x, xi) for one point or a batch of (point, gradient) pairs."""
        x = np.asarray(x, dtype=float)
        xi = np.asarray(xi, dtype=float)
        single = x.ndim <= 1 and xi.ndim <= 1 and x.size == self.dim and xi.size == self.dim
        x = x.reshape(-1, self.dim)
        xi = xi.reshape(-1, self.dim)
        if len(x) == 1 and len(xi) > 1:
            x = np.broadcast_to(x, xi.shape)
        k = self.piece_index(x)
        if np.any(k < 0):
            raise SupremandError("point %s is not covered by %r" % (x[np.argmax(k < 0)].tolist(), self.name))
        out = np.empty(len(x))
        for j in np.unique(k):
            sel = k == j
            out[sel] = self._profile_values(j, x[sel], xi[sel])
        return float(out[0]) if single else out

    # -- sampled sections ------------------------------------------------------

    def _key(self, x):
        x = np.asarray(x, dtype=float).reshape(self.dim)
        k = int(self.piece_index(x)[0])
        if k < 0:
            raise SupremandError("point %s is not covered by %r" % (x.tolist(), self.name))
        xkey = tuple(np.round(x, 12)) if self.pieces[k].x_dependent else None
        return k, xkey, x

    def sampled_values(self, x):
        """f(x, .) on the gradient sample grid (cached per piece)."""
        k, xkey, x = self._key(x)
        key = (k, xkey)
        if key not in self._values:
            self._values[key] = self._profile_values(k, x, self._samples)
        return self._values[key]

    @property
    def samples(self):
        return self._samples

    def section(self, x, lam):
        vals = self.sampled_values(x)
        return SublevelSection(tuple(np.asarray(x, float).reshape(-1)), float(lam), self._samples[vals <= lam + SLACK])

    def min_value(self, x):
        return float(self.sampled_values(x).min())

    def argmin(self, x):
        """A sampled gradient minimising f(x, .), preferring the smallest norm."""
        vals = self.sampled_values(x)
        best = np.nonzero(vals <= vals.min() + SLACK)[0]
        norms = np.linalg.norm(self._samples[best], axis=1)
        return self._samples[best[np.argmin(norms)]]

    def _faces_towards(self, pts, d):
        w, tol = self.window, 1e-9 * self.window
        hit = np.zeros(len(pts), dtype=bool)
        for k in range(self.dim):
            hit |= (pts[:, k] >= w - tol) & (d[k] > 1e-12)
            hit |= (pts[:, k] <= -w + tol) & (d[k] < -1e-12)
        return hit

    def support_function(self, x, lam, direction):
        """sup{xi . direction : f(x, xi) <= lam} over the sampled window.

        Returns ``inf`` when the section reaches the window boundary on a face
        that ``direction`` points through, and ``-inf`` for an empty section.
        The best sample is refined by bisection along ``direction``, so the
        result is attained by a genuine point of the section.
        """
        d = np.asarray(direction, dtype=float).reshape(self.dim)
        nd = np.linalg.norm(d)
        if abs(nd - 1.0) > 1e-9:
            raise ValueError("direction must have unit length, got |d|=%g" % nd)
        k, xkey, x = self._key(x)
        key = (k, xkey, float(lam), tuple(np.round(d, 12)))
        if key not in self._support:
            self._support[key] = self._support_uncached(k, x, float(lam), d)
        return self._support[key]

    def _inside(self, k, x, lam, q):
        ok = np.all(np.abs(q) <= self.window + 1e-12, axis=1)
        if ok.any():
            ok[ok] = self._profile_values(k, x[ok], q[ok]) <= lam + SLACK
        return ok

    def _push(self, k, x, lam, starts, d):
        """Largest t found with starts + t*d still in the section, row by row.

        ``x`` and ``d`` hold one row per start.  Steps double until a probe
        leaves the section or the window, then the exit is located by
        bisection.  Every returned point is a section point.
        """
        lo = np.zeros(len(starts))
        step = np.full(len(starts), self.dxi)
        hi = np.full(len(starts), np.nan)
        active = np.ones(len(starts), dtype=bool)
        while active.any():
            ok = np.zeros(len(starts), dtype=bool)
            t = (lo + step)[active]
            ok[active] = self._inside(k, x[active], lam, starts[active] + t[:, None] * d[active])
            grow = active & ok
            stop = active & ~ok
            hi[stop] = (lo + step)[stop]
            lo[grow] += step[grow]
            step[grow] *= 2.0
            active = grow
        for _ in range(_BISECT):
            mid = 0.5 * (lo + hi)
            ok = self._inside(k, x, lam, starts + mid[:, None] * d)
            lo = np.where(ok, mid, lo)
            hi = np.where(ok, hi, mid)
        return lo

    def _support_batch(self, k, x, lam, d):
        """Support values of piece ``k`` for rows of positions ``x`` and unit directions ``d``."""
        n = len(x)
        out = np.empty(n)
        start = np.empty((n, self.dim))
        todo = np.zeros(n, dtype=bool)
        for i in range(n):
            vals = self._profile_values(k, x[i], self._samples) if self.pieces[k].x_dependent \
                else self.sampled_values(x[i])
            pts = self._samples[vals <= lam + SLACK]
            if len(pts) == 0:
                out[i] = -math.inf
                continue
            proj = pts @ d[i]
            top = proj.max()
            tied = pts[proj >= top - 1e-12 * max(1.0, abs(top))]
            if np.any(self._faces_towards(tied, d[i])):
                out[i] = math.inf
                continue
            start[i] = tied[0]
            todo[i] = True
        idx = np.nonzero(todo)[0]
        if len(idx) == 0:
            return out
        x, d = x[idx], d[idx]
        p = start[idx] + self._push(k, x, lam, start[idx], d)[:, None] * d
        if self.dim == 2:
            # pattern search sideways: slide each point across d and push again
            perp = np.column_stack([-d[:, 1], d[:, 0]])
            step = np.full(len(idx), self.dxi)
            live = np.ones(len(idx), dtype=bool)
            for _ in range(_BISECT):
                rows = np.nonzero(live)[0]
                if len(rows) == 0:
                    break
                cand = np.vstack([p[rows] + step[rows, None] * perp[rows], p[rows] - step[rows, None] * perp[rows]])
                owner = np.r_[rows, rows]
                ok = self._inside(k, x[owner], lam, cand)
                gain = np.full(len(cand), -np.inf)
                if ok.any():
                    o = owner[ok]
                    moved = cand[ok] + self._push(k, x[o], lam, cand[ok], d[o])[:, None] * d[o]
                    cand[ok] = moved
                    gain[ok] = np.einsum("ij,ij->i", moved, d[o]) - np.einsum("ij,ij->i", p[o], d[o])
                half = len(rows)
                pick = np.where(gain[:half] >= gain[half:], np.arange(half), np.arange(half) + half)
                better = gain[pick] > 1e-15
                p[rows[better]] = cand[pick[better]]
                slow = rows[~better]
                step[slow] *= 0.5
                live[slow[step[slow] < 1e-12 * max(1.0, self.window)]] = False
        val = np.einsum("ij,ij->i", p, d)
        for j, i in enumerate(idx):
            rim = self._faces_towards(p[j].reshape(1, -1), d[j])[0] and np.abs(p[j]).max() >= self.window - 1e-9
            out[i] = math.inf if rim else float(val[j])
        return out

    def _support_uncached(self, k, x, lam, d):
        return float(self._support_batch(k, x.reshape(1, -1), lam, d.reshape(1, -1))[0])

    def support_many(self, points, lam, directions):
        """Support values for a batch of (point, direction) pairs."""
        points = np.asarray(points, dtype=float).reshape(-1, self.dim)
        directions = np.asarray(directions, dtype=float).reshape(-1, self.dim)
        out = np.empty(len(points))
        kidx = self.piece_index(points)
        if np.any(kidx < 0):
            raise SupremandError("point %s is not covered by %r" % (points[np.argmax(kidx < 0)].tolist(), self.name))
        xdep = np.array([self.pieces[k].x_dependent for k in kidx])
        dkey = np.round(directions, 12)
        # x-independent pieces: one query per (piece, direction)
        groups = {}
        for i in np.nonzero(~xdep)[0]:
            groups.setdefault((kidx[i], tuple(dkey[i])), []).append(i)
        for (_, _), idx in groups.items():
            out[idx] = self.support_function(points[idx[0]], lam, directions[idx[0]])
        # x-dependent pieces: cached rows first, the rest in one batch per piece
        lam = float(lam)
        for k in np.unique(kidx[xdep]):
            missing = []
            for i in np.nonzero(xdep & (kidx == k))[0]:
                key = (int(k), tuple(np.round(points[i], 12)), lam, tuple(dkey[i]))
                if key in self._support:
                    out[i] = self._support[key]
                else:
                    missing.append(i)
            if missing:
                norms = np.linalg.norm(directions[missing], axis=1)
                if np.any(np.abs(norms - 1.0) > 1e-9):
                    raise ValueError("direction must have unit length, got |d|=%g" % norms[np.argmax(np.abs(norms - 1.0))])
                vals = self._support_batch(int(k), points[missing], lam, directions[missing])
                for i, v in zip(missing, vals):
                    out[i] = v
                    self._support[(int(k), tuple(np.round(points[i], 12)), lam, tuple(dkey[i]))] = v
        return out

    # -- level-convex envelope --------------------------------------------------

    def level_convex_envelope(self, x, window=None, dxi=None):
        """Sampled level-convex envelope of f(x, .).

        Its sublevel set at each sampled level is the convex hull of the
        sampled sublevel set of f(x, .) within the window.
        """
        window = self.window if window is None else float(window)
        dxi = self.dxi if dxi is None else float(dxi)
        if window == self.window and dxi == self.dxi:
            pts, vals = self._samples, self.sampled_values(x)
        else:
            pts = _grid(self.dim, window, dxi)
            k, _, xx = self._key(x)
            vals = self._profile_values(k, xx, pts)
        if self.dim == 1:
            flc = envelope_1d(vals)
        else:
            flc = envelope_hull(pts, vals)
        return EnvelopeProfile(tuple(np.asarray(x, float).reshape(-1)), pts, vals, flc)

    def __repr__(self):
        body = "; ".join("%s: %s" % (p.region, p.profile) for p in self.pieces)
        return "Supremand(%s, dim=%d, %s)" % (self.name, self.dim, body)
