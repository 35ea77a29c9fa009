"""Grid discretisation of a bounded connected open set.

Nodes sit on a uniform lattice strictly inside the extent; axis-aligned boxes
(closed) are removed as obstacles.  Neighbouring nodes are joined by stencil
edges with euclidean lengths, which gives the geodesic metric by Dijkstra.
"""

import csv
from dataclasses import dataclass
from functools import cached_property

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import connected_components, dijkstra

__all__ = [
    "DomainError",
    "GridDomain",
    "GeodesicTable",
    "build_domain",
    "geodesic_distance",
    "geodesic_matrix",
    "estimate_domain_constant",
    "stencil_anisotropy",
]

_EPS = 1e-9


class DomainError(ValueError):
    """Rejected domain description."""


def _as_boxes(boxes, dim):
    """Normalise a list of boxes to a tuple of ((lo, hi), ...) per axis.

    In 1-D a box may be given as ``[lo, hi]`` instead of ``[[lo, hi]]``.
    """
    out = []
    for box in boxes:
        box = np.asarray(box, dtype=float)
        if dim == 1 and box.shape == (2,):
            box = box.reshape(1, 2)
        if box.shape != (dim, 2):
            raise DomainError("box %s does not have shape (%d, 2)" % (box.tolist(), dim))
        if np.any(box[:, 1] < box[:, 0]):
            raise DomainError("box %s has lo > hi" % box.tolist())
        out.append(tuple((float(lo), float(hi)) for lo, hi in box))
    return tuple(out)


def in_boxes(points, boxes, closed=True, pad=0.0):
    """Mask of ``points`` (m, dim) lying in the union of ``boxes``."""
    points = np.atleast_2d(np.asarray(points, dtype=float))
    hit = np.zeros(len(points), dtype=bool)
    for box in boxes:
        lo = np.array([b[0] for b in box])
        hi = np.array([b[1] for b in box])
        if closed:
            inside = np.all((points >= lo - pad) & (points <= hi + pad), axis=1)
        else:
            inside = np.all((points > lo + pad) & (points < hi - pad), axis=1)
        hit |= inside
    return hit


def stencil_anisotropy(stencil_size):
    """Worst relative overestimate of euclidean length by a chamfer stencil."""
    if stencil_size == 2:
        return 0.0
    if stencil_size == 4:
        return np.sqrt(2.0) - 1.0
    # 8-neighbour: max over angles of cos(t) + (sqrt2 - 1) sin(t), at t = 22.5 deg
    return float(np.sqrt(1.0 + (np.sqrt(2.0) - 1.0) ** 2) - 1.0)


@dataclass(frozen=True, eq=False)
class GridDomain:
    """Masked lattice of nodes with a neighbour stencil.

    Node ``k`` has coordinates ``coords[k]``; only nodes inside the mask are
    numbered.  Immutable after construction.
    """

    dim: int
    origin: np.ndarray
    h: float
    shape: tuple
    mask: np.ndarray
    stencil: tuple
    extent: tuple = ()
    obstacles: tuple = ()

    # -- nodes -------------------------------------------------------------

    @cached_property
    def grid_index(self):
        """Lattice multi-index -> node number (-1 outside the mask)."""
        idx = np.full(self.shape, -1, dtype=np.int64)
        idx[self.mask] = np.arange(int(self.mask.sum()))
        return idx

    @cached_property
    def lattice(self):
        """Lattice multi-indices of the nodes, shape (n, dim)."""
        return np.argwhere(self.mask)

    @cached_property
    def coords(self):
        return self.origin + self.h * self.lattice

    @property
    def n_nodes(self):
        return len(self.lattice)

    def nearest_node(self, point):
        """Index of the node closest to ``point``."""
        point = np.asarray(point, dtype=float).reshape(self.dim)
        return int(np.argmin(np.sum((self.coords - point) ** 2, axis=1)))

    def region_nodes(self, boxes, closed=False):
        """Nodes lying in the union of (by default open) boxes."""
        boxes = _as_boxes(boxes, self.dim)
        return in_boxes(self.coords, boxes, closed=closed, pad=_EPS * self.h)

    # -- edges -------------------------------------------------------------

    @cached_property
    def edges(self):
        """Directed stencil edges (src, dst) with lengths, unit directions, midpoints."""
        src, dst = [], []
        lat = self.lattice
        offsets = [np.asarray(o) for o in self.stencil]
        for off in offsets + [-o for o in offsets]:
            nb = lat + off
            ok = np.all((nb >= 0) & (nb < np.array(self.shape)), axis=1)
            a = np.nonzero(ok)[0]
            b = self.grid_index[tuple(nb[ok].T)]
            keep = b >= 0
            src.append(a[keep])
            dst.append(b[keep])
        src = np.concatenate(src)
        dst = np.concatenate(dst)
        vec = self.coords[dst] - self.coords[src]
        mid = 0.5 * (self.coords[dst] + self.coords[src])
        if self.obstacles:
            # an edge whose midpoint falls in an obstacle cuts through it
            keep = ~in_boxes(mid, self.obstacles, closed=True, pad=_EPS * self.h)
            src, dst, vec, mid = src[keep], dst[keep], vec[keep], mid[keep]
        length = np.sqrt(np.sum(vec**2, axis=1))
        return {
            "src": src,
            "dst": dst,
            "length": length,
            "direction": vec / length[:, None],
            "midpoint": mid,
        }

    @cached_property
    def length_graph(self):
        e = self.edges
        n = self.n_nodes
        return csr_matrix((e["length"], (e["src"], e["dst"])), shape=(n, n))

    # -- forward-difference cells -------------------------------------------

    @cached_property
    def cells(self):
        """Cells whose full forward stencil lies in the mask.

        ``base[c]`` is the cell's corner node and ``forward[c, k]`` its
        neighbour along axis ``k``; ``center[c]`` is the cell centre.
        """
        lat = self.lattice
        fwd = []
        ok = np.ones(len(lat), dtype=bool)
        for k in range(self.dim):
            nb = lat.copy()
            nb[:, k] += 1
            inside = nb[:, k] < self.shape[k]
            j = np.full(len(lat), -1, dtype=np.int64)
            j[inside] = self.grid_index[tuple(nb[inside].T)]
            fwd.append(j)
            ok &= j >= 0
        base = np.nonzero(ok)[0]
        forward = np.stack([j[ok] for j in fwd], axis=1)
        center = self.coords[base] + 0.5 * self.h
        if self.obstacles:
            keep = ~in_boxes(center, self.obstacles, closed=True, pad=_EPS * self.h)
            base, forward, center = base[keep], forward[keep], center[keep]
        return {"base": base, "forward": forward, "center": center}

    @property
    def n_cells(self):
        return len(self.cells["base"])

    def cells_in(self, nodes):
        """Cells whose every stencil node lies in the node mask ``nodes``."""
        nodes = np.asarray(nodes, dtype=bool)
        c = self.cells
        return nodes[c["base"]] & np.all(nodes[c["forward"]], axis=1)

    @property
    def stencil_size(self):
        return 2 * len(self.stencil)

    def anisotropy(self):
        return stencil_anisotropy(self.stencil_size)

    def describe(self):
        return "%d-D grid, h=%g, %d nodes, %d cells, %d-stencil" % (
            self.dim, self.h, self.n_nodes, self.n_cells, self.stencil_size)


def _stencil(dim, size):
    if dim == 1:
        if size not in (None, 2):
            raise DomainError("1-D domains use the 2-neighbour stencil")
        return ((1,),)
    size = 8 if size is None else int(size)
    if size == 4:
        return ((1, 0), (0, 1))
    if size == 8:
        return ((1, 0), (0, 1), (1, 1), (1, -1))
    raise DomainError("2-D stencil must have 4 or 8 neighbours, got %r" % size)


def build_domain(extent, h, obstacles=(), stencil=None):
    """Build a :class:`GridDomain` from its description.

    ``extent`` is a list of ``(lo, hi)`` per axis; nodes are placed at
    ``lo + i*h`` strictly inside.  ``obstacles`` are closed boxes removed from
    the set.  ``stencil`` is 4 or 8 in 2-D (default 8).

    Raises :class:`DomainError` when there are fewer than two nodes, when the
    extent is not a whole number of steps, or when the node graph is not
    connected.
    """
    ext = np.asarray(extent, dtype=float)
    if ext.ndim == 1:
        ext = ext.reshape(1, 2)
    dim = ext.shape[0]
    if dim not in (1, 2) or ext.shape[1] != 2:
        raise DomainError("extent must be [[lo, hi]] or [[lo, hi], [lo, hi]]")
    h = float(h)
    if not h > 0:
        raise DomainError("spacing h must be positive, got %r" % h)
    counts = []
    for lo, hi in ext:
        steps = (hi - lo) / h
        n = int(round(steps))
        if n < 1 or abs(steps - n) > 1e-6 * max(1.0, steps):
            raise DomainError("extent (%g, %g) is not a whole number of steps h=%g" % (lo, hi, h))
        counts.append(n - 1)
    shape = tuple(counts)
    if min(shape) < 1:
        raise DomainError("no interior nodes: extent too small for h=%g" % h)
    origin = ext[:, 0] + h
    obstacles = _as_boxes(obstacles, dim)
    lattice = np.indices(shape).reshape(dim, -1).T
    pts = origin + h * lattice
    mask = ~in_boxes(pts, obstacles, closed=True, pad=_EPS * h) if obstacles else np.ones(len(pts), bool)
    mask = mask.reshape(shape)
    if mask.sum() < 2:
        raise DomainError("domain has %d interior node(s); need at least 2" % mask.sum())
    dom = GridDomain(
        dim=dim,
        origin=origin,
        h=h,
        shape=shape,
        mask=mask,
        stencil=_stencil(dim, stencil),
        extent=tuple(map(tuple, ext.tolist())),
        obstacles=obstacles,
    )
    ncomp, labels = connected_components(dom.length_graph, directed=False)
    if ncomp > 1:
        sizes = np.bincount(labels)
        lone = dom.coords[np.argmax(labels != np.argmax(sizes))]
        raise DomainError(
            "node graph has %d connected components (sizes %s); e.g. node at %s is cut off"
            % (ncomp, sorted(sizes.tolist(), reverse=True), np.round(lone, 6).tolist())
        )
    return dom


@dataclass(frozen=True)
class GeodesicTable:
    source: int
    dist: np.ndarray

    def to_csv(self, path, dom):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["x%d" % (k + 1) for k in range(dom.dim)] + ["dist"])
            for p, d in zip(dom.coords, self.dist):
                w.writerow([_fmt(v) for v in p] + [_fmt(d)])


def _fmt(v):
    return repr(float(v))


def _node(dom, source):
    if isinstance(source, (int, np.integer)):
        if not 0 <= source < dom.n_nodes:
            raise DomainError("node %d is not in the domain" % source)
        return int(source)
    point = np.asarray(source, dtype=float).reshape(dom.dim)
    k = dom.nearest_node(point)
    if np.linalg.norm(dom.coords[k] - point) > 0.5 * dom.h * np.sqrt(dom.dim) + _EPS:
        raise DomainError("point %s is outside the domain mask" % point.tolist())
    return k


def geodesic_distance(dom, source):
    """Shortest-path lengths from ``source`` (node index or point) to every node."""
    k = _node(dom, source)
    dist = dijkstra(dom.length_graph, directed=False, indices=k)
    return GeodesicTable(source=k, dist=dist)


def geodesic_matrix(dom, sources=None):
    """Rows of geodesic distances for the given sources (all nodes by default)."""
    if sources is None:
        sources = np.arange(dom.n_nodes)
    return dijkstra(dom.length_graph, directed=False, indices=np.asarray(sources))


def estimate_domain_constant(dom, sample=None, seed=0):
    """Largest sampled ratio of geodesic to euclidean distance (always >= 1).

    With ``sample=None`` every pair is used when the domain has at most 2500
    nodes; otherwise rows for enough random sources to cover ``sample`` pairs
    (default 10**5) are evaluated.
    """
    n = dom.n_nodes
    if sample is None and n <= 2500:
        sources = np.arange(n)
    else:
        sample = 100_000 if sample is None else int(sample)
        if sample < 1:
            raise ValueError("need at least one sampled pair")
        k = min(n, max(1, -(-sample // n)))
        sources = np.sort(np.random.default_rng(seed).choice(n, size=k, replace=False))
    geo = geodesic_matrix(dom, sources)
    euc = np.sqrt(((dom.coords[sources][:, None, :] - dom.coords[None, :, :]) ** 2).sum(-1))
    with np.errstate(invalid="ignore", divide="ignore"):
        ratio = np.where(euc > 0, geo / euc, 1.0)
    return float(max(1.0, ratio.max()))
