"""3D convex hull (quickhull) with coplanar facet merging.

The hull is used twice: in dual space to find which planes meet at each
polytope vertex, and in primal space to refit planes after subdivision.
"""

import heapq
from dataclasses import dataclass
from enum import Enum

import numpy as np

from .errors import DegenerateInput

#: default absolute tolerance is this fraction of the bounding-box diagonal
REL_TOLERANCE = 1e-9
#: adjacent facets whose normals differ by less than this (radians) are merged
MERGE_ANGLE = 1e-7


class Location(Enum):
    STRICTLY_INSIDE = "strictly-inside"
    ON_BOUNDARY = "on-boundary"
    OUTSIDE = "outside"


@dataclass(frozen=True, eq=False)
class HullFacet:
    """A planar facet of the hull.

    ``vertex_ids`` is a counter-clockwise loop (seen from outside) of input
    point indices, rotated so the smallest index comes first.
    """

    vertex_ids: tuple
    normal: np.ndarray
    offset: float
    neighbor_ids: tuple


@dataclass(frozen=True, eq=False)
class Hull:
    points: np.ndarray
    facets: tuple
    hull_vertex_ids: frozenset
    tolerance: float

    @property
    def equations(self):
        """Facet normals ``(F, 3)`` and offsets ``(F,)``; inside is ``n.p <= d``."""
        normals = np.array([f.normal for f in self.facets])
        offsets = np.array([f.offset for f in self.facets])
        return normals, offsets

    def triangles(self):
        """Fan-triangulate every facet from its first (lowest-index) vertex."""
        tris = []
        for f in self.facets:
            ids = f.vertex_ids
            for k in range(1, len(ids) - 1):
                tris.append((ids[0], ids[k], ids[k + 1]))
        return np.array(tris, dtype=np.int64).reshape(-1, 3)

    def edges(self):
        out = set()
        for f in self.facets:
            ids = f.vertex_ids
            for k in range(len(ids)):
                u, v = ids[k], ids[(k + 1) % len(ids)]
                out.add((min(u, v), max(u, v)))
        return out

    def volume(self):
        tri = self.triangles()
        p = self.points
        return float(np.einsum("ij,ij->i", p[tri[:, 0]], np.cross(p[tri[:, 1]], p[tri[:, 2]])).sum() / 6.0)


def default_tolerance(points):
    pts = np.asarray(points, dtype=float)
    diag = float(np.linalg.norm(pts.max(axis=0) - pts.min(axis=0))) if len(pts) else 0.0
    return REL_TOLERANCE * diag


def _initial_simplex(pts, eps):
    ext = []
    for ax in range(3):
        ext.append(int(np.argmin(pts[:, ax])))
        ext.append(int(np.argmax(pts[:, ax])))
    best, i, j = -1.0, 0, 0
    for a in range(6):
        for b in range(a + 1, 6):
            d = float(np.linalg.norm(pts[ext[a]] - pts[ext[b]]))
            if d > best:
                best, i, j = d, ext[a], ext[b]
    if best <= eps:
        raise DegenerateInput("all points coincide within tolerance")
    rel = pts - pts[i]
    u = rel[j] / best
    perp = rel - np.outer(rel @ u, u)
    dline = np.linalg.norm(perp, axis=1)
    k = int(np.argmax(dline))
    if dline[k] <= eps:
        raise DegenerateInput("all points are collinear within tolerance")
    n = np.cross(rel[j], rel[k])
    n /= np.linalg.norm(n)
    dplane = rel @ n
    l = int(np.argmax(np.abs(dplane)))
    if abs(dplane[l]) <= eps:
        raise DegenerateInput("all points are coplanar within tolerance")
    return i, j, k, l


class _Builder:
    """Mutable quickhull state. Facets are triangles until merging."""

    def __init__(self, pts, eps):
        self.pts = pts
        self.pl = pts.tolist()
        self.eps = eps
        self.verts = []
        self.normals = []
        self.offsets = []
        self.alive = []
        self.outside = []
        self.edge_owner = {}

    def add_facet(self, a, b, c):
        pa, pb, pc = self.pl[a], self.pl[b], self.pl[c]
        ux, uy, uz = pb[0] - pa[0], pb[1] - pa[1], pb[2] - pa[2]
        vx, vy, vz = pc[0] - pa[0], pc[1] - pa[1], pc[2] - pa[2]
        nx, ny, nz = uy * vz - uz * vy, uz * vx - ux * vz, ux * vy - uy * vx
        nn = (nx * nx + ny * ny + nz * nz) ** 0.5
        if nn == 0.0:
            raise DegenerateInput("zero-area facet during hull construction")
        nx, ny, nz = nx / nn, ny / nn, nz / nn
        off = (
            nx * (pa[0] + pb[0] + pc[0]) + ny * (pa[1] + pb[1] + pc[1]) + nz * (pa[2] + pb[2] + pc[2])
        ) / 3.0
        fid = len(self.verts)
        self.verts.append((a, b, c))
        self.normals.append((nx, ny, nz))
        self.offsets.append(off)
        self.alive.append(True)
        self.outside.append(None)
        for e in ((a, b), (b, c), (c, a)):
            if e in self.edge_owner:
                raise DegenerateInput("inconsistent hull topology (numerical degeneracy)")
            self.edge_owner[e] = fid
        return fid

    def kill(self, fid):
        a, b, c = self.verts[fid]
        for e in ((a, b), (b, c), (c, a)):
            del self.edge_owner[e]
        self.alive[fid] = False
        self.outside[fid] = None

    def dist(self, fid, idx):
        return self.pts[idx] @ np.asarray(self.normals[fid]) - self.offsets[fid]

    def dist1(self, fid, idx):
        n, p = self.normals[fid], self.pl[idx]
        return n[0] * p[0] + n[1] * p[1] + n[2] * p[2] - self.offsets[fid]

    def assign(self, candidates, fids, heap):
        if len(candidates) == 0:
            return
        N = np.array([self.normals[f] for f in fids])
        off = np.array([self.offsets[f] for f in fids])
        D = self.pts[candidates] @ N.T - off
        best = np.argmax(D, axis=1)
        keep = D[np.arange(len(candidates)), best] > self.eps
        for col, fid in enumerate(fids):
            sel = candidates[keep & (best == col)]
            if len(sel):
                self.outside[fid] = sel
                heapq.heappush(heap, fid)

    def run(self):
        pts, eps = self.pts, self.eps
        i, j, k, l = _initial_simplex(pts, eps)
        simplex = [i, j, k, l]
        fids = []
        for a, b, c, d in ((i, j, k, l), (i, j, l, k), (i, k, l, j), (j, k, l, i)):
            # orient so the opposite simplex vertex lies behind the facet
            n = np.cross(pts[b] - pts[a], pts[c] - pts[a])
            if n @ (pts[d] - pts[a]) > 0:
                b, c = c, b
            fids.append(self.add_facet(a, b, c))
        rest = np.setdiff1d(np.arange(len(pts)), simplex)
        heap = []
        self.assign(rest, fids, heap)

        while heap:
            f = heapq.heappop(heap)
            if not self.alive[f] or self.outside[f] is None:
                continue
            cand = self.outside[f]
            eye = int(cand[int(np.argmax(self.dist(f, cand)))])

            visible = {f: True}
            stack = [f]
            horizon = []
            while stack:
                g = stack.pop()
                a, b, c = self.verts[g]
                for u, v in ((a, b), (b, c), (c, a)):
                    h = self.edge_owner[(v, u)]
                    vis = visible.get(h)
                    if vis is None:
                        vis = self.dist1(h, eye) > eps
                        visible[h] = vis
                        if vis:
                            stack.append(h)
                    if not vis:
                        horizon.append((u, v))

            pool = []
            for g, vis in visible.items():
                if vis:
                    if self.outside[g] is not None:
                        pool.append(self.outside[g])
                    self.kill(g)
            new = [self.add_facet(u, v, eye) for u, v in horizon]
            if pool:
                pool = np.concatenate(pool)
                pool = np.sort(pool[pool != eye])
                self.assign(pool, new, heap)

        return [fid for fid, ok in enumerate(self.alive) if ok]


def _newell_normal(pts, loop):
    p = pts[list(loop)]
    q = np.roll(p, -1, axis=0)
    n = np.array(
        [
            np.sum((p[:, 1] - q[:, 1]) * (p[:, 2] + q[:, 2])),
            np.sum((p[:, 2] - q[:, 2]) * (p[:, 0] + q[:, 0])),
            np.sum((p[:, 0] - q[:, 0]) * (p[:, 1] + q[:, 1])),
        ]
    )
    return n


def _rotate_min_first(loop):
    m = loop.index(min(loop))
    return tuple(loop[m:] + loop[:m])


def _boundary_loop(tris):
    """Single boundary loop of a patch of triangles, or None if not a disk."""
    directed = set()
    for a, b, c in tris:
        directed.update(((a, b), (b, c), (c, a)))
    nxt = {}
    for u, v in directed:
        if (v, u) in directed:
            continue
        if u in nxt:
            return None
        nxt[u] = v
    if not nxt:
        return None
    start = min(nxt)
    loop = [start]
    cur = nxt[start]
    while cur != start:
        if len(loop) > len(nxt):
            return None
        loop.append(cur)
        cur = nxt.get(cur)
        if cur is None:
            return None
    if len(loop) != len(nxt):
        return None
    return loop


def _merge_facets(b, fids):
    """Group coplanar adjacent triangles into polygon facets."""
    pts, eps = b.pts, b.eps
    index = {f: n for n, f in enumerate(fids)}
    parent = list(range(len(fids)))

    def find(x):
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    cos_tol = np.cos(MERGE_ANGLE)
    for f in fids:
        a, c_, d = b.verts[f]
        for u, v in ((a, c_), (c_, d), (d, a)):
            g = b.edge_owner[(v, u)]
            if g < f:
                continue
            nf, ng = b.normals[f], b.normals[g]
            cos = nf[0] * ng[0] + nf[1] * ng[1] + nf[2] * ng[2]
            close = cos >= cos_tol
            if not close and cos > 0:
                apex_g = [x for x in b.verts[g] if x != u and x != v][0]
                apex_f = [x for x in b.verts[f] if x != u and x != v][0]
                close = abs(b.dist1(f, apex_g)) <= eps and abs(b.dist1(g, apex_f)) <= eps
            if close:
                ra, rb = find(index[f]), find(index[g])
                if ra != rb:
                    parent[max(ra, rb)] = min(ra, rb)

    groups = {}
    for n, f in enumerate(fids):
        groups.setdefault(find(n), []).append(f)

    loops = []
    for root in sorted(groups):
        members = groups[root]
        tris = [b.verts[f] for f in members]
        loop = _boundary_loop(tris) if len(tris) > 1 else list(tris[0])
        if loop is None:
            loops.extend((list(t), [f]) for t, f in zip(tris, members))
        else:
            loops.append((loop, members))

    facets = []
    for loop, members in loops:
        if len(members) == 1:
            f = members[0]
            facets.append((_rotate_min_first(list(loop)), np.array(b.normals[f]), b.offsets[f]))
            continue
        ref = np.sum([b.normals[f] for f in members], axis=0)
        n = _newell_normal(pts, loop)
        nn = np.linalg.norm(n)
        n = n / nn if nn > 0 else ref / np.linalg.norm(ref)
        if n @ ref < 0:
            n = -n
        off = float(np.mean(pts[loop] @ n))
        facets.append((_rotate_min_first(list(loop)), n, off))

    owner = {}
    for fi, (loop, _, _) in enumerate(facets):
        for k in range(len(loop)):
            owner[(loop[k], loop[(k + 1) % len(loop)])] = fi
    out = []
    for fi, (loop, n, off) in enumerate(facets):
        nbrs = []
        for k in range(len(loop)):
            g = owner[(loop[(k + 1) % len(loop)], loop[k])]
            if g not in nbrs:
                nbrs.append(g)
        out.append(HullFacet(loop, n, off, tuple(nbrs)))
    return out


def convex_hull_3d(points, tolerance=None):
    """Convex hull of a 3D point set.

    Parameters
    ----------
    points : array_like, shape (N, 3)
    tolerance : float, optional
        Absolute distance tolerance. Defaults to ``1e-9`` times the diagonal
        of the bounding box.

    Returns
    -------
    Hull

    Raises
    ------
    DegenerateInput
        Fewer than four points, non-finite input, or all points coplanar,
        collinear or coincident within tolerance.
    """
    pts = np.ascontiguousarray(points, dtype=float)
    if pts.ndim != 2 or pts.shape[1] != 3:
        raise DegenerateInput(f"expected an (N, 3) array, got shape {pts.shape}")
    if len(pts) < 4:
        raise DegenerateInput(f"need at least 4 points, got {len(pts)}")
    if not np.all(np.isfinite(pts)):
        raise DegenerateInput("non-finite coordinates")
    eps = default_tolerance(pts) if tolerance is None else float(tolerance)

    builder = _Builder(pts, eps)
    fids = builder.run()
    facets = _merge_facets(builder, fids)
    verts = frozenset(v for f in facets for v in f.vertex_ids)
    return Hull(pts, tuple(facets), verts, eps)


def classify_points(hull, points, tolerance=None):
    """Vectorised :func:`point_in_hull`; returns an array of :class:`Location`."""
    eps = hull.tolerance if tolerance is None else float(tolerance)
    normals, offsets = hull.equations
    d = np.atleast_2d(np.asarray(points, dtype=float)) @ normals.T - offsets
    dmax = d.max(axis=1)
    out = np.full(len(d), Location.ON_BOUNDARY, dtype=object)
    out[dmax > eps] = Location.OUTSIDE
    out[dmax < -eps] = Location.STRICTLY_INSIDE
    return out


def point_in_hull(hull, p, tolerance=None):
    return classify_points(hull, [p], tolerance)[0]
