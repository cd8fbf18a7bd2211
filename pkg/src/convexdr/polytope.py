"""Convex polytopes as intersections of halfspaces ``a.x <= b`` with ``b > 0``.

Construction goes through the dual: each plane maps to the point ``a / b``,
every facet of the dual hull is a polytope vertex, and the planes meeting at
that vertex are the dual facet's points. Vertex positions are then
re-solved from a fixed plane triple so they can be differentiated.
"""

import logging
from dataclasses import dataclass, field
from itertools import combinations

import numpy as np

from .errors import DegenerateInput, EmptyTopology, IllConditioned, NonPositiveOffset, NotManifold
from .errors import UnboundedOrDegenerate
from .hull import Location, classify_points, convex_hull_3d, default_tolerance

log = logging.getLogger(__name__)

COND_CAP = 1e8
MERGE_REL = 1e-7


@dataclass(frozen=True, eq=False)
class Hyperplane:
    """Halfspace ``normal . x <= offset``."""

    normal: np.ndarray
    offset: float

    def __post_init__(self):
        object.__setattr__(self, "normal", np.asarray(self.normal, dtype=float).reshape(3))
        object.__setattr__(self, "offset", float(self.offset))


def plane_arrays(planes):
    """Split planes into ``(normals (K, 3), offsets (K,))``.

    Accepts a sequence of :class:`Hyperplane` or an array of shape ``(K, 4)``.
    """
    if len(planes) and isinstance(planes[0], Hyperplane):
        normals = np.array([p.normal for p in planes], dtype=float)
        offsets = np.array([p.offset for p in planes], dtype=float)
        return normals, offsets
    arr = np.asarray(planes, dtype=float).reshape(-1, 4)
    return arr[:, :3].copy(), arr[:, 3].copy()


@dataclass(eq=False)
class ConvexPolyhedron:
    """Planes (the optimised parameters) plus a world translation."""

    normals: np.ndarray
    offsets: np.ndarray
    translation: np.ndarray = field(default_factory=lambda: np.zeros(3))
    id: int = 0

    def __post_init__(self):
        self.normals = np.array(self.normals, dtype=float).reshape(-1, 3)
        self.offsets = np.array(self.offsets, dtype=float).reshape(-1)
        self.translation = np.array(self.translation, dtype=float).reshape(3)
        if len(self.normals) != len(self.offsets):
            raise ValueError("normals and offsets differ in length")

    @classmethod
    def from_planes(cls, planes, translation=(0.0, 0.0, 0.0), id=0):
        normals, offsets = plane_arrays(planes)
        return cls(normals, offsets, translation, id)

    @property
    def n_planes(self):
        return len(self.offsets)

    @property
    def planes(self):
        return [Hyperplane(n, b) for n, b in zip(self.normals, self.offsets)]

    def copy(self):
        return ConvexPolyhedron(self.normals.copy(), self.offsets.copy(), self.translation.copy(), self.id)


@dataclass(frozen=True, eq=False)
class VertexRecord:
    """A polytope vertex.

    ``plane_ids`` is the canonical (lexicographically smallest) triple used
    for solving and differentiation; ``triples`` lists every triple found
    to produce this vertex.
    """

    plane_ids: tuple
    position: np.ndarray
    triples: tuple = ()


@dataclass(frozen=True, eq=False)
class PolytopeTopology:
    vertices: tuple
    facets: dict
    active_plane_ids: frozenset

    @property
    def triples(self):
        return np.array([v.plane_ids for v in self.vertices], dtype=np.int64).reshape(-1, 3)

    @property
    def positions(self):
        return np.array([v.position for v in self.vertices], dtype=float).reshape(-1, 3)

    def resolve(self, normals, offsets, cond_cap=COND_CAP):
        """Same combinatorics, vertex positions re-solved for new plane values."""
        x, _, ok = solve_triples(normals, offsets, self.triples, cond_cap)
        if not np.all(ok):
            raise IllConditioned("a frozen plane triple became ill-conditioned")
        verts = tuple(VertexRecord(v.plane_ids, p, v.triples) for v, p in zip(self.vertices, x))
        return PolytopeTopology(verts, self.facets, self.active_plane_ids)


@dataclass(eq=False)
class Mesh:
    """Triangle mesh with provenance back to the polytope construction.

    ``provenance[i]`` indexes ``records`` (``-1`` when a vertex has no plane
    triple, e.g. after subdivision); ``face_planes[j]`` is the source plane
    of triangle ``j`` or ``-1``.
    """

    vertices: np.ndarray
    triangles: np.ndarray
    face_planes: np.ndarray = None
    provenance: np.ndarray = None
    convex_id: int = -1
    records: tuple = None

    def __post_init__(self):
        self.vertices = np.asarray(self.vertices, dtype=float).reshape(-1, 3)
        self.triangles = np.asarray(self.triangles, dtype=np.int64).reshape(-1, 3)
        if self.face_planes is None:
            self.face_planes = np.full(len(self.triangles), -1, dtype=np.int64)
        if self.provenance is None:
            self.provenance = np.full(len(self.vertices), -1, dtype=np.int64)

    @property
    def n_edges(self):
        t = self.triangles
        e = np.sort(np.concatenate([t[:, [0, 1]], t[:, [1, 2]], t[:, [2, 0]]]), axis=1)
        return len(np.unique(e, axis=0))

    def triangle_normals(self):
        v = self.vertices[self.triangles]
        n = np.cross(v[:, 1] - v[:, 0], v[:, 2] - v[:, 0])
        norm = np.linalg.norm(n, axis=1, keepdims=True)
        return n / np.where(norm > 0, norm, 1.0)

    def translated(self, t):
        return Mesh(self.vertices + np.asarray(t, float), self.triangles, self.face_planes,
                    self.provenance, self.convex_id, self.records)


def dualize(plane):
    """Dual point ``a / b`` of the plane ``a . x = b``."""
    if plane.offset <= 0:
        raise NonPositiveOffset(f"offset must be positive, got {plane.offset}")
    return plane.normal / plane.offset


def inverse3(A):
    """Cofactor inverse and determinant of a stack of 3x3 matrices."""
    r0, r1, r2 = A[..., 0, :], A[..., 1, :], A[..., 2, :]
    c0, c1, c2 = np.cross(r1, r2), np.cross(r2, r0), np.cross(r0, r1)
    det = np.einsum("...i,...i->...", r0, c0)
    adj = np.stack([c0, c1, c2], axis=-1)
    with np.errstate(divide="ignore", invalid="ignore"):
        inv = adj / det[..., None, None]
    return inv, det


def solve_triples(normals, offsets, triples, cond_cap=COND_CAP):
    """Solve ``A x = b`` for each plane triple.

    Returns
    -------
    x : (V, 3) vertex positions (undefined where not ``ok``)
    Ainv : (V, 3, 3) inverses of the stacked normals
    ok : (V,) bool, condition number below ``cond_cap``
    """
    triples = np.asarray(triples, dtype=np.int64).reshape(-1, 3)
    A = normals[triples]
    b = offsets[triples]
    Ainv, det = inverse3(A)
    with np.errstate(invalid="ignore", over="ignore"):
        cond = np.linalg.norm(A, axis=(1, 2)) * np.linalg.norm(Ainv, axis=(1, 2))
    ok = np.isfinite(cond) & (det != 0) & (cond < cond_cap)
    Ainv = np.where(ok[:, None, None], Ainv, 0.0)
    x = np.einsum("vij,vj->vi", Ainv, b)
    # one step of iterative refinement
    r = b - np.einsum("vij,vj->vi", A, x)
    x = x + np.einsum("vij,vj->vi", Ainv, r)
    return x, Ainv, ok


def solve_vertex(p1, p2, p3, cond_cap=COND_CAP):
    """Intersection point of three planes."""
    normals, offsets = plane_arrays([p1, p2, p3])
    x, _, ok = solve_triples(normals, offsets, [(0, 1, 2)], cond_cap)
    if not ok[0]:
        raise IllConditioned("plane triple is (nearly) parallel")
    return x[0]


def _check_planes(normals, offsets):
    if len(offsets) < 4:
        raise UnboundedOrDegenerate(f"need at least 4 planes, got {len(offsets)}")
    if np.any(offsets <= 0):
        raise NonPositiveOffset("all plane offsets must be positive")
    if not (np.all(np.isfinite(normals)) and np.all(np.isfinite(offsets))):
        raise UnboundedOrDegenerate("non-finite plane parameters")


def _dual_hull(normals, offsets, tolerance):
    dual = normals / offsets[:, None]
    try:
        return convex_hull_3d(dual, tolerance)
    except DegenerateInput as exc:
        raise UnboundedOrDegenerate(f"dual points are degenerate: {exc}") from exc


def _newell(p):
    q = np.roll(p, -1, axis=0)
    return np.array(
        [
            np.sum((p[:, 1] - q[:, 1]) * (p[:, 2] + q[:, 2])),
            np.sum((p[:, 2] - q[:, 2]) * (p[:, 0] + q[:, 0])),
            np.sum((p[:, 0] - q[:, 0]) * (p[:, 1] + q[:, 1])),
        ]
    )


def intersect_halfspaces(planes, tolerance=None, cond_cap=COND_CAP):
    """Vertices and facets of ``{x : a_i . x <= b_i}``.

    Parameters
    ----------
    planes : sequence of Hyperplane or array_like (K, 4)
    tolerance : float, optional
        Absolute tolerance for the dual hull (default: relative to the dual
        points' bounding box).

    Raises
    ------
    UnboundedOrDegenerate
        The intersection is unbounded or flat (origin not strictly inside the
        dual hull, or dual points coplanar).
    NonPositiveOffset
    """
    normals, offsets = plane_arrays(planes)
    return _intersect(normals, offsets, tolerance, cond_cap)


def _intersect(normals, offsets, tolerance=None, cond_cap=COND_CAP):
    _check_planes(normals, offsets)
    hull = _dual_hull(normals, offsets, tolerance)
    if any(f.offset <= hull.tolerance for f in hull.facets):
        raise UnboundedOrDegenerate("origin is not strictly inside the dual hull")

    # one candidate vertex per dual facet
    facet_triples = []
    for f in hull.facets:
        ids = f.vertex_ids
        fan = [tuple(sorted((ids[0], ids[k], ids[k + 1]))) for k in range(1, len(ids) - 1)]
        facet_triples.append(fan)
    flat = [t for fan in facet_triples for t in fan]
    x_all, _, ok_all = solve_triples(normals, offsets, flat, cond_cap)

    cand_pos, cand_triples = [], []
    pos = 0
    for fi, fan in enumerate(facet_triples):
        ok = ok_all[pos:pos + len(fan)]
        good = [t for t, o in zip(fan, ok) if o]
        pos += len(fan)
        if not good:
            ids = hull.facets[fi].vertex_ids
            extra = [tuple(sorted(c)) for c in combinations(ids, 3)]
            xe, _, oke = solve_triples(normals, offsets, extra, cond_cap)
            good = [t for t, o in zip(extra, oke) if o]
            if not good:
                raise UnboundedOrDegenerate(f"no well-conditioned plane triple at dual facet {fi}")
        if len(good) < len(fan):
            log.debug("dropped %d ill-conditioned triples at dual facet %d", len(fan) - len(good), fi)
        cand_triples.append(sorted(good))
    canon = [t[0] for t in cand_triples]
    cand_pos, _, _ = solve_triples(normals, offsets, canon, cond_cap)

    # merge coincident candidates
    n = len(cand_pos)
    diag = float(np.linalg.norm(cand_pos.max(axis=0) - cand_pos.min(axis=0)))
    tol = MERGE_REL * diag
    parent = list(range(n))

    def find(i):
        while parent[i] != i:
            parent[i] = parent[parent[i]]
            i = parent[i]
        return i

    d2 = ((cand_pos[:, None, :] - cand_pos[None, :, :]) ** 2).sum(axis=-1)
    for i, j in zip(*np.nonzero(np.triu(d2 < tol * tol, k=1))):
        ri, rj = find(i), find(j)
        if ri != rj:
            parent[max(ri, rj)] = min(ri, rj)
    groups = {}
    for i in range(n):
        groups.setdefault(find(i), []).append(i)
    merged = []
    for members in groups.values():
        trips = sorted({t for m in members for t in cand_triples[m]})
        merged.append((trips, members))
    merged.sort(key=lambda g: g[0][0])

    facet_to_vertex = np.empty(n, dtype=np.int64)
    canon = [g[0][0] for g in merged]
    xs, _, _ = solve_triples(normals, offsets, canon, cond_cap)
    vertices = []
    for vi, (trips, members) in enumerate(merged):
        facet_to_vertex[members] = vi
        vertices.append(VertexRecord(trips[0], xs[vi], tuple(trips)))

    # facet loop of plane i: dual facets around dual vertex i, in order
    around = {}
    for fi, f in enumerate(hull.facets):
        ids = f.vertex_ids
        m = len(ids)
        for k in range(m):
            around.setdefault(ids[k], {})[ids[k - 1]] = (fi, ids[(k + 1) % m])
    facets = {}
    for i in sorted(around):
        ring = around[i]
        start = min(ring, key=lambda key: ring[key][0])
        key, loop = start, []
        for _ in range(len(ring)):
            fi, nxt = ring[key]
            loop.append(int(facet_to_vertex[fi]))
            key = nxt
            if key == start or key not in ring:
                break
        dedup = [v for k, v in enumerate(loop) if v != loop[k - 1]] if len(loop) > 1 else loop
        if len(set(dedup)) < 3:
            continue
        if _newell(xs[dedup]) @ normals[i] < 0:
            dedup = dedup[::-1]
        m = dedup.index(min(dedup))
        facets[int(i)] = tuple(dedup[m:] + dedup[:m])

    active = frozenset(int(i) for i in hull.hull_vertex_ids)
    return PolytopeTopology(tuple(vertices), facets, active)


def redundant_planes(planes, tolerance=None):
    """Indices of planes whose dual point lies strictly inside the dual hull."""
    normals, offsets = plane_arrays(planes)
    _check_planes(normals, offsets)
    hull = _dual_hull(normals, offsets, tolerance)
    loc = classify_points(hull, hull.points)
    return {int(i) for i in np.nonzero(loc == Location.STRICTLY_INSIDE)[0]}


def build_mesh(poly, topology):
    """Fan-triangulate the facet loops; world positions include translation."""
    if len(topology.vertices) < 4:
        raise EmptyTopology(f"only {len(topology.vertices)} vertices")
    tris, planes = [], []
    for pid in sorted(topology.facets):
        loop = topology.facets[pid]
        for k in range(1, len(loop) - 1):
            tris.append((loop[0], loop[k], loop[k + 1]))
            planes.append(pid)
    verts = topology.positions + poly.translation
    return Mesh(
        verts,
        np.array(tris, dtype=np.int64).reshape(-1, 3),
        np.array(planes, dtype=np.int64),
        np.arange(len(verts), dtype=np.int64),
        poly.id,
        topology.vertices,
    )


def polytope_mesh(poly, tolerance=None):
    """Convenience: intersect ``poly``'s planes and build its mesh."""
    topo = _intersect(poly.normals, poly.offsets, tolerance)
    return build_mesh(poly, topo), topo


def signed_volume(mesh):
    v = mesh.vertices[mesh.triangles]
    return float(np.einsum("ij,ij->i", v[:, 0], np.cross(v[:, 1], v[:, 2])).sum() / 6.0)


def surface_area(mesh):
    v = mesh.vertices[mesh.triangles]
    return float(0.5 * np.linalg.norm(np.cross(v[:, 1] - v[:, 0], v[:, 2] - v[:, 0]), axis=1).sum())


def _loop_beta(n):
    n = np.asarray(n, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        beta = (5.0 / 8.0 - (3.0 / 8.0 + 0.25 * np.cos(2 * np.pi / n)) ** 2) / n
    beta = np.where(n == 3, 3.0 / 16.0, beta)
    return np.where(n > 0, beta, 0.0)


def loop_subdivide(mesh):
    """One iteration of Loop subdivision on a closed triangle mesh.

    Raises
    ------
    NotManifold
        If any edge is not shared by exactly two triangles.
    """
    V, F = mesh.vertices, mesh.triangles
    nv = len(V)
    directed = np.concatenate([F[:, [0, 1]], F[:, [1, 2]], F[:, [2, 0]]])
    opposite = np.concatenate([F[:, 2], F[:, 0], F[:, 1]])
    key = np.sort(directed, axis=1)
    edges, inv, counts = np.unique(key, axis=0, return_inverse=True, return_counts=True)
    inv = inv.reshape(-1)
    if np.any(counts != 2):
        raise NotManifold("every edge must be shared by exactly two triangles")
    if len(np.unique(directed, axis=0)) != len(directed):
        raise NotManifold("inconsistent triangle orientation")

    opp_sum = np.zeros((len(edges), 3))
    np.add.at(opp_sum, inv, V[opposite])
    odd = 0.375 * (V[edges[:, 0]] + V[edges[:, 1]]) + 0.125 * opp_sum

    valence = np.bincount(edges.ravel(), minlength=nv)
    nbr_sum = np.zeros((nv, 3))
    np.add.at(nbr_sum, edges[:, 0], V[edges[:, 1]])
    np.add.at(nbr_sum, edges[:, 1], V[edges[:, 0]])
    beta = _loop_beta(valence)
    even = (1.0 - valence * beta)[:, None] * V + beta[:, None] * nbr_sum

    nf = len(F)
    e01, e12, e20 = inv[:nf] + nv, inv[nf:2 * nf] + nv, inv[2 * nf:] + nv
    a, b, c = F[:, 0], F[:, 1], F[:, 2]
    tris = np.concatenate(
        [
            np.stack([a, e01, e20], axis=1),
            np.stack([b, e12, e01], axis=1),
            np.stack([c, e20, e12], axis=1),
            np.stack([e01, e12, e20], axis=1),
        ]
    )
    return Mesh(np.concatenate([even, odd]), tris, convex_id=mesh.convex_id)


def hull_planes(points, tolerance=None):
    """One plane ``(normal, offset)`` per merged hull facet of ``points``."""
    hull = convex_hull_3d(points, tolerance)
    return hull.equations

