"""Surface sampling and point-set metrics (Chamfer distance, normal consistency)."""

from dataclasses import dataclass

import numpy as np
from scipy.spatial import cKDTree

from .errors import EmptyInput, EmptyMesh
from .polytope import Mesh


@dataclass(frozen=True, eq=False)
class SampledSurface:
    """Points on a surface with the unit normal of the triangle each came from.

    ``source`` holds ``(mesh index, triangle index)`` per sample.
    """

    points: np.ndarray
    normals: np.ndarray
    source: np.ndarray = None

    @property
    def count(self):
        return len(self.points)

    def __len__(self):
        return len(self.points)


def _as_meshes(meshes):
    if isinstance(meshes, Mesh):
        return [meshes]
    return list(meshes)


def _inside_other(points, owner, meshes, tol):
    """True where a point lies strictly inside some convex mesh other than its own."""
    hit = np.zeros(len(points), dtype=bool)
    for k, m in enumerate(meshes):
        n = m.triangle_normals()
        off = np.einsum("ij,ij->i", n, m.vertices[m.triangles[:, 0]])
        cand = ~hit & (owner != k)
        if not np.any(cand):
            continue
        p = points[cand]
        inside = np.all(p @ n.T - off < -tol, axis=1)
        hit[np.nonzero(cand)[0][inside]] = True
    return hit


def sample_surface(meshes, n, seed=0, union=False, tol=1e-9):
    """Area-weighted uniform samples on one mesh or a set of meshes.

    Parameters
    ----------
    meshes : Mesh or list of Mesh
    n : int
        Number of samples.
    seed : int
    union : bool
        Treat the meshes as convex pieces of a union and keep only samples
        on its outer boundary, i.e. drop points strictly inside another piece.
        Sampling continues until ``n`` points survive (or a round limit is hit
        when almost nothing is exposed).
    tol : float
        Strictness margin for ``union``.

    Raises
    ------
    EmptyMesh
        If there are no triangles with positive area.
    """
    meshes = _as_meshes(meshes)
    if n < 0:
        raise ValueError("n must be non-negative")
    tris, owner, local = [], [], []
    for k, m in enumerate(meshes):
        tris.append(m.vertices[m.triangles])
        owner.append(np.full(len(m.triangles), k))
        local.append(np.arange(len(m.triangles)))
    if not tris or sum(len(t) for t in tris) == 0:
        raise EmptyMesh("no triangles to sample")
    tri = np.concatenate(tris)
    owner = np.concatenate(owner)
    local = np.concatenate(local)
    cross = np.cross(tri[:, 1] - tri[:, 0], tri[:, 2] - tri[:, 0])
    area = 0.5 * np.linalg.norm(cross, axis=1)
    if not area.sum() > 0:
        raise EmptyMesh("mesh has zero area")
    normals = cross / np.where(area > 0, 2.0 * area, 1.0)[:, None]
    cdf = np.cumsum(area)
    cdf /= cdf[-1]

    rng = np.random.default_rng(seed)
    pts, nrm, src = [], [], []
    have = 0
    rounds = 0
    while have < n and rounds < 64:
        rounds += 1
        batch = n - have if not union else max(2 * (n - have), 1024)
        idx = np.minimum(np.searchsorted(cdf, rng.random(batch), side="right"), len(cdf) - 1)
        r1 = np.sqrt(rng.random(batch))
        r2 = rng.random(batch)
        t = tri[idx]
        p = (1 - r1)[:, None] * t[:, 0] + (r1 * (1 - r2))[:, None] * t[:, 1] + (r1 * r2)[:, None] * t[:, 2]
        if union and len(meshes) > 1:
            keep = ~_inside_other(p, owner[idx], meshes, tol)
            p, idx = p[keep], idx[keep]
        take = min(len(p), n - have)
        pts.append(p[:take])
        nrm.append(normals[idx[:take]])
        src.append(np.stack([owner[idx[:take]], local[idx[:take]]], axis=1))
        have += take
    if n == 0:
        return SampledSurface(np.zeros((0, 3)), np.zeros((0, 3)), np.zeros((0, 2), dtype=np.int64))
    return SampledSurface(np.concatenate(pts), np.concatenate(nrm), np.concatenate(src))


def _check(a, b):
    if a.count == 0 or b.count == 0:
        raise EmptyInput("both point sets must be nonempty")


def _points(s):
    return s.points if isinstance(s, SampledSurface) else np.asarray(s, dtype=float).reshape(-1, 3)


def chamfer(a, b, order=2):
    """Symmetric Chamfer distance.

    ``mean_a min_b |a - b|^order + mean_b min_a |a - b|^order``. Accepts
    :class:`SampledSurface` or plain ``(N, 3)`` arrays.
    """
    if order not in (1, 2):
        raise ValueError("order must be 1 or 2")
    pa, pb = _points(a), _points(b)
    if len(pa) == 0 or len(pb) == 0:
        raise EmptyInput("both point sets must be nonempty")
    da, _ = cKDTree(pb).query(pa)
    db, _ = cKDTree(pa).query(pb)
    return float(np.mean(da ** order) + np.mean(db ** order))


def normal_consistency(a, b):
    """Symmetric mean of ``|n . n_nearest|`` over nearest-neighbour pairs."""
    _check(a, b)
    _, ia = cKDTree(b.points).query(a.points)
    _, ib = cKDTree(a.points).query(b.points)
    ca = np.abs(np.einsum("ij,ij->i", a.normals, b.normals[ia]))
    cb = np.abs(np.einsum("ij,ij->i", b.normals, a.normals[ib]))
    return float(0.5 * (ca.mean() + cb.mean()))


def evaluate(pred_meshes, target_meshes, n=100_000, seed=0):
    """Chamfer-L1, Chamfer-L2 and normal consistency between two mesh sets.

    Both sides are sampled on the outer surface of their union.
    """
    a = sample_surface(pred_meshes, n, seed, union=True)
    b = sample_surface(target_meshes, n, seed, union=True)
    return {
        "chamfer_l1": chamfer(a, b, 1),
        "chamfer_l2": chamfer(a, b, 2),
        "normal_consistency": normal_consistency(a, b),
    }
