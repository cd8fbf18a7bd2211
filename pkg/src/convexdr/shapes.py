"""Reference shapes used as fitting targets and in tests."""

import numpy as np

from .polytope import ConvexPolyhedron, Mesh, loop_subdivide, polytope_mesh

AXES = np.array([[1, 0, 0], [-1, 0, 0], [0, 1, 0], [0, -1, 0], [0, 0, 1], [0, 0, -1]], dtype=float)


def box(center=(0.0, 0.0, 0.0), size=(2.0, 2.0, 2.0), id=0):
    """Axis-aligned box as a six-plane convex centred on its translation."""
    half = 0.5 * np.broadcast_to(np.asarray(size, dtype=float), (3,))
    return ConvexPolyhedron(AXES.copy(), np.repeat(half, 2), center, id)


def box_mesh(center=(0.0, 0.0, 0.0), size=(2.0, 2.0, 2.0)):
    return polytope_mesh(box(center, size))[0]


def tetrahedron(size=1.0):
    n = np.array([[1, 1, 1], [1, -1, -1], [-1, 1, -1], [-1, -1, 1]], dtype=float) / np.sqrt(3.0)
    return ConvexPolyhedron(n, np.full(4, float(size)))


def icosphere(subdivisions=3, radius=1.0):
    """Loop-free icosphere: midpoint subdivision projected onto the sphere."""
    g = (1.0 + np.sqrt(5.0)) / 2.0
    V = np.array([[-1, g, 0], [1, g, 0], [-1, -g, 0], [1, -g, 0], [0, -1, g], [0, 1, g],
                  [0, -1, -g], [0, 1, -g], [g, 0, -1], [g, 0, 1], [-g, 0, -1], [-g, 0, 1]], dtype=float)
    F = np.array([[0, 11, 5], [0, 5, 1], [0, 1, 7], [0, 7, 10], [0, 10, 11], [1, 5, 9], [5, 11, 4],
                  [11, 10, 2], [10, 7, 6], [7, 1, 8], [3, 9, 4], [3, 4, 2], [3, 2, 6], [3, 6, 8],
                  [3, 8, 9], [4, 9, 5], [2, 4, 11], [6, 2, 10], [8, 6, 7], [9, 8, 1]], dtype=np.int64)
    V /= np.linalg.norm(V, axis=1, keepdims=True)
    for _ in range(subdivisions):
        # loop_subdivide gives the right connectivity; positions are re-projected
        sub = loop_subdivide(Mesh(V, F))
        nv = len(V)
        edges = np.unique(np.sort(np.concatenate([F[:, [0, 1]], F[:, [1, 2]], F[:, [2, 0]]]), axis=1), axis=0)
        mid = 0.5 * (V[edges[:, 0]] + V[edges[:, 1]])
        V = np.concatenate([V, mid])
        V /= np.linalg.norm(V, axis=1, keepdims=True)
        F = sub.triangles
        assert len(V) == nv + len(edges) == len(sub.vertices)
    return Mesh(radius * V, F)


def l_shape(depth=1.0):
    """Two overlapping boxes forming an L inside ``[-1, 1]^2`` in the xy-plane."""
    return [box((-0.5, 0.0, 0.0), (1.0, 2.0, depth), id=0), box((0.0, -0.5, 0.0), (2.0, 1.0, depth), id=1)]
