"""Derivatives of polytope vertex positions with respect to plane parameters.

A vertex solves ``A x = b`` where the rows of ``A`` are the normals of its
plane triple. Implicit differentiation gives ``dx/db = A^-1`` and, for a
perturbation of row ``i``, ``dx = -A^-1 e_i (da_i . x)``. The combinatorics
(which planes meet at which vertex) are held fixed.
"""

from dataclasses import dataclass

import numpy as np

from .errors import IllConditioned, ShapeMismatch
from .polytope import COND_CAP, plane_arrays, solve_triples


@dataclass(frozen=True, eq=False)
class VertexJacobian:
    """``d_x_d_b[:, i]`` is dx/db_i; ``d_x_d_a[i]`` is the 3x3 block dx/da_i."""

    d_x_d_b: np.ndarray
    d_x_d_a: np.ndarray


@dataclass(eq=False)
class ParamGradients:
    grad_normals: np.ndarray
    grad_offsets: np.ndarray
    grad_translation: np.ndarray

    @classmethod
    def zeros(cls, n_planes):
        return cls(np.zeros((n_planes, 3)), np.zeros(n_planes), np.zeros(3))

    def flat(self):
        return np.concatenate([self.grad_normals.ravel(), self.grad_offsets, self.grad_translation])


def vertex_jacobian(p1, p2, p3, x=None, cond_cap=COND_CAP):
    """Closed-form Jacobian of the three-plane intersection point.

    ``x`` defaults to the solved intersection.
    """
    normals, offsets = plane_arrays([p1, p2, p3])
    xs, Ainv, ok = solve_triples(normals, offsets, [(0, 1, 2)], cond_cap)
    if not ok[0]:
        raise IllConditioned("plane triple is (nearly) parallel")
    Ainv = Ainv[0]
    x = xs[0] if x is None else np.asarray(x, dtype=float)
    d_x_d_a = np.stack([-np.outer(Ainv[:, i], x) for i in range(3)])
    return VertexJacobian(Ainv, d_x_d_a)


def backprop_vertices(topology, poly, vertex_grads, cond_cap=COND_CAP):
    """Pull per-vertex gradients back to plane and translation gradients.

    Parameters
    ----------
    topology : PolytopeTopology
    poly : ConvexPolyhedron
    vertex_grads : array_like (V, 3)
        dL/dx for each vertex of ``topology`` (world frame).

    Returns
    -------
    ParamGradients
        Planes that appear in no canonical triple get exactly zero.
    """
    g = np.asarray(vertex_grads, dtype=float)
    if g.shape != (len(topology.vertices), 3):
        raise ShapeMismatch(f"expected ({len(topology.vertices)}, 3) vertex gradients, got {g.shape}")
    out = ParamGradients.zeros(poly.n_planes)
    if len(g) == 0:
        return out
    triples = topology.triples
    x, Ainv, ok = solve_triples(poly.normals, poly.offsets, triples, cond_cap)
    if not np.all(ok):
        raise IllConditioned("ill-conditioned plane triple in topology")
    # w = A^-T g, one entry per plane of the triple
    w = np.einsum("vji,vj->vi", Ainv, g)
    # fixed accumulation order (vertex order) keeps results bit-stable
    np.add.at(out.grad_offsets, triples.ravel(), w.ravel())
    np.add.at(out.grad_normals, triples.ravel(), (-w[:, :, None] * x[:, None, :]).reshape(-1, 3))
    out.grad_translation = g.sum(axis=0)
    return out
