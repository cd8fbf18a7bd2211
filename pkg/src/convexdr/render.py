"""Pinhole cameras, a z-buffer rasterizer and a soft silhouette rasterizer.

The soft rasterizer gives each triangle ``j`` a coverage probability
``D_j(p) = sigmoid(s * d^2 / sigma)`` at pixel ``p``, where ``d`` is the
screen-space distance to the triangle boundary and ``s`` is +1 inside and
-1 outside. Pixels aggregate as ``1 - prod_j (1 - D_j)`` over every triangle
of every mesh, so unions of convexes need no special handling.
"""

from dataclasses import dataclass

import numpy as np

from . import _kernels
from .errors import BehindCamera, InvalidConfig, ShapeMismatch

TILE = 8


@dataclass(frozen=True, eq=False)
class Camera:
    position: np.ndarray
    look_at: np.ndarray
    up: np.ndarray
    fov: float
    width: int
    height: int
    near: float = 1e-3
    far: float = 1e3

    def __post_init__(self):
        for name in ("position", "look_at", "up"):
            object.__setattr__(self, name, np.asarray(getattr(self, name), dtype=float).reshape(3))
        if np.allclose(self.position, self.look_at):
            raise InvalidConfig("camera position coincides with look_at")
        if not 0.0 < self.fov < np.pi:
            raise InvalidConfig(f"fov must lie in (0, pi), got {self.fov}")
        if self.width < 1 or self.height < 1:
            raise InvalidConfig("image size must be at least 1x1")
        f = self.look_at - self.position
        f = f / np.linalg.norm(f)
        r = np.cross(f, self.up)
        if np.linalg.norm(r) < 1e-12:
            raise InvalidConfig("up vector is parallel to the viewing direction")
        r = r / np.linalg.norm(r)
        object.__setattr__(self, "_basis", (r, np.cross(r, f), f))

    @property
    def basis(self):
        """Unit ``(right, up, forward)`` vectors."""
        return self._basis

    @property
    def focal(self):
        """Focal length in pixels."""
        return 0.5 * self.height / np.tan(0.5 * self.fov)

    @property
    def shape(self):
        return (self.height, self.width)


def project_points(camera, points):
    """Project world points.

    Returns
    -------
    xy : (N, 2) pixel coordinates, (0, 0) at the top-left corner
    depth : (N,) distance along the viewing axis
    """
    r, u, f = camera.basis
    d = np.atleast_2d(np.asarray(points, dtype=float)) - camera.position
    z = d @ f
    with np.errstate(divide="ignore", invalid="ignore"):
        inv = camera.focal / z
    xy = np.stack([0.5 * camera.width + (d @ r) * inv, 0.5 * camera.height - (d @ u) * inv], axis=1)
    return xy, z


def project(camera, p):
    xy, z = project_points(camera, p)
    if not z[0] > camera.near:
        raise BehindCamera(f"point at depth {z[0]:.6g} is not in front of the near plane")
    return xy[0], float(z[0])


def unproject(camera, xy, depth):
    """Inverse of :func:`project` for a known view depth."""
    r, u, f = camera.basis
    xy = np.asarray(xy, dtype=float)
    dx = (xy[..., 0] - 0.5 * camera.width) / camera.focal
    dy = (xy[..., 1] - 0.5 * camera.height) / camera.focal
    depth = np.asarray(depth, dtype=float)
    return camera.position + depth[..., None] * (f + dx[..., None] * r - dy[..., None] * u)


def projection_jacobian(camera, points):
    """d(xy)/d(point), shape (N, 2, 3)."""
    r, u, f = camera.basis
    d = np.atleast_2d(np.asarray(points, dtype=float)) - camera.position
    z = d @ f
    inv = 1.0 / z
    fc = camera.focal
    jx = fc * (r[None, :] * inv[:, None] - ((d @ r) * inv * inv)[:, None] * f[None, :])
    jy = -fc * (u[None, :] * inv[:, None] - ((d @ u) * inv * inv)[:, None] * f[None, :])
    return np.stack([jx, jy], axis=1)


def fibonacci_cameras(n_views, radius, width, height, fov=None, near=1e-3, far=1e3):
    """Cameras on a Fibonacci sphere of ``radius``, all looking at the origin.

    ``fov`` defaults to the angle subtended by a sphere of radius
    ``radius / 2.5`` (the scene bound) plus a 10% margin.
    """
    if fov is None:
        fov = 2.0 * np.arcsin(1.0 / 2.5) * 1.1
    golden = np.pi * (3.0 - np.sqrt(5.0))
    cams = []
    for i in range(n_views):
        y = 1.0 - 2.0 * (i + 0.5) / n_views
        rr = np.sqrt(max(0.0, 1.0 - y * y))
        phi = golden * i
        pos = radius * np.array([rr * np.cos(phi), y, rr * np.sin(phi)])
        up = np.array([0.0, 1.0, 0.0]) if rr > 1e-6 else np.array([0.0, 0.0, 1.0])
        cams.append(Camera(pos, np.zeros(3), up, fov, width, height, near, far))
    return cams


@dataclass(frozen=True)
class SoftRasterConfig:
    """Soft rasterizer settings.

    ``sigma`` is the squared-distance falloff in px^2. Triangle/pixel pairs with
    ``d^2 / sigma > cutoff`` are dropped (outside) or saturate to full coverage
    (inside); ``cutoff=None`` evaluates every pair exactly.
    """

    sigma: float = 1.0
    cutoff: float = 16.0

    def __post_init__(self):
        if not self.sigma > 0:
            raise InvalidConfig(f"sigma must be positive, got {self.sigma}")

    @property
    def cut2(self):
        return np.inf if self.cutoff is None else self.cutoff * self.sigma


def _stack(meshes):
    if len(meshes) == 0:
        return np.zeros((0, 3)), np.zeros((0, 3), dtype=np.int64), []
    verts, tris, offsets = [], [], []
    base = 0
    for m in meshes:
        verts.append(m.vertices)
        tris.append(m.triangles + base)
        offsets.append(base)
        base += len(m.vertices)
    return np.concatenate(verts), np.concatenate(tris), offsets


class _Screen:
    """Per-view triangle setup shared by the forward and backward passes."""

    def __init__(self, verts, tris, camera, cut2):
        self.xy, self.z = project_points(camera, verts)
        in_front = self.z > camera.near
        self.tris = tris
        tri_xy = self.xy[tris]
        valid = np.all(in_front[tris], axis=1)
        a = tri_xy[:, 1] - tri_xy[:, 0]
        b = tri_xy[:, 2] - tri_xy[:, 0]
        area2 = a[:, 0] * b[:, 1] - a[:, 1] * b[:, 0]
        valid &= np.abs(area2) > 1e-12
        tri_xy = np.where(valid[:, None, None], tri_xy, 0.0)
        e = np.roll(tri_xy, -1, axis=1) - tri_xy
        elen = np.linalg.norm(e, axis=2)
        elen = np.where(elen > 0, elen, 1.0)
        sgn = np.sign(area2)[:, None]
        nx = -e[:, :, 1] * sgn / elen
        ny = e[:, :, 0] * sgn / elen
        c = -(nx * tri_xy[:, :, 0] + ny * tri_xy[:, :, 1])
        self.tri_xy = np.ascontiguousarray(tri_xy)
        self.lines = np.ascontiguousarray(np.stack([nx, ny, c], axis=2))
        self.valid = valid
        margin = np.sqrt(cut2) if np.isfinite(cut2) else np.inf
        bbox = np.concatenate([tri_xy.min(axis=1) - margin, tri_xy.max(axis=1) + margin], axis=1)
        lim = np.array([camera.width, camera.height] * 2, dtype=float)
        bbox = np.clip(bbox, -1.0, lim + 1.0)
        self.start, self.items, self.saturated = _kernels.bin_triangles(
            np.ascontiguousarray(bbox), self.lines, valid, camera.height, camera.width, TILE,
            margin if np.isfinite(margin) else 1e300,
        )

    def vertex_grads(self, verts, camera, g_tri):
        """Chain screen-space corner gradients ``(T, 3, 2)`` to world vertices."""
        g_xy = np.zeros((len(verts), 2))
        np.add.at(g_xy, self.tris.ravel(), g_tri.reshape(-1, 2))
        used = np.unique(self.tris[self.valid].ravel())
        out = np.zeros((len(verts), 3))
        if len(used):
            J = projection_jacobian(camera, verts[used])
            out[used] = np.einsum("nk,nkj->nj", g_xy[used], J)
        return out


def _hard(verts, tris, camera):
    xy, z = project_points(camera, verts)
    valid = np.all((z > camera.near)[tris], axis=1)
    with np.errstate(divide="ignore"):
        inv_z = np.where(valid[:, None], 1.0 / z[tris], 0.0)
    return _kernels.hard_raster(np.ascontiguousarray(xy[tris]), inv_z, valid, camera.height, camera.width)


def raster_hard(meshes, camera):
    """Binary silhouette and nearest-surface depth (0 where empty)."""
    verts, tris, _ = _stack(meshes)
    if len(tris) == 0:
        return np.zeros(camera.shape), np.zeros(camera.shape)
    zbuf, _ = _hard(verts, tris, camera)
    hit = np.isfinite(zbuf)
    return hit.astype(float), np.where(hit, zbuf, 0.0)


def pixel_rays(camera):
    """Per-pixel ray directions ``d`` with ``position + z d`` at view depth ``z``."""
    r, u, f = camera.basis
    j, i = np.meshgrid(np.arange(camera.width) + 0.5, np.arange(camera.height) + 0.5)
    dx = (j - 0.5 * camera.width) / camera.focal
    dy = (i - 0.5 * camera.height) / camera.focal
    return f + dx[..., None] * r - dy[..., None] * u


def depth_l1(meshes, cameras, depths, with_grad=True):
    """Hard-z depth L1 averaged over views, and its gradient per mesh vertex.

    Only pixels covered in both the render and the target depth (nonzero)
    contribute; each term is normalised by the pixel count so the scale
    matches :func:`multiview_l1`. The depth of a pixel is the view depth at
    which its ray meets the plane of the front triangle, so the gradient
    flows to that triangle's three corners. Coverage changes are left to the
    silhouette term.
    """
    verts, tris, offsets = _stack(meshes)
    nv = len(cameras)
    total = 0.0
    g = np.zeros((len(verts), 3))
    for cam, target in zip(cameras, depths):
        target = np.asarray(target, dtype=float)
        if target.shape != cam.shape:
            raise ShapeMismatch(f"depth {target.shape} does not match camera {cam.shape}")
        if len(tris) == 0:
            continue
        zbuf, tid = _hard(verts, tris, cam)
        mask = (tid >= 0) & (target > 0)
        if not np.any(mask):
            continue
        scale = 1.0 / (nv * target.size)
        diff = zbuf[mask] - target[mask]
        total += float(np.abs(diff).sum()) * scale
        if not with_grad:
            continue
        t = tris[tid[mask]]
        v0, v1, v2 = verts[t[:, 0]], verts[t[:, 1]], verts[t[:, 2]]
        d = pixel_rays(cam)[mask]
        e1, e2 = v1 - v0, v2 - v0
        n = np.cross(e1, e2)
        den = np.einsum("ij,ij->i", n, d)
        z = np.einsum("ij,ij->i", n, v0 - cam.position) / den
        x = cam.position + z[:, None] * d
        w = (np.sign(diff) * scale)[:, None]
        gn = w * (v0 - x) / den[:, None]
        g1 = np.cross(e2, gn)
        g2 = np.cross(gn, e1)
        g0 = w * n / den[:, None] - g1 - g2
        idx = t.T.ravel()
        gk = np.concatenate([g0, g1, g2])
        for j in range(3):
            g[:, j] += np.bincount(idx, gk[:, j], minlength=len(verts))
    if not with_grad:
        return total, None
    return total, [g[o:o + len(m.vertices)] for o, m in zip(offsets, meshes)]


def _soft(verts, tris, camera, cfg):
    scr = _Screen(verts, tris, camera, cfg.cut2)
    S, P = _kernels.soft_forward(
        scr.tri_xy, scr.lines, scr.start, scr.items, scr.saturated, camera.height, camera.width, TILE, cfg.sigma, cfg.cut2
    )
    return scr, S, P


def _soft_vertex_grads(scr, verts, camera, cfg, G, P):
    g_tri = _kernels.soft_backward(
        scr.tri_xy, scr.lines, scr.start, scr.items, camera.height, camera.width, TILE,
        cfg.sigma, cfg.cut2, np.ascontiguousarray(G, dtype=float), P,
    )
    return scr.vertex_grads(verts, camera, g_tri)


def raster_soft(meshes, camera, cfg=SoftRasterConfig()):
    verts, tris, _ = _stack(meshes)
    if len(tris) == 0:
        return np.zeros(camera.shape)
    _, S, _ = _soft(verts, tris, camera, cfg)
    return S


def raster_soft_backward(meshes, camera, cfg, pixel_grads):
    """Per-mesh vertex gradients of ``sum(pixel_grads * raster_soft(...))``."""
    pixel_grads = np.asarray(pixel_grads, dtype=float)
    if pixel_grads.shape != camera.shape:
        raise ShapeMismatch(f"pixel_grads has shape {pixel_grads.shape}, expected {camera.shape}")
    verts, tris, offsets = _stack(meshes)
    if len(tris) == 0:
        return [np.zeros((len(m.vertices), 3)) for m in meshes]
    scr, _, P = _soft(verts, tris, camera, cfg)
    g = _soft_vertex_grads(scr, verts, camera, cfg, pixel_grads, P)
    return [g[o:o + len(m.vertices)] for o, m in zip(offsets, meshes)]


def image_l1(rendered, target):
    """Mean absolute difference and its (sub)gradient with respect to ``rendered``."""
    rendered = np.asarray(rendered, dtype=float)
    target = np.asarray(target, dtype=float)
    if rendered.shape != target.shape:
        raise ShapeMismatch(f"{rendered.shape} vs {target.shape}")
    diff = rendered - target
    n = diff.size
    return float(np.abs(diff).sum() / n), np.sign(diff) / n


def multiview_l1(meshes, cameras, targets, cfg, with_grad=True):
    """Image-L1 loss averaged over views, and its gradient per mesh vertex.

    Returns ``(loss, grads)`` where ``grads`` is a list aligned with ``meshes``
    (``None`` when ``with_grad`` is false).
    """
    verts, tris, offsets = _stack(meshes)
    nv = len(cameras)
    total = 0.0
    g = np.zeros((len(verts), 3))
    for cam, target in zip(cameras, targets):
        target = np.asarray(target, dtype=float)
        if target.shape != cam.shape:
            raise ShapeMismatch(f"target {target.shape} does not match camera {cam.shape}")
        if len(tris) == 0:
            total += float(np.abs(target).mean()) / nv
            continue
        scr = _Screen(verts, tris, cam, cfg.cut2)
        loss, _, g_tri = _kernels.soft_l1(
            scr.tri_xy, scr.lines, scr.start, scr.items, scr.saturated, cam.height, cam.width, TILE,
            cfg.sigma, cfg.cut2, target, 1.0 / nv,
        )
        total += loss / nv
        if with_grad:
            g += scr.vertex_grads(verts, cam, g_tri)
    if not with_grad:
        return total, None
    return total, [g[o:o + len(m.vertices)] for o, m in zip(offsets, meshes)]


@dataclass(frozen=True, eq=False)
class RenderTarget:
    """A camera, the silhouette it should see and optionally a depth image (0 = empty)."""

    camera: Camera
    image: np.ndarray
    depth: np.ndarray = None

    def __post_init__(self):
        img = np.asarray(self.image, dtype=float)
        if img.shape != self.camera.shape:
            raise ShapeMismatch(f"image {img.shape} does not match camera {self.camera.shape}")
        object.__setattr__(self, "image", img)
        if self.depth is not None:
            dep = np.asarray(self.depth, dtype=float)
            if dep.shape != self.camera.shape:
                raise ShapeMismatch(f"depth {dep.shape} does not match camera {self.camera.shape}")
            object.__setattr__(self, "depth", dep)
