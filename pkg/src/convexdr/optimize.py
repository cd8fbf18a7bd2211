"""Fitting a union of convex polytopes to silhouettes.

The loop alternates gradient steps (Adam over plane normals, offsets and
translations) with housekeeping events: dropping redundant planes and tiny
convexes, densifying every convex by one round of Loop subdivision, and
respawning convexes to keep the budget constant.
"""

import copy
import logging
from dataclasses import dataclass, field, fields

import numpy as np

from .diffgeom import ParamGradients, backprop_vertices
from .errors import DegenerateInput, EmptyTopology, IllConditioned, InvalidConfig
from .polytope import ConvexPolyhedron, _intersect, build_mesh, hull_planes, loop_subdivide
from .polytope import polytope_mesh, redundant_planes, signed_volume
from .render import SoftRasterConfig, depth_l1, multiview_l1

log = logging.getLogger(__name__)

B_MIN = 1e-4
GAUGE_RANGE = (0.5, 2.0)
_INIT_CANDIDATES = 16

# Failures that make a convex unusable for the current step.
_GEOMETRY_ERRORS = (DegenerateInput, EmptyTopology, IllConditioned)


@dataclass(eq=False)
class Scene:
    """Convexes plus the axis-aligned region they are initialised in.

    ``budget`` is the convex count that spawning restores; ``next_id`` and
    ``spawn_count`` keep ids unique and spawns reproducible.
    """

    convexes: list
    region: np.ndarray
    seed: int = 0
    budget: int = 0
    init_size: float = 0.0
    next_id: int = 0
    spawn_count: int = 0

    def __post_init__(self):
        self.region = np.asarray(self.region, dtype=float).reshape(2, 3)
        if not np.all(self.region[1] > self.region[0]):
            raise InvalidConfig("region must have positive extent on every axis")
        if self.init_size <= 0:
            self.init_size = default_init_size(self.region)
        if self.next_id <= max((c.id for c in self.convexes), default=-1):
            self.next_id = max((c.id for c in self.convexes), default=-1) + 1

    @property
    def region_volume(self):
        return float(np.prod(self.region[1] - self.region[0]))

    def copy(self):
        return copy.deepcopy(self)

    def meshes(self):
        return [polytope_mesh(c)[0] for c in self.convexes]


def default_init_size(region):
    region = np.asarray(region, dtype=float).reshape(2, 3)
    return 0.15 * float(np.linalg.norm(region[1] - region[0]))


@dataclass(eq=False)
class _Moments:
    m_n: np.ndarray
    v_n: np.ndarray
    m_b: np.ndarray
    v_b: np.ndarray
    m_t: np.ndarray
    v_t: np.ndarray
    # plane and translation moments reset independently, so each keeps its own count
    step_planes: int = 0
    step_translation: int = 0

    @classmethod
    def fresh(cls, n_planes):
        return cls(np.zeros((n_planes, 3)), np.zeros((n_planes, 3)), np.zeros(n_planes), np.zeros(n_planes),
                   np.zeros(3), np.zeros(3))

    def reset_planes(self, n_planes):
        self.m_n, self.v_n = np.zeros((n_planes, 3)), np.zeros((n_planes, 3))
        self.m_b, self.v_b = np.zeros(n_planes), np.zeros(n_planes)
        self.step_planes = 0

    def keep_planes(self, keep):
        self.m_n, self.v_n = self.m_n[keep], self.v_n[keep]
        self.m_b, self.v_b = self.m_b[keep], self.v_b[keep]


@dataclass(eq=False)
class OptimizerState:
    """Adam moments keyed by convex id."""

    moments: dict = field(default_factory=dict)
    step: int = 0
    lr_planes: float = 1e-3
    lr_translation: float = 1e-2
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def for_scene(cls, scene, schedule=None):
        s = schedule or Schedule()
        st = cls(lr_planes=s.lr_planes, lr_translation=s.lr_translation)
        st.sync(scene)
        return st

    def sync(self, scene):
        """Drop moments of removed convexes and create fresh ones for new convexes."""
        ids = {c.id for c in scene.convexes}
        self.moments = {k: v for k, v in self.moments.items() if k in ids}
        for c in scene.convexes:
            mom = self.moments.get(c.id)
            if mom is None or len(mom.m_b) != c.n_planes:
                self.moments[c.id] = _Moments.fresh(c.n_planes)


@dataclass
class Schedule:
    """Every knob of :func:`fit`.

    Events (plane purge, convex purge, densify, spawn) fall at ``n_events``
    evenly spaced steps inside the first ``event_fraction`` of the run. The
    soft-raster ``sigma`` decays geometrically from ``sigma_start`` to
    ``sigma_end``. ``depth_weight`` scales an optional hard-z depth L1 term,
    used only for targets that carry a depth image.
    """

    total_steps: int = 20000
    n_events: int = 10
    event_fraction: float = 0.8
    purge_every: int = 250
    volume_threshold: float = None
    sigma_start: float = 1.0
    sigma_end: float = 0.0625
    raster_cutoff: float = 16.0
    lr_planes: float = 1e-3
    lr_translation: float = 1e-2
    b_min: float = B_MIN
    densify: bool = True
    spawn: bool = True
    max_planes: int = 1024
    views_per_step: int = 0
    snapshot_every: int = 100
    depth_weight: float = 0.0

    def __post_init__(self):
        if self.total_steps < 0 or self.n_events < 0 or self.purge_every < 0:
            raise InvalidConfig("step counts must be non-negative")
        if self.depth_weight < 0:
            raise InvalidConfig("depth_weight must be non-negative")
        if not 0.0 < self.event_fraction <= 1.0:
            raise InvalidConfig("event_fraction must lie in (0, 1]")
        if not (self.sigma_start > 0 and self.sigma_end > 0):
            raise InvalidConfig("sigma bounds must be positive")
        if not self.b_min > 0:
            raise InvalidConfig("b_min must be positive")

    @property
    def event_steps(self):
        T = self.total_steps
        steps = [int(round(self.event_fraction * T * k / self.n_events)) for k in range(1, self.n_events + 1)]
        return sorted({s for s in steps if 0 < s < T})

    def sigma_at(self, step):
        if self.total_steps <= 1:
            return self.sigma_start
        f = step / (self.total_steps - 1)
        return float(self.sigma_start * (self.sigma_end / self.sigma_start) ** f)

    def threshold_for(self, scene):
        if self.volume_threshold is not None:
            return self.volume_threshold
        return 1e-5 * scene.region_volume

    @classmethod
    def from_mapping(cls, mapping):
        """Build from string values, e.g. parsed config lines."""
        known = {f.name: f for f in fields(cls)}
        kwargs = {}
        for key, raw in mapping.items():
            if key not in known:
                raise InvalidConfig(f"unknown schedule key {key!r}")
            kwargs[key] = _coerce(key, raw, type(getattr(cls(), key)))
        return cls(**kwargs)


def _coerce(key, raw, kind):
    if not isinstance(raw, str):
        return raw
    try:
        if kind is bool:
            low = raw.strip().lower()
            if low not in ("true", "false", "1", "0", "yes", "no"):
                raise ValueError(raw)
            return low in ("true", "1", "yes")
        if kind is int:
            return int(raw)
        if raw.strip().lower() == "none":
            return None
        return float(raw)
    except ValueError:
        raise InvalidConfig(f"bad value for {key}: {raw!r}") from None


def parse_config(text):
    """Parse ``key = value`` lines; ``#`` starts a comment."""
    out = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise InvalidConfig(f"line {lineno}: expected key = value")
        key, value = (s.strip() for s in line.split("=", 1))
        if not key:
            raise InvalidConfig(f"line {lineno}: empty key")
        out[key] = value
    return out


def _random_normals(rng, n_planes):
    v = rng.normal(size=(n_planes, 3))
    return v / np.linalg.norm(v, axis=1, keepdims=True)


def _random_convex(rng, n_planes, size, region, cid, normals=None):
    """Equal offsets ``size``; among several normal draws keep the roundest bounded one."""
    t = rng.uniform(region[0], region[1])
    offsets = np.full(n_planes, float(size))
    if normals is not None:
        return ConvexPolyhedron(np.array(normals, dtype=float), offsets, t, cid)
    best, best_r = None, np.inf
    for _ in range(_INIT_CANDIDATES):
        nrm = _random_normals(rng, n_planes)
        try:
            topo = _intersect(nrm, offsets)
        except _GEOMETRY_ERRORS:
            continue
        r = np.linalg.norm(topo.positions, axis=1).max()
        if r < best_r:
            best, best_r = nrm, r
    if best is None:
        # fall back to a fixed, always-bounded arrangement
        best = _fallback_normals(n_planes)
    return ConvexPolyhedron(best, offsets, t, cid)


def _fallback_normals(n_planes):
    base = np.array([[1, 1, 1], [1, -1, -1], [-1, 1, -1], [-1, -1, 1]], dtype=float) / np.sqrt(3.0)
    if n_planes <= 4:
        return base[:n_planes]
    i = np.arange(n_planes - 4) + 0.5
    y = 1.0 - 2.0 * i / (n_planes - 4)
    r = np.sqrt(1.0 - y * y)
    phi = np.pi * (3.0 - np.sqrt(5.0)) * i
    extra = np.stack([r * np.cos(phi), y, r * np.sin(phi)], axis=1)
    return np.concatenate([base, extra])


def init_scene(n_convex, n_planes, seed=0, region=((-1, -1, -1), (1, 1, 1)), init_size=None, normals=None):
    """Random convexes of equal size inside ``region``.

    Parameters
    ----------
    n_convex, n_planes : int
        Convex count (>= 1) and planes per convex (>= 4).
    seed : int
    region : (2, 3) array_like
        ``(min corner, max corner)``; translations are uniform inside it.
    init_size : float, optional
        Common plane offset; defaults to 0.15 x the region diagonal.
    normals : (n_planes, 3) array_like, optional
        Use these normals for every convex instead of random ones.
    """
    if n_convex < 1:
        raise InvalidConfig("n_convex must be at least 1")
    if n_planes < 4:
        raise InvalidConfig("n_planes must be at least 4")
    region = np.asarray(region, dtype=float).reshape(2, 3)
    if not np.all(region[1] > region[0]):
        raise InvalidConfig("region must have positive extent on every axis")
    size = default_init_size(region) if init_size is None else float(init_size)
    if not size > 0:
        raise InvalidConfig("init_size must be positive")
    if normals is not None and np.shape(normals) != (n_planes, 3):
        raise InvalidConfig(f"normals override must have shape ({n_planes}, 3)")
    rng = np.random.default_rng(np.random.SeedSequence([int(seed), 0]))
    convexes = [_random_convex(rng, n_planes, size, region, i, normals) for i in range(n_convex)]
    return Scene(convexes, region, int(seed), n_convex, size, n_convex)


def optimizer_step(scene, state, grads, schedule=None):
    """One Adam update, then positivity projection and gauge renormalisation.

    ``grads`` is a list of :class:`ParamGradients` aligned with
    ``scene.convexes``. Updates happen in place; ``(scene, state)`` is returned.
    """
    schedule = schedule or Schedule()
    if len(grads) != len(scene.convexes):
        raise ValueError("one ParamGradients per convex is required")
    state.sync(scene)
    b1, b2, eps = state.beta1, state.beta2, state.eps
    lo, hi = GAUGE_RANGE
    for c, g in zip(scene.convexes, grads):
        mom = state.moments[c.id]
        mom.step_planes += 1
        mom.step_translation += 1
        kp, kt = mom.step_planes, mom.step_translation

        def adam(p, grad, m, v, k, lr):
            m *= b1
            m += (1 - b1) * grad
            v *= b2
            v += (1 - b2) * grad * grad
            mhat = m / (1 - b1 ** k)
            vhat = v / (1 - b2 ** k)
            p -= lr * mhat / (np.sqrt(vhat) + eps)

        adam(c.normals, g.grad_normals, mom.m_n, mom.v_n, kp, state.lr_planes)
        adam(c.offsets, g.grad_offsets, mom.m_b, mom.v_b, kp, state.lr_planes)
        adam(c.translation, g.grad_translation, mom.m_t, mom.v_t, kt, state.lr_translation)

        np.maximum(c.offsets, schedule.b_min, out=c.offsets)
        norm = np.linalg.norm(c.normals, axis=1)
        bad = (norm < lo) | (norm > hi)
        if np.any(bad):
            c.normals[bad] /= norm[bad, None]
            c.offsets[bad] /= norm[bad]
            np.maximum(c.offsets, schedule.b_min, out=c.offsets)
    state.step += 1
    return scene, state


def purge_convexes(scene, threshold, state=None):
    """Remove convexes whose volume is below ``threshold`` (or that cannot be meshed)."""
    keep, removed = [], []
    for c in scene.convexes:
        try:
            vol = signed_volume(polytope_mesh(c)[0])
        except _GEOMETRY_ERRORS:
            vol = -np.inf
        if vol >= threshold:
            keep.append(c)
        else:
            removed.append(c.id)
    scene.convexes = keep
    if state is not None:
        state.sync(scene)
    return scene, removed


def purge_planes(scene, state=None):
    """Drop redundant planes from every convex, keeping at least four."""
    total = 0
    for c in scene.convexes:
        try:
            red = sorted(redundant_planes(np.column_stack([c.normals, c.offsets])))
        except _GEOMETRY_ERRORS:
            continue
        red = red[: max(0, min(len(red), c.n_planes - 4))]
        if not red:
            continue
        keep = np.setdiff1d(np.arange(c.n_planes), red)
        c.normals, c.offsets = c.normals[keep].copy(), c.offsets[keep].copy()
        if state is not None and c.id in state.moments:
            state.moments[c.id].keep_planes(keep)
        total += len(red)
    return scene, total


def densify(convex, b_min=B_MIN):
    """One Loop subdivision of the convex's mesh, refitted as a plane set.

    The subdivided vertices lie inside the old polytope, so the result never
    grows. If the local origin ends up too close to the new boundary the
    frame is re-centred on the vertex centroid (a geometry-neutral change).
    """
    mesh, _ = polytope_mesh(convex)
    sub = loop_subdivide(mesh)
    local = sub.vertices - convex.translation
    normals, offsets = hull_planes(local)
    scale = np.abs(local).max()
    t = convex.translation.copy()
    if offsets.min() <= max(b_min, 1e-3 * scale):
        c = local.mean(axis=0)
        offsets = offsets - normals @ c
        t = t + c
    return ConvexPolyhedron(normals, offsets, t, convex.id)


def spawn(scene, target_count, seed=None, n_planes=None, state=None):
    """Add random convexes (as in :func:`init_scene`) until ``target_count`` is reached."""
    if target_count < len(scene.convexes):
        raise InvalidConfig("target_count is below the current convex count")
    need = target_count - len(scene.convexes)
    if need == 0:
        return scene
    seed = scene.seed if seed is None else seed
    if n_planes is None:
        n_planes = int(np.median([c.n_planes for c in scene.convexes])) if scene.convexes else 16
        n_planes = max(n_planes, 4)
    scene.spawn_count += 1
    rng = np.random.default_rng(np.random.SeedSequence([int(seed), 1, scene.spawn_count]))
    for _ in range(need):
        scene.convexes.append(_random_convex(rng, n_planes, scene.init_size, scene.region, scene.next_id))
        scene.next_id += 1
    if state is not None:
        state.sync(scene)
    return scene


def _respawn(scene, index, state):
    old = scene.convexes[index]
    scene.spawn_count += 1
    rng = np.random.default_rng(np.random.SeedSequence([int(scene.seed), 2, scene.spawn_count]))
    new = _random_convex(rng, max(old.n_planes, 4), scene.init_size, scene.region, scene.next_id)
    scene.next_id += 1
    scene.convexes[index] = new
    state.sync(scene)
    log.warning("convex %d became degenerate; respawned as %d", old.id, new.id)


def scene_loss(scene, targets, cfg, with_grad=True, depth_weight=0.0):
    """Multiview L1 loss of the scene and per-convex parameter gradients.

    With a positive ``depth_weight``, targets that carry depth add a
    weighted depth L1 term.

    Raises the underlying geometry error, tagged with the convex index, if a
    convex cannot be meshed.
    """
    meshes, topos = [], []
    for i, c in enumerate(scene.convexes):
        try:
            topo = _intersect(c.normals, c.offsets)
            meshes.append(build_mesh(c, topo))
        except _GEOMETRY_ERRORS as e:
            e.convex_index = i
            raise
        topos.append(topo)
    loss, vgrads = multiview_l1(meshes, [t.camera for t in targets], [t.image for t in targets], cfg, with_grad)
    with_depth = [t for t in targets if t.depth is not None]
    if depth_weight > 0 and with_depth:
        dl, dgrads = depth_l1(meshes, [t.camera for t in with_depth], [t.depth for t in with_depth], with_grad)
        loss += depth_weight * dl
        if with_grad:
            vgrads = [g + depth_weight * d for g, d in zip(vgrads, dgrads)]
    if not with_grad:
        return loss, None
    grads = [backprop_vertices(topo, c, g) for topo, c, g in zip(topos, scene.convexes, vgrads)]
    return loss, grads


def _event(scene, state, schedule, threshold):
    scene, n_planes = purge_planes(scene, state)
    scene, removed = purge_convexes(scene, threshold, state)
    n_dense = 0
    if schedule.densify:
        for i, c in enumerate(scene.convexes):
            try:
                d = densify(c, schedule.b_min)
            except _GEOMETRY_ERRORS:
                continue
            if d.n_planes > schedule.max_planes:
                continue
            scene.convexes[i] = d
            state.moments.setdefault(c.id, _Moments.fresh(d.n_planes)).reset_planes(d.n_planes)
            n_dense += 1
    if schedule.spawn:
        spawn(scene, scene.budget, state=state)
    state.sync(scene)
    log.info("event: purged %d planes, %d convexes; densified %d", n_planes, len(removed), n_dense)


def fit(scene, targets, schedule=None, callbacks=(), state=None):
    """Optimise ``scene`` in place against ``targets``.

    Parameters
    ----------
    scene : Scene
    targets : list of RenderTarget
    schedule : Schedule, optional
    callbacks : iterable of callables
        Each is called as ``cb(step, loss, snapshot)`` every
        ``schedule.snapshot_every`` steps and after the last step, where
        ``snapshot`` is a deep copy of the scene.

    Returns
    -------
    scene : Scene
    history : list of float
        Loss before each step.
    """
    schedule = schedule or Schedule()
    if len(targets) == 0:
        raise InvalidConfig("at least one target view is required")
    state = state or OptimizerState.for_scene(scene, schedule)
    events = set(schedule.event_steps)
    threshold = schedule.threshold_for(scene)
    if scene.budget <= 0:
        scene.budget = len(scene.convexes)
    view_rng = np.random.default_rng(np.random.SeedSequence([int(scene.seed), 3]))
    history = []
    for step in range(schedule.total_steps):
        if step in events:
            _event(scene, state, schedule, threshold)
        elif schedule.purge_every and step and step % schedule.purge_every == 0:
            purge_planes(scene, state)
            purge_convexes(scene, threshold, state)
        cfg = SoftRasterConfig(schedule.sigma_at(step), schedule.raster_cutoff)
        views = targets
        if 0 < schedule.views_per_step < len(targets):
            idx = np.sort(view_rng.choice(len(targets), schedule.views_per_step, replace=False))
            views = [targets[i] for i in idx]
        for _ in range(len(scene.convexes) + 1):
            try:
                loss, grads = scene_loss(scene, views, cfg, depth_weight=schedule.depth_weight)
                break
            except _GEOMETRY_ERRORS as e:
                _respawn(scene, e.convex_index, state)
        else:
            raise DegenerateInput("could not mesh the scene after respawning")
        history.append(loss)
        optimizer_step(scene, state, grads, schedule)
        last = step == schedule.total_steps - 1
        if callbacks and (last or (schedule.snapshot_every and step % schedule.snapshot_every == 0)):
            snap = scene.copy()
            for cb in callbacks:
                cb(step, loss, snap)
    return scene, history


__all__ = [
    "B_MIN", "OptimizerState", "ParamGradients", "Scene", "Schedule", "default_init_size", "densify", "fit",
    "init_scene", "optimizer_step", "parse_config", "purge_convexes", "purge_planes", "scene_loss", "spawn",
]
