"""File formats: ``.cvx`` scenes, OBJ meshes, PGM images and camera manifests.

A ``.cvx`` file lists planes (``p nx ny nz offset``), convexes as 0-based
plane-index lists (``c i j k ...``) and translations (``t x y z``). The i-th
``t`` line belongs to the i-th ``c`` line; convexes without one sit at the
origin.
"""

import os
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ParseError
from .polytope import ConvexPolyhedron, Mesh
from .render import Camera, RenderTarget, fibonacci_cameras, raster_hard

MANIFEST_NAME = "cameras.txt"


@dataclass(eq=False)
class CvxDocument:
    """Global plane list plus per-convex index lists and translations."""

    planes: np.ndarray = field(default_factory=lambda: np.zeros((0, 4)))
    convexes: list = field(default_factory=list)
    translations: np.ndarray = field(default_factory=lambda: np.zeros((0, 3)))

    def __post_init__(self):
        self.planes = np.asarray(self.planes, dtype=float).reshape(-1, 4)
        self.convexes = [[int(i) for i in c] for c in self.convexes]
        self.translations = np.asarray(self.translations, dtype=float).reshape(-1, 3)
        if len(self.translations) != len(self.convexes):
            raise ValueError("one translation per convex is required")
        for c in self.convexes:
            if any(i < 0 or i >= len(self.planes) for i in c):
                raise ValueError("plane index out of range")

    def __eq__(self, other):
        if not isinstance(other, CvxDocument):
            return NotImplemented
        return (
            self.planes.shape == other.planes.shape
            and np.array_equal(self.planes, other.planes)
            and self.convexes == other.convexes
            and np.array_equal(self.translations, other.translations)
        )

    def to_convexes(self):
        return [
            ConvexPolyhedron(self.planes[idx, :3], self.planes[idx, 3], t, k)
            for k, (idx, t) in enumerate(zip(self.convexes, self.translations))
        ]

    @classmethod
    def from_convexes(cls, convexes):
        """Each convex gets its own copy of its planes (no sharing on write)."""
        planes, lists, start = [], [], 0
        for c in convexes:
            planes.append(np.column_stack([c.normals, c.offsets]))
            lists.append(list(range(start, start + c.n_planes)))
            start += c.n_planes
        planes = np.concatenate(planes) if planes else np.zeros((0, 4))
        trans = np.array([c.translation for c in convexes]).reshape(-1, 3)
        return cls(planes, lists, trans)


def _floats(tokens, lineno, count=None):
    if count is not None and len(tokens) != count:
        raise ParseError(f"expected {count} numbers, got {len(tokens)}", lineno)
    try:
        vals = [float(t) for t in tokens]
    except ValueError as e:
        raise ParseError(f"bad number ({e})", lineno) from None
    if not np.all(np.isfinite(vals)):
        raise ParseError("non-finite number", lineno)
    return vals


def parse_cvx(text):
    """Parse ``.cvx`` text into a :class:`CvxDocument`.

    Blank lines are skipped. Offsets <= 0 only trigger a warning.

    Raises
    ------
    ParseError
        Unknown record type, malformed numbers, plane indices out of range,
        or a ``t`` line with no matching ``c`` line.
    """
    planes, convexes, convex_lines, trans = [], [], [], []
    for lineno, line in enumerate(text.splitlines(), 1):
        tokens = line.split()
        if not tokens:
            continue
        kind, rest = tokens[0], tokens[1:]
        if kind == "p":
            vals = _floats(rest, lineno, 4)
            if vals[3] <= 0:
                warnings.warn(f"line {lineno}: plane offset {vals[3]} is not positive", stacklevel=2)
            planes.append(vals)
        elif kind == "c":
            if not rest:
                raise ParseError("convex needs at least one plane index", lineno)
            try:
                idx = [int(t) for t in rest]
            except ValueError:
                raise ParseError("plane indices must be integers", lineno) from None
            convexes.append(idx)
            convex_lines.append(lineno)
        elif kind == "t":
            if len(trans) >= len(convexes):
                raise ParseError("translation without a matching convex", lineno)
            trans.append(_floats(rest, lineno, 3))
        else:
            raise ParseError(f"unknown record type {kind!r}", lineno)
    for idx, lineno in zip(convexes, convex_lines):
        bad = [i for i in idx if i < 0 or i >= len(planes)]
        if bad:
            raise ParseError(f"plane index {bad[0]} out of range (have {len(planes)} planes)", lineno)
    trans += [[0.0, 0.0, 0.0]] * (len(convexes) - len(trans))
    return CvxDocument(np.array(planes).reshape(-1, 4), convexes, np.array(trans).reshape(-1, 3))


def _num(x):
    # repr gives the shortest string that round-trips exactly
    return repr(float(x))


def write_cvx(doc):
    """Serialise a document: all ``p`` lines, then ``c`` lines, then ``t`` lines."""
    out = []
    for p in doc.planes:
        out.append("p " + " ".join(_num(v) for v in p))
    for c in doc.convexes:
        out.append("c " + " ".join(str(i) for i in c))
    for t in doc.translations:
        out.append("t " + " ".join(_num(v) for v in t))
    return "".join(line + "\n" for line in out)


def read_cvx(path):
    return parse_cvx(Path(path).read_text())


def write_obj(meshes):
    """Wavefront OBJ text with one ``o`` group per mesh and 1-based indices."""
    out = ["# convex polytope union"]
    base = 1
    for k, m in enumerate(meshes):
        name = m.convex_id if m.convex_id >= 0 else k
        out.append(f"o convex_{name}")
        out.extend(f"v {_num(x)} {_num(y)} {_num(z)}" for x, y, z in m.vertices)
        out.extend(f"f {a + base} {b + base} {c + base}" for a, b, c in m.triangles)
        base += len(m.vertices)
    return "\n".join(out) + "\n"


def read_obj(text):
    """Parse OBJ text into one :class:`Mesh` per ``o``/``g`` group.

    Polygons are fan-triangulated; ``v/vt/vn`` references and negative
    indices are accepted. Vertices are shared across groups, so each mesh
    keeps only the vertices its faces use.
    """
    verts, groups, current = [], [], None
    for lineno, line in enumerate(text.splitlines(), 1):
        tokens = line.split("#", 1)[0].split()
        if not tokens:
            continue
        kind = tokens[0]
        if kind == "v":
            if len(tokens) < 4:
                raise ParseError("vertex needs 3 coordinates", lineno)
            verts.append(_floats(tokens[1:4], lineno))
        elif kind == "f":
            if len(tokens) < 4:
                raise ParseError("face needs at least 3 vertices", lineno)
            idx = []
            for tok in tokens[1:]:
                try:
                    i = int(tok.split("/")[0])
                except ValueError:
                    raise ParseError(f"bad face index {tok!r}", lineno) from None
                i = i - 1 if i > 0 else len(verts) + i
                if not 0 <= i < len(verts):
                    raise ParseError(f"face index {tok} out of range", lineno)
                idx.append(i)
            if current is None:
                current = []
                groups.append(current)
            current.extend((idx[0], idx[k], idx[k + 1]) for k in range(1, len(idx) - 1))
        elif kind in ("o", "g"):
            current = []
            groups.append(current)
    V = np.array(verts, dtype=float).reshape(-1, 3)
    meshes = []
    for tris in groups:
        if not tris:
            continue
        t = np.array(tris, dtype=np.int64)
        used, inv = np.unique(t, return_inverse=True)
        meshes.append(Mesh(V[used], inv.reshape(-1, 3), convex_id=len(meshes)))
    return meshes


def load_meshes(path):
    """Meshes from an ``.obj`` file, or the meshed convexes of a ``.cvx`` file."""
    from .polytope import polytope_mesh

    path = Path(path)
    text = path.read_text()
    if path.suffix.lower() == ".cvx":
        return [polytope_mesh(c)[0] for c in parse_cvx(text).to_convexes()]
    return read_obj(text)


def _pgm_tokens(data, count):
    """First ``count`` header tokens and the offset just past the last one."""
    tokens, pos, n = [], 0, len(data)
    while len(tokens) < count:
        while pos < n and (data[pos:pos + 1].isspace() or data[pos:pos + 1] == b"#"):
            if data[pos:pos + 1] == b"#":
                while pos < n and data[pos:pos + 1] not in (b"\n", b"\r"):
                    pos += 1
            else:
                pos += 1
        start = pos
        while pos < n and not data[pos:pos + 1].isspace() and data[pos:pos + 1] != b"#":
            pos += 1
        if start == pos:
            raise ParseError("truncated PGM header")
        tokens.append(data[start:pos])
    return tokens, pos


def decode_pgm(data):
    """Decode plain (P2) or binary (P5) PGM bytes to floats in [0, 1]."""
    (magic, w, h, maxval), pos = _pgm_tokens(data, 4)
    try:
        w, h, maxval = int(w), int(h), int(maxval)
    except ValueError:
        raise ParseError("bad PGM header") from None
    if w < 1 or h < 1 or not 0 < maxval < 65536:
        raise ParseError("bad PGM dimensions or maxval")
    if magic == b"P5":
        dtype = np.dtype(">u2") if maxval > 255 else np.dtype("u1")
        body = data[pos + 1:]
        if len(body) < w * h * dtype.itemsize:
            raise ParseError("truncated PGM pixel data")
        pix = np.frombuffer(body, dtype=dtype, count=w * h)
    elif magic == b"P2":
        try:
            pix = np.array(data[pos:].split()[: w * h], dtype=np.int64)
        except ValueError:
            raise ParseError("bad PGM pixel value") from None
        if pix.size != w * h:
            raise ParseError("truncated PGM pixel data")
    else:
        raise ParseError(f"unsupported image type {magic!r}")
    if pix.max(initial=0) > maxval:
        raise ParseError("pixel value exceeds maxval")
    return pix.reshape(h, w).astype(float) / maxval


def encode_pgm(image, maxval=255, plain=False):
    img = np.asarray(image, dtype=float)
    if img.ndim != 2:
        raise ValueError("image must be 2-D")
    q = np.rint(np.clip(img, 0.0, 1.0) * maxval).astype(np.int64)
    h, w = img.shape
    if plain:
        rows = "\n".join(" ".join(str(v) for v in row) for row in q)
        return f"P2\n{w} {h}\n{maxval}\n{rows}\n".encode()
    dtype = ">u2" if maxval > 255 else "u1"
    return f"P5\n{w} {h}\n{maxval}\n".encode() + q.astype(dtype).tobytes()


def read_image(path):
    return decode_pgm(Path(path).read_bytes())


def write_image(path, image, maxval=255, plain=False):
    Path(path).write_bytes(encode_pgm(image, maxval, plain))


def format_manifest(cameras, filenames, radius=None):
    """One camera per line: position, look_at, up, fov, width, height, near, far, image file."""
    lines = ["# px py pz lx ly lz ux uy uz fov width height near far image"]
    if radius is not None:
        lines.append(f"# radius {_num(radius)}")
    for cam, name in zip(cameras, filenames):
        nums = [*cam.position, *cam.look_at, *cam.up, cam.fov]
        lines.append(" ".join(_num(v) for v in nums) + f" {cam.width} {cam.height} {_num(cam.near)} {_num(cam.far)} {name}")
    return "\n".join(lines) + "\n"


def parse_manifest(text):
    """Returns ``(cameras, filenames, radius)``; ``radius`` is None if absent."""
    cams, names, radius = [], [], None
    for lineno, line in enumerate(text.splitlines(), 1):
        s = line.strip()
        if not s:
            continue
        if s.startswith("#"):
            parts = s[1:].split()
            if len(parts) == 2 and parts[0] == "radius":
                radius = _floats(parts[1:], lineno)[0]
            continue
        tok = s.split()
        if len(tok) not in (10, 12, 14, 15):
            raise ParseError("expected position, look_at, up, fov [width height [near far]] [image]", lineno)
        name = tok[-1] if len(tok) in (15,) else None
        nums = tok[:14] if len(tok) == 15 else tok
        v = _floats(nums[:10], lineno)
        try:
            w, h = (int(nums[10]), int(nums[11])) if len(nums) >= 12 else (256, 256)
        except ValueError:
            raise ParseError("width and height must be integers", lineno) from None
        near, far = _floats(nums[12:14], lineno) if len(nums) >= 14 else (1e-3, 1e3)
        try:
            cams.append(Camera(v[0:3], v[3:6], v[6:9], v[9], w, h, near, far))
        except ValueError as e:
            raise ParseError(str(e), lineno) from None
        names.append(name)
    return cams, names, radius


def scene_radius(meshes):
    """Radius of the origin-centred sphere enclosing every mesh vertex."""
    pts = np.concatenate([m.vertices for m in meshes]) if meshes else np.zeros((0, 3))
    if len(pts) == 0:
        raise ValueError("no vertices")
    return float(np.linalg.norm(pts, axis=1).max())


def view_cameras(radius, n_views=16, resolution=(256, 256), seed=None):
    """Fibonacci-sphere cameras at ``2.5 * radius``, optionally randomly rotated by ``seed``."""
    w, h = resolution
    cams = fibonacci_cameras(n_views, 2.5 * radius, w, h)
    if seed is None:
        return cams
    from scipy.spatial.transform import Rotation

    R = Rotation.random(random_state=np.random.default_rng(seed)).as_matrix()
    out = []
    for c in cams:
        pos = R @ c.position
        up = np.array([0.0, 1.0, 0.0])
        if np.linalg.norm(np.cross(pos, up)) < 1e-6 * np.linalg.norm(pos):
            up = np.array([0.0, 0.0, 1.0])
        out.append(Camera(pos, c.look_at, up, c.fov, w, h, c.near, c.far))
    return out


def gen_views(meshes, out_dir, n_views=16, resolution=(256, 256), seed=None):
    """Render hard silhouettes of ``meshes`` and write them with a camera manifest.

    Returns the list of written image paths.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    radius = scene_radius(meshes)
    cams = view_cameras(radius, n_views, resolution, seed)
    names = [f"view_{i:03d}.pgm" for i in range(len(cams))]
    paths = []
    for cam, name in zip(cams, names):
        sil, _ = raster_hard(meshes, cam)
        write_image(out_dir / name, sil)
        paths.append(out_dir / name)
    (out_dir / MANIFEST_NAME).write_text(format_manifest(cams, names, radius))
    return paths


def load_targets(target_dir):
    """Read a directory written by :func:`gen_views`.

    Returns ``(targets, radius)``.
    """
    target_dir = Path(target_dir)
    manifest = target_dir / MANIFEST_NAME
    if not manifest.is_file():
        raise FileNotFoundError(f"no {MANIFEST_NAME} in {os.fspath(target_dir)}")
    cams, names, radius = parse_manifest(manifest.read_text())
    targets = []
    for cam, name in zip(cams, names):
        if name is None:
            raise ParseError(f"camera without an image file in {MANIFEST_NAME}")
        targets.append(RenderTarget(cam, read_image(target_dir / name)))
    return targets, radius
