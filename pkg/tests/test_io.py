import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from convexdr import CvxDocument, ParseError, parse_cvx, polytope_mesh, read_obj, signed_volume, write_cvx, write_obj
from convexdr.io import (
    decode_pgm,
    encode_pgm,
    format_manifest,
    gen_views,
    load_meshes,
    load_targets,
    parse_manifest,
    read_image,
    write_image,
)
from convexdr.render import fibonacci_cameras, raster_hard
from convexdr.shapes import box_mesh, tetrahedron

# two side-2 cubes, verbatim layout of the format's reference example
TWO_CUBES = """\
p  0  0  1  1
p  0  0 -1  1
p  0  1  0  1
p  0 -1  0  1
p  1  0  0  1
p -1  0  0  1
p  0  0  1  1
p  0  0 -1  1
p  0  1  0  1
p  0 -1  0  1
p  1  0  0  1
p -1  0  0  1
c  0  1  2  3  4  5
c  6  7  8  9 10 11 
t  0.0  0.0  0.0
t  4.0  0.0  0.0
"""


def test_two_cube_example():
    doc = parse_cvx(TWO_CUBES)
    assert doc.planes.shape == (12, 4)
    assert doc.convexes == [list(range(6)), list(range(6, 12))]
    np.testing.assert_array_equal(doc.translations, [[0, 0, 0], [4, 0, 0]])
    meshes = [polytope_mesh(c)[0] for c in doc.to_convexes()]
    assert [signed_volume(m) for m in meshes] == pytest.approx([8.0, 8.0])
    centres = [m.vertices.mean(axis=0) for m in meshes]
    assert np.linalg.norm(centres[1] - centres[0]) == pytest.approx(4.0)


def test_empty_and_blank_documents():
    assert parse_cvx("") == CvxDocument()
    assert parse_cvx("\n  \n") == CvxDocument()


def test_missing_translation_defaults_to_origin():
    doc = parse_cvx("p 1 0 0 1\np -1 0 0 1\nc 0 1\n")
    np.testing.assert_array_equal(doc.translations, [[0, 0, 0]])


def test_shared_planes_are_accepted():
    doc = parse_cvx("p 1 0 0 1\nc 0\nc 0 0\n")
    assert doc.convexes == [[0], [0, 0]]


@pytest.mark.parametrize("text, line", [
    ("p 1 0 0 1\nq 1\n", 2),
    ("p 1 0 0\n", 1),
    ("p 1 0 zero 1\n", 1),
    ("p 1 0 0 1\nc 0 1\n", 2),
    ("p 1 0 0 1\nc 0 x\n", 2),
    ("p 1 0 0 1\nc 0\nt 0 0 0\nt 1 1 1\n", 4),
    ("t 0 0 0\n", 1),
    ("p 1 0 0 1\nc 0\nt 0 0\n", 3),
    ("c\n", 1),
    ("p 1 0 0 nan\n", 1),
])
def test_parse_errors_carry_line_numbers(text, line):
    with pytest.raises(ParseError) as info:
        parse_cvx(text)
    assert info.value.lineno == line


def test_non_positive_offset_only_warns():
    with pytest.warns(UserWarning):
        doc = parse_cvx("p 1 0 0 -1\n")
    assert doc.planes[0, 3] == -1


def test_tetrahedron_document_lines():
    text = write_cvx(CvxDocument.from_convexes([tetrahedron()]))
    kinds = [line.split()[0] for line in text.splitlines()]
    assert kinds == ["p"] * 4 + ["c", "t"]


def test_write_order_and_canonical_idempotence():
    once = write_cvx(parse_cvx(TWO_CUBES))
    assert once == write_cvx(parse_cvx(once))
    kinds = [line[0] for line in once.splitlines()]
    assert kinds == sorted(kinds, key="pct".index)


finite = st.floats(-1e6, 1e6, allow_nan=False, allow_infinity=False)


@st.composite
def documents(draw):
    n_planes = draw(st.integers(0, 8))
    planes = draw(st.lists(st.tuples(finite, finite, finite, st.floats(1e-9, 1e6)), min_size=n_planes, max_size=n_planes))
    n_conv = draw(st.integers(0, 4)) if n_planes else 0
    convexes = [draw(st.lists(st.integers(0, n_planes - 1), min_size=1, max_size=6)) for _ in range(n_conv)]
    trans = draw(st.lists(st.tuples(finite, finite, finite), min_size=n_conv, max_size=n_conv))
    return CvxDocument(np.array(planes).reshape(-1, 4), convexes, np.array(trans).reshape(-1, 3))


@settings(max_examples=200, deadline=None)
@given(documents())
def test_cvx_round_trip_is_lossless(doc):
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        assert parse_cvx(write_cvx(doc)) == doc


def test_obj_cube_counts_and_reparse():
    m = box_mesh()
    text = write_obj([m])
    assert sum(line.startswith("v ") for line in text.splitlines()) == 8
    assert sum(line.startswith("f ") for line in text.splitlines()) == 12
    (back,) = read_obj(text)
    np.testing.assert_array_equal(back.vertices, m.vertices)
    np.testing.assert_array_equal(back.triangles, m.triangles)


def test_obj_groups_and_empty_scene():
    meshes = [box_mesh(), box_mesh((3, 0, 0), 1.0)]
    back = read_obj(write_obj(meshes))
    assert len(back) == 2
    for a, b in zip(back, meshes):
        np.testing.assert_array_equal(a.vertices, b.vertices)
        np.testing.assert_array_equal(a.triangles, b.triangles)
    header = write_obj([])
    assert all(line.startswith("#") for line in header.splitlines())


def test_obj_reader_handles_polygons_and_slashes():
    text = "v 0 0 0\nv 1 0 0\nv 1 1 0\nv 0 1 0\nvn 0 0 1\nf 1//1 2//1 3//1 -1//1\n"
    (m,) = read_obj(text)
    np.testing.assert_array_equal(m.triangles, [[0, 1, 2], [0, 2, 3]])


def test_pgm_known_bytes_round_trip(tmp_path):
    data = b"P5\n2 2\n255\n" + bytes([0, 255, 128, 7])
    img = decode_pgm(data)
    np.testing.assert_allclose(img, [[0, 1], [128 / 255, 7 / 255]])
    assert encode_pgm(img) == data
    path = tmp_path / "a.pgm"
    path.write_bytes(data)
    write_image(tmp_path / "b.pgm", read_image(path))
    assert (tmp_path / "b.pgm").read_bytes() == data


@pytest.mark.parametrize("plain, maxval", [(True, 255), (False, 65535), (True, 65535)])
def test_pgm_variants_round_trip(plain, maxval):
    rng = np.random.default_rng(0)
    q = rng.integers(0, maxval + 1, size=(5, 7))
    img = q / maxval
    data = encode_pgm(img, maxval, plain)
    back = decode_pgm(data)
    np.testing.assert_array_equal(np.rint(back * maxval), q)
    assert encode_pgm(back, maxval, plain) == data


def test_pgm_zero_image_and_comments():
    assert not decode_pgm(encode_pgm(np.zeros((3, 4)))).any()
    img = decode_pgm(b"P2\n# a comment\n2 1\n4\n0 4\n")
    np.testing.assert_array_equal(img, [[0, 1]])


@pytest.mark.parametrize("data", [b"P6\n1 1\n255\n\x00", b"P5\n2 2\n255\n\x00", b"P2\n1 1\n3\n9\n", b"P5\n"])
def test_pgm_errors(data):
    with pytest.raises(ParseError):
        decode_pgm(data)


def test_manifest_round_trip():
    cams = fibonacci_cameras(3, 4.0, 32, 24)
    cams2, names, radius = parse_manifest(format_manifest(cams, ["a.pgm", "b.pgm", "c.pgm"], 1.5))
    assert names == ["a.pgm", "b.pgm", "c.pgm"] and radius == 1.5
    for a, b in zip(cams, cams2):
        np.testing.assert_array_equal(a.position, b.position)
        assert (a.fov, a.width, a.height) == (b.fov, b.width, b.height)
    with pytest.raises(ParseError):
        parse_manifest("1 2 3\n")


def test_gen_views_is_reproducible(tmp_path):
    meshes = [box_mesh()]
    for d in ("a", "b"):
        paths = gen_views(meshes, tmp_path / d, 4, (24, 16), seed=3)
        assert len(paths) == 4
    for name in ["cameras.txt"] + [p.name for p in paths]:
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()
    targets, radius = load_targets(tmp_path / "a")
    assert radius == pytest.approx(np.sqrt(3))
    for t in targets:
        np.testing.assert_array_equal(t.image, raster_hard(meshes, t.camera)[0])


def test_gen_views_single_view(tmp_path):
    assert len(gen_views([box_mesh()], tmp_path, 1, (8, 8))) == 1


def test_load_meshes_by_suffix(tmp_path):
    (tmp_path / "s.cvx").write_text(TWO_CUBES)
    (tmp_path / "s.obj").write_text(write_obj([box_mesh()]))
    assert len(load_meshes(tmp_path / "s.cvx")) == 2
    assert len(load_meshes(tmp_path / "s.obj")) == 1
