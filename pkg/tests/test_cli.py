import numpy as np
import pytest

from convexdr.cli import main
from convexdr.io import read_image, read_obj
from convexdr.render import raster_hard
from convexdr.shapes import box_mesh

from test_io import TWO_CUBES


@pytest.fixture
def two_cubes(tmp_path):
    p = tmp_path / "two.cvx"
    p.write_text(TWO_CUBES)
    return p


def test_usage_errors_exit_1(capsys):
    assert main([]) == 1
    assert main(["nope"]) == 1
    assert main(["gen-views", "x.obj", "--res", "12"]) == 1
    assert main(["fit", "dir", "--convexes", "0"]) == 1


def test_help_exits_0(capsys):
    assert main(["--help"]) == 0


def test_data_errors_exit_2(tmp_path, capsys):
    assert main(["convert", str(tmp_path / "missing.cvx"), "--obj", str(tmp_path / "o.obj")]) == 2
    bad = tmp_path / "bad.cvx"
    bad.write_text("z 1 2 3\n")
    assert main(["convert", str(bad), "--obj", str(tmp_path / "o.obj")]) == 2
    assert "line 1" in capsys.readouterr().err


def test_convert_two_cubes(two_cubes, tmp_path):
    out = tmp_path / "two.obj"
    assert main(["convert", str(two_cubes), "--obj", str(out)]) == 0
    meshes = read_obj(out.read_text())
    assert sum(len(m.vertices) for m in meshes) == 16
    assert sum(len(m.triangles) for m in meshes) == 24


def test_eval_against_itself(two_cubes, tmp_path, capsys):
    obj = tmp_path / "two.obj"
    main(["convert", str(two_cubes), "--obj", str(obj)])
    capsys.readouterr()
    assert main(["eval", str(two_cubes), str(obj), "--samples", "5000"]) == 0
    vals = dict(line.split() for line in capsys.readouterr().out.splitlines())
    assert float(vals["chamfer_l1"]) < 1e-4
    assert float(vals["chamfer_l2_x1000"]) < 1e-4
    assert float(vals["normal_consistency"]) == pytest.approx(1.0)


def test_gen_views_fit_render_pipeline(tmp_path, capsys):
    obj = tmp_path / "cube.obj"
    from convexdr.io import write_obj
    obj.write_text(write_obj([box_mesh()]))
    views = tmp_path / "views"
    assert main(["gen-views", str(obj), "--views", "3", "--res", "24x20", "--out", str(views)]) == 0
    assert len(list(views.glob("*.pgm"))) == 3
    cfg = tmp_path / "fit.cfg"
    cfg.write_text("n_events = 0\nplanes = 6\n")
    scene = tmp_path / "scene.cvx"
    args = ["fit", str(views), "--convexes", "1", "--steps", "3", "--config", str(cfg), "--out", str(scene)]
    assert main(args) == 0
    text = scene.read_text()
    assert text.count("\nc ") + text.startswith("c ") == 1
    again = tmp_path / "again.cvx"
    assert main(args[:-1] + [str(again)]) == 0
    assert again.read_text() == text
    renders = tmp_path / "renders"
    assert main(["render", str(scene), str(views / "cameras.txt"), "--out", str(renders)]) == 0
    assert sorted(p.name for p in renders.glob("*.pgm")) == sorted(p.name for p in views.glob("*.pgm"))
    assert main(["render", str(scene), str(views / "cameras.txt"), "--soft", "--sigma", "0.5",
                 "--out", str(tmp_path / "soft")]) == 0
    img = read_image(tmp_path / "soft" / "view_000.pgm")
    assert img.shape == (20, 24)


def test_render_matches_library(two_cubes, tmp_path):
    from convexdr.io import format_manifest, load_meshes
    from convexdr.render import fibonacci_cameras

    cams = fibonacci_cameras(2, 10.0, 32, 32)
    man = tmp_path / "cams.txt"
    man.write_text(format_manifest(cams, ["x.pgm", "y.pgm"]))
    assert main(["render", str(two_cubes), str(man), "--out", str(tmp_path / "r")]) == 0
    for cam, name in zip(cams, ("x.pgm", "y.pgm")):
        np.testing.assert_array_equal(read_image(tmp_path / "r" / name), raster_hard(load_meshes(two_cubes), cam)[0])


def test_bad_config_is_data_error(tmp_path):
    views = tmp_path / "v"
    obj = tmp_path / "c.obj"
    from convexdr.io import write_obj
    obj.write_text(write_obj([box_mesh()]))
    main(["gen-views", str(obj), "--views", "1", "--res", "8x8", "--out", str(views)])
    cfg = tmp_path / "bad.cfg"
    cfg.write_text("no_such_key = 3\n")
    assert main(["fit", str(views), "--config", str(cfg), "--steps", "1"]) == 2
