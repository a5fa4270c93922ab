import numpy as np
import pytest

from levity.benchmarks import generate_structured_mesh
from levity.cli import main, parse_metric_spec
from levity.errors import LevityError
from levity.fileio import read_vtk, write_vtk


@pytest.fixture
def square_vtk(tmp_path):
    path = tmp_path / "square.vtk"
    mesh = generate_structured_mesh((0, 1, 0, 1), 2 * 5 * 5)
    write_vtk(path, mesh, point_data={"M": np.tile(np.eye(2) / 0.1**2, (mesh.n_vertices, 1, 1))})
    return path


class TestMetricSpec:
    def test_forms(self, unit_square):
        n = unit_square.n_vertices
        np.testing.assert_allclose(parse_metric_spec("uniform:0.5", unit_square, {})[0], 4 * np.eye(2))
        M = parse_metric_spec("aniso:0.1,1,90", unit_square, {})[0]
        np.testing.assert_allclose(M, np.diag([1.0, 100.0]), atol=1e-12)
        field = np.tile(np.eye(2), (n, 1, 1))
        assert parse_metric_spec("field:M", unit_square, {"M": field}) is field

    @pytest.mark.parametrize("spec", ["uniform:x", "aniso:0.1", "field:missing", "round:1"])
    def test_rejects(self, unit_square, spec):
        with pytest.raises(LevityError):
            parse_metric_spec(spec, unit_square, {})


class TestMain:
    def test_adapt_only(self, square_vtk, tmp_path, capsys):
        out = tmp_path / "out"
        assert main(["adapt-only", str(square_vtk), "uniform:0.1", "--out", str(out)]) == 0
        mesh, _ = read_vtk(out / "adapted.vtk")
        assert 200 <= mesh.n_triangles <= 260
        assert "elements 50 ->" in capsys.readouterr().out

    def test_adapt_only_field(self, square_vtk, tmp_path):
        assert main(["adapt-only", str(square_vtk), "field:M", "--out", str(tmp_path / "o")]) == 0

    def test_baseline_hits_kmax(self, tmp_path):
        cfg = tmp_path / "run.cfg"
        cfg.write_text("case = CLC\nmesh_elements = 400\nkmax = 3\nkStart = 1\n")
        out = tmp_path / "res"
        assert main(["baseline", str(cfg), "--out", str(out), "--trace"]) == 2
        for name in ("history.csv", "mesh.vtk", "layout.vtk", "boundary.svg"):
            assert (out / name).is_file()
        assert len(list((out / "trace").glob("iter_*.vtk"))) == 3

    def test_run_converges(self, tmp_path):
        cfg = tmp_path / "run.cfg"
        cfg.write_text("mesh_elements = 800\nkmax = 12\nkStart = 3\nkAdapt = 2\nh_iso = 0.1\nTOL = 0.5\n"
                       f"ATOL = inf\nout_dir = {tmp_path / 'levity'}\n")
        assert main(["run", str(cfg)]) == 0
        assert (tmp_path / "levity" / "mesh.vtk").is_file()

    def test_bad_config(self, tmp_path, capsys):
        cfg = tmp_path / "bad.cfg"
        cfg.write_text("case = CLC\nalpha = 1.5\n")
        assert main(["run", str(cfg)]) == 1
        assert "line 2" in capsys.readouterr().err

    def test_missing_mesh(self, tmp_path):
        assert main(["adapt-only", str(tmp_path / "none.vtk"), "uniform:0.1"]) == 1
