import filecmp
import math

import numpy as np
import pytest

from hbnitsche import problems
from hbnitsche.adapt import afem_run, uniform_run
from hbnitsche.assembly import assemble
from hbnitsche.cli import main
from hbnitsche.config import ConfigError, RunConfig, dump_config, parse_config
from hbnitsche.hbspline import build_space
from hbnitsche.hmesh import initial_mesh
from hbnitsche.output import fit_slope, rates, read_matrix_coo, read_run_log, write_matrix_coo, write_run_log


def test_config_validation():
    with pytest.raises(ConfigError):
        RunConfig(degree=1)
    with pytest.raises(ConfigError):
        RunConfig(theta=0.0)
    with pytest.raises(ConfigError):
        RunConfig(gamma1=-1.0)
    with pytest.raises(ConfigError):
        RunConfig(problem="nope")
    with pytest.raises(ConfigError, match="report_error"):
        RunConfig(problem=None, source="1")
    assert RunConfig(problem=None, source="1", report_error=False).source == "1"


def test_config_parsing_is_strict():
    cfg = parse_config("[discretization]\ndegree = 3\ngamma1 = 50\n[marking]\ntheta = 0.3\n[run]\nlevels = 2 4\n")
    assert (cfg.degree, cfg.gamma1, cfg.theta, cfg.levels) == (3, 50.0, 0.3, (2, 4))
    with pytest.raises(ConfigError, match="unknown key"):
        parse_config("[discretization]\ngama1 = 50\n")
    with pytest.raises(ConfigError, match="unknown section"):
        parse_config("[solverz]\nsolver_tol = 1\n")
    with pytest.raises(ConfigError):
        parse_config("[marking]\ntheta = lots\n")


def test_config_dump_round_trip():
    cfg = RunConfig(degree=3, theta=0.4, levels=(1, 3), output_dir="out")
    assert parse_config(dump_config(cfg)) == cfg


def test_registry_consistency(rng):
    # f against a high-order finite-difference Laplacian of the symbolic lap u,
    # and lap u against finite differences of u
    h = 1e-3
    for pid in ("smooth", "peak"):
        u = problems.get(pid)
        x, y = 0.1 + 0.8 * rng.random((2, 20))

        def lap_fd(g):
            c = [-1 / 12, 4 / 3, -5 / 2, 4 / 3, -1 / 12]
            s = sum(ck * (g(x + (k - 2) * h, y) + g(x, y + (k - 2) * h)) for k, ck in enumerate(c))
            return s / h ** 2

        scale = np.max(np.abs(u.f(x, y)))
        assert np.max(np.abs(lap_fd(u.lap) - u.f(x, y))) <= 1e-6 * scale
        assert np.max(np.abs(lap_fd(u.u) - u.lap(x, y))) <= 1e-6 * np.max(np.abs(u.lap(x, y)))


def test_registry_boundary_conformity(rng):
    t = rng.random(30)
    for pid in ("smooth", "peak"):
        u = problems.get(pid)
        assert u.boundary_conforming
        for x, y, nx, ny in ((0 * t, t, -1, 0), (1 + 0 * t, t, 1, 0), (t, 0 * t, 0, -1), (t, 1 + 0 * t, 0, 1)):
            gx, gy = u.grad(x, y)
            assert np.max(np.abs(u.u(x, y))) < 1e-14
            assert np.max(np.abs(nx * gx + ny * gy)) < 1e-12
    with pytest.raises(KeyError):
        problems.get("missing")


def test_fit_slope():
    h = np.array([0.5, 0.25, 0.125, 0.0625])
    assert fit_slope(h, 3.0 * h ** 1.7) == pytest.approx(1.7, abs=1e-10)
    with pytest.raises(ValueError):
        fit_slope(h[:2], h[:2])


def test_rates_from_uniform_run():
    res = uniform_run(RunConfig(mode="uniform", levels=(2, 5)))
    tab = rates(res.records)
    assert 0.8 <= tab["energy_error"]["h"] <= 1.2
    assert set(tab) >= {"energy_error", "eta", "osc"}
    with pytest.raises(ValueError):
        rates(res.records[:2])


def test_run_log_round_trip_and_determinism(tmp_path):
    cfg = RunConfig(max_iter=5)
    a = afem_run(cfg)
    b = afem_run(cfg)
    write_run_log(a.records, tmp_path / "a.csv")
    write_run_log(b.records, tmp_path / "b.csv")
    back = read_run_log(tmp_path / "a.csv")
    for x, y in zip(back, a.records):
        dx, dy = x.as_dict(), y.as_dict()
        dx.pop("seconds"), dy.pop("seconds")
        assert dx == pytest.approx(dy, nan_ok=True)
    # timing column aside, logs are bit-identical
    strip = lambda p: [",".join(line.split(",")[:-1]) for line in open(p)]
    assert strip(tmp_path / "a.csv") == strip(tmp_path / "b.csv")


def test_matrix_dump_round_trip(tmp_path):
    S = assemble(build_space(initial_mesh(2)), None)
    write_matrix_coo(S.matrix, tmp_path / "A.txt")
    B = read_matrix_coo(tmp_path / "A.txt")
    assert abs(B - S.matrix).max() == 0.0


def test_cli_run_uniform(tmp_path, capsys):
    out = tmp_path / "u"
    assert main(["run", "--mode", "uniform", "--levels", "2", "5", "-o", str(out)]) == 0
    text = capsys.readouterr().out
    slope = float(text.split("rate energy_error: ")[1].split()[0])
    assert 0.8 <= slope <= 1.2
    for name in ("run_log.csv", "summary.json", "mesh.csv", "edges.csv", "dofs.csv", "indicators.csv"):
        assert (out / name).exists()
    assert main(["rates", str(out / "run_log.csv")]) == 0


def test_cli_adaptive_zero_source(capsys):
    assert main(["run", "--source", "0"]) == 0
    out = capsys.readouterr().out
    assert "it=0" in out and "eta=0.0000e+00" in out and "it=1" not in out


def test_cli_errors(tmp_path, capsys):
    assert main(["run", "--theta", "2"]) == 2
    assert main(["run", "--source", "1", "--problem", "smooth"]) == 2
    cfg = tmp_path / "bad.ini"
    cfg.write_text("[marking]\ntheeta = 0.5\n")
    assert main(["run", "--config", str(cfg)]) == 2
    assert main(["run", "--gamma", "0.01", "--initial-level", "2", "--max-iter", "1"]) == 3
    err = capsys.readouterr().err
    assert "unknown key" in err and "positive definite" in err


def test_cli_config_file(tmp_path, capsys):
    cfg = tmp_path / "run.ini"
    cfg.write_text("[run]\nmode = uniform\nlevels = 1 3\n[discretization]\ndegree = 3\n")
    assert main(["run", "--config", str(cfg)]) == 0
    assert "dofs=121" in capsys.readouterr().out


def test_cli_dump_mesh_and_check(tmp_path, capsys):
    assert main(["dump-mesh", "--level", "2", "-o", str(tmp_path)]) == 0
    assert main(["dump-mesh", "--mesh", str(tmp_path / "mesh.csv"), "-o", str(tmp_path / "again")]) == 0
    assert filecmp.cmp(tmp_path / "mesh.csv", tmp_path / "again" / "mesh.csv", shallow=False)
    assert main(["check"]) == 0
    assert "symmetry" in capsys.readouterr().out
