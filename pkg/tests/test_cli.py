import json

import numpy as np
import pytest

from phasemix.cli import (
    ConfigError,
    build_grid,
    build_kernel,
    emit_radial_profile,
    parse_config,
    run,
)
from phasemix.field import DensityField, Grid, PhasePair, read_field
from phasemix.kernel import KernelSpec


def _write_cfg(path, text):
    path.write_text(text)
    return str(path)


def test_parse_config_key_values(tmp_path):
    cfg = parse_config(_write_cfg(tmp_path / "a.cfg", """
# comment
grid.dim = 2
grid.n = 32          # trailing comment
grid.h = 0.125
kernel.kind = coulomb
"""))
    assert cfg["grid.dim"] == "2"
    assert cfg["kernel.kind"] == "coulomb"
    g = build_grid(cfg)
    assert g.cells == (32, 32)
    spec = build_kernel(cfg, g.dim)
    assert spec.kind == "coulomb" and spec.dim == 2


def test_parse_config_rejects_garbage(tmp_path):
    with pytest.raises(ConfigError):
        parse_config(_write_cfg(tmp_path / "bad.cfg", "no equals sign here\n"))
    with pytest.raises(ConfigError):
        parse_config(str(tmp_path / "missing.cfg"))
    cfg = parse_config(_write_cfg(tmp_path / "b.cfg", "grid.dim = two\n"))
    with pytest.raises(ConfigError):
        build_grid(cfg)


def test_unknown_subcommand_exits_2(capsys):
    assert run(["frobnicate"]) == 2
    assert run([]) == 2


def test_minimize_command_roundtrip(tmp_path, capsys):
    cfg = _write_cfg(tmp_path / "m.cfg", f"""
grid.dim = 1
grid.n = 96
grid.h = {1 / 24}
kernel.kind = coulomb
c11 = -1.5
c22 = -1.5
m1 = 0.4
m2 = 0.4
solver.max_iters = 300
solver.stat_tol = 1e-3
solver.n_starts = 1
output.dir = {tmp_path / "out"}
output.prefix = t
""")
    code = run(["minimize", "--config", cfg])
    out = capsys.readouterr().out
    assert "SUMMARY" in out
    assert code in (0, 4)
    f1 = read_field(tmp_path / "out" / "t_f1.df")
    assert f1.mass == pytest.approx(0.4, rel=1e-6)
    result = json.loads((tmp_path / "out" / "t_result.json").read_text())
    assert result["energy_trace_last"] <= result["energy_trace_first"] + 1e-12
    profile = (tmp_path / "out" / "t_profile.csv").read_text()
    assert profile.splitlines()[0] == "radius,f1_mean,f2_mean"


def test_minimize_command_infeasible_exit(tmp_path, capsys):
    cfg = _write_cfg(tmp_path / "m.cfg", """
grid.dim = 1
grid.n = 8
grid.h = 0.25
kernel.kind = coulomb
c11 = -0.5
c22 = -0.5
m1 = 4.0
m2 = 4.0
""")
    assert run(["minimize", "--config", cfg]) == 3


def test_analytic_energy_roundtrip(tmp_path, capsys):
    out = tmp_path / "an"
    code = run([
        "analytic", "--c11", "-1.5", "--c22", "-0.5", "--m1", "1", "--m2", "2",
        "--dim", "2", "--n", "96", "--h", "0.045", "--out", str(out),
    ])
    assert code == 0
    rec = json.loads((out / "analytic.json").read_text())
    assert rec["regime"] == "ball_annulus_12"
    capsys.readouterr()
    code = run([
        "energy", "--f1", str(out / "analytic_f1.df"),
        "--f2", str(out / "analytic_f2.df"),
        "--c11", "-1.5", "--c22", "-0.5", "--kernel", "coulomb",
    ])
    assert code == 0
    printed = capsys.readouterr().out
    bd = json.loads(printed[: printed.index("SUMMARY")])
    assert bd["total"] == pytest.approx(rec["energy"]["total"], abs=1e-12)


def test_analytic_rejects_open_regime(tmp_path):
    code = run([
        "analytic", "--c11", "-1.5", "--c22", "-1.5", "--m1", "1", "--m2", "1",
        "--dim", "2", "--n", "64", "--h", "0.06", "--out", str(tmp_path),
    ])
    assert code == 3


def test_phase_diagram_csv(tmp_path, capsys):
    cfg = _write_cfg(tmp_path / "pd.cfg", f"""
grid.dim = 1
grid.n = 96
grid.h = {1 / 24}
kernel.kind = coulomb
c11 = -1.0
c22 = -1.0
m1 = 0.4
m2 = 0.4
solver.max_iters = 200
solver.stat_tol = 1e-3
diagram.c11_values = -1.5, -0.5
diagram.c22_values = -1.5
output.dir = {tmp_path}
output.prefix = pd
""")
    code = run(["phase-diagram", "--config", cfg])
    assert code == 0
    lines = (tmp_path / "pd_phase_diagram.csv").read_text().splitlines()
    assert lines[0] == "c11,c22,energy,regime,l1_to_analytic,status"
    assert len(lines) == 3


def test_radial_profile_values():
    g = Grid.centered(2, 48, 0.1)
    # phase 1: half-density disc; phase 2: ring around it
    d2 = g.distance_sq()
    ring = DensityField(g, 0.4 * ((d2 > 1.0) & (d2 < 2.0)))
    inner = DensityField(g, 0.5 * (d2 <= 1.0))
    pair = PhasePair(inner, ring, -0.5, -0.5, inner.mass, ring.mass)
    csv_text = emit_radial_profile(pair)
    rows = [r.split(",") for r in csv_text.splitlines()[1:]]
    radii = np.array([float(r[0]) for r in rows])
    f1m = np.array([float(r[1]) for r in rows])
    f2m = np.array([float(r[2]) for r in rows])
    assert (np.diff(radii) > 0).all()
    # inner shells pure phase 1 at 0.5, ring shells show phase 2
    assert f1m[0] == pytest.approx(0.5)
    assert f2m[0] == 0.0
    assert f2m[(radii > 1.1) & (radii < 1.3)].max() == pytest.approx(0.4)


def test_verify_subcommand(capsys):
    code = run(["verify", "projection"])
    out = capsys.readouterr().out
    assert code == 0
    assert '"ok": true' in out
    assert run(["verify", "nonsense"]) == 2
