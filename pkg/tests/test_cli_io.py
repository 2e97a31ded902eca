import json
import math
from pathlib import Path

import numpy as np
import pytest

from anodiff import cli_io, limit_gauss
from anodiff.ensemble import TrajectoryEnsemble
from anodiff.rng import stream

MINIMAL = """\
schema_version = 1
mass_law.family = stable_power
mass_law.H = 0.75
system.a = 0.8
system.b = 0.25
system.d = 0.2
system.N = 128
system.C_beta = 0.2
system.gamma = 2.0
system.n_steps = 128
system.seed = 7
run.n_traj = 5
"""

WIENER = """\
schema_version = 1
mass_law.family = dirac_npower
system.a = 0.74
system.b = 0.01
system.gamma = 10.0
system.M = 0.1
system.N = 64
system.n_steps = 64
system.seed = 5
run.n_traj = 6
run.observables = X
"""


# ------------------------------------------------------------ parse_config


def test_minimal_config_parses_with_derived_delta(tmp_path):
    f = tmp_path / "c.cfg"
    f.write_text(MINIMAL)
    pc = cli_io.parse_config(f)
    assert math.isclose(pc.cfg.delta, 0.1, rel_tol=1e-12)
    assert pc.law.family == "stable_power"
    assert pc.cfg.C_delta == pc.law.meta.C_delta
    assert pc.run["n_traj"] == 5


def test_regime_error_names_inequality(tmp_path):
    f = tmp_path / "c.cfg"
    f.write_text(MINIMAL.replace("system.a = 0.8", "system.a = 0.3"))
    with pytest.raises(cli_io.ConfigError) as exc:
        cli_io.parse_config(f)
    assert "a >= b + 1/2" in str(exc.value) or "2(a-b)" in str(exc.value)


def test_unknown_key_lists_valid_keys(tmp_path):
    f = tmp_path / "c.cfg"
    f.write_text(MINIMAL + "hurst = 0.75\n")
    with pytest.raises(cli_io.ConfigError) as exc:
        cli_io.parse_config(f)
    msg = str(exc.value)
    assert "unknown key 'hurst'" in msg
    assert "mass_law.H" in msg  # valid keys listed
    assert "line" in msg


def test_duplicate_and_unparseable_keys(tmp_path):
    f = tmp_path / "c.cfg"
    f.write_text(MINIMAL + "system.N = 64\n")
    with pytest.raises(cli_io.ConfigError, match="duplicate"):
        cli_io.parse_config(f)
    f.write_text(MINIMAL.replace("system.N = 128", "system.N = many"))
    with pytest.raises(cli_io.ConfigError, match="cannot parse"):
        cli_io.parse_config(f)


def test_schema_version_enforced(tmp_path):
    f = tmp_path / "c.cfg"
    f.write_text(MINIMAL.replace("schema_version = 1", "schema_version = 9"))
    with pytest.raises(cli_io.ConfigError, match="schema_version"):
        cli_io.parse_config(f)


def test_mixing_section_parsed(tmp_path):
    f = tmp_path / "c.cfg"
    f.write_text(MINIMAL + "mixing.A_law = exp:1.0\nmixing.H_law = uniform:0.55,0.95\n")
    pc = cli_io.parse_config(f)
    assert pc.mixing.A_law.kind == "exponential"
    assert pc.mixing.H_law.kind == "uniform"


def test_config_hash_stable_under_reordering(tmp_path):
    f1, f2 = tmp_path / "a.cfg", tmp_path / "b.cfg"
    f1.write_text(MINIMAL)
    lines = [l for l in MINIMAL.splitlines() if l]
    f2.write_text("\n".join(reversed(lines)) + "\n")
    assert cli_io.parse_config(f1).hash == cli_io.parse_config(f2).hash


def test_parse_mixing_specs():
    assert cli_io.parse_a_law("exp:2.0").params == (2.0,)
    assert cli_io.parse_a_law("lognormal:0.1,0.4").kind == "lognormal"
    h = cli_io.parse_h_law("discrete:0.6@0.25,0.9@0.75")
    assert h.kind == "discrete"
    with pytest.raises(ValueError):
        cli_io.parse_a_law("zipf:1.0")
    with pytest.raises(ValueError):
        cli_io.parse_h_law("spline:0.6")


# ------------------------------------------------------------ file formats


def _tiny_ensemble():
    grid = np.linspace(0.0, 1.0, 9)
    paths = np.hstack([np.zeros((4, 1)), stream(3, 3).standard_normal((4, 8))])
    return TrajectoryEnsemble(grid=grid, observables={"X": paths},
                              meta={"seed": 3, "config_hash": "abc123"})


def test_csv_roundtrip_and_header(tmp_path):
    ens = _tiny_ensemble()
    p = cli_io.write_ensemble_csv(tmp_path / "x.csv", ens, "X")
    text = p.read_text()
    assert text.startswith("#")
    assert "# config_hash = abc123" in text
    assert "# seed = 3" in text
    assert "# grid = " in text
    back = cli_io.read_ensemble_csv(p)
    assert np.array_equal(back["X"], ens["X"])
    assert np.allclose(back.grid, ens.grid)


def test_binary_roundtrip(tmp_path):
    ens = _tiny_ensemble()
    p = cli_io.write_ensemble_binary(tmp_path / "x.bin", ens, "X")
    raw = p.read_bytes()
    assert raw[:4] == b"ANOD"
    back = cli_io.read_ensemble_binary(p)
    assert np.array_equal(back["X"], ens["X"])
    assert np.array_equal(back.grid, ens.grid)
    assert back.meta["config_hash"] == "abc123"


def test_binary_rejects_foreign_file(tmp_path):
    p = tmp_path / "junk.bin"
    p.write_bytes(b"JUNKJUNKJUNK")
    with pytest.raises(ValueError, match="magic"):
        cli_io.read_ensemble_binary(p)


# -------------------------------------------------------------- subcommands


def test_simulate_writes_outputs_and_manifest(tmp_path):
    cfg = tmp_path / "run.cfg"
    cfg.write_text(WIENER)
    out = tmp_path / "out"
    rc = cli_io.run_command(["simulate", "--config", str(cfg), "--out", str(out)])
    assert rc == 0
    assert (out / "X.csv").exists()
    man = json.loads((out / "manifest.json").read_text())
    assert man["seed"] == 5
    assert man["command"] == "simulate"
    assert str(out / "X.csv") in man["outputs"]
    # config echo in the data header
    head = [l for l in (out / "X.csv").read_text().splitlines() if l.startswith("#")]
    assert any("config_hash" in line for line in head)


def test_simulate_byte_identical_reruns(tmp_path):
    cfg = tmp_path / "run.cfg"
    cfg.write_text(WIENER)
    o1, o2 = tmp_path / "o1", tmp_path / "o2"
    assert cli_io.run_command(["simulate", "--config", str(cfg), "--out", str(o1)]) == 0
    assert cli_io.run_command(["simulate", "--config", str(cfg), "--out", str(o2)]) == 0
    assert (o1 / "X.csv").read_bytes() == (o2 / "X.csv").read_bytes()


def test_simulate_chain_observables(tmp_path):
    cfg = tmp_path / "run.cfg"
    cfg.write_text(WIENER.replace("run.observables = X",
                                  "run.observables = X,Xtilde,Ztilde"))
    out = tmp_path / "out"
    assert cli_io.run_command(["simulate", "--config", str(cfg), "--out", str(out)]) == 0
    for name in ("X", "Xtilde", "Ztilde"):
        assert (out / f"{name}.csv").exists()


def test_exit_code_validation_error(tmp_path):
    rc = cli_io.run_command(["simulate", "--config", str(tmp_path / "missing.cfg"),
                             "--out", str(tmp_path / "o")])
    assert rc == 1
    bad = tmp_path / "bad.cfg"
    bad.write_text(MINIMAL.replace("system.a = 0.8", "system.a = 0.3"))
    rc = cli_io.run_command(["simulate", "--config", str(bad), "--out", str(tmp_path / "o")])
    assert rc == 1


def test_exit_code_numerical_failure(tmp_path):
    # beta0 positivity violation surfaces as a numerical failure (exit 2)
    cfg = tmp_path / "bad.cfg"
    cfg.write_text(MINIMAL.replace("system.gamma = 2.0", "system.gamma = 0.001"))
    rc = cli_io.run_command(["simulate", "--config", str(cfg), "--out", str(tmp_path / "o")])
    assert rc == 2


def test_limit_sample_cli(tmp_path):
    out = tmp_path / "ls"
    rc = cli_io.run_command(["limit-sample", "--family", "stable_power", "--H", "0.75",
                             "--t0", "1.0", "--n-points", "16", "--n-traj", "20",
                             "--seed", "3", "--out", str(out)])
    assert rc == 0
    ens = cli_io.read_ensemble_csv(out / "Z.csv")
    assert ens["Z"].shape == (20, 17)


def test_superstat_cli_with_sidecar(tmp_path):
    out = tmp_path / "ss"
    rc = cli_io.run_command(["superstat", "--A-law", "exp:1.0",
                             "--H-law", "uniform:0.55,0.95",
                             "--t0", "1.0", "--n-points", "8", "--n-traj", "12",
                             "--seed", "4", "--out", str(out)])
    assert rc == 0
    assert (out / "Z.csv").exists()
    side = (out / "mixing_draws.csv").read_text().splitlines()
    assert len([l for l in side if not l.startswith("#")]) == 12


def test_kfp_cli(tmp_path):
    cfg = tmp_path / "run.cfg"
    cfg.write_text(MINIMAL + "mixing.A_law = exp:1.0\nmixing.H_law = degenerate:0.75\n")
    out = tmp_path / "kfp"
    rc = cli_io.run_command(["kfp", "--config", str(cfg), "--t", "0.5,1.0",
                             "--u0", "gaussian:0.1", "--out", str(out)])
    assert rc == 0
    lines = (out / "density.csv").read_text().splitlines()
    data = [l for l in lines if not l.startswith("#")]
    assert len(data[0].split(",")) == 3  # x plus two time snapshots


def test_estimate_cli(tmp_path):
    grid = np.linspace(0.0, 1.0, 33)
    model = limit_gauss.CovarianceModel.from_family("stable_power", {"H": 0.75}, grid[1:])
    ens = limit_gauss.sample_limit_paths(model, 400, 11)
    src = cli_io.write_ensemble_csv(tmp_path / "Z.csv", ens, "Z")
    out = tmp_path / "est"
    rc = cli_io.run_command(["estimate", "--in", str(src), "--window", "0.06,0.5",
                             "--t", "1.0", "--out", str(out)])
    assert rc == 0
    assert (out / "msd.csv").exists()
    report = (out / "estimate.txt").read_text()
    assert "msd exponent" in report and "gaussianity" in report


def test_converge_cli(tmp_path):
    cfg = tmp_path / "run.cfg"
    cfg.write_text(
        "schema_version = 1\n"
        "mass_law.family = dirac_npower\n"
        "system.a = 0.79\nsystem.b = 0.05\n"
        "system.gamma = 8.0\nsystem.M = 1.0\n"
        "system.N = 64\nsystem.t0 = 2.0\nsystem.n_steps = 256\nsystem.seed = 2\n"
    )
    out = tmp_path / "cv"
    rc = cli_io.run_command(["converge", "--config", str(cfg), "--N-list",
                             "64,128,256,512", "--n-traj", "32", "--out", str(out)])
    assert rc == 0
    text = (out / "scaling_report.csv").read_text()
    assert "slope gap_chain" in text


def test_selftest_cli_fast():
    assert cli_io.run_command(["selftest", "--fast"]) == 0


def test_limit_sample_accepts_fbm_alias(tmp_path):
    out = tmp_path / "alias"
    rc = cli_io.run_command(["limit-sample", "--family", "fbm", "--H", "0.75",
                             "--t0", "1.0", "--n-points", "8", "--n-traj", "5",
                             "--seed", "1", "--out", str(out)])
    assert rc == 0
    assert (out / "Z.csv").exists()


def test_simulate_dump_masses(tmp_path):
    cfg = tmp_path / "run.cfg"
    cfg.write_text(WIENER)
    out = tmp_path / "dm"
    rc = cli_io.run_command(["simulate", "--config", str(cfg), "--out", str(out),
                             "--dump-masses"])
    assert rc == 0
    rows = [l for l in (out / "masses.csv").read_text().splitlines()
            if not l.startswith("#")]
    assert len(rows) == 6 and len(rows[0].split(",")) == 64


def test_output_header_echoes_full_config(tmp_path):
    cfg = tmp_path / "run.cfg"
    cfg.write_text(WIENER)
    out = tmp_path / "echo"
    assert cli_io.run_command(["simulate", "--config", str(cfg), "--out", str(out)]) == 0
    head = [l for l in (out / "X.csv").read_text().splitlines() if l.startswith("#")]
    text = "\n".join(head)
    for key in ("cfg.M", "cfg.sigma", "cfg.gamma", "cfg.a", "cfg.b", "cfg.N",
                "cfg.t0", "cfg.n_steps", "config_hash", "grid"):
        assert key in text, key
