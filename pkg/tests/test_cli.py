"""End-to-end CLI behavior: config validation, CSV output, exit codes."""

import json

import pytest

from qeflab import cli
from qeflab.errors import SchemaViolation


def base_config(out_dir):
    return {
        "oscillator": {"n": 2, "m": 2,
                       "Theta": [[0.0, 1.0], [-1.0, 0.0]],
                       "R": [[1.0, 0.0], [0.0, 1.0]],
                       "M": [[1.0, 0.0], [0.0, 1.0]],
                       "T": 1.0, "theta": 0.348},
        "grid": {"panels": 8, "nodes_per_panel": 16},
        "eigen": {"capture_fraction": 0.99},
        "qef": {"theta_list": [0.0, 0.348, 15.0]},
        "mc": {"samples": 400, "seed": 11, "batch": 20},
        "fock": {"N": 8, "omega_list": [0.1], "quad_order": 12},
        "output_dir": str(out_dir),
    }


def write_config(tmp_path, cfg, name="run.json"):
    path = tmp_path / name
    path.write_text(json.dumps(cfg))
    return str(path)


def read_rows(path):
    header, *rows = path.read_text().strip().split("\n")
    return header.split(","), [r.split(",") for r in rows]


def stderr_code(capsys):
    err = capsys.readouterr().err.strip().splitlines()[-1]
    return json.loads(err)["error"]


def test_load_config_missing_field(tmp_path):
    cfg = base_config(tmp_path)
    del cfg["oscillator"]["R"]
    path = write_config(tmp_path, cfg)
    with pytest.raises(SchemaViolation, match="oscillator"):
        cli.load_config(path)


def test_load_config_unsorted_thetas(tmp_path):
    cfg = base_config(tmp_path)
    cfg["qef"]["theta_list"] = [0.5, 0.2]
    with pytest.raises(SchemaViolation, match="sorted"):
        cli.load_config(write_config(tmp_path, cfg))


def test_load_config_rejects_nonfinite(tmp_path):
    path = tmp_path / "inf.json"
    path.write_text('{"oscillator": {"T": Infinity}}')
    with pytest.raises(SchemaViolation, match="non-finite"):
        cli.load_config(str(path))


def test_load_config_malformed_json(tmp_path):
    path = tmp_path / "bad.json"
    path.write_text("{not json")
    with pytest.raises(SchemaViolation, match="not valid JSON"):
        cli.load_config(str(path))
    with pytest.raises(SchemaViolation, match="cannot read"):
        cli.load_config(str(tmp_path / "missing.json"))


def test_model_check_fixture(tmp_path):
    path = write_config(tmp_path, base_config(tmp_path))
    assert cli.main(["model-check", "--config", path]) == 0
    header, rows = read_rows(tmp_path / "model.csv")
    assert header == ["check", "value", "threshold", "status"]
    assert [r[0] for r in rows] == ["pr_residual_rel", "ccr_roundtrip_rel",
                                    "ale_residual_rel", "spectral_abscissa"]
    assert all(r[-1] == "pass" for r in rows)


def test_model_check_singular_theta(tmp_path, capsys):
    cfg = base_config(tmp_path)
    cfg["oscillator"]["Theta"] = [[0.0, 0.0], [0.0, 0.0]]
    path = write_config(tmp_path, cfg)
    assert cli.main(["model-check", "--config", path]) == 2
    assert stderr_code(capsys) == "SingularTheta"


def test_eigen_outputs(tmp_path):
    path = write_config(tmp_path, base_config(tmp_path))
    assert cli.main(["eigen", "--config", path]) == 0
    header, rows = read_rows(tmp_path / "eigen_shooting.csv")
    assert header == ["k", "omega", "multiplicity", "bvp_residual"]
    assert len(rows) == 3
    omegas = [float(r[1]) for r in rows]
    assert omegas == sorted(omegas, reverse=True)
    _, ny = read_rows(tmp_path / "eigen_nystrom.csv")
    assert len(ny) == 6
    # shooting and discretized eigenfrequencies agree to grid accuracy
    for k in range(3):
        assert abs(float(ny[k][1]) - omegas[k]) <= 5e-3 * omegas[k]
    header, gram = read_rows(tmp_path / "basis_gram.csv")
    assert header == ["j", "k", "p", "q", "value"]
    assert len(gram) == 36


def test_eigen_empty_band(tmp_path, capsys):
    cfg = base_config(tmp_path)
    cfg["eigen"].update(omega_min=0.6, omega_max=0.65)
    path = write_config(tmp_path, cfg)
    assert cli.main(["eigen", "--config", path]) == 3
    assert stderr_code(capsys) == "CaptureUnreachable"


def test_qef_rows(tmp_path):
    path = write_config(tmp_path, base_config(tmp_path))
    assert cli.main(["qef", "--config", path]) == 0
    header, rows = read_rows(tmp_path / "qef.csv")
    assert header == ["theta", "C", "tail_C", "spectral_radius",
                      "theta_critical", "xi", "xi_classical"]
    assert len(rows) == 3
    by_theta = {float(r[0]): r for r in rows}
    assert float(by_theta[0.0][5]) == 1.0
    assert float(by_theta[0.0][6]) == 1.0
    assert float(by_theta[0.348][5]) == pytest.approx(1.41623441935425, rel=1e-10)
    # supercritical rows are reported, not refused
    assert by_theta[15.0][5] == "diverged"
    assert by_theta[15.0][6] == "diverged"
    _, qkl_rows = read_rows(tmp_path / "qkl.csv")
    assert len(qkl_rows) == 9


def test_validate_pass_and_seed_override(tmp_path):
    cfg = base_config(tmp_path)
    cfg["qef"]["theta_list"] = [0.348]
    path = write_config(tmp_path, cfg)
    assert cli.main(["validate", "--config", path]) == 0
    _, rows = read_rows(tmp_path / "mc.csv")
    assert [r[1] for r in rows] == ["Z", "N"]
    assert all(r[6] == "11" for r in rows)
    assert cli.main(["validate", "--config", path, "--seed", "42"]) == 0
    _, rows = read_rows(tmp_path / "mc.csv")
    assert all(r[6] == "42" for r in rows)


def test_validate_deterministic_across_threads(tmp_path, monkeypatch):
    cfg = base_config(tmp_path)
    cfg["qef"]["theta_list"] = [0.348]
    path = write_config(tmp_path, cfg)
    monkeypatch.delenv("QEFLAB_THREADS", raising=False)
    cli.main(["validate", "--config", path])
    first = (tmp_path / "mc.csv").read_bytes()
    cli.main(["validate", "--config", path])
    assert (tmp_path / "mc.csv").read_bytes() == first
    monkeypatch.setenv("QEFLAB_THREADS", "4")
    cli.main(["validate", "--config", path])
    assert (tmp_path / "mc.csv").read_bytes() == first


def test_validate_requires_mc_section(tmp_path, capsys):
    cfg = base_config(tmp_path)
    del cfg["mc"]
    path = write_config(tmp_path, cfg)
    assert cli.main(["validate", "--config", path]) == 2
    assert stderr_code(capsys) == "SchemaViolation"


def test_validate_rejects_tiny_sample_count(tmp_path, capsys):
    cfg = base_config(tmp_path)
    cfg["mc"]["samples"] = 0
    path = write_config(tmp_path, cfg)
    assert cli.main(["validate", "--config", path]) == 2
    assert stderr_code(capsys) == "SchemaViolation"


def test_fock_pass_and_tolerance_breach(tmp_path):
    cfg = base_config(tmp_path)
    path = write_config(tmp_path, cfg)
    assert cli.main(["fock", "--config", path]) == 0
    header, rows = read_rows(tmp_path / "fock.csv")
    assert header == ["N", "omega", "quad_order", "corner_error", "ode_residual"]
    assert len(rows) == 1
    assert rows[0][0] == "8"
    cfg["fock"]["corner_tol"] = 1e-16
    path = write_config(tmp_path, cfg, name="tight.json")
    assert cli.main(["fock", "--config", path]) == 3


def test_out_override(tmp_path):
    cfg = base_config(tmp_path / "configured")
    path = write_config(tmp_path, cfg)
    override = tmp_path / "elsewhere"
    assert cli.main(["model-check", "--config", path,
                     "--out", str(override)]) == 0
    assert (override / "model.csv").exists()
    assert not (tmp_path / "configured" / "model.csv").exists()
