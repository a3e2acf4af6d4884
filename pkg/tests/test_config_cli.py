"""Configuration validation and the command-line pipelines end to end."""

import copy
import json
import os

import numpy as np
import pytest

from affinespde import cli, funalg, levy, oracle
from affinespde import config as cfgmod
from affinespde.errors import ConfigError

BUNDLED = ["cable", "heat-disk", "hermite", "hjmm-levy", "hjmm-linear",
           "laguerre", "neg-gauss-taylor", "neg-rational-taylor",
           "term-structure-2", "transport-1d", "transport-mortality-2d"]


def _load(name):
    return cfgmod.load_config(cfgmod.resolve_config_path(name))


def _fast_cable(tmp_path, **time_kw):
    raw = copy.deepcopy(_load("cable"))
    raw["name"] = "cable-fast"
    raw["space"]["n_x"] = 64
    raw["time"] = {"horizon": time_kw.get("horizon", 0.25),
                   "n_t": time_kw.get("n_t", 50)}
    path = tmp_path / "cable-fast.json"
    path.write_text(json.dumps(raw))
    return str(path)


def test_bundled_catalog_is_complete():
    assert sorted(cfgmod.bundled_scenarios()) == BUNDLED
    for name in BUNDLED:
        raw = _load(name)
        rt = cfgmod.build_runtime(raw, os.path.dirname(
            cfgmod.resolve_config_path(name)))
        assert rt.name == name


def test_resolve_config_path_errors_list_bundled_names():
    with pytest.raises(ConfigError) as err:
        cfgmod.resolve_config_path("no-such-scenario")
    assert "cable" in str(err.value)


def test_schema_rejections():
    raw = _load("cable")
    for mutate in [
            lambda d: d.pop("operator"),
            lambda d: d.pop("initial_curve"),
            lambda d: d.__setitem__("unexpected_key", 1),
            lambda d: d["time"].__setitem__("n_t", "many"),
            lambda d: d["operator"].__setitem__("kind", "unknown-kind"),
            lambda d: d["space"].__setitem__("n_x", 1),
    ]:
        bad = copy.deepcopy(raw)
        mutate(bad)
        with pytest.raises(ConfigError):
            cfgmod.validate_config(bad)


def test_runtime_rejects_component_mismatch():
    raw = copy.deepcopy(_load("cable"))
    raw["driver"] = {"components": [{"brownian_vol": 0.2},
                                    {"brownian_vol": 0.3}]}
    with pytest.raises(ConfigError) as err:
        cfgmod.build_runtime(raw)
    assert "driver" in str(err.value)


def test_runtime_rejects_wiener_drift_with_jumps():
    raw = copy.deepcopy(_load("hjmm-linear"))
    raw["driver"] = {"components": [{
        "brownian_vol": 0.2, "jump_intensity": 1.0,
        "two_sided_exp": {"p_up": 0.5, "rate_up": 8.0, "rate_down": 9.0}}]}
    with pytest.raises(ConfigError):
        cfgmod.build_runtime(raw)


def test_cli_analyze_positive_and_negative(tmp_path):
    out = tmp_path / "a"
    assert cli.main(["analyze", "--config", "cable", "--out", str(out)]) == 0
    report = json.loads((out / "analysis.json").read_text())
    assert report["status"] == "certified"
    assert report["dim_V"] == 2

    out2 = tmp_path / "b"
    assert cli.main(["analyze", "--config", "neg-gauss-taylor", "--out", str(out2)]) == 3
    report2 = json.loads((out2 / "analysis.json").read_text())
    assert report2["status"] == "negative"
    assert report2["reason"] == "NotQuasiExponential"


def test_cli_bad_inputs_exit_2(tmp_path):
    assert cli.main(["analyze", "--config", "no-such-scenario",
                     "--out", str(tmp_path / "x")]) == 2
    broken = tmp_path / "broken.json"
    broken.write_text(json.dumps({"name": "broken"}))
    assert cli.main(["analyze", "--config", str(broken), "--out", str(tmp_path / "y")]) == 2
    with pytest.raises(SystemExit):
        cli.main(["frobnicate"])


def test_cli_simulate_artifacts_reparse(tmp_path):
    cfg = _fast_cable(tmp_path)
    out = tmp_path / "sim"
    assert cli.main(["simulate", "--config", cfg, "--out", str(out)]) == 0

    r_path = oracle.read_grid_path(str(out / "r.csv"))
    psi_path = oracle.read_grid_path(str(out / "psi.csv"))
    t, coords = oracle.read_coordinate_csv(str(out / "Y.csv"))
    inc = levy.read_increments_csv(str(out / "increments.csv"))
    meta = json.loads((out / "realization.json").read_text())

    assert r_path.values.shape == (51, 64)
    assert psi_path.values.shape == (51, 64)
    assert coords.shape == (51, meta["dim_V"])
    assert inc.n_steps == 50
    assert np.array_equal(r_path.t_grid, psi_path.t_grid)
    assert np.array_equal(r_path.t_grid, t)
    # the reconstruction identity holds across the written artifacts
    basis_samples = np.vstack([
        funalg.evaluate(funalg.parse_qexp(b["qexp"]), r_path.x_grid)
        for b in meta["basis"]])
    rebuilt = psi_path.values + coords @ basis_samples
    assert np.allclose(rebuilt, r_path.values, atol=1e-12)


def test_cli_simulate_is_deterministic(tmp_path):
    cfg = _fast_cable(tmp_path)
    out1, out2 = tmp_path / "s1", tmp_path / "s2"
    assert cli.main(["simulate", "--config", cfg, "--out", str(out1)]) == 0
    assert cli.main(["simulate", "--config", cfg, "--out", str(out2)]) == 0
    for name in ("psi.csv", "Y.csv", "r.csv", "increments.csv",
                 "realization.json"):
        assert (out1 / name).read_bytes() == (out2 / name).read_bytes()


def test_cli_seed_override_changes_noise(tmp_path):
    cfg = _fast_cable(tmp_path)
    out1, out2 = tmp_path / "s1", tmp_path / "s2"
    assert cli.main(["simulate", "--config", cfg, "--out", str(out1)]) == 0
    assert cli.main(["simulate", "--config", cfg, "--seed", "999",
                     "--out", str(out2)]) == 0
    a = levy.read_increments_csv(str(out1 / "increments.csv"))
    b = levy.read_increments_csv(str(out2 / "increments.csv"))
    assert not np.array_equal(a.values, b.values)


def test_cli_ensemble_stats_shape(tmp_path):
    cfg = _fast_cable(tmp_path)
    out = tmp_path / "ens"
    assert cli.main(["simulate", "--config", cfg, "--paths", "8", "--jobs", "2",
                     "--out", str(out)]) == 0
    rows = (out / "ensemble_stats.csv").read_text().strip().splitlines()
    assert len(rows) == 52  # header + 51 time points


def test_cli_out_env_fallback(tmp_path, monkeypatch):
    monkeypatch.setenv("AFFINESPDE_OUT", str(tmp_path / "envroot"))
    monkeypatch.chdir(tmp_path)
    assert cli.main(["analyze", "--config", "laguerre"]) == 0
    assert (tmp_path / "envroot" / "laguerre" / "analysis.json").exists()


def test_cli_verify_passes_and_flags_corruption(tmp_path):
    cfg = _fast_cable(tmp_path, horizon=0.25, n_t=100)
    out = tmp_path / "v"
    base_dir = os.path.dirname(cfg)
    rt = cfgmod.build_runtime(cfgmod.load_config(cfg), base_dir)
    assert cli.run_verify(rt, str(out)) == 0
    report = json.loads((out / "verify.json").read_text())
    assert report["passed"] is True
    assert report["levels"][0]["sup_error"] <= report["bound"]

    def corrupt(real):
        real.B[0, 0] += 0.5
        return real

    out_bad = tmp_path / "vbad"
    assert cli.run_verify(rt, str(out_bad), mutate=corrupt) == 5
    report = json.loads((out_bad / "verify.json").read_text())
    assert report["passed"] is False
    assert report["failures"]


def test_cli_eigen_outputs_reparse(tmp_path):
    out = tmp_path / "eig"
    assert cli.main(["eigen", "--operator", "cable", "--count", "5",
                     "--out", str(out)]) == 0
    rows = (out / "eigen.csv").read_text().strip().splitlines()
    header, body = rows[0], rows[1:]
    assert header.startswith("index,eigenvalue,generator_eigenvalue")
    eigs = [float(r.split(",")[1]) for r in body]
    assert eigs == [1.0, 4.0, 9.0, 16.0, 25.0]
