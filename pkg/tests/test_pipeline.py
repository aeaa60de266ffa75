import json

import numpy as np
import pytest

from spdefind import SPDEDiscovery
from spdefind.cli import main
from spdefind.config import parse_config, preset_config, serialize_config
from spdefind.exceptions import ConfigError, MissingTruth
from spdefind.fileio import read_field, read_model
from spdefind.pipeline import (check_field_matches, discover, evaluate, ground_truth, load_models,
                               save_discovery, score, simulate_from_config, truth_model_file)

SMALL = dict(nx=32, horizon=0.1, ensembles=40, poly_max=3, deriv_max=2, eval_ensembles=8)


@pytest.fixture(scope="module")
def small_run(tmp_path_factory):
    config = preset_config("allen-cahn", **SMALL)
    out = tmp_path_factory.mktemp("run")
    data = simulate_from_config(config)
    found = discover(data, config)
    save_discovery(found, config, out)
    report = evaluate(load_models(out), config, out)
    return config, out, found, report


def test_small_pipeline_writes_all_outputs(small_run):
    config, out, found, report = small_run
    for name in ("drift.spm", "diffusion.spm", "drift_stlsq.spm", "diffusion_stlsq.spm",
                 "report.json", "report.txt", "prediction.csv", "prediction_truth.csv"):
        assert (out / name).is_file(), name
    assert found.names == [t.name for t in config.terms()]
    assert len(found.names) == 1 + 3 + 2 + 6
    rep = json.loads((out / "report.json").read_text())
    assert set(rep["metrics"]) >= {"l2_stacked", "fpr", "diffusion_amplitude"}
    assert read_model(out / "drift_stlsq.spm").method == "stlsq"
    assert np.isfinite(report.prediction["mean_field_rel_error"])


def test_prediction_csv_shape(small_run):
    config, out, _, _ = small_run
    lines = (out / "prediction.csv").read_text().splitlines()
    assert lines[0] == "x,t,mean,std"
    assert len(lines) == 1 + config.nx * config.time().n_steps


def test_true_model_scores_perfectly():
    config = preset_config("nagumo", poly_max=3, deriv_max=2)
    names = [t.name for t in config.terms()]
    truth = ground_truth(config, config.terms())
    m = score(truth_model_file(config.model(), "drift"), truth_model_file(config.model(), "diffusion"),
              names, truth)
    assert m["l2_stacked"] == 0.0 and m["fpr"] == 0.0
    assert m["drift_support_exact"] and m["diffusion_support_exact"]
    assert m["diffusion_amplitude"] == pytest.approx(1.0)


def test_noise_free_heat_has_negligible_diffusion():
    config = preset_config("heat", noise=0.0, ensembles=1, **{k: v for k, v in SMALL.items() if k != "ensembles"})
    found = discover(simulate_from_config(config), config)
    g = found.vb_model("diffusion").coef_vector(found.names)
    assert np.max(np.abs(g)) < 1e-3


def test_field_mismatch_is_a_config_error():
    config = preset_config("heat", **SMALL)
    data = simulate_from_config(preset_config("heat", **{**SMALL, "nx": 16}))
    with pytest.raises(ConfigError):
        check_field_matches(data, config)


def test_custom_config_cannot_be_evaluated(small_run, tmp_path):
    _, out, _, _ = small_run
    custom = parse_config("model.drift_poly = 1:1.0\ngrid.nx = 32\ndictionary.poly_max = 3\n"
                          "dictionary.deriv_max = 2\n")
    with pytest.raises(MissingTruth):
        evaluate(load_models(out), custom, tmp_path)


def test_standardized_fit_agrees_in_support(small_run):
    config, _, found, _ = small_run
    cfg = preset_config("allen-cahn", standardize=True, **SMALL)
    scaled = discover(simulate_from_config(cfg), cfg)
    assert scaled.names == found.names
    assert np.all(np.isfinite(scaled.vb_model("drift").coef_vector(scaled.names)))


# ---------------------------------------------------------------- CLI

def _write_config(path, text):
    path.write_text(text)
    return str(path)


def test_cli_round_trip(tmp_path, capsys):
    cfg = _write_config(tmp_path / "c.txt", serialize_config(preset_config("heat", **SMALL)))
    fld = tmp_path / "f.fld"
    assert main(["simulate", "--config", cfg, "--out", str(fld)]) == 0
    assert read_field(fld).u.shape == (40, 41, 32)
    assert main(["discover", "--data", str(fld), "--config", cfg, "--out-dir", str(tmp_path / "m")]) == 0
    assert main(["evaluate", "--models", str(tmp_path / "m"), "--config", cfg,
                 "--report", str(tmp_path / "r" / "rep.json")]) == 0
    assert (tmp_path / "r" / "rep.json").is_file() and (tmp_path / "r" / "prediction.csv").is_file()
    assert "FPR" in capsys.readouterr().out


def test_cli_single_member(tmp_path):
    cfg = _write_config(tmp_path / "c.txt", "model.preset = heat\nsim.ensembles = 1\ntime.horizon = 0.05\n"
                        "grid.nx = 16\n")
    assert main(["simulate", "--config", cfg, "--out", str(tmp_path / "f.fld")]) == 0
    assert read_field(tmp_path / "f.fld").u.shape[0] == 1


@pytest.mark.parametrize("text", ["model.preset = burgers\n", "grid.nx = 2\n", "bogus\n"])
def test_cli_config_errors_exit_2(tmp_path, text, capsys):
    cfg = _write_config(tmp_path / "c.txt", text)
    assert main(["simulate", "--config", cfg, "--out", str(tmp_path / "f.fld")]) == 2
    assert "config error" in capsys.readouterr().err


def test_cli_missing_config_exits_2(tmp_path):
    assert main(["simulate", "--config", str(tmp_path / "none.txt"), "--out", str(tmp_path / "f")]) == 2


def test_cli_blowup_exits_3(tmp_path, capsys):
    cfg = _write_config(tmp_path / "c.txt", "model.preset = allen-cahn\nmodel.noise = 50\n"
                        "sim.blowup_bound = 2\nsim.ensembles = 4\ngrid.nx = 16\n")
    assert main(["simulate", "--config", cfg, "--out", str(tmp_path / "f.fld")]) == 3
    assert "numerical" in capsys.readouterr().err


def test_cli_missing_data_exits_4(tmp_path):
    cfg = _write_config(tmp_path / "c.txt", "model.preset = heat\n")
    assert main(["discover", "--data", str(tmp_path / "nope.fld"), "--config", cfg,
                 "--out-dir", str(tmp_path)]) == 4


def test_cli_corrupt_data_exits_4(tmp_path):
    cfg = _write_config(tmp_path / "c.txt", "model.preset = heat\n")
    (tmp_path / "bad.fld").write_bytes(b"SPDEFLD 1\nns 1\nnt 2\nnx 3\ndt 0.1\ndx 1.0\nseed 0\nend\n")
    assert main(["discover", "--data", str(tmp_path / "bad.fld"), "--config", cfg,
                 "--out-dir", str(tmp_path)]) == 4


def test_cli_evaluate_without_truth_exits_2(small_run, tmp_path):
    _, out, _, _ = small_run
    cfg = _write_config(tmp_path / "c.txt", "model.drift_poly = 1:1.0\ngrid.nx = 32\n"
                        "dictionary.poly_max = 3\ndictionary.deriv_max = 2\n")
    assert main(["evaluate", "--models", str(out), "--config", cfg,
                 "--report", str(tmp_path / "r.json")]) == 2


# ---------------------------------------------------------------- estimator

def test_estimator_matches_pipeline(small_run):
    config, _, found, _ = small_run
    data = simulate_from_config(config)
    est = SPDEDiscovery(dt=config.dt, poly_max=3, deriv_max=2).fit(data.u)
    assert est.feature_names_ == found.names
    np.testing.assert_allclose(est.drift_coef_, found.vb_model("drift").coef_vector(found.names),
                               rtol=1e-8, atol=1e-10)
    f, g2 = est.predict(data.u)
    assert f.shape == g2.shape == ((config.time().n_steps - 1) * config.nx,)
    assert est.equation().startswith("du = (")
    assert est.get_params()["poly_max"] == 3


def test_estimator_rejects_bad_input():
    with pytest.raises(ValueError):
        SPDEDiscovery().fit(np.zeros((3, 4)))
    est = SPDEDiscovery(poly_max=1, deriv_max=1)
    with pytest.raises(Exception):
        est.predict(np.zeros((2, 3, 8)))
