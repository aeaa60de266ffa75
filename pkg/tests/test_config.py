import pytest
from hypothesis import given
from hypothesis import strategies as st

from spdefind.config import (DEFAULT_SEED, PRESETS, ExperimentConfig, load_config, parse_config,
                             preset_config, serialize_config)
from spdefind.exceptions import ConfigError, MissingTruth


def test_defaults_and_presets():
    heat = parse_config("model.preset = heat\n")
    assert heat.seed == DEFAULT_SEED == 42
    assert heat.time().n_steps == 401 and heat.nx == 64 and heat.dt == 0.0025
    assert len(heat.terms()) == 42 and heat.drift_poly == ()
    nag = preset_config("nagumo")
    assert nag.dt == 0.001 and nag.time().n_steps == 1001 and len(nag.terms()) == 35
    ac = preset_config("allen-cahn")
    assert ac.drift_poly == ((1, 1.0), (3, -1.0))
    assert ac.hyper().slab_variance == 10 and ac.hyper().inclusion_prior == 0.1
    assert ac.stlsq_config().threshold == 0.3


def test_overrides_beat_preset_and_comments_are_ignored():
    text = """
    # reduced run
    model.preset = heat   # the preset
    sim.ensembles = 10
    model.noise = 0
    """
    c = parse_config(text)
    assert c.ensembles == 10 and c.noise == 0.0 and c.preset == "heat"


def test_seed_override_moves_eval_seed():
    assert parse_config("sim.seed = 7").eval_seed == 8
    assert parse_config("sim.seed = 7\neval.seed = 3").eval_seed == 3


@pytest.mark.parametrize("text, line, key", [
    ("foo.bar = 1", 1, "foo.bar"),
    ("\nmodel.preset = burgers", 2, "model.preset"),
    ("time.dt = -0.1", 1, "time.dt"),
    ("grid.nx = sixty", 1, "grid.nx"),
    ("grid.nx = 2", 1, "grid.nx"),
    ("sim.seed = 1\nsim.seed = 2", 2, "sim.seed"),
    ("hyper.inclusion_prior = 1.5", 1, "hyper.inclusion_prior"),
    ("dictionary.products = maybe", 1, "dictionary.products"),
    ("model.drift_poly = 1-2", 1, "model.drift_poly"),
    ("just words", 1, None),
])
def test_errors_carry_line_and_key(text, line, key):
    with pytest.raises(ConfigError) as info:
        parse_config(text)
    assert info.value.line == line
    assert info.value.key == key


def test_custom_model_has_no_truth():
    c = parse_config("model.drift_poly = 1:2.0")
    with pytest.raises(MissingTruth):
        c.truth_model()


@given(st.sampled_from(PRESETS), st.integers(1, 5000), st.integers(0, 2**32), st.booleans(),
       st.floats(1e-4, 0.1), st.floats(0.01, 0.99))
def test_round_trip(preset, ns, seed, refine, dt, p0):
    c = preset_config(preset, ensembles=ns, seed=seed, refine=refine, dt=dt, horizon=dt * 10,
                      inclusion_prior=p0)
    assert parse_config(serialize_config(c)) == c


def test_load_config(tmp_path):
    (tmp_path / "c.txt").write_text("model.preset = nagumo\n")
    assert load_config(tmp_path / "c.txt") == preset_config("nagumo")
    with pytest.raises(OSError):
        load_config(tmp_path / "missing.txt")


def test_direct_construction_validates():
    with pytest.raises(ConfigError):
        ExperimentConfig(nx=1)
