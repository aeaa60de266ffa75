import math

import numpy as np
import pytest

from spdefind.exceptions import FileFormatError
from spdefind.fileio import (ModelFile, ModelTerm, format_model, read_dictionary, read_field, read_model,
                             write_dictionary, write_field, write_model, write_prediction_csv)
from spdefind.library import build_dictionary, generate_terms
from spdefind.simulate import Grid1d, TimeSpec, allen_cahn_model, simulate_ensemble


@pytest.fixture
def small_field():
    return simulate_ensemble(allen_cahn_model(), Grid1d(20.0, 16), TimeSpec(0.02, 0.0025), 3, seed=5)


def test_field_round_trip_is_bitwise(tmp_path, small_field):
    write_field(tmp_path / "f.fld", small_field)
    back = read_field(tmp_path / "f.fld")
    assert np.array_equal(back.u, small_field.u)
    assert back.dt == small_field.dt and back.dx == small_field.dx and back.seed == 5
    assert back.grid.length == pytest.approx(20.0)


def test_field_header_and_size(tmp_path, small_field):
    path = tmp_path / "f.fld"
    write_field(path, small_field)
    raw = path.read_bytes()
    header, _, payload = raw.partition(b"end\n")
    assert header.decode().splitlines() == ["SPDEFLD 1", "ns 3", "nt 9", "nx 16", "dt 0.0025",
                                            "dx 1.25", "seed 5"]
    assert len(payload) == 3 * 9 * 16 * 8
    # little-endian, (ensemble, time, space) order
    assert np.frombuffer(payload[:8], "<f8")[0] == small_field.u[0, 0, 0]
    assert np.frombuffer(payload[8:16], "<f8")[0] == small_field.u[0, 0, 1]


def test_single_member_field(tmp_path):
    one = simulate_ensemble(allen_cahn_model(), Grid1d(20.0, 8), TimeSpec(0.01, 0.0025), 1)
    write_field(tmp_path / "one.fld", one)
    assert read_field(tmp_path / "one.fld").u.shape == (1, 5, 8)


@pytest.mark.parametrize("mutate", [
    lambda b: b[:-8],
    lambda b: b.replace(b"SPDEFLD 1", b"SPDEFLD 2"),
    lambda b: b.replace(b"end\n", b"fin\n", 1),
    lambda b: b.replace(b"nx 16", b"nx x"),
])
def test_corrupt_field_is_rejected(tmp_path, small_field, mutate):
    path = tmp_path / "f.fld"
    write_field(path, small_field)
    path.write_bytes(mutate(path.read_bytes()))
    with pytest.raises(FileFormatError):
        read_field(path)


def test_dictionary_round_trip(tmp_path, small_field):
    d = build_dictionary(small_field, generate_terms(2, 2))
    write_dictionary(tmp_path / "d.dic", d)
    back = read_dictionary(tmp_path / "d.dic")
    assert np.array_equal(back.matrix, d.matrix) and back.names == d.names
    raw = (tmp_path / "d.dic").read_bytes()
    header, _, payload = raw.partition(b"end\n")
    assert header.decode().splitlines()[:4] == ["SPDEDIC 1", f"n {d.n_rows}", "k 9", "term 1"]
    # column-major: the first n values are the constant column
    assert np.all(np.frombuffer(payload[: 8 * d.n_rows], "<f8") == 1.0)


def test_model_format_and_round_trip(tmp_path):
    m = ModelFile("drift", [ModelTerm("u_xx", 0.99, 0.95, 0.06), ModelTerm("u^3", 1.0, -1.0, 0.05)],
                  elbo=-123.5, iters=7)
    text = format_model(m)
    assert text.splitlines() == ["SPDEMDL 1", "component drift", "term u_xx 0.99 0.95 0.06",
                                 "term u^3 1.0 -1.0 0.05", "elbo -123.5", "iters 7", "end"]
    write_model(tmp_path / "m.spm", m)
    assert read_model(tmp_path / "m.spm") == m
    base = ModelFile("diffusion", [ModelTerm("1", 1.0, 0.98, 0.0)], math.nan, 3, "stlsq")
    write_model(tmp_path / "b.spm", base)
    back = read_model(tmp_path / "b.spm")
    assert back.method == "stlsq" and math.isnan(back.elbo)
    assert "method stlsq" in (tmp_path / "b.spm").read_text()


def test_model_vectors():
    m = ModelFile("drift", [ModelTerm("u", 1.0, 2.0, 0.1)])
    np.testing.assert_array_equal(m.coef_vector(["1", "u", "u_x"]), [0, 2, 0])
    np.testing.assert_array_equal(m.support(["1", "u"]), [False, True])
    with pytest.raises(KeyError):
        m.coef_vector(["1"])


@pytest.mark.parametrize("text", [
    "SPDEMDL 2\ncomponent drift\nend\n",
    "SPDEMDL 1\ncomponent drift\n",
    "SPDEMDL 1\ncomponent sideways\nend\n",
    "SPDEMDL 1\ncomponent drift\nterm u 1 2\nend\n",
    "SPDEMDL 1\nterm u 1 2 3\nend\n",
])
def test_bad_model_files(tmp_path, text):
    (tmp_path / "m.spm").write_text(text)
    with pytest.raises(FileFormatError):
        read_model(tmp_path / "m.spm")


def test_prediction_csv(tmp_path):
    write_prediction_csv(tmp_path / "p.csv", [0.0, 1.0], [0.0, 0.5, 1.0], np.ones((3, 2)), np.zeros((3, 2)))
    lines = (tmp_path / "p.csv").read_text().splitlines()
    assert lines[0] == "x,t,mean,std"
    assert lines[1:3] == ["0.0,0.0,1.0,0.0", "1.0,0.0,1.0,0.0"]
    assert len(lines) == 7
