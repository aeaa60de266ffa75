"""Readers and writers for field (.fld), dictionary (.dic) and model (.spm) files.

All three share one layout: ASCII header lines, an ``end`` line, then (for
.fld and .dic) raw little-endian float64 data.  Floats in headers are written
with ``repr`` so they read back exactly.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .exceptions import FileFormatError
from .library import Dictionary, parse_term_name
from .simulate import Boundary, EnsembleField, Grid1d, TimeSpec

_F64 = np.dtype("<f8")
_MAX_HEADER_LINES = 1_000_000


def _read_header(fh, magic: str, path) -> list[tuple[str, str]]:
    first = fh.readline().decode("ascii", "replace").strip()
    if first != magic:
        raise FileFormatError(f"{path}: expected header {magic!r}, got {first!r}")
    entries = []
    for _ in range(_MAX_HEADER_LINES):
        raw = fh.readline()
        if not raw:
            raise FileFormatError(f"{path}: header ended without an 'end' line")
        line = raw.decode("ascii", "replace").strip()
        if line == "end":
            return entries
        key, _, value = line.partition(" ")
        entries.append((key, value.strip()))
    raise FileFormatError(f"{path}: header too long")


def _header_dict(entries, required, path):
    out = dict(entries)
    missing = [k for k in required if k not in out]
    if missing:
        raise FileFormatError(f"{path}: header lacks {', '.join(missing)}")
    return out


def _number(conv, value, key, path):
    try:
        return conv(value)
    except ValueError as exc:
        raise FileFormatError(f"{path}: bad value for {key!r}: {value!r}") from exc


# ---------------------------------------------------------------- fields

def write_field(path, data: EnsembleField) -> None:
    ns, nt, nx = data.u.shape
    header = (f"SPDEFLD 1\nns {ns}\nnt {nt}\nnx {nx}\ndt {data.dt!r}\ndx {data.dx!r}\n"
              f"seed {int(data.seed)}\nend\n")
    with open(Path(path), "wb") as fh:
        fh.write(header.encode("ascii"))
        fh.write(np.ascontiguousarray(data.u, dtype=_F64).tobytes())


def read_field(path, boundary: Boundary | str = Boundary.PERIODIC) -> EnsembleField:
    """Load a field file.  The grid length is rebuilt from ``nx`` and ``dx``."""
    path = Path(path)
    with open(path, "rb") as fh:
        h = _header_dict(_read_header(fh, "SPDEFLD 1", path),
                         ("ns", "nt", "nx", "dt", "dx", "seed"), path)
        ns, nt, nx = (_number(int, h[k], k, path) for k in ("ns", "nt", "nx"))
        dt, dx = (_number(float, h[k], k, path) for k in ("dt", "dx"))
        seed = _number(int, h["seed"], "seed", path)
        payload = fh.read()
    expected = ns * nt * nx * _F64.itemsize
    if len(payload) != expected:
        raise FileFormatError(f"{path}: payload has {len(payload)} bytes, expected {expected} "
                              f"(= {ns}*{nt}*{nx}*8)")
    u = np.frombuffer(payload, dtype=_F64).reshape(ns, nt, nx).astype(float)
    boundary = Boundary(boundary)
    length = dx * (nx if boundary is Boundary.PERIODIC else nx + 1)
    try:
        grid = Grid1d(length, nx, boundary)
        time = TimeSpec((nt - 1) * dt, dt)
        return EnsembleField(u, grid, time, seed)
    except ValueError as exc:
        raise FileFormatError(f"{path}: inconsistent header: {exc}") from exc


# ---------------------------------------------------------------- dictionaries

def write_dictionary(path, dictionary: Dictionary) -> None:
    n, k = dictionary.matrix.shape
    lines = ["SPDEDIC 1", f"n {n}", f"k {k}"] + [f"term {name}" for name in dictionary.names]
    with open(Path(path), "wb") as fh:
        fh.write(("\n".join(lines + ["end"]) + "\n").encode("ascii"))
        fh.write(np.asarray(dictionary.matrix, dtype=_F64).tobytes(order="F"))


def read_dictionary(path) -> Dictionary:
    path = Path(path)
    with open(path, "rb") as fh:
        entries = _read_header(fh, "SPDEDIC 1", path)
        payload = fh.read()
    h = _header_dict(entries, ("n", "k"), path)
    n, k = _number(int, h["n"], "n", path), _number(int, h["k"], "k", path)
    names = [v for key, v in entries if key == "term"]
    if len(names) != k:
        raise FileFormatError(f"{path}: {len(names)} term lines for k={k}")
    if len(payload) != n * k * _F64.itemsize:
        raise FileFormatError(f"{path}: payload size does not match n*k*8")
    try:
        terms = [parse_term_name(name) for name in names]
    except ValueError as exc:
        raise FileFormatError(f"{path}: {exc}") from exc
    matrix = np.frombuffer(payload, dtype=_F64).reshape((n, k), order="F").astype(float)
    return Dictionary(matrix, terms)


# ---------------------------------------------------------------- models

@dataclass
class ModelTerm:
    name: str
    pip: float
    mean: float
    std: float


@dataclass
class ModelFile:
    """Contents of a .spm file: one component of a discovered SPDE."""

    component: str
    terms: list[ModelTerm] = field(default_factory=list)
    elbo: float = math.nan
    iters: int = 0
    method: str | None = None

    def __post_init__(self):
        if self.component not in ("drift", "diffusion"):
            raise ValueError(f"component must be drift or diffusion, got {self.component!r}")

    @property
    def names(self) -> list[str]:
        return [t.name for t in self.terms]

    def coef_vector(self, names: Sequence[str]) -> np.ndarray:
        """Means placed on a dictionary's term order; terms not in ``names`` raise."""
        index = {n: i for i, n in enumerate(names)}
        out = np.zeros(len(index))
        for t in self.terms:
            if t.name not in index:
                raise KeyError(f"model term {t.name!r} is not in the dictionary")
            out[index[t.name]] = t.mean
        return out

    def support(self, names: Sequence[str]) -> np.ndarray:
        chosen = set(self.names)
        return np.array([n in chosen for n in names], dtype=bool)

    @classmethod
    def from_posterior(cls, component, posterior) -> "ModelFile":
        std = posterior.coef_std
        terms = [ModelTerm(name, float(posterior.pip[k]), float(posterior.coef_mean[k]), float(std[k]))
                 for name, k in zip(posterior.selected_names, posterior.selected)]
        return cls(component, terms, float(posterior.elbo_final), int(posterior.n_iter))

    @classmethod
    def from_stlsq(cls, component, names, coef, active, n_iter) -> "ModelFile":
        terms = [ModelTerm(names[k], 1.0, float(coef[k]), 0.0) for k in np.flatnonzero(active)]
        return cls(component, terms, math.nan, int(n_iter), method="stlsq")


def format_model(model: ModelFile) -> str:
    lines = ["SPDEMDL 1", f"component {model.component}"]
    if model.method:
        lines.append(f"method {model.method}")
    lines += [f"term {t.name} {t.pip!r} {t.mean!r} {t.std!r}" for t in model.terms]
    lines += [f"elbo {float(model.elbo)!r}", f"iters {int(model.iters)}", "end"]
    return "\n".join(lines) + "\n"


def write_model(path, model: ModelFile) -> None:
    Path(path).write_text(format_model(model))


def read_model(path) -> ModelFile:
    path = Path(path)
    text = Path(path).read_text()
    lines = [ln.strip() for ln in text.splitlines() if ln.strip()]
    if not lines or lines[0] != "SPDEMDL 1":
        raise FileFormatError(f"{path}: not an SPDEMDL 1 file")
    if lines[-1] != "end":
        raise FileFormatError(f"{path}: missing 'end' line")
    component, method, elbo, iters, terms = None, None, math.nan, 0, []
    for line in lines[1:-1]:
        key, _, rest = line.partition(" ")
        parts = rest.split()
        if key == "component":
            component = rest.strip()
        elif key == "method":
            method = rest.strip()
        elif key == "term":
            if len(parts) != 4:
                raise FileFormatError(f"{path}: term line needs name pip mean std: {line!r}")
            name = parts[0]
            pip, mean, std = (_number(float, v, "term", path) for v in parts[1:])
            terms.append(ModelTerm(name, pip, mean, std))
        elif key == "elbo":
            elbo = _number(float, rest, "elbo", path)
        elif key == "iters":
            iters = _number(int, rest, "iters", path)
        else:
            raise FileFormatError(f"{path}: unknown line {line!r}")
    if component is None:
        raise FileFormatError(f"{path}: missing component line")
    try:
        return ModelFile(component, terms, elbo, iters, method)
    except ValueError as exc:
        raise FileFormatError(f"{path}: {exc}") from exc


# ---------------------------------------------------------------- CSV exports

def write_prediction_csv(path, x, t, mean, std) -> None:
    """Rows ``x, t, mean, std`` for every grid point, time-major."""
    mean = np.asarray(mean, dtype=float)
    std = np.asarray(std, dtype=float)
    with open(Path(path), "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["x", "t", "mean", "std"])
        for n, tn in enumerate(t):
            for j, xj in enumerate(x):
                writer.writerow([repr(float(xj)), repr(float(tn)), repr(float(mean[n, j])),
                                 repr(float(std[n, j]))])
