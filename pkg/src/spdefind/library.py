"""Candidate-term library: finite-difference derivatives and the ensemble-averaged dictionary."""

from __future__ import annotations

import re
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from ._validation import check_field_array
from .exceptions import NonFinite, UnsupportedOrder
from .simulate import Boundary, EnsembleField, Grid1d

MAX_DERIV_ORDER = 5
_CHUNK_ELEMS = 4_000_000


@dataclass(frozen=True, order=True)
class TermDescriptor:
    """Candidate term ``u**poly_power * d^deriv_order u / dx^deriv_order``."""

    poly_power: int
    deriv_order: int

    @property
    def is_product(self) -> bool:
        return self.poly_power > 0 and self.deriv_order > 0

    @property
    def name(self) -> str:
        return term_name(self)


@dataclass
class Dictionary:
    matrix: np.ndarray
    terms: list[TermDescriptor]

    def __post_init__(self):
        if self.matrix.shape[1] != len(self.terms):
            raise ValueError("column count does not match the number of terms")

    @property
    def names(self) -> list[str]:
        return [term_name(t) for t in self.terms]

    @property
    def n_rows(self) -> int:
        return self.matrix.shape[0]

    def index(self, name: str) -> int:
        return self.names.index(name)


def term_name(term: TermDescriptor) -> str:
    p, d = term.poly_power, term.deriv_order
    if p == 0 and d == 0:
        return "1"
    poly = "" if p == 0 else ("u" if p == 1 else f"u^{p}")
    deriv = "" if d == 0 else "u_" + "x" * d
    return "*".join(s for s in (poly, deriv) if s)


def parse_term_name(name: str) -> TermDescriptor:
    """Inverse of :func:`term_name`."""
    if name == "1":
        return TermDescriptor(0, 0)
    if name.startswith("u_"):
        m = re.fullmatch(r"u_(x+)", name)
        if m:
            return TermDescriptor(0, len(m.group(1)))
    m = re.fullmatch(r"u(?:\^(\d+))?(?:\*u_(x+))?", name)
    if not m:
        raise ValueError(f"unrecognized term name {name!r}")
    p = int(m.group(1)) if m.group(1) else 1
    d = len(m.group(2)) if m.group(2) else 0
    return TermDescriptor(p, d)


def generate_terms(poly_max: int, deriv_max: int, include_products: bool = True) -> list[TermDescriptor]:
    """Constant, ``u^p`` (p=1..P), ``d^d u`` (d=1..Dm), then products ``u^p * d^d u``."""
    if poly_max < 1 or deriv_max < 1:
        raise ValueError("poly_max and deriv_max must both be >= 1")
    if deriv_max > MAX_DERIV_ORDER:
        raise UnsupportedOrder(f"derivative order {deriv_max} > {MAX_DERIV_ORDER}")
    terms = [TermDescriptor(0, 0)]
    terms += [TermDescriptor(p, 0) for p in range(1, poly_max + 1)]
    terms += [TermDescriptor(0, d) for d in range(1, deriv_max + 1)]
    if include_products:
        terms += [TermDescriptor(p, d) for p in range(1, poly_max + 1) for d in range(1, deriv_max + 1)]
    return terms


def _shift(u, k, boundary):
    # value at node j + k along the last axis
    if boundary is Boundary.PERIODIC:
        return np.roll(u, -k, axis=-1)
    out = np.zeros_like(u)
    if k > 0:
        out[..., :-k] = u[..., k:]
    else:
        out[..., -k:] = u[..., :k]
    return out


def _d1(u, dx, boundary):
    return (_shift(u, 1, boundary) - _shift(u, -1, boundary)) / (2.0 * dx)


def _d2(u, dx, boundary):
    return (_shift(u, 1, boundary) - 2.0 * u + _shift(u, -1, boundary)) / dx**2


def spatial_derivative(field, grid: Grid1d, order: int) -> np.ndarray:
    """Central-difference derivative of ``order`` 1..5 along the last axis.

    Orders 1 and 2 use the 3-point stencils; higher orders compose them
    (3 = d1 d2, 4 = d2 d2, 5 = d1 d2 d2).
    """
    if not 1 <= order <= MAX_DERIV_ORDER:
        raise UnsupportedOrder(f"derivative order must be in 1..{MAX_DERIV_ORDER}, got {order}")
    u = np.asarray(field, dtype=float)
    dx, bc = grid.dx, grid.boundary
    for _ in range(order // 2):
        u = _d2(u, dx, bc)
    if order % 2:
        u = _d1(u, dx, bc)
    return u


def _derivatives(u, grid, deriv_max):
    """All derivatives 1..deriv_max, reusing the repeated-stencil chain."""
    dx, bc = grid.dx, grid.boundary
    out = {}
    even = u
    for k in range(1, deriv_max // 2 + 1):
        even = _d2(even, dx, bc)
        out[2 * k] = even
    out[1] = _d1(u, dx, bc)
    for d in range(3, deriv_max + 1, 2):
        out[d] = _d1(out[d - 1], dx, bc)
    return {d: out[d] for d in range(1, deriv_max + 1)}


def evaluate_terms(u: np.ndarray, grid: Grid1d, terms: Sequence[TermDescriptor]) -> np.ndarray:
    """Evaluate each term pointwise on ``u`` (..., N_x); result has a trailing term axis."""
    u = np.asarray(u, dtype=float)
    pmax = max((t.poly_power for t in terms), default=0)
    dmax = max((t.deriv_order for t in terms), default=0)
    powers = {0: None, 1: u}
    for p in range(2, pmax + 1):
        powers[p] = powers[p - 1] * u
    derivs = _derivatives(u, grid, dmax) if dmax else {}
    cols = []
    for t in terms:
        if t.poly_power == 0 and t.deriv_order == 0:
            cols.append(np.ones_like(u))
        elif t.deriv_order == 0:
            cols.append(powers[t.poly_power])
        elif t.poly_power == 0:
            cols.append(derivs[t.deriv_order])
        else:
            cols.append(powers[t.poly_power] * derivs[t.deriv_order])
    return np.stack(cols, axis=-1)


def vectorize_rows(a: np.ndarray) -> np.ndarray:
    """Flatten a ``(N_t - 1, N_x, ...)`` array to rows, time-major then space.

    Row ``i`` corresponds to ``(n, j) = divmod(i, N_x)``.  Shared by the
    dictionary and the Kramers-Moyal targets so rows line up.
    """
    return a.reshape((a.shape[0] * a.shape[1],) + a.shape[2:])


def row_to_point(i: int, n_nodes: int) -> tuple[int, int]:
    return divmod(int(i), n_nodes)


def _ensemble_chunks(ns, per_member):
    step = max(1, _CHUNK_ELEMS // max(per_member, 1))
    return [(s, min(s + step, ns)) for s in range(0, ns, step)]


def _average_terms(u, grid, terms):
    ns, nt, nx = u.shape
    if nt < 2:
        raise ValueError("need at least two time points")
    acc = np.zeros((nt - 1, nx, len(terms)))
    for start, stop in _ensemble_chunks(ns, (nt - 1) * nx * len(terms)):
        acc += evaluate_terms(u[start:stop, :-1, :], grid, terms).sum(axis=0)
    acc /= ns
    # constant column is exactly one by definition
    for k, t in enumerate(terms):
        if t.poly_power == 0 and t.deriv_order == 0:
            acc[..., k] = 1.0
    D = vectorize_rows(acc)
    if not np.all(np.isfinite(D)):
        bad = [term_name(t) for k, t in enumerate(terms) if not np.all(np.isfinite(D[:, k]))]
        raise NonFinite(f"non-finite dictionary columns: {bad}")
    return D


def build_dictionary(data: EnsembleField, terms: Sequence[TermDescriptor]) -> Dictionary:
    """Ensemble-averaged dictionary ``E_s[l_k(u_s(t_n, x_j))]`` for ``n = 0..N_t-2``.

    Each term is evaluated on every member before averaging (the mean of
    the evaluated dictionaries, not the dictionary of the mean field).
    Ensemble chunks are summed sequentially so the result is reproducible.
    """
    terms = list(terms)
    return Dictionary(_average_terms(data.u, data.grid, terms), terms)


class LibraryTransformer(TransformerMixin, BaseEstimator):
    """Map an ensemble tensor ``(N_s, N_t, N_x)`` to its averaged dictionary.

    Parameters
    ----------
    poly_max, deriv_max : int
        Highest polynomial power and spatial derivative order.
    include_products : bool
        Add the ``u^p * d^d u`` product terms.
    length : float
        Domain length; ``dx`` is derived from it and the boundary type.
    boundary : {"periodic", "dirichlet"}
    standardize : bool
        Scale every non-constant column to unit standard deviation.  Off by
        default so coefficients stay in physical units.
    """

    def __init__(self, poly_max=6, deriv_max=5, include_products=True, length=20.0,
                 boundary="periodic", standardize=False):
        self.poly_max = poly_max
        self.deriv_max = deriv_max
        self.include_products = include_products
        self.length = length
        self.boundary = boundary
        self.standardize = standardize

    def _grid(self, nx):
        return Grid1d(self.length, nx, Boundary(self.boundary))

    def fit(self, X, y=None):
        X = check_field_array(X)
        self.terms_ = generate_terms(self.poly_max, self.deriv_max, self.include_products)
        self.n_nodes_ = X.shape[2]
        self.n_features_out_ = len(self.terms_)
        if self.standardize:
            D = self._raw(X)
            scale = D.std(axis=0)
            scale[~np.isfinite(scale) | (scale == 0)] = 1.0
            scale[[k for k, t in enumerate(self.terms_) if t == TermDescriptor(0, 0)]] = 1.0
            self.scale_ = scale
        else:
            self.scale_ = np.ones(len(self.terms_))
        return self

    def _raw(self, X):
        return _average_terms(X, self._grid(X.shape[2]), self.terms_)

    def transform(self, X):
        check_is_fitted(self, "terms_")
        X = check_field_array(X)
        if X.shape[2] != self.n_nodes_:
            raise ValueError(f"X has {X.shape[2]} nodes, transformer was fitted on {self.n_nodes_}")
        return self._raw(X) / self.scale_

    def get_feature_names_out(self, input_features=None):
        check_is_fitted(self, "terms_")
        return np.array([term_name(t) for t in self.terms_], dtype=object)
