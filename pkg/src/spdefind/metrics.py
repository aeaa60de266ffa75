"""Accuracy measures for a discovered model against the generating SPDE."""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .exceptions import NegativeVariance, ZeroTruth
from .library import TermDescriptor
from .simulate import Grid1d, SpdeModel


@dataclass
class GroundTruth:
    """True coefficients on a dictionary: drift in ``f``, diffusion in ``g^2``."""

    drift: np.ndarray
    diffusion: np.ndarray

    @property
    def drift_support(self) -> np.ndarray:
        return self.drift != 0

    @property
    def diffusion_support(self) -> np.ndarray:
        return self.diffusion != 0

    @property
    def stacked(self) -> np.ndarray:
        return np.concatenate([self.drift, self.diffusion])

    @classmethod
    def from_model(cls, model: SpdeModel, terms: Sequence[TermDescriptor],
                   grid: Grid1d | None = None, scale_noise_by_sqrt_dx: bool = False):
        terms = list(terms)
        drift = np.zeros(len(terms))
        diffusion = np.zeros(len(terms))
        index = {t: k for k, t in enumerate(terms)}

        def put(vec, term, value):
            if term not in index:
                raise ValueError(f"true term {term.name} is not in the dictionary")
            vec[index[term]] += value

        if model.diffusivity:
            put(drift, TermDescriptor(0, 2), model.diffusivity)
        for p, c in model.drift_poly:
            if c:
                put(drift, TermDescriptor(p, 0), c)
        g2 = model.noise_amplitude**2
        if scale_noise_by_sqrt_dx:
            g2 /= grid.dx
        if g2:
            put(diffusion, TermDescriptor(0, 0), g2)
        return cls(drift, diffusion)


def relative_l2(beta_true, beta_hat) -> float:
    """``||beta_true - beta_hat|| / ||beta_true||``."""
    beta_true = np.asarray(beta_true, dtype=float)
    beta_hat = np.asarray(beta_hat, dtype=float)
    if beta_true.shape != beta_hat.shape:
        raise ValueError("coefficient vectors differ in length")
    norm = np.linalg.norm(beta_true)
    if norm == 0:
        raise ZeroTruth("true coefficient vector is all zeros")
    return float(np.linalg.norm(beta_true - beta_hat) / norm)


def fpr(selected, true_support) -> float:
    """False positive rate in percent of the dictionary size."""
    selected = np.asarray(selected, dtype=bool)
    true_support = np.asarray(true_support, dtype=bool)
    if selected.shape != true_support.shape:
        raise ValueError("masks differ in length")
    return 100.0 * np.count_nonzero(selected & ~true_support) / selected.size


def diffusion_amplitude(coef_g_squared: float) -> float:
    """Noise amplitude ``sqrt(c)`` from a constant ``g^2`` coefficient."""
    c = float(coef_g_squared)
    if c < -1e-6:
        raise NegativeVariance(f"g^2 coefficient {c:g} is negative; the diffusion fit is unreliable")
    if c < 0:
        warnings.warn(f"clamping slightly negative g^2 coefficient {c:g} to zero", stacklevel=2)
        c = 0.0
    return float(np.sqrt(c))
