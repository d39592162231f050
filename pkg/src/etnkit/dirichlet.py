"""Dirichlet distribution primitives.

A Dirichlet over the probability simplex is the building block for the
evidential head: concentrations alpha_i > 0 with total alpha0 = sum alpha_i.
Expected class probabilities are alpha_i / alpha0; the spread around that
mean carries the distributional uncertainty read out by the mutual
information and differential entropy scores.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import kernels as K
from .rng import gamma_rejection

_MI_NEGATIVE_TOL = -1e-12


@dataclass(frozen=True)
class DirichletParams:
    """Concentration vector alpha (all entries > 0) with cached total."""

    alpha: np.ndarray
    alpha0: float = field(init=False)

    def __post_init__(self):
        alpha = np.asarray(self.alpha, dtype=np.float64)
        if alpha.ndim != 1 or alpha.size < 2:
            raise ValueError("alpha must be a vector with at least two entries")
        if not np.all(np.isfinite(alpha)) or not np.all(alpha > 0.0):
            raise ValueError("alpha entries must be finite and strictly positive")
        object.__setattr__(self, "alpha", alpha)
        object.__setattr__(self, "alpha0", float(alpha.sum()))

    @property
    def num_classes(self) -> int:
        return int(self.alpha.size)


def as_simplex(p, dim: int | None = None) -> np.ndarray:
    """Validate a probability vector: entries in [0, 1] summing to one."""
    p = np.asarray(p, dtype=np.float64)
    if p.ndim != 1:
        raise ValueError("simplex point must be a vector")
    if dim is not None and p.size != dim:
        raise ValueError(f"simplex point must have dimension {dim}")
    if np.any(p < 0.0) or np.any(p > 1.0):
        raise ValueError("simplex entries must lie in [0, 1]")
    if abs(float(p.sum()) - 1.0) > 1e-9:
        raise ValueError("simplex entries must sum to one")
    return p


def mean(d: DirichletParams) -> np.ndarray:
    return d.alpha / d.alpha0


def max_probability(d: DirichletParams) -> float:
    """Largest expected class probability (the MP confidence score)."""
    return float((d.alpha / d.alpha0).max())


def log_pdf(d: DirichletParams, p) -> float:
    """Log density at a simplex point.

    Boundary points get the -inf sentinel: a zero coordinate puts the
    density at zero when the matching alpha exceeds one and makes it
    diverge when it is below one.  Only alpha exactly one gives a finite
    boundary limit.
    """
    p = as_simplex(p, d.num_classes)
    alpha = d.alpha
    zero = p == 0.0
    if zero.any():
        if np.any(alpha[zero] != 1.0):
            return float("-inf")
    ln_b = float(K.lgamma_array(alpha).sum() - K.lgamma_array(np.array([d.alpha0]))[0])
    keep = ~zero
    return float(-ln_b + ((alpha[keep] - 1.0) * np.log(p[keep])).sum())


def differential_entropy(d: DirichletParams) -> float:
    """Differential entropy: ln B(alpha) + (a0 - C) psi(a0) - sum (a_i - 1) psi(a_i)."""
    _, _, _, de = K.dirichlet_measures(d.alpha[None, :])
    return float(de[0])


def mutual_information(d: DirichletParams) -> float:
    """Mutual information between the class label and the sampled simplex point.

    Entropy of the mean minus expected entropy; analytically non-negative,
    so anything below -1e-12 signals a kernel bug and raises, while
    smaller negative dust is clamped to zero.
    """
    _, _, mi, _ = K.dirichlet_measures(d.alpha[None, :])
    return _clamp_mi(float(mi[0]))


def _clamp_mi(value: float) -> float:
    if value < _MI_NEGATIVE_TOL:
        raise ArithmeticError(f"mutual information {value} below the negative tolerance")
    return max(value, 0.0)


def clamp_mi_batch(mi: np.ndarray) -> np.ndarray:
    worst = float(mi.min()) if mi.size else 0.0
    if worst < _MI_NEGATIVE_TOL:
        raise ArithmeticError(f"mutual information {worst} below the negative tolerance")
    return np.maximum(mi, 0.0)


def measures_batch(alpha: np.ndarray):
    """Rowwise (alpha0, max prob, mutual information, differential entropy)."""
    alpha = np.asarray(alpha, dtype=np.float64)
    if alpha.ndim != 2:
        raise ValueError("alpha batch must be 2-D")
    a0, mp, mi, de = K.dirichlet_measures(alpha)
    return a0, mp, clamp_mi_batch(mi), de


def sample(d: DirichletParams, rng: np.random.Generator, size: int | None = None) -> np.ndarray:
    """Simplex draws via normalized independent Gamma(alpha_i, 1) variables.

    Returns shape (C,) when size is None, else (size, C).  With a fixed
    seed the draw sequence is identical across runs.
    """
    n = 1 if size is None else int(size)
    if n < 1:
        raise ValueError("size must be at least 1")
    g = gamma_rejection(rng, np.broadcast_to(d.alpha, (n, d.num_classes)))
    out = g / g.sum(axis=1, keepdims=True)
    return out[0] if size is None else out
