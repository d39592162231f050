"""Variational families over logit transformations and their KL terms.

Scalar and per-class transformations are Gamma distributed; the full
matrix family is a Kronecker-factored Gaussian over vec(A) with lower
triangular factors and a softplus applied to the sampled diagonal.

Sampling is reparameterized.  Gamma draws go through the quantile
function evaluated at a uniform (Newton inversion of the regularized
lower incomplete gamma), which makes every draw a smooth function of the
parameters: the rate path is exact (x = g / rate), and the shape path is
the implicit derivative of the CDF identity P(shape, g) = u, with the
shape derivative of P taken by central differences of step
1e-4 * max(1, shape).  Gaussian draws are location-scale.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import kernels as K
from .edl import TransformParam, matrix_transform, scalar_transform, vector_transform

_FLOOR = 1e-4  # applied after softplus to head outputs elsewhere; kept for priors too


@dataclass(frozen=True)
class GammaParams:
    """Gamma(shape, rate), both > 0; density x^(shape-1) e^(-rate x)."""

    shape: float
    rate: float

    def __post_init__(self):
        if not (self.shape > 0.0 and self.rate > 0.0):
            raise ValueError("gamma shape and rate must be positive")

    @property
    def mean(self) -> float:
        return self.shape / self.rate

    @property
    def mode(self) -> float:
        return max(self.shape - 1.0, 0.0) / self.rate

    @property
    def variance(self) -> float:
        return self.shape / (self.rate * self.rate)


@dataclass(frozen=True)
class GammaVectorParams:
    """Independent Gamma per class: product distribution over a positive vector."""

    shapes: np.ndarray
    rates: np.ndarray

    def __post_init__(self):
        shapes = np.asarray(self.shapes, dtype=np.float64)
        rates = np.asarray(self.rates, dtype=np.float64)
        if shapes.shape != rates.shape or shapes.ndim != 1:
            raise ValueError("shapes and rates must be matching vectors")
        if not (np.all(shapes > 0.0) and np.all(rates > 0.0)):
            raise ValueError("gamma shapes and rates must be positive")
        object.__setattr__(self, "shapes", shapes)
        object.__setattr__(self, "rates", rates)


@dataclass(frozen=True)
class KronGaussianParams:
    """Gaussian over vec(A): mean mu (C x C), covariance (Lb Lb^T) kron (Ld Ld^T).

    A draw is A = mu + Ld E Lb^T with E standard normal, which realizes
    the Kronecker covariance under column stacking.
    """

    mu: np.ndarray
    l_b: np.ndarray
    l_d: np.ndarray

    def __post_init__(self):
        mu = np.asarray(self.mu, dtype=np.float64)
        l_b = np.asarray(self.l_b, dtype=np.float64)
        l_d = np.asarray(self.l_d, dtype=np.float64)
        c = mu.shape[0]
        for name, m in (("mu", mu), ("l_b", l_b), ("l_d", l_d)):
            if m.shape != (c, c):
                raise ValueError(f"{name} must be square of matching size")
        for name, m in (("l_b", l_b), ("l_d", l_d)):
            if np.any(np.triu(m, 1) != 0.0):
                raise ValueError(f"{name} must be lower triangular")
            if not np.all(np.diag(m) > 0.0):
                raise ValueError(f"{name} needs a positive diagonal")
        object.__setattr__(self, "mu", mu)
        object.__setattr__(self, "l_b", l_b)
        object.__setattr__(self, "l_d", l_d)

    @property
    def num_classes(self) -> int:
        return int(self.mu.shape[0])


@dataclass(frozen=True)
class PriorSpec:
    """Transformation prior stated as (mode, variance) of the scale factor."""

    mode: float
    variance: float = 5.0

    def __post_init__(self):
        if not (self.mode > 0.0 and self.variance > 0.0):
            raise ValueError("prior mode and variance must be positive")


def gamma_from_mode_variance(mode: float, variance: float) -> GammaParams:
    """Unique Gamma with the given mode and variance; shape always > 1.

    rate = (mode + sqrt(mode^2 + 4 var)) / (2 var), shape = 1 + mode * rate.
    """
    if not (mode > 0.0 and variance > 0.0):
        raise ValueError("mode and variance must be positive")
    rate = (mode + np.sqrt(mode * mode + 4.0 * variance)) / (2.0 * variance)
    return GammaParams(shape=1.0 + mode * rate, rate=float(rate))


def gamma_prior(spec: PriorSpec) -> GammaParams:
    return gamma_from_mode_variance(spec.mode, spec.variance)


def kron_prior(spec: PriorSpec, num_classes: int) -> KronGaussianParams:
    """Matrix-family prior: diagonal mean softplus_inv(mode), variance on all entries.

    The factor pair (s I, s I) with s = sqrt(variance) gives the scaled
    identity covariance variance * I over vec(A).
    """
    c = num_classes
    mu = np.eye(c) * K.softplus_inv_scalar(spec.mode)
    s = spec.variance ** 0.25
    return KronGaussianParams(mu=mu, l_b=np.eye(c) * s, l_d=np.eye(c) * s)


def kl_gamma(q: GammaParams, p: GammaParams) -> float:
    """KL(q || p) for Gammas in closed form."""
    a1, b1 = q.shape, q.rate
    a2, b2 = p.shape, p.rate
    val = (a1 - a2) * K.digamma_scalar(a1) - K.lgamma_scalar(a1) + K.lgamma_scalar(a2)
    val += a2 * (np.log(b1) - np.log(b2)) + a1 * (b2 - b1) / b1
    return float(val)


def kl_gamma_batch(shapes: np.ndarray, rates: np.ndarray, prior: GammaParams):
    """Elementwise KL(Gamma(k, r) || prior) with gradients in (k, r).

    Returns (kl, dk, dr), each shaped like the inputs.
    """
    a2, b2 = prior.shape, prior.rate
    dig = K.digamma_array(shapes)
    kl = (shapes - a2) * dig - K.lgamma_array(shapes) + K.lgamma_scalar(a2)
    kl += a2 * (np.log(rates) - np.log(b2)) + shapes * (b2 - rates) / rates
    dk = (shapes - a2) * K.trigamma_array(shapes) + (b2 - rates) / rates
    dr = a2 / rates - shapes * b2 / (rates * rates)
    return kl, dk, dr


def kl_gauss_kron(q: KronGaussianParams, p: KronGaussianParams) -> float:
    """KL between Kronecker-factored Gaussians without forming C^2 x C^2 matrices.

    Uses tr((B2 kron D2)^{-1} (B1 kron D1)) = tr(B2^{-1} B1) tr(D2^{-1} D1),
    factor solves for the quadratic term, and triangular log determinants.
    """
    if q.num_classes != p.num_classes:
        raise ValueError("dimension mismatch")
    c = q.num_classes
    xb = np.linalg.solve(p.l_b, q.l_b)
    xd = np.linalg.solve(p.l_d, q.l_d)
    tr_b = float((xb * xb).sum())
    tr_d = float((xd * xd).sum())
    delta = q.mu - p.mu
    # (B2 kron D2)^{-1} vec(delta) = vec(D2^{-1} delta B2^{-1})
    y = np.linalg.solve(p.l_d, delta)
    y = np.linalg.solve(p.l_d.T, y)
    y = np.linalg.solve(p.l_b, y.T)
    y = np.linalg.solve(p.l_b.T, y).T
    quad = float((delta * y).sum())
    logdet = lambda m: 2.0 * float(np.log(np.diag(m)).sum())
    val = tr_b * tr_d + quad - c * c
    val += c * (logdet(p.l_b) - logdet(q.l_b)) + c * (logdet(p.l_d) - logdet(q.l_d))
    return 0.5 * val


def kl_kron_identity_batch(mu: np.ndarray, l_b: np.ndarray, l_d: np.ndarray,
                           prior: KronGaussianParams):
    """Batched KL against a scaled-identity-factor prior, with gradients.

    mu, l_b, l_d have shape (B, C, C); the prior must have factors s*I (as
    built by kron_prior).  Returns (kl, dmu, dl_b, dl_d).
    """
    c = mu.shape[-1]
    s = float(prior.l_b[0, 0] * prior.l_d[0, 0])  # sqrt(variance)
    var = s * s
    delta = mu - prior.mu
    tr_b = (l_b * l_b).sum(axis=(-2, -1))
    tr_d = (l_d * l_d).sum(axis=(-2, -1))
    quad = (delta * delta).sum(axis=(-2, -1)) / var
    diag_b = np.diagonal(l_b, axis1=-2, axis2=-1)
    diag_d = np.diagonal(l_d, axis1=-2, axis2=-1)
    logdet_b = 2.0 * np.log(diag_b).sum(axis=-1)
    logdet_d = 2.0 * np.log(diag_d).sum(axis=-1)
    logdet_prior = c * np.log(s)  # ln det of one var^(1/4) I factor squared
    kl = 0.5 * (tr_b * tr_d / var + quad - c * c
                + c * (logdet_prior - logdet_b) + c * (logdet_prior - logdet_d))
    dmu = delta / var
    dl_b = (tr_d / var)[:, None, None] * l_b
    dl_d = (tr_b / var)[:, None, None] * l_d
    eye = np.eye(c, dtype=bool)
    dl_b[:, eye] -= c / diag_b
    dl_d[:, eye] -= c / diag_d
    tril = np.tril(np.ones((c, c), dtype=bool))
    dl_b *= tril
    dl_d *= tril
    return kl, dmu, dl_b, dl_d


@dataclass(frozen=True)
class PathTape:
    """Recorded quantities for pushing loss gradients back through a draw."""

    kind: str
    a: np.ndarray            # the sampled transformation value
    da_dshape: np.ndarray | None = None
    da_drate: np.ndarray | None = None
    eps: np.ndarray | None = None      # matrix family: the standard normal draw
    diag_pre: np.ndarray | None = None  # matrix family: diagonal before softplus


def sample_transform(q, rng: np.random.Generator, ):
    """One draw from a variational family, with its gradient tape."""
    if isinstance(q, GammaParams):
        a, dadk, dadr = sample_gamma_batch(
            np.array([q.shape]), np.array([q.rate]), 1, rng)
        tape = PathTape(kind="scalar", a=a[0, 0],
                        da_dshape=dadk[0, 0], da_drate=dadr[0, 0])
        return scalar_transform(float(a[0, 0])), tape
    if isinstance(q, GammaVectorParams):
        a, dadk, dadr = sample_gamma_batch(
            q.shapes[None, :], q.rates[None, :], 1, rng)
        tape = PathTape(kind="vector", a=a[0, 0],
                        da_dshape=dadk[0, 0], da_drate=dadr[0, 0])
        return vector_transform(a[0, 0]), tape
    if isinstance(q, KronGaussianParams):
        a, eps, diag_pre = sample_kron_batch(
            q.mu[None], q.l_b[None], q.l_d[None], 1, rng)
        tape = PathTape(kind="matrix", a=a[0, 0], eps=eps[0, 0], diag_pre=diag_pre[0, 0])
        return matrix_transform(a[0, 0]), tape
    raise TypeError(f"unsupported variational family {type(q).__name__}")


def sample_gamma_batch(shapes: np.ndarray, rates: np.ndarray, draws: int,
                       rng: np.random.Generator):
    """Reparameterized Gamma draws with pathwise derivatives.

    shapes/rates broadcast over a leading batch axis; output gains a draw
    axis of length ``draws`` right after the batch axis.  Returns
    (a, da/dshape, da/drate).
    """
    shapes = np.asarray(shapes, dtype=np.float64)
    rates = np.asarray(rates, dtype=np.float64)
    if shapes.ndim == 1:
        kb = shapes[:, None]
        rb = rates[:, None]
        u = rng.random((shapes.shape[0], draws))
    else:
        kb = shapes[:, None, :]
        rb = rates[:, None, :]
        u = rng.random((shapes.shape[0], draws, shapes.shape[1]))
    g = K.gamma_icdf_array(kb, u)
    a = g / rb
    dadk = K.gamma_shape_grad_array(kb, g) / rb
    dadr = -a / rb
    return a, dadk, dadr


def sample_kron_batch(mu: np.ndarray, l_b: np.ndarray, l_d: np.ndarray, draws: int,
                      rng: np.random.Generator):
    """Reparameterized matrix draws A = mu + Ld E Lb^T, softplus on the diagonal.

    Returns (a, eps, diag_pre) with a of shape (B, draws, C, C).
    """
    b, c, _ = mu.shape
    eps = rng.standard_normal((b, draws, c, c))
    pre = mu[:, None] + np.einsum("bij,bmjk,blk->bmil", l_d, eps, l_b)
    diag_pre = np.diagonal(pre, axis1=-2, axis2=-1).copy()
    a = pre.copy()
    idx = np.arange(c)
    a[..., idx, idx] = K.softplus_array(diag_pre)
    return a, eps, diag_pre
