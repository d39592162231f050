"""Evidential head: logits as Dirichlet evidence.

Class logits z are mapped to concentrations alpha_i = f(z_i) + b_i with
f = softplus and a non-negative prior belief b.  Training pulls the
predicted Dirichlet toward a one-hot target concentration
alpha^y = 1 + (nu - 1) e_y, either directly (reverse KL, used for the
static baselines) or through the per-draw reconstruction term of the
variational objective (forward direction, used by the transformation
network).

Logit transformations come in three shapes: one scalar for all classes,
one factor per class, or a full matrix acting on the logit vector.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import kernels as K
from .dirichlet import DirichletParams


@dataclass(frozen=True)
class EvidenceConfig:
    """Head configuration: class count, prior belief, target height, KL weight."""

    num_classes: int
    b: np.ndarray
    nu: float = 1e4
    lam: float = 1.0
    f: str = "softplus"

    def __post_init__(self):
        if self.num_classes < 2:
            raise ValueError("need at least two classes")
        b = np.asarray(self.b, dtype=np.float64)
        if b.shape != (self.num_classes,):
            raise ValueError("prior belief b must have one entry per class")
        if not np.all(np.isfinite(b)) or np.any(b < 0.0):
            raise ValueError("prior belief entries must be finite and >= 0")
        object.__setattr__(self, "b", b)
        if not self.nu >= 1.0:
            raise ValueError("target concentration nu must be >= 1")
        if self.lam < 0.0:
            raise ValueError("KL weight must be >= 0")
        if self.f != "softplus":
            raise ValueError("only the softplus evidence map is supported")

    def validate_strict(self) -> None:
        """Training-time check: the target must dominate the prior belief."""
        if not self.nu > float(self.b.max()) + 1.0:
            raise ValueError("nu must exceed max(b) + 1 for a valid target")


@dataclass(frozen=True)
class TransformParam:
    """A sampled logit transformation; kind is scalar, vector, or matrix."""

    kind: str
    value: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.value, dtype=np.float64)
        if self.kind == "scalar":
            v = v.reshape(())
            if not v > 0.0:
                raise ValueError("scalar transform must be positive")
        elif self.kind == "vector":
            if v.ndim != 1 or not np.all(v > 0.0):
                raise ValueError("vector transform must be a positive vector")
        elif self.kind == "matrix":
            if v.ndim != 2 or v.shape[0] != v.shape[1]:
                raise ValueError("matrix transform must be square")
            if not np.all(np.diag(v) > 0.0):
                raise ValueError("matrix transform needs a positive diagonal")
        else:
            raise ValueError(f"unknown transform kind {self.kind!r}")
        object.__setattr__(self, "value", v)


def scalar_transform(a: float) -> TransformParam:
    return TransformParam("scalar", np.float64(a))


def vector_transform(a) -> TransformParam:
    return TransformParam("vector", np.asarray(a, dtype=np.float64))


def matrix_transform(a) -> TransformParam:
    return TransformParam("matrix", np.asarray(a, dtype=np.float64))


def apply_transform(z, t: TransformParam) -> np.ndarray:
    """Transformed logits z' for a single logit vector."""
    z = np.asarray(z, dtype=np.float64)
    if t.kind == "scalar":
        return float(t.value) * z
    if t.kind == "vector":
        if t.value.shape != z.shape:
            raise ValueError("vector transform dimension mismatch")
        return t.value * z
    if t.value.shape[1] != z.shape[0]:
        raise ValueError("matrix transform dimension mismatch")
    return t.value @ z


def logits_to_alpha(z, cfg: EvidenceConfig) -> DirichletParams:
    """alpha_i = softplus(z_i) + b_i."""
    z = np.asarray(z, dtype=np.float64)
    if z.shape != (cfg.num_classes,):
        raise ValueError("logit vector dimension mismatch")
    return DirichletParams(K.softplus_array(z) + cfg.b)


def logits_to_alpha_batch(z: np.ndarray, b: np.ndarray) -> np.ndarray:
    return K.softplus_array(np.asarray(z, dtype=np.float64)) + b


def target_alpha(y: int, cfg: EvidenceConfig) -> DirichletParams:
    """One-hot target concentration 1 + (nu - 1) e_y."""
    if not 0 <= y < cfg.num_classes:
        raise ValueError("label out of range")
    alpha = np.ones(cfg.num_classes)
    alpha[y] = cfg.nu
    return DirichletParams(alpha)


def target_alpha_batch(labels: np.ndarray, cfg: EvidenceConfig) -> np.ndarray:
    labels = np.asarray(labels)
    if labels.size and (labels.min() < 0 or labels.max() >= cfg.num_classes):
        raise ValueError("label out of range")
    alpha = np.ones((labels.shape[0], cfg.num_classes))
    alpha[np.arange(labels.shape[0]), labels] = cfg.nu
    return alpha


def target_digamma_pair(cfg: EvidenceConfig) -> tuple[float, float]:
    """(psi(nu) - psi(nu + C - 1), psi(1) - psi(nu + C - 1)).

    These are the only two values taken by psi(alpha^y_i) - psi(alpha^y_0),
    for the label coordinate and every other coordinate respectively.
    """
    c = cfg.num_classes
    tot = K.digamma_scalar(cfg.nu + c - 1.0)
    return K.digamma_scalar(cfg.nu) - tot, K.digamma_scalar(1.0) - tot


def target_digdiff_batch(labels: np.ndarray, cfg: EvidenceConfig) -> np.ndarray:
    """Rowwise psi(alpha^y_i) - psi(alpha^y_0) for a label vector."""
    d_label, d_other = target_digamma_pair(cfg)
    n = labels.shape[0]
    out = np.full((n, cfg.num_classes), d_other)
    out[np.arange(n), labels] = d_label
    return out


def cross_entropy(z, y: int) -> float:
    """Softmax cross entropy ln(1 + sum_{j != y} e^(z_j - z_y)), overflow safe.

    The label coordinate of d = z - z_y is zero and contributes the one
    inside the log, so this is a plain log-sum-exp over d.
    """
    z = np.asarray(z, dtype=np.float64)
    if not 0 <= y < z.size:
        raise ValueError("label out of range")
    d = z - z[y]
    m = float(d.max())
    return float(m + np.log(np.exp(d - m).sum()))


def cross_entropy_batch(z: np.ndarray, y: np.ndarray) -> np.ndarray:
    z = np.asarray(z, dtype=np.float64)
    d = z - z[np.arange(z.shape[0]), y][:, None]
    m = d.max(axis=1)
    return m + np.log(np.exp(d - m[:, None]).sum(axis=1))


def margin(z, y: int) -> float:
    """Logit margin z_y - max_{j != y} z_j."""
    z = np.asarray(z, dtype=np.float64)
    if not 0 <= y < z.size:
        raise ValueError("label out of range")
    rest = np.delete(z, y)
    return float(z[y] - rest.max())


def margin_batch(z: np.ndarray, y: np.ndarray) -> np.ndarray:
    z = np.asarray(z, dtype=np.float64)
    idx = np.arange(z.shape[0])
    zy = z[idx, y].copy()
    masked = z.copy()
    masked[idx, y] = -np.inf
    return zy - masked.max(axis=1)


def reverse_kl_dirichlet(d_from: DirichletParams, d_to: DirichletParams) -> float:
    """KL(Dir(alpha) || Dir(beta)) in closed form."""
    if d_from.num_classes != d_to.num_classes:
        raise ValueError("dimension mismatch")
    a, b = d_from.alpha, d_to.alpha
    val = K.lgamma_scalar(d_from.alpha0) - float(K.lgamma_array(a).sum())
    val += float(K.lgamma_array(b).sum()) - K.lgamma_scalar(d_to.alpha0)
    dig = K.digamma_array(a) - K.digamma_scalar(d_from.alpha0)
    return val + float(((a - b) * dig).sum())


def reverse_kl_batch(alpha: np.ndarray, beta: np.ndarray) -> np.ndarray:
    """Rowwise KL(Dir(alpha_n) || Dir(beta_n))."""
    a0 = alpha.sum(axis=1)
    b0 = beta.sum(axis=1)
    val = K.lgamma_array(a0) - K.lgamma_array(alpha).sum(axis=1)
    val += K.lgamma_array(beta).sum(axis=1) - K.lgamma_array(b0)
    dig = K.digamma_array(alpha) - K.digamma_array(a0)[:, None]
    return val + ((alpha - beta) * dig).sum(axis=1)


def reverse_kl_grad_alpha(alpha: np.ndarray, beta: np.ndarray) -> np.ndarray:
    """d KL(Dir(alpha) || Dir(beta)) / d alpha, rowwise.

    g_i = (alpha_i - beta_i) psi'(alpha_i) - psi'(alpha0) sum_j (alpha_j - beta_j)
    """
    a0 = alpha.sum(axis=1)
    diff = alpha - beta
    return diff * K.trigamma_array(alpha) - K.trigamma_array(a0)[:, None] * diff.sum(
        axis=1, keepdims=True
    )


def elbo_reconstruction(alpha_prime: DirichletParams, y: int, cfg: EvidenceConfig) -> float:
    """Expected target log density under the predicted Dirichlet.

    lgamma(a'_0) - sum_i lgamma(a'_i)
        + sum_i (a'_i - 1) (psi(alpha^y_i) - psi(alpha^y_0))
    """
    if alpha_prime.num_classes != cfg.num_classes:
        raise ValueError("dimension mismatch")
    digdiff = target_digdiff_batch(np.array([y]), cfg)
    val, _ = K.elbo_recon_batch(alpha_prime.alpha[None, :], digdiff)
    return float(val[0])
