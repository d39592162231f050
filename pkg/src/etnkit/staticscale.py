"""Static scaling baseline: one global scalar times the logits.

Fits a single positive scale a and a per-class belief vector b by
minimizing the mean reverse KL from Dir(softplus(a z) + b) to the
one-hot target Dirichlet.  Deterministic at inference: no transform
distribution, so the uncertainty scores come straight from the single
concentration vector.  Checkpoints share the ETNC container with
family tag 3.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from . import kernels as K
from .edl import EvidenceConfig, reverse_kl_batch, reverse_kl_grad_alpha, target_alpha_batch
from .errors import DataError, FormatError, TrainingDivergedError
from .etn import (FAMILY_TAGS, InferenceResult, _ETNC_MAGIC, _ETNC_VERSION,
                  _read_arrays, _write_arrays, read_header)
from .dirichlet import clamp_mi_batch
from .mlp import Adam
from .rng import split_stream

_META_LEN = 6


@dataclass(frozen=True)
class StaticConfig:
    nu: float = 1e4
    epochs: int = 100
    batch_size: int = 64
    learning_rate: float = 1e-2
    seed: int = 0

    def __post_init__(self):
        if self.epochs < 1 or self.batch_size < 1 or self.learning_rate <= 0:
            raise ValueError("epochs, batch_size >= 1 and learning_rate > 0")
        if not (self.nu > 2.0):
            raise ValueError("nu must exceed max(b) + 1")


class StaticScaleModel:
    def __init__(self, num_classes: int, a_raw: float, b_raw: np.ndarray,
                 config: StaticConfig):
        self.num_classes = num_classes
        self.a_raw = np.asarray(a_raw, dtype=np.float64).reshape(1)
        self.b_raw = np.asarray(b_raw, dtype=np.float64).reshape(num_classes)
        self.config = config

    @property
    def a(self) -> float:
        return float(K.softplus_array(self.a_raw)[0])

    @property
    def b(self) -> np.ndarray:
        return K.softplus_array(self.b_raw)

    def alpha(self, logits: np.ndarray) -> np.ndarray:
        z = np.asarray(logits, dtype=np.float64)
        return K.softplus_array(self.a * z) + self.b


def _loss_grads(model: StaticScaleModel, z, beta):
    alpha = model.alpha(z)
    n = z.shape[0]
    loss = float(reverse_kl_batch(alpha, beta).mean())
    g = reverse_kl_grad_alpha(alpha, beta) / n
    az = model.a * z
    da = float((g * K.sigmoid_array(az) * z).sum())
    grads = {
        "a_raw": np.array([da * float(K.sigmoid_array(model.a_raw)[0])]),
        "b_raw": g.sum(axis=0) * K.sigmoid_array(model.b_raw),
    }
    return loss, grads


def train_static(logits: np.ndarray, labels: np.ndarray, cfg: StaticConfig):
    """Fit on an adaptation set; returns (model, per-epoch loss history)."""
    z = np.asarray(logits, dtype=np.float64)
    if labels is None:
        raise DataError("static scaling requires labels")
    y = np.asarray(labels, dtype=np.int64)
    n, c = z.shape
    if y.min() < 0 or y.max() >= c:
        raise DataError("labels out of range for the logit width")
    ecfg = EvidenceConfig(num_classes=c, b=np.ones(c), nu=cfg.nu, lam=0.0)
    beta = target_alpha_batch(y, ecfg)

    model = StaticScaleModel(c, K.softplus_inv_scalar(1.0),
                             np.full(c, K.softplus_inv_scalar(1.0)), cfg)
    params = {"a_raw": model.a_raw, "b_raw": model.b_raw}
    opt = Adam(params, lr=cfg.learning_rate)
    shuffle_rng = split_stream(cfg.seed, "static-shuffle")
    history: list[dict[str, float]] = []
    for epoch in range(cfg.epochs):
        order = shuffle_rng.permutation(n)
        losses = []
        for start in range(0, n, cfg.batch_size):
            sel = order[start:start + cfg.batch_size]
            loss, grads = _loss_grads(model, z[sel], beta[sel])
            if not np.isfinite(loss):
                raise TrainingDivergedError(
                    f"non-finite loss at epoch {epoch}, batch {start}")
            opt.step(params, grads)
            losses.append(loss)
        history.append({"epoch": float(epoch), "train_loss": float(np.mean(losses))})
    return model, history


def infer_static(model: StaticScaleModel, logits: np.ndarray) -> InferenceResult:
    alpha = model.alpha(logits)
    a0, mp, mi, de = K.dirichlet_measures(alpha)
    prob = alpha / a0[:, None]
    return InferenceResult(prob=prob, pred=prob.argmax(axis=1), mp=mp,
                           um=a0, mi=clamp_mi_batch(mi), de=de)


def save_static(model: StaticScaleModel, path) -> None:
    cfg = model.config
    meta = np.array([model.num_classes, cfg.nu, cfg.learning_rate, cfg.seed,
                     cfg.epochs, cfg.batch_size], dtype=np.float64)
    with open(path, "wb") as fh:
        fh.write(_ETNC_MAGIC)
        fh.write(struct.pack("<I", _ETNC_VERSION))
        fh.write(struct.pack("<B", FAMILY_TAGS["static"]))
        _write_arrays(fh, [meta, model.b_raw, model.a_raw])


def load_static(path) -> StaticScaleModel:
    with open(path, "rb") as fh:
        buf = fh.read()
    _, tag = read_header(buf)
    if tag != FAMILY_TAGS["static"]:
        raise FormatError("family", f"not a static-scaling checkpoint (tag {tag})")
    (meta,), offset = _read_arrays(buf, 9, [_META_LEN])
    c = int(meta[0])
    cfg = StaticConfig(nu=meta[1], learning_rate=meta[2], seed=int(meta[3]),
                       epochs=int(meta[4]), batch_size=int(meta[5]))
    (b_raw, a_raw), offset = _read_arrays(buf, offset, [c, 1])
    if offset != len(buf):
        raise FormatError("trailing", f"{len(buf) - offset} trailing bytes")
    return StaticScaleModel(c, a_raw[0], b_raw, cfg)
