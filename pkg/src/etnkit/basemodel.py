"""Desk-scale stand-in for a pretrained backbone.

Synthetic data: one isotropic Gaussian blob per class, means on a circle
(first two feature dimensions), out-of-distribution samples from the same
blobs translated along the all-ones diagonal by a fixed distance.  The
classifier is a two-layer rectifier MLP trained either with softmax
cross-entropy or with the reverse-KL evidential objective
KL(Dir(softplus(z) + 1) || Dir(target)) plus an annealed misleading-
evidence penalty.

Model files use the TCLS container: magic "TCLS", u32 version, then
u64-length-prefixed float64 arrays (meta, W1, b1, W2, b2).
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from . import kernels as K
from .bundleio import Bundle, make_bundle, raw_bundle, write_bundle
from .edl import EvidenceConfig, reverse_kl_batch, reverse_kl_grad_alpha
from .errors import DataError, FormatError, TrainingDivergedError
from .mlp import Adam, MlpSpec, TwoLayerMLP
from .rng import split_stream

_TCLS_MAGIC = b"TCLS"
_TCLS_VERSION = 1
_MODES = ("ce", "edl")


@dataclass(frozen=True)
class SynthSpec:
    """Blob geometry and split sizes for the synthetic task."""

    num_classes: int = 4
    feature_dim: int = 2
    radius: float = 3.0
    sigma: float = 0.8
    ood_shift: float = 6.0
    n_pretrain: int = 2000
    n_adapt: int = 600
    n_test: int = 800
    n_ood: int = 800
    seed: int = 0

    def __post_init__(self):
        if self.num_classes < 2 or self.feature_dim < 2:
            raise ValueError("need num_classes >= 2 and feature_dim >= 2")
        if self.sigma <= 0.0:
            raise ValueError("sigma must be > 0")
        for field in ("n_pretrain", "n_adapt", "n_test", "n_ood"):
            if getattr(self, field) < self.num_classes:
                raise ValueError(f"{field} must be >= num_classes")


def _class_means(spec: SynthSpec) -> np.ndarray:
    means = np.zeros((spec.num_classes, spec.feature_dim))
    angles = 2.0 * np.pi * np.arange(spec.num_classes) / spec.num_classes
    means[:, 0] = spec.radius * np.cos(angles)
    means[:, 1] = spec.radius * np.sin(angles)
    return means


def _draw_split(spec: SynthSpec, n: int, rng, shift: float) -> tuple[np.ndarray, np.ndarray]:
    labels = np.arange(n) % spec.num_classes
    means = _class_means(spec)
    x = means[labels] + spec.sigma * rng.normal(size=(n, spec.feature_dim))
    x += shift / np.sqrt(spec.feature_dim)  # diagonal translation of length shift
    perm = rng.permutation(n)
    return x[perm], labels[perm]


def gen_synth(spec: SynthSpec) -> dict[str, Bundle]:
    """Four raw bundles keyed pretrain/adapt/test/ood; OOD is unlabeled."""
    out: dict[str, Bundle] = {}
    for name, n in (("pretrain", spec.n_pretrain), ("adapt", spec.n_adapt),
                    ("test", spec.n_test)):
        rng = split_stream(spec.seed, f"synth-{name}")
        x, y = _draw_split(spec, n, rng, 0.0)
        out[name] = raw_bundle(x, y, spec.num_classes)
    rng = split_stream(spec.seed, "synth-ood")
    x, _ = _draw_split(spec, spec.n_ood, rng, spec.ood_shift)
    out["ood"] = raw_bundle(x, None, spec.num_classes)
    return out


@dataclass(frozen=True)
class PretrainConfig:
    mode: str = "ce"
    epochs: int = 150
    batch_size: int = 64
    learning_rate: float = 1e-3
    hidden_dim: int = 32
    # target concentration the tiny model can actually reach; the adaptation
    # stage is what pushes evidence to the full working concentration
    nu: float = 100.0
    reg_weight: float = 0.01
    anneal_epochs: int = 10
    seed: int = 0

    def __post_init__(self):
        if self.mode not in _MODES:
            raise ValueError(f"mode must be one of {_MODES}")
        if self.epochs < 1 or self.batch_size < 1 or self.learning_rate <= 0:
            raise ValueError("epochs, batch_size >= 1 and learning_rate > 0")


class TinyClassifier:
    """Two-layer rectifier network; hidden activations double as features."""

    def __init__(self, net: TwoLayerMLP, mode: str, seed: int = 0):
        self.net = net
        self.mode = mode
        self.seed = seed

    @property
    def feature_dim(self) -> int:
        return self.net.W1.shape[0]

    @property
    def hidden_dim(self) -> int:
        return self.net.W1.shape[1]

    @property
    def num_classes(self) -> int:
        return self.net.W2.shape[1]

    def forward(self, x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Returns (logits, hidden activations)."""
        z, (_, h) = self.net.forward(np.asarray(x, dtype=np.float64))
        return z, h

    def predict(self, x: np.ndarray) -> np.ndarray:
        z, _ = self.forward(x)
        return z.argmax(axis=1)

    def accuracy(self, bundle: Bundle) -> float:
        y = bundle.require_labels()
        return float((self.predict(bundle.features) == y).mean())


def _softmax(z: np.ndarray) -> np.ndarray:
    e = np.exp(z - z.max(axis=1, keepdims=True))
    return e / e.sum(axis=1, keepdims=True)


def _edl_batch(z, y, cfg: EvidenceConfig, anneal: float, reg_weight: float):
    """Reverse-KL evidential loss and d/dz for one batch."""
    n, c = z.shape
    alpha = K.softplus_array(z) + 1.0
    beta = np.ones((n, c))
    beta[np.arange(n), y] = cfg.nu
    loss = reverse_kl_batch(alpha, beta).mean()
    dalpha = reverse_kl_grad_alpha(alpha, beta)
    # misleading-evidence penalty: label coordinate pinned to 1
    pinned = alpha.copy()
    pinned[np.arange(n), y] = 1.0
    ones = np.ones((n, c))
    loss += anneal * reg_weight * reverse_kl_batch(pinned, ones).mean()
    dpin = reverse_kl_grad_alpha(pinned, ones)
    dpin[np.arange(n), y] = 0.0
    dalpha += anneal * reg_weight * dpin
    dz = dalpha * K.sigmoid_array(z) / n
    return float(loss), dz


def pretrain(bundle: Bundle, cfg: PretrainConfig) -> TinyClassifier:
    """Train the tiny classifier on a labeled raw bundle."""
    y = bundle.require_labels()
    x = np.asarray(bundle.features, dtype=np.float64)
    n = x.shape[0]
    c = int(bundle.num_classes if bundle.num_classes else y.max() + 1)
    if y.min() < 0 or y.max() >= c:
        raise DataError("labels out of range")

    net = TwoLayerMLP(MlpSpec(x.shape[1], c, cfg.hidden_dim),
                      split_stream(cfg.seed, "pretrain-init"))
    params = net.params()
    opt = Adam(params, lr=cfg.learning_rate)
    shuffle_rng = split_stream(cfg.seed, "pretrain-shuffle")
    ecfg = EvidenceConfig(num_classes=c, b=np.ones(c), nu=cfg.nu, lam=0.0)

    for epoch in range(cfg.epochs):
        order = shuffle_rng.permutation(n)
        anneal = min(1.0, epoch / cfg.anneal_epochs) if cfg.anneal_epochs else 1.0
        for start in range(0, n, cfg.batch_size):
            sel = order[start:start + cfg.batch_size]
            z, cache = net.forward(x[sel])
            if cfg.mode == "ce":
                p = _softmax(z)
                m = sel.size
                loss = float(-np.log(np.maximum(p[np.arange(m), y[sel]], 1e-300)).mean())
                dz = p.copy()
                dz[np.arange(m), y[sel]] -= 1.0
                dz /= m
            else:
                loss, dz = _edl_batch(z, y[sel], ecfg, anneal, cfg.reg_weight)
            if not np.isfinite(loss):
                raise TrainingDivergedError(
                    f"non-finite loss at epoch {epoch}, batch {start}")
            grads, _ = net.backward(cache, dz)
            opt.step(params, grads)
    return TinyClassifier(net, cfg.mode, cfg.seed)


def export_bundle(model: TinyClassifier, data: Bundle) -> Bundle:
    """Run the frozen model: hidden activations become features, logits fill in."""
    z, h = model.forward(np.asarray(data.features, dtype=np.float64))
    return make_bundle(h, z, data.labels)


def export(model: TinyClassifier, data: Bundle, path) -> Bundle:
    out = export_bundle(model, data)
    write_bundle(path, out)
    return out


def save_classifier(model: TinyClassifier, path) -> None:
    from .etn import _write_arrays

    meta = np.array([model.num_classes, model.feature_dim, model.hidden_dim,
                     _MODES.index(model.mode), model.seed], dtype=np.float64)
    net = model.net
    with open(path, "wb") as fh:
        fh.write(_TCLS_MAGIC)
        fh.write(struct.pack("<I", _TCLS_VERSION))
        _write_arrays(fh, [meta, net.W1, net.b1, net.W2, net.b2])


def load_classifier(path) -> TinyClassifier:
    from .etn import _read_arrays

    with open(path, "rb") as fh:
        buf = fh.read()
    if len(buf) < 8:
        raise FormatError("truncated", "model file shorter than its header")
    if buf[:4] != _TCLS_MAGIC:
        raise FormatError("magic", "not a TCLS model file")
    (version,) = struct.unpack_from("<I", buf, 4)
    if version != _TCLS_VERSION:
        raise FormatError("version", f"unsupported model version {version}")
    (meta,), offset = _read_arrays(buf, 8, [5])
    c, d, h, mode_idx = int(meta[0]), int(meta[1]), int(meta[2]), int(meta[3])
    if mode_idx not in (0, 1):
        raise FormatError("schema", f"unknown training mode {mode_idx}")
    counts = [d * h, h, h * c, c]
    arrays, offset = _read_arrays(buf, offset, counts)
    if offset != len(buf):
        raise FormatError("trailing", f"{len(buf) - offset} trailing bytes")
    net = TwoLayerMLP(MlpSpec(d, c, h), np.random.default_rng(0))
    net.set_params({"W1": arrays[0].reshape(d, h), "b1": arrays[1],
                    "W2": arrays[2].reshape(h, c), "b2": arrays[3]})
    return TinyClassifier(net, _MODES[mode_idx], int(meta[4]))
