"""Evidential transformation network: training, inference, checkpoints.

A small perceptron head reads the frozen base model's hidden features and
predicts, per input, a variational distribution over a logit
transformation A.  Monte Carlo draws of A rescale the logits, the
rescaled logits become Dirichlet concentrations through the evidential
head, and the objective is

    - (1/M) sum_m [expected target log density under Dir(alpha'_m)]
    + lambda * KL(q(A | x) || p(A))

averaged over the batch, with an off-diagonal mean penalty for the matrix
family.  All gradients are hand-derived; the acceptance suite checks them
against central finite differences under common random numbers.

Checkpoints use the ETNC container: magic "ETNC", little-endian u32
version, one u8 family tag, then u64-length-prefixed float64 arrays in
the fixed order documented in the README.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, replace

import numpy as np

from . import kernels as K
from .dirichlet import clamp_mi_batch
from .edl import EvidenceConfig, margin_batch, target_digdiff_batch
from .errors import DataError, FormatError, TrainingDivergedError
from .mlp import Adam, MlpSpec, TwoLayerMLP
from .rng import split_stream
from .variational import (
    GammaParams,
    GammaVectorParams,
    KronGaussianParams,
    PriorSpec,
    gamma_prior,
    kl_gamma_batch,
    kl_kron_identity_batch,
    kron_prior,
    sample_gamma_batch,
    sample_kron_batch,
)

_FAMILIES = ("scalar", "vector", "matrix")
FAMILY_TAGS = {"scalar": 0, "vector": 1, "matrix": 2, "static": 3}
_TAG_FAMILIES = {v: k for k, v in FAMILY_TAGS.items()}

_HEAD_FLOOR = 1e-4
_HEAD_CLIP = 40.0
_ETNC_MAGIC = b"ETNC"
_ETNC_VERSION = 1
_META_LEN = 11


@dataclass(frozen=True)
class TrainConfig:
    """Hyperparameters of the adaptation run.

    ``prior_mode=None`` picks the transform prior from the data: the mode
    becomes the margin lower bound at unit slack divided by the median
    adaptation-set margin, i.e. the smallest scale that lets a typical
    sample reach the target concentration.
    """

    family: str = "scalar"
    prior_mode: float | None = 10.0
    prior_variance: float = 5.0
    lam: float = 0.01
    nu: float = 1e4
    mc_samples: int = 20
    epochs: int = 40
    batch_size: int = 64
    learning_rate: float = 1e-3
    hidden_dim: int = 256
    odir_weight: float = 0.01
    seed: int = 0

    def __post_init__(self):
        if self.family not in _FAMILIES:
            raise ValueError(f"family must be one of {_FAMILIES}")
        if self.mc_samples < 1 or self.epochs < 1 or self.batch_size < 1:
            raise ValueError("mc_samples, epochs, batch_size must be >= 1")
        if self.lam < 0.0 or self.odir_weight < 0.0:
            raise ValueError("penalty weights must be >= 0")
        if self.learning_rate <= 0.0 or self.hidden_dim < 1:
            raise ValueError("learning_rate must be > 0 and hidden_dim >= 1")
        if not (self.nu > 2.0):
            raise ValueError("nu must exceed max(b) + 1 for the unit prior belief")
        if self.prior_mode is not None:
            PriorSpec(self.prior_mode, self.prior_variance)
        elif self.prior_variance <= 0.0:
            raise ValueError("prior_variance must be > 0")

    @property
    def prior(self) -> PriorSpec:
        if self.prior_mode is None:
            raise ValueError("prior mode not resolved; train() derives it "
                             "from the adaptation margins")
        return PriorSpec(self.prior_mode, self.prior_variance)


class EtnModel:
    """Transformation-network parameters plus feature standardization."""

    def __init__(self, family: str, num_classes: int, feature_dim: int,
                 heads: dict[str, TwoLayerMLP], b_raw: np.ndarray,
                 feat_mean: np.ndarray, feat_std: np.ndarray, config: TrainConfig):
        if family not in _FAMILIES:
            raise ValueError(f"family must be one of {_FAMILIES}")
        self.family = family
        self.num_classes = num_classes
        self.feature_dim = feature_dim
        self.heads = heads
        self.b_raw = np.asarray(b_raw, dtype=np.float64)
        self.feat_mean = np.asarray(feat_mean, dtype=np.float64)
        self.feat_std = np.asarray(feat_std, dtype=np.float64)
        self.config = config

    @property
    def b(self) -> np.ndarray:
        """Prior belief vector, softplus keeps it non-negative."""
        return K.softplus_array(self.b_raw)

    def evidence_config(self) -> EvidenceConfig:
        return EvidenceConfig(num_classes=self.num_classes, b=self.b,
                              nu=self.config.nu, lam=self.config.lam)

    def params(self) -> dict[str, np.ndarray]:
        out = {"b_raw": self.b_raw}
        for name, head in self.heads.items():
            for key, val in head.params().items():
                out[f"{name}.{key}"] = val
        return out

    def set_params(self, values: dict[str, np.ndarray]) -> None:
        self.b_raw = np.asarray(values["b_raw"], dtype=np.float64).reshape(self.b_raw.shape)
        for name, head in self.heads.items():
            head.set_params({k.split(".", 1)[1]: v for k, v in values.items()
                             if k.startswith(name + ".")})

    def standardize(self, features: np.ndarray) -> np.ndarray:
        return (features - self.feat_mean) / self.feat_std


def _tril_layout(c: int):
    rows, cols = np.tril_indices(c)
    return rows, cols, rows == cols


def build_model(cfg: TrainConfig, num_classes: int, feature_dim: int) -> EtnModel:
    """Fresh model; head biases start the variational family at its prior."""
    rng = split_stream(cfg.seed, "etn-init")
    heads: dict[str, TwoLayerMLP] = {}
    if cfg.family in ("scalar", "vector"):
        out_dim = 1 if cfg.family == "scalar" else num_classes
        prior = gamma_prior(cfg.prior)
        for name, target in (("shape", prior.shape), ("rate", prior.rate)):
            head = TwoLayerMLP(MlpSpec(feature_dim, out_dim, cfg.hidden_dim), rng)
            head.b2[:] = np.log(target - _HEAD_FLOOR)
            heads[name] = head
    else:
        c = num_classes
        prior = kron_prior(cfg.prior, c)
        mu_head = TwoLayerMLP(MlpSpec(feature_dim, c * c, cfg.hidden_dim), rng)
        mu_head.b2[:] = prior.mu.reshape(-1)
        heads["mu"] = mu_head
        rows, cols, diag = _tril_layout(c)
        packed = np.zeros(rows.size)
        packed[diag] = np.log(float(prior.l_b[0, 0]) - _HEAD_FLOOR)
        for name in ("l_b", "l_d"):
            head = TwoLayerMLP(MlpSpec(feature_dim, rows.size, cfg.hidden_dim), rng)
            head.b2[:] = packed
            heads[name] = head
    b_raw = np.full(num_classes, K.softplus_inv_scalar(1.0))
    return EtnModel(cfg.family, num_classes, feature_dim, heads, b_raw,
                    np.zeros(feature_dim), np.ones(feature_dim), cfg)


def _positive_head(raw: np.ndarray) -> np.ndarray:
    """Exponential positivity for variational parameters.

    Head outputs live on a log scale so a fixed optimizer step moves the
    parameter by a fixed ratio regardless of its magnitude; softplus would
    freeze large-scale heads at practical learning rates.
    """
    return np.exp(np.clip(raw, -_HEAD_CLIP, _HEAD_CLIP)) + _HEAD_FLOOR


def _positive_head_grad(raw: np.ndarray) -> np.ndarray:
    clipped = np.clip(raw, -_HEAD_CLIP, _HEAD_CLIP)
    return np.exp(clipped) * (np.abs(raw) < _HEAD_CLIP)


def predict_variational(model: EtnModel, features: np.ndarray):
    """Variational family parameters for one feature vector or a batch.

    Returns GammaParams / GammaVectorParams / KronGaussianParams for a
    single input; lists are avoided for batches, which get the raw
    parameter arrays via the internal forward pass.
    """
    features = np.asarray(features, dtype=np.float64)
    single = features.ndim == 1
    x = model.standardize(features[None, :] if single else features)
    if not single:
        raise ValueError("predict_variational takes a single feature vector")
    if model.family == "scalar":
        (k, r), _ = _forward_gamma(model, x)
        return GammaParams(float(k[0]), float(r[0]))
    if model.family == "vector":
        (k, r), _ = _forward_gamma(model, x)
        return GammaVectorParams(k[0], r[0])
    (mu, l_b, l_d), _ = _forward_kron(model, x)
    return KronGaussianParams(mu[0], l_b[0], l_d[0])


def _forward_gamma(model: EtnModel, x: np.ndarray):
    raw_k, cache_k = model.heads["shape"].forward(x)
    raw_r, cache_r = model.heads["rate"].forward(x)
    k = _positive_head(raw_k)
    r = _positive_head(raw_r)
    if model.family == "scalar":
        k = k[:, 0]
        r = r[:, 0]
    return (k, r), (raw_k, cache_k, raw_r, cache_r)


def _forward_kron(model: EtnModel, x: np.ndarray):
    c = model.num_classes
    rows, cols, diag = _tril_layout(c)
    raw_mu, cache_mu = model.heads["mu"].forward(x)
    mu = raw_mu.reshape(-1, c, c)
    factors = {}
    caches = {"mu": (raw_mu, cache_mu)}
    for name in ("l_b", "l_d"):
        raw, cache = model.heads[name].forward(x)
        vals = raw.copy()
        vals[:, diag] = _positive_head(raw[:, diag])
        mat = np.zeros((x.shape[0], c, c))
        mat[:, rows, cols] = vals
        factors[name] = mat
        caches[name] = (raw, cache)
    return (mu, factors["l_b"], factors["l_d"]), caches


def loss_batch(model: EtnModel, features: np.ndarray, logits: np.ndarray,
               labels: np.ndarray, cfg: TrainConfig, rng: np.random.Generator):
    """Batch objective and gradients for every parameter.

    Returns (loss, grads) where grads is keyed like ``model.params()``.
    For the scalar family the belief vector is tied (all entries equal, so
    positive scaling plus a constant offset preserves the logit argmax);
    its gradient is the summed sensitivity replicated across coordinates.
    """
    loss, grads, _, _ = _loss_impl(model, features, logits, labels, cfg, rng)
    return loss, grads


def _loss_impl(model: EtnModel, features: np.ndarray, logits: np.ndarray,
               labels: np.ndarray, cfg: TrainConfig, rng: np.random.Generator):
    features = np.asarray(features, dtype=np.float64)
    z = np.asarray(logits, dtype=np.float64)
    labels = np.asarray(labels)
    n, c = z.shape
    m = cfg.mc_samples
    x = model.standardize(features)
    b = model.b
    sig_b_raw = K.sigmoid_array(model.b_raw)
    digdiff = target_digdiff_batch(labels, EvidenceConfig(c, b, nu=cfg.nu, lam=cfg.lam))

    grads: dict[str, np.ndarray] = {}

    if model.family in ("scalar", "vector"):
        (k, r), (raw_k, cache_k, raw_r, cache_r) = _forward_gamma(model, x)
        a, dadk, dadr = sample_gamma_batch(k, r, m, rng)
        if model.family == "scalar":
            zprime = a[:, :, None] * z[:, None, :]
        else:
            zprime = a * z[:, None, :]
        alpha = K.softplus_array(zprime) + b
        val, galpha = K.elbo_recon_batch(alpha.reshape(n * m, c),
                                         np.repeat(digdiff, m, axis=0))
        recon = -float(val.mean())
        dalpha = (-galpha / (n * m)).reshape(n, m, c)
        dzprime = dalpha * K.sigmoid_array(zprime)
        db_raw = dalpha.sum(axis=(0, 1)) * sig_b_raw
        prior = gamma_prior(cfg.prior)
        klv, dkldk, dkldr = kl_gamma_batch(k, r, prior)
        if model.family == "scalar":
            kl = float(klv.mean())
            da = np.einsum("nmc,nc->nm", dzprime, z)
            dk = (da * dadk).sum(axis=1) + cfg.lam * dkldk / n
            dr = (da * dadr).sum(axis=1) + cfg.lam * dkldr / n
            dk = dk[:, None]
            dr = dr[:, None]
            db_raw = np.full(c, db_raw.sum())  # tied: one shared belief parameter
        else:
            kl = float(klv.sum(axis=1).mean())
            da = dzprime * z[:, None, :]
            dk = (da * dadk).sum(axis=1) + cfg.lam * dkldk / n
            dr = (da * dadr).sum(axis=1) + cfg.lam * dkldr / n
        loss = recon + cfg.lam * kl
        gk, _ = model.heads["shape"].backward(cache_k, dk * _positive_head_grad(raw_k))
        gr, _ = model.heads["rate"].backward(cache_r, dr * _positive_head_grad(raw_r))
        for key, val_ in gk.items():
            grads[f"shape.{key}"] = val_
        for key, val_ in gr.items():
            grads[f"rate.{key}"] = val_
    else:
        (mu, l_b, l_d), caches = _forward_kron(model, x)
        a, eps, diag_pre = sample_kron_batch(mu, l_b, l_d, m, rng)
        zprime = np.einsum("nmij,nj->nmi", a, z)
        alpha = K.softplus_array(zprime) + b
        val, galpha = K.elbo_recon_batch(alpha.reshape(n * m, c),
                                         np.repeat(digdiff, m, axis=0))
        recon = -float(val.mean())
        dalpha = (-galpha / (n * m)).reshape(n, m, c)
        dzprime = dalpha * K.sigmoid_array(zprime)
        db_raw = dalpha.sum(axis=(0, 1)) * sig_b_raw
        ga = np.einsum("nmi,nj->nmij", dzprime, z)
        idx = np.arange(c)
        ga[..., idx, idx] *= K.sigmoid_array(diag_pre)
        prior = kron_prior(cfg.prior, c)
        klv, dklmu, dkllb, dklld = kl_kron_identity_batch(mu, l_b, l_d, prior)
        kl = float(klv.mean())
        dmu = ga.sum(axis=1) + cfg.lam * dklmu / n
        dlb = np.einsum("nmip,nij,nmjq->npq", ga, l_d, eps) + cfg.lam * dkllb / n
        dld = np.einsum("nmpl,nlk,nmqk->npq", ga, l_b, eps) + cfg.lam * dklld / n
        loss = recon + cfg.lam * kl
        # off-diagonal mean penalty
        if cfg.odir_weight > 0.0:
            off = ~np.eye(c, dtype=bool)
            denom = c * (c - 1)
            loss += cfg.odir_weight * float((mu[:, off] ** 2).sum(axis=1).mean()) / denom
            dmu[:, off] += 2.0 * cfg.odir_weight * mu[:, off] / (n * denom)
        rows, cols, diag = _tril_layout(c)
        for name, dmat in (("mu", dmu), ("l_b", dlb), ("l_d", dld)):
            raw, cache = caches[name]
            if name == "mu":
                dout = dmat.reshape(n, c * c)
            else:
                dout = dmat[:, rows, cols]
                dout[:, diag] *= _positive_head_grad(raw[:, diag])
            g, _ = model.heads[name].backward(cache, dout)
            for key, val_ in g.items():
                grads[f"{name}.{key}"] = val_

    grads["b_raw"] = db_raw
    if not np.isfinite(loss):
        raise TrainingDivergedError(
            f"non-finite loss (batch size {n}, mc {m}, family {model.family})")
    return float(loss), grads, recon, kl


def _draw_alpha(model: EtnModel, features: np.ndarray, logits: np.ndarray,
                mc_samples: int, rng: np.random.Generator) -> np.ndarray:
    """Transformed concentrations, shape (N, M, C); no gradient bookkeeping."""
    z = np.asarray(logits, dtype=np.float64)
    x = model.standardize(np.asarray(features, dtype=np.float64))
    b = model.b
    if model.family in ("scalar", "vector"):
        (k, r), _ = _forward_gamma(model, x)
        if model.family == "scalar":
            u = rng.random((x.shape[0], mc_samples))
            a = K.gamma_icdf_array(k[:, None], u) / r[:, None]
            zprime = a[:, :, None] * z[:, None, :]
        else:
            u = rng.random((x.shape[0], mc_samples, z.shape[1]))
            a = K.gamma_icdf_array(k[:, None, :], u) / r[:, None, :]
            zprime = a * z[:, None, :]
    else:
        (mu, l_b, l_d), _ = _forward_kron(model, x)
        a, _, _ = sample_kron_batch(mu, l_b, l_d, mc_samples, rng)
        zprime = np.einsum("nmij,nj->nmi", a, z)
    return K.softplus_array(zprime) + b


@dataclass(frozen=True)
class InferenceResult:
    """Marginalized predictions and the four uncertainty scores."""

    prob: np.ndarray   # (N, C) mean of Dirichlet means over draws
    pred: np.ndarray   # (N,) argmax of prob
    mp: np.ndarray     # max probability, higher = more confident
    um: np.ndarray     # mean total concentration, higher = more evidence
    mi: np.ndarray     # mutual information of the mean concentration
    de: np.ndarray     # differential entropy of the mean concentration


def infer(model: EtnModel, features: np.ndarray, logits: np.ndarray,
          mc_samples: int, rng: np.random.Generator) -> InferenceResult:
    """Marginalize the transformation: average Dirichlet means over M draws.

    The distributional scores (mutual information, differential entropy)
    are evaluated at the draw-averaged concentration; the total
    concentration score is the draw average of alpha0.
    """
    alpha = _draw_alpha(model, features, logits, mc_samples, rng)
    a0 = alpha.sum(axis=2)
    prob = (alpha / a0[:, :, None]).mean(axis=1)
    um = a0.mean(axis=1)
    alpha_bar = alpha.mean(axis=1)
    _, _, mi, de = K.dirichlet_measures(alpha_bar)
    return InferenceResult(
        prob=prob,
        pred=prob.argmax(axis=1),
        mp=prob.max(axis=1),
        um=um,
        mi=clamp_mi_batch(mi),
        de=de,
    )


def epoch_loss(model: EtnModel, features, logits, labels, cfg: TrainConfig,
               rng: np.random.Generator) -> dict[str, float]:
    """Whole-set objective with its reconstruction and KL parts."""
    loss, _, recon, kl = _loss_impl(model, features, logits, labels, cfg, rng)
    return {"loss": loss, "recon": recon, "kl": kl}


_PRIOR_SLACK = 1.0


def derive_prior_mode(logits: np.ndarray, labels: np.ndarray,
                      cfg: TrainConfig) -> float:
    """Margin-based prior mode: LB(eta) / median adaptation margin.

    LB is the post-transform margin needed to reach the target
    concentration nu with slack eta while the non-label beliefs stay at
    their unit floor; dividing by the median base margin gives the scale a
    typical sample needs.  Floored just above 1, the smallest admissible
    prior mode.
    """
    margins = margin_batch(logits, labels)
    med = float(np.median(margins))
    if med <= 0.0:
        raise DataError("median adaptation margin must be positive to "
                        "derive the transform prior mode")
    lb = (K.softplus_inv_scalar(cfg.nu - 1.0 - _PRIOR_SLACK)
          - K.softplus_inv_scalar(_PRIOR_SLACK))
    return max(lb / med, 1.0 + 1e-6)


def train(features: np.ndarray, logits: np.ndarray, labels: np.ndarray,
          cfg: TrainConfig):
    """Adapt a transformation network on an exported bundle.

    Feature standardization statistics come from the adaptation set.  The
    checkpoint kept is the epoch with the lowest deterministic
    whole-set loss.  Returns (model, history); history has one entry per
    epoch with the running batch loss and the selection loss.
    """
    features = np.asarray(features, dtype=np.float64)
    logits = np.asarray(logits, dtype=np.float64)
    if labels is None:
        raise DataError("adaptation requires labels")
    labels = np.asarray(labels, dtype=np.int64)
    n, d = features.shape
    c = logits.shape[1]
    if labels.min() < 0 or labels.max() >= c:
        raise DataError("labels out of range for the logit width")

    if cfg.prior_mode is None:
        cfg = replace(cfg, prior_mode=derive_prior_mode(logits, labels, cfg))

    model = build_model(cfg, c, d)
    model.feat_mean = features.mean(axis=0)
    model.feat_std = np.maximum(features.std(axis=0), 1e-8)

    params = model.params()
    opt = Adam(params, lr=cfg.learning_rate)
    shuffle_rng = split_stream(cfg.seed, "etn-shuffle")
    draw_rng = split_stream(cfg.seed, "etn-draws")

    history: list[dict[str, float]] = []
    best_loss = np.inf
    best_params = {k: v.copy() for k, v in params.items()}
    best_epoch = -1

    for epoch in range(cfg.epochs):
        order = shuffle_rng.permutation(n)
        batch_losses = []
        for start in range(0, n, cfg.batch_size):
            sel = order[start:start + cfg.batch_size]
            try:
                loss, grads = loss_batch(model, features[sel], logits[sel],
                                         labels[sel], cfg, draw_rng)
            except TrainingDivergedError as exc:
                raise TrainingDivergedError(
                    f"epoch {epoch}, batch at {start}: {exc}") from None
            opt.step(params, grads)
            batch_losses.append(loss)
        eval_rng = split_stream(cfg.seed, f"etn-eval-{epoch}")
        parts = epoch_loss(model, features, logits, labels, cfg, eval_rng)
        history.append({"epoch": float(epoch),
                        "train_loss": float(np.mean(batch_losses)),
                        "loss": parts["loss"], "recon": parts["recon"],
                        "kl": parts["kl"]})
        if parts["loss"] < best_loss:
            best_loss = parts["loss"]
            best_epoch = epoch
            best_params = {k: v.copy() for k, v in params.items()}

    model.set_params(best_params)
    for row in history:
        row["best"] = 1.0 if row["epoch"] == best_epoch else 0.0
    return model, history


# ---------------------------------------------------------------------------
# ETNC checkpoint container


def _write_arrays(fh, arrays) -> None:
    for arr in arrays:
        flat = np.ascontiguousarray(arr, dtype=np.float64).reshape(-1)
        fh.write(struct.pack("<Q", flat.size))
        fh.write(flat.astype("<f8").tobytes())


def _read_arrays(buf: bytes, offset: int, counts: list[int]) -> tuple[list[np.ndarray], int]:
    out = []
    for expect in counts:
        if offset + 8 > len(buf):
            raise FormatError("truncated", "checkpoint ends inside an array header")
        (size,) = struct.unpack_from("<Q", buf, offset)
        offset += 8
        if expect >= 0 and size != expect:
            raise FormatError("schema", f"array length {size}, expected {expect}")
        end = offset + 8 * size
        if end > len(buf):
            raise FormatError("truncated", "checkpoint ends inside array payload")
        out.append(np.frombuffer(buf[offset:end], dtype="<f8").copy())
        offset = end
    return out, offset


def _head_array_counts(family: str, c: int, d: int, hidden: int) -> list[int]:
    if family in ("scalar", "vector"):
        out = 1 if family == "scalar" else c
        per_head = [d * hidden, hidden, hidden * out, out]
        return per_head * 2
    p = c * (c + 1) // 2
    counts = []
    for out in (c * c, p, p):
        counts += [d * hidden, hidden, hidden * out, out]
    return counts


_HEAD_ORDER = {"scalar": ("shape", "rate"), "vector": ("shape", "rate"),
               "matrix": ("mu", "l_b", "l_d")}


def save_checkpoint(model: EtnModel, path) -> None:
    cfg = model.config
    meta = np.array([model.num_classes, model.feature_dim, cfg.hidden_dim,
                     cfg.nu, cfg.lam, cfg.prior_mode, cfg.prior_variance,
                     cfg.mc_samples, cfg.learning_rate, cfg.odir_weight,
                     cfg.seed], dtype=np.float64)
    arrays = [meta, model.b_raw, model.feat_mean, model.feat_std]
    for name in _HEAD_ORDER[model.family]:
        head = model.heads[name]
        arrays += [head.W1, head.b1, head.W2, head.b2]
    with open(path, "wb") as fh:
        fh.write(_ETNC_MAGIC)
        fh.write(struct.pack("<I", _ETNC_VERSION))
        fh.write(struct.pack("<B", FAMILY_TAGS[model.family]))
        _write_arrays(fh, arrays)


def read_header(buf: bytes) -> tuple[int, int]:
    """Validate the ETNC preamble; returns (version, family tag)."""
    if len(buf) < 9:
        raise FormatError("truncated", "checkpoint shorter than its header")
    if buf[:4] != _ETNC_MAGIC:
        raise FormatError("magic", "not an ETNC checkpoint")
    (version,) = struct.unpack_from("<I", buf, 4)
    if version != _ETNC_VERSION:
        raise FormatError("version", f"unsupported checkpoint version {version}")
    return version, buf[8]


def peek_family(path) -> str:
    with open(path, "rb") as fh:
        buf = fh.read(9)
    _, tag = read_header(buf)
    if tag not in _TAG_FAMILIES:
        raise FormatError("family", f"unknown family tag {tag}")
    return _TAG_FAMILIES[tag]


def load_checkpoint(path) -> EtnModel:
    with open(path, "rb") as fh:
        buf = fh.read()
    _, tag = read_header(buf)
    if tag not in _TAG_FAMILIES or _TAG_FAMILIES[tag] == "static":
        raise FormatError("family", f"not a transformation-network family tag: {tag}")
    family = _TAG_FAMILIES[tag]
    (meta,), offset = _read_arrays(buf, 9, [_META_LEN])
    c, d, hidden = int(meta[0]), int(meta[1]), int(meta[2])
    cfg = TrainConfig(family=family, prior_mode=meta[5], prior_variance=meta[6],
                      lam=meta[4], nu=meta[3], mc_samples=int(meta[7]),
                      learning_rate=meta[8], hidden_dim=hidden,
                      odir_weight=meta[9], seed=int(meta[10]))
    counts = [c, d, d] + _head_array_counts(family, c, d, hidden)
    arrays, offset = _read_arrays(buf, offset, counts)
    if offset != len(buf):
        raise FormatError("trailing", f"{len(buf) - offset} trailing bytes")
    model = build_model(cfg, c, d)
    model.b_raw = arrays[0]
    model.feat_mean = arrays[1]
    model.feat_std = arrays[2]
    pos = 3
    for name in _HEAD_ORDER[family]:
        head = model.heads[name]
        shapes = [head.W1.shape, head.b1.shape, head.W2.shape, head.b2.shape]
        vals = {}
        for key, shape in zip(("W1", "b1", "W2", "b2"), shapes):
            vals[key] = arrays[pos].reshape(shape)
            pos += 1
        head.set_params(vals)
    return model
