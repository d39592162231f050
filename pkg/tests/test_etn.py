import numpy as np
import pytest

from etnkit import dirichlet, etn, specfun
from etnkit.errors import DataError, FormatError, TrainingDivergedError
from etnkit.etn import TrainConfig
from etnkit.rng import split_stream
from etnkit.variational import (GammaParams, GammaVectorParams,
                                KronGaussianParams, gamma_from_mode_variance)

from conftest import infer_scores, pipeline


def test_config_validation():
    with pytest.raises(ValueError):
        TrainConfig(family="diagonal")
    with pytest.raises(ValueError):
        TrainConfig(mc_samples=0)
    with pytest.raises(ValueError):
        TrainConfig(lam=-0.1)
    with pytest.raises(ValueError):
        TrainConfig(learning_rate=0.0)
    with pytest.raises(ValueError):
        TrainConfig(nu=2.0)
    with pytest.raises(ValueError):
        TrainConfig(prior_mode=-5.0)
    with pytest.raises(ValueError):
        TrainConfig(prior_mode=None, prior_variance=0.0)
    cfg = TrainConfig(prior_mode=None)
    with pytest.raises(ValueError):
        cfg.prior


def test_build_model_starts_at_prior():
    cfg = TrainConfig(seed=3)
    model = etn.build_model(cfg, num_classes=4, feature_dim=6)
    assert set(model.heads) == {"shape", "rate"}
    assert np.allclose(model.b, 1.0)
    prior = gamma_from_mode_variance(cfg.prior_mode, cfg.prior_variance)
    assert np.allclose(model.heads["shape"].b2, np.log(prior.shape - 1e-4))
    assert np.allclose(model.heads["rate"].b2, np.log(prior.rate - 1e-4))
    # at the feature mean the hidden layer sees zeros, so the head output
    # is the bias and the predicted family sits exactly on the prior
    q = etn.predict_variational(model, model.feat_mean)
    assert isinstance(q, GammaParams)
    assert q.shape == pytest.approx(prior.shape, rel=1e-12)
    assert q.rate == pytest.approx(prior.rate, rel=1e-12)


def test_predict_variational_matches_manual_forward():
    cfg = TrainConfig(hidden_dim=16, seed=1)
    model = etn.build_model(cfg, num_classes=3, feature_dim=5)
    model.feat_mean = np.arange(5.0)
    model.feat_std = np.linspace(1.0, 2.0, 5)
    x = np.array([0.3, -1.2, 2.0, 0.0, 4.0])

    def manual(head):
        xs = (x - model.feat_mean) / model.feat_std
        h = np.maximum(xs @ head.W1 + head.b1, 0.0)
        raw = h @ head.W2 + head.b2
        return np.exp(np.clip(raw, -40.0, 40.0)) + 1e-4

    q = etn.predict_variational(model, x)
    assert q.shape == pytest.approx(float(manual(model.heads["shape"])[0]), rel=1e-14)
    assert q.rate == pytest.approx(float(manual(model.heads["rate"])[0]), rel=1e-14)
    with pytest.raises(ValueError):
        etn.predict_variational(model, np.zeros((2, 5)))


def test_predict_variational_families():
    vec = etn.build_model(TrainConfig(family="vector"), 3, 4)
    q = etn.predict_variational(vec, np.zeros(4))
    assert isinstance(q, GammaVectorParams)
    assert q.shapes.shape == (3,)
    mat = etn.build_model(TrainConfig(family="matrix"), 3, 4)
    q = etn.predict_variational(mat, np.zeros(4))
    assert isinstance(q, KronGaussianParams)
    assert q.mu.shape == (3, 3)
    assert np.all(np.diag(q.l_b) > 0)
    assert not np.triu(q.l_b, 1).any()


@pytest.mark.parametrize("family", ["scalar", "vector", "matrix"])
def test_loss_gradients_match_finite_differences(family):
    rng = np.random.default_rng(0)
    n, c, d = 12, 3, 2
    cfg = TrainConfig(family=family, hidden_dim=3, mc_samples=32, seed=0)
    model = etn.build_model(cfg, c, d)
    features = rng.normal(size=(n, d))
    logits = rng.normal(size=(n, c)) * 3
    labels = rng.integers(0, c, n)

    def loss_at():
        return etn.loss_batch(model, features, logits, labels, cfg,
                              np.random.default_rng(42))

    base_loss, grads = loss_at()
    params = model.params()
    eps = 1e-5
    checked = 0
    for key in sorted(params):
        if key == "b_raw":
            continue
        flat = params[key].reshape(-1)
        gflat = grads[key].reshape(-1)
        for idx in (0, flat.size // 2):
            orig = flat[idx]
            flat[idx] = orig + eps
            up, _ = loss_at()
            flat[idx] = orig - eps
            dn, _ = loss_at()
            flat[idx] = orig
            fd = (up - dn) / (2 * eps)
            if abs(fd) < 1e-12 and abs(gflat[idx]) < 1e-12:
                continue
            assert gflat[idx] == pytest.approx(fd, rel=2e-3, abs=1e-8), (key, idx)
            checked += 1
    assert checked >= 6
    # belief parameter: tied for the scalar family, so perturb jointly
    braw = params["b_raw"]
    orig = braw.copy()
    braw += eps
    up, _ = loss_at()
    braw[:] = orig - eps
    dn, _ = loss_at()
    braw[:] = orig
    fd = (up - dn) / (2 * eps)
    if family == "scalar":
        assert grads["b_raw"].std() == 0.0
        want = grads["b_raw"][0]
    else:
        want = grads["b_raw"].sum()
    assert want == pytest.approx(fd, rel=2e-3, abs=1e-8)


def test_infer_near_deterministic_transform_matches_direct():
    # a variational family collapsed on a = 1 must reproduce the plain
    # evidential readout of the untransformed logits
    cfg = TrainConfig(prior_mode=1.0, prior_variance=1e-8, seed=0)
    model = etn.build_model(cfg, num_classes=4, feature_dim=3)
    for head in model.heads.values():
        head.W2[:] = 0.0  # keep the heads exactly at their prior bias
    rng = np.random.default_rng(1)
    features = rng.normal(size=(50, 3))
    logits = rng.normal(size=(50, 4)) * 4
    res = etn.infer(model, features, logits, 8, np.random.default_rng(2))
    alpha = specfun.softplus(logits) + 1.0
    a0, mp, mi, de = dirichlet.measures_batch(alpha)
    assert np.allclose(res.um, a0, rtol=1e-3)
    assert np.allclose(res.mp, mp, rtol=1e-3)
    assert np.allclose(res.prob, alpha / a0[:, None], atol=1e-4)
    assert np.allclose(res.mi, mi, atol=1e-4)
    assert np.allclose(res.de, de, rtol=1e-3, atol=1e-4)
    assert np.array_equal(res.pred, logits.argmax(axis=1))


def test_infer_outputs_well_formed():
    p = pipeline(0)
    res = infer_scores(p.model, p.test, "unit-test")
    n = p.test.n
    for arr in (res.mp, res.um, res.mi, res.de):
        assert arr.shape == (n,)
        assert np.isfinite(arr).all()
    assert res.prob.shape == (n, p.test.num_classes)
    assert np.allclose(res.prob.sum(axis=1), 1.0, atol=1e-12)
    assert np.array_equal(res.pred, res.prob.argmax(axis=1))
    assert np.allclose(res.mp, res.prob.max(axis=1))
    assert np.all(res.mi >= 0)
    assert np.all(res.um > 0)


def test_infer_preserves_classifier_argmax():
    # the scalar transform and the tied belief cannot change the ranking
    p = pipeline(0)
    for bundle in (p.adapt, p.test, p.ood):
        res = infer_scores(p.model, bundle, "argmax-check")
        assert np.array_equal(res.pred, bundle.logits.argmax(axis=1))


def test_infer_determinism_and_draw_averaging():
    p = pipeline(0)
    a = infer_scores(p.model, p.test, "det")
    b = infer_scores(p.model, p.test, "det")
    assert np.array_equal(a.prob, b.prob)
    assert np.array_equal(a.mi, b.mi)
    # more draws average out sampling noise in the probability estimate
    sub = p.test.features[:40], p.test.logits[:40]
    reps = 40
    small = np.stack([etn.infer(p.model, sub[0], sub[1], 1,
                                np.random.default_rng(1000 + i)).mp
                      for i in range(reps)])
    large = np.stack([etn.infer(p.model, sub[0], sub[1], 64,
                                np.random.default_rng(2000 + i)).mp
                      for i in range(reps)])
    assert large.std(axis=0).mean() < small.std(axis=0).mean() / 2


def test_train_history_and_selection():
    p = pipeline(0)
    hist = p.history
    assert len(hist) == p.cfg.epochs
    for row in hist:
        assert set(row) == {"epoch", "train_loss", "loss", "recon", "kl", "best"}
        assert row["loss"] == pytest.approx(row["recon"] + p.cfg.lam * row["kl"],
                                            rel=1e-12)
    losses = [row["loss"] for row in hist]
    best_rows = [row for row in hist if row["best"] == 1.0]
    assert len(best_rows) == 1
    assert best_rows[0]["loss"] == min(losses)
    # adaptation makes clear progress over the start
    assert min(losses) < losses[0] - 1.0


def test_train_deterministic():
    p = pipeline(0)
    sub = slice(0, 128)
    cfg = TrainConfig(epochs=3, seed=7)
    a, ha = etn.train(p.adapt.features[sub], p.adapt.logits[sub],
                      p.adapt.require_labels()[sub], cfg)
    b, hb = etn.train(p.adapt.features[sub], p.adapt.logits[sub],
                      p.adapt.require_labels()[sub], cfg)
    assert ha == hb
    for key, val in a.params().items():
        assert np.array_equal(val, b.params()[key]), key


def test_train_input_validation():
    p = pipeline(0)
    cfg = TrainConfig(epochs=1)
    with pytest.raises(DataError):
        etn.train(p.ood.features, p.ood.logits, None, cfg)
    bad = np.full(p.adapt.n, 9, dtype=np.int64)
    with pytest.raises(DataError):
        etn.train(p.adapt.features, p.adapt.logits, bad, cfg)


def test_train_aborts_on_non_finite():
    p = pipeline(0)
    feats = np.asarray(p.adapt.features[:64], dtype=np.float64).copy()
    feats[0, 0] = np.nan
    with pytest.raises(TrainingDivergedError) as err:
        etn.train(feats, p.adapt.logits[:64], p.adapt.require_labels()[:64],
                  TrainConfig(epochs=1))
    assert err.value.category == "numeric"


def test_derive_prior_mode():
    cfg = TrainConfig()
    # rows with margins 2, 4, 6 for label 0
    logits = np.array([[2.0, 0.0], [4.0, 0.0], [6.0, 0.0]])
    labels = np.zeros(3, dtype=np.int64)
    lb = specfun.softplus_inv(cfg.nu - 2.0) - specfun.softplus_inv(1.0)
    got = etn.derive_prior_mode(logits, labels, cfg)
    assert got == pytest.approx(lb / 4.0, rel=1e-12)
    # enormous margins floor at the smallest admissible mode
    huge = logits * 1e6
    assert etn.derive_prior_mode(huge, labels, cfg) == pytest.approx(1.0 + 1e-6)
    with pytest.raises(DataError):
        etn.derive_prior_mode(-logits, labels, cfg)


def test_train_resolves_margin_based_prior():
    p = pipeline(0)
    sub = slice(0, 128)
    cfg = TrainConfig(prior_mode=None, epochs=1)
    model, _ = etn.train(p.adapt.features[sub], p.adapt.logits[sub],
                         p.adapt.require_labels()[sub], cfg)
    assert model.config.prior_mode is not None
    want = etn.derive_prior_mode(np.asarray(p.adapt.logits[sub], dtype=np.float64),
                                 p.adapt.require_labels()[sub], cfg)
    assert model.config.prior_mode == pytest.approx(want, rel=1e-12)


def test_checkpoint_roundtrip(tmp_path):
    p = pipeline(0)
    path = tmp_path / "model.etnc"
    etn.save_checkpoint(p.model, path)
    assert etn.peek_family(path) == "scalar"
    back = etn.load_checkpoint(path)
    assert back.family == p.model.family
    for key, val in p.model.params().items():
        assert np.array_equal(val, back.params()[key]), key
    assert np.array_equal(back.feat_mean, p.model.feat_mean)
    assert np.array_equal(back.feat_std, p.model.feat_std)
    cfg = back.config
    for field in ("family", "prior_mode", "prior_variance", "lam", "nu",
                  "mc_samples", "learning_rate", "hidden_dim", "odir_weight",
                  "seed"):
        assert getattr(cfg, field) == getattr(p.cfg, field), field
    # loaded model scores identically
    a = infer_scores(p.model, p.test, "ckpt")
    b = infer_scores(back, p.test, "ckpt")
    assert np.array_equal(a.mi, b.mi)
    # re-saving reproduces the file bitwise
    again = tmp_path / "again.etnc"
    etn.save_checkpoint(back, again)
    assert again.read_bytes() == path.read_bytes()


@pytest.mark.parametrize("family", ["vector", "matrix"])
def test_checkpoint_roundtrip_other_families(tmp_path, family):
    p = pipeline(0)
    sub = slice(0, 128)
    cfg = TrainConfig(family=family, epochs=2, mc_samples=4, hidden_dim=32)
    model, _ = etn.train(p.adapt.features[sub], p.adapt.logits[sub],
                         p.adapt.require_labels()[sub], cfg)
    path = tmp_path / "m.etnc"
    etn.save_checkpoint(model, path)
    assert etn.peek_family(path) == family
    back = etn.load_checkpoint(path)
    for key, val in model.params().items():
        assert np.array_equal(val, back.params()[key]), key


def test_checkpoint_corruption(tmp_path):
    p = pipeline(0)
    path = tmp_path / "model.etnc"
    etn.save_checkpoint(p.model, path)
    raw = bytearray(path.read_bytes())
    bad = tmp_path / "bad.etnc"

    for mutate, category in [
        (lambda b: b"XXXX" + bytes(b[4:]), "magic"),
        (lambda b: bytes(b[:4]) + (9).to_bytes(4, "little") + bytes(b[8:]), "version"),
        (lambda b: bytes(b[:7]), "truncated"),
        (lambda b: bytes(b[: len(b) - 4]), "truncated"),
        (lambda b: bytes(b) + b"\x00" * 8, "trailing"),
        (lambda b: bytes(b[:8]) + bytes([200]) + bytes(b[9:]), "family"),
    ]:
        bad.write_bytes(mutate(raw))
        with pytest.raises(FormatError) as err:
            etn.load_checkpoint(bad)
        assert err.value.category == category

    # a checkpoint of the wrong model kind is rejected by family tag
    static_tagged = raw.copy()
    static_tagged[8] = 3
    bad.write_bytes(bytes(static_tagged))
    with pytest.raises(FormatError) as err:
        etn.load_checkpoint(bad)
    assert err.value.category == "family"
    # but the family peek still identifies it
    assert etn.peek_family(bad) == "static"

    # corrupt an array length header: schema violation
    wrong = raw.copy()
    # first array header starts right after magic+version+tag
    wrong[9:17] = (99).to_bytes(8, "little")
    bad.write_bytes(bytes(wrong))
    with pytest.raises(FormatError) as err:
        etn.load_checkpoint(bad)
    assert err.value.category == "schema"
