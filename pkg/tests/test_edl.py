import math

import numpy as np
import pytest

from etnkit import dirichlet, edl
from etnkit.dirichlet import DirichletParams
from etnkit.edl import EvidenceConfig

import oracles


def cfg_for(c=3, nu=20.0, b=None):
    return EvidenceConfig(num_classes=c, b=np.ones(c) if b is None else b, nu=nu)


def test_config_validation():
    with pytest.raises(ValueError):
        EvidenceConfig(num_classes=1, b=np.ones(1))
    with pytest.raises(ValueError):
        EvidenceConfig(num_classes=3, b=np.ones(2))
    with pytest.raises(ValueError):
        EvidenceConfig(num_classes=3, b=np.array([1.0, -0.5, 1.0]))
    with pytest.raises(ValueError):
        EvidenceConfig(num_classes=3, b=np.ones(3), nu=0.5)
    with pytest.raises(ValueError):
        EvidenceConfig(num_classes=3, b=np.ones(3), lam=-1.0)
    with pytest.raises(ValueError):
        EvidenceConfig(num_classes=3, b=np.ones(3), f="exp")


def test_strict_validation_requires_dominating_target():
    cfg = EvidenceConfig(num_classes=3, b=np.full(3, 5.0), nu=6.0)
    with pytest.raises(ValueError):
        cfg.validate_strict()
    cfg_for(nu=100.0).validate_strict()


def test_transform_kinds_and_validation():
    assert float(edl.scalar_transform(2.0).value) == 2.0
    with pytest.raises(ValueError):
        edl.scalar_transform(-1.0)
    with pytest.raises(ValueError):
        edl.vector_transform([1.0, 0.0])
    with pytest.raises(ValueError):
        edl.matrix_transform(np.ones((2, 3)))
    # a permutation matrix has zeros on the diagonal and is rejected
    with pytest.raises(ValueError):
        edl.matrix_transform(np.array([[0.0, 1.0], [1.0, 0.0]]))
    with pytest.raises(ValueError):
        edl.TransformParam("affine", np.ones(2))


def test_apply_transform():
    z = np.array([1.0, -2.0, 0.5])
    assert np.allclose(edl.apply_transform(z, edl.scalar_transform(2.0)), 2.0 * z)
    v = edl.vector_transform([1.0, 2.0, 3.0])
    assert np.allclose(edl.apply_transform(z, v), [1.0, -4.0, 1.5])
    m = np.array([[2.0, 1.0, 0.0], [0.0, 1.0, 0.0], [0.5, 0.0, 3.0]])
    assert np.allclose(edl.apply_transform(z, edl.matrix_transform(m)), m @ z)
    with pytest.raises(ValueError):
        edl.apply_transform(z, edl.vector_transform([1.0, 2.0]))
    with pytest.raises(ValueError):
        edl.apply_transform(z, edl.matrix_transform(np.eye(2)))


def test_scalar_transform_preserves_argmax():
    rng = np.random.default_rng(0)
    for _ in range(50):
        z = rng.normal(size=5)
        a = float(rng.uniform(0.01, 100.0))
        zt = edl.apply_transform(z, edl.scalar_transform(a))
        assert zt.argmax() == z.argmax()


def test_logits_to_alpha():
    cfg = cfg_for(c=3)
    d = edl.logits_to_alpha(np.zeros(3), cfg)
    assert np.allclose(d.alpha, math.log(2.0) + 1.0)
    with pytest.raises(ValueError):
        edl.logits_to_alpha(np.zeros(4), cfg)
    # batch path agrees with the scalar path rowwise
    rng = np.random.default_rng(1)
    z = rng.normal(size=(10, 3)) * 3
    batch = edl.logits_to_alpha_batch(z, cfg.b)
    for i in range(10):
        assert np.allclose(batch[i], edl.logits_to_alpha(z[i], cfg).alpha, rtol=1e-14)


def test_target_alpha():
    cfg = cfg_for(c=4, nu=50.0)
    d = edl.target_alpha(2, cfg)
    assert np.allclose(d.alpha, [1.0, 1.0, 50.0, 1.0])
    with pytest.raises(ValueError):
        edl.target_alpha(4, cfg)
    batch = edl.target_alpha_batch(np.array([0, 2, 3]), cfg)
    assert batch.shape == (3, 4)
    assert np.allclose(batch[1], d.alpha)
    with pytest.raises(ValueError):
        edl.target_alpha_batch(np.array([0, 9]), cfg)


def test_target_digamma_pair():
    from etnkit import specfun

    cfg = cfg_for(c=5, nu=30.0)
    d_label, d_other = edl.target_digamma_pair(cfg)
    tot = specfun.digamma(30.0 + 4.0)
    assert d_label == pytest.approx(specfun.digamma(30.0) - tot, rel=1e-13)
    assert d_other == pytest.approx(specfun.digamma(1.0) - tot, rel=1e-13)
    dd = edl.target_digdiff_batch(np.array([1, 3]), cfg)
    assert dd.shape == (2, 5)
    assert dd[0, 1] == d_label and dd[0, 0] == d_other
    assert dd[1, 3] == d_label and dd[1, 4] == d_other


def test_cross_entropy_values():
    assert edl.cross_entropy(np.zeros(2), 0) == pytest.approx(math.log(2.0), rel=1e-14)
    assert edl.cross_entropy(np.array([5.0, 5.0, 5.0]), 1) == pytest.approx(math.log(3.0), rel=1e-14)
    # overflow-safe in both directions
    assert edl.cross_entropy(np.array([1000.0, 0.0]), 0) == pytest.approx(0.0, abs=1e-12)
    assert edl.cross_entropy(np.array([1000.0, 0.0]), 1) == pytest.approx(1000.0, rel=1e-12)
    with pytest.raises(ValueError):
        edl.cross_entropy(np.zeros(2), 2)


def test_cross_entropy_batch_matches_loop():
    rng = np.random.default_rng(2)
    z = rng.normal(size=(40, 4)) * 10
    y = rng.integers(0, 4, size=40)
    batch = edl.cross_entropy_batch(z, y)
    for i in range(40):
        assert batch[i] == pytest.approx(edl.cross_entropy(z[i], int(y[i])), rel=1e-13)


def test_margin():
    assert edl.margin(np.array([3.0, 1.0, 2.0]), 0) == 1.0
    assert edl.margin(np.array([3.0, 3.0]), 0) == 0.0
    assert edl.margin(np.array([1.0, 4.0]), 0) == -3.0
    with pytest.raises(ValueError):
        edl.margin(np.zeros(2), -1)
    rng = np.random.default_rng(3)
    z = rng.normal(size=(30, 5))
    y = rng.integers(0, 5, size=30)
    batch = edl.margin_batch(z, y)
    for i in range(30):
        assert batch[i] == pytest.approx(edl.margin(z[i], int(y[i])), rel=1e-14)


def test_reverse_kl_properties():
    rng = np.random.default_rng(4)
    for _ in range(20):
        c = int(rng.integers(2, 6))
        a = DirichletParams(rng.uniform(0.3, 20.0, c))
        b = DirichletParams(rng.uniform(0.3, 20.0, c))
        kl = edl.reverse_kl_dirichlet(a, b)
        assert kl >= 0.0
        assert edl.reverse_kl_dirichlet(a, a) == pytest.approx(0.0, abs=1e-12)
    # generally asymmetric
    a = DirichletParams([1.0, 8.0])
    b = DirichletParams([4.0, 2.0])
    assert abs(edl.reverse_kl_dirichlet(a, b) - edl.reverse_kl_dirichlet(b, a)) > 0.1
    with pytest.raises(ValueError):
        edl.reverse_kl_dirichlet(DirichletParams([1.0, 1.0]), DirichletParams([1.0, 1.0, 1.0]))


def test_reverse_kl_matches_quadrature():
    pairs = [([2.0, 3.0], [1.0, 1.0]),
             ([0.7, 5.0], [4.0, 0.9]),
             ([10.0, 2.0], [2.0, 10.0])]
    for a, b in pairs:
        got = edl.reverse_kl_dirichlet(DirichletParams(a), DirichletParams(b))
        want = oracles.quad_kl_beta(np.array(a), np.array(b))
        assert got == pytest.approx(want, abs=1e-8)


def test_reverse_kl_batch_matches_scalar():
    rng = np.random.default_rng(5)
    alpha = rng.uniform(0.5, 15.0, size=(25, 4))
    beta = rng.uniform(0.5, 15.0, size=(25, 4))
    batch = edl.reverse_kl_batch(alpha, beta)
    for i in range(25):
        want = edl.reverse_kl_dirichlet(DirichletParams(alpha[i]), DirichletParams(beta[i]))
        assert batch[i] == pytest.approx(want, rel=1e-11, abs=1e-11)


def test_reverse_kl_grad_matches_finite_difference():
    rng = np.random.default_rng(6)
    alpha = rng.uniform(0.5, 10.0, size=(10, 3))
    beta = rng.uniform(0.5, 10.0, size=(10, 3))
    grad = edl.reverse_kl_grad_alpha(alpha, beta)
    eps = 1e-6
    for i in range(10):
        for j in range(3):
            up = alpha.copy()
            dn = alpha.copy()
            up[i, j] += eps
            dn[i, j] -= eps
            fd = (edl.reverse_kl_batch(up, beta)[i] - edl.reverse_kl_batch(dn, beta)[i]) / (2 * eps)
            assert grad[i, j] == pytest.approx(fd, rel=1e-5, abs=1e-7)


def test_elbo_reconstruction_identity():
    # expected target log density = -H(target) - KL(target || prediction)
    rng = np.random.default_rng(7)
    for _ in range(20):
        c = int(rng.integers(2, 6))
        cfg = cfg_for(c=c, nu=float(rng.uniform(5.0, 200.0)))
        y = int(rng.integers(0, c))
        pred = DirichletParams(rng.uniform(0.4, 30.0, c))
        target = edl.target_alpha(y, cfg)
        got = edl.elbo_reconstruction(pred, y, cfg)
        want = (-dirichlet.differential_entropy(target)
                - edl.reverse_kl_dirichlet(target, pred))
        assert got == pytest.approx(want, rel=1e-10, abs=1e-10)


def test_elbo_reconstruction_maximized_at_target():
    cfg = cfg_for(c=3, nu=40.0)
    target = edl.target_alpha(1, cfg)
    best = edl.elbo_reconstruction(target, 1, cfg)
    assert best == pytest.approx(-dirichlet.differential_entropy(target), rel=1e-12)
    rng = np.random.default_rng(8)
    for _ in range(30):
        other = DirichletParams(rng.uniform(0.3, 60.0, 3))
        assert edl.elbo_reconstruction(other, 1, cfg) < best + 1e-12


def test_elbo_reconstruction_flat_prediction():
    # a flat prediction has constant density (C-1)! so the term is lgamma(C)
    for c in (2, 3, 5):
        cfg = cfg_for(c=c, nu=25.0)
        got = edl.elbo_reconstruction(DirichletParams(np.ones(c)), 0, cfg)
        assert got == pytest.approx(math.lgamma(c), rel=1e-12, abs=1e-12)


def test_elbo_reconstruction_matches_monte_carlo():
    # far-from-target prediction: noisy integrand, tolerance at ~4 SE
    cfg = cfg_for(c=3, nu=15.0)
    pred = DirichletParams([4.0, 9.0, 2.0])
    got = edl.elbo_reconstruction(pred, 2, cfg)
    target = edl.target_alpha(2, cfg)
    want = oracles.mc_expected_logpdf(pred.alpha, target.alpha, n_draws=200_000, seed=9)
    assert got == pytest.approx(want, abs=0.1)
    # near-target prediction: low-variance integrand, tight tolerance
    near = DirichletParams([1.2, 1.1, 14.0])
    got = edl.elbo_reconstruction(near, 2, cfg)
    want = oracles.mc_expected_logpdf(near.alpha, target.alpha, n_draws=200_000, seed=10)
    assert got == pytest.approx(want, abs=0.02)


def test_elbo_reconstruction_dimension_mismatch():
    cfg = cfg_for(c=3)
    with pytest.raises(ValueError):
        edl.elbo_reconstruction(DirichletParams([1.0, 2.0]), 0, cfg)
