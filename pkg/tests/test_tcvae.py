import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import constants
from fskgc import tcvae
from fskgc.config import ModelConfig
from fskgc.diffcore import ParameterSet, Tensor, finite_difference_check
from fskgc.tcvae import GaussianParams

CFG = ModelConfig()


def _g(mu, sigma):
    return GaussianParams(Tensor(np.asarray(mu, float)), Tensor(np.asarray(sigma, float)))


@pytest.fixture(scope="module")
def full():
    return constants(tcvae.init_tcvae(CFG, np.random.default_rng(0)))


def _o(seed, u=100):
    rng = np.random.default_rng(seed)
    return [Tensor(rng.normal(size=u)) for _ in range(3)]


def test_recognize_shapes_and_positivity(full):
    q = tcvae.recognize(*_o(1), full, CFG)
    assert q.mu.shape == q.sigma.shape == (50,)
    assert np.all(q.sigma.data > 0)
    q2 = tcvae.recognize(*_o(1), full, CFG)
    assert np.array_equal(q.mu.data, q2.mu.data) and np.array_equal(q.sigma.data, q2.sigma.data)


def test_prior_shapes_and_dependence_on_relation(full):
    a = tcvae.prior(_o(1)[1], full, CFG)
    b = tcvae.prior(_o(2)[1], full, CFG)
    assert a.mu.shape == (50,) and np.all(a.sigma.data > 0)
    assert not np.allclose(a.mu.data, b.mu.data)


def test_reparameterize_examples():
    assert tcvae.reparameterize(_g([0.3], [2.0]), np.array([1.0])).data.tolist() == [2.3]
    g = _g([0.1, -0.4], [3.0, 0.5])
    assert np.array_equal(tcvae.reparameterize(g, np.zeros(2)).data, g.mu.data)


def test_reparameterize_monte_carlo_mean():
    rng = np.random.default_rng(0)
    g = _g([0.3, -1.0], [2.0, 0.5])
    n = 10**5
    z = g.mu.data + g.sigma.data * rng.standard_normal((n, 2))
    assert np.all(np.abs(z.mean(axis=0) - g.mu.data) <= 3 * g.sigma.data / np.sqrt(n))
    # same draws through the library function
    zs = np.stack([tcvae.reparameterize(g, e).data for e in rng.standard_normal((1000, 2))])
    assert zs.shape == (1000, 2)


def test_generate_shape_and_purity(full):
    z = Tensor(np.random.default_rng(0).normal(size=50))
    o_r = _o(3)[1]
    g = tcvae.generate(z, o_r, full, CFG)
    assert g.shape == (3, 100)
    assert np.array_equal(g.data, tcvae.generate(z, o_r, full, CFG).data)


def test_kl_examples():
    g = _g([0.2, -1.0], [1.5, 0.3])
    assert float(tcvae.kl_divergence(g, g).data) == 0.0
    assert float(tcvae.kl_divergence(_g([1.0], [1.0]), _g([0.0], [1.0])).data) == 0.5


def test_kl_matches_monte_carlo():
    rng = np.random.default_rng(11)
    mq, mp = rng.normal(size=50), rng.normal(size=50)
    sq, sp = np.exp(rng.normal(scale=0.3, size=50)), np.exp(rng.normal(scale=0.3, size=50))
    kl = float(tcvae.kl_divergence(_g(mq, sq), _g(mp, sp)).data)
    z = mq + sq * rng.standard_normal((10**5, 50))
    log_q = -np.log(sq) - 0.5 * ((z - mq) / sq) ** 2
    log_p = -np.log(sp) - 0.5 * ((z - mp) / sp) ** 2
    samples = (log_q - log_p).sum(axis=1)
    se = samples.std(ddof=1) / np.sqrt(samples.size)
    assert abs(samples.mean() - kl) < 3 * se


@settings(max_examples=50, deadline=None)
@given(seed=st.integers(0, 2**31), d=st.integers(1, 20))
def test_kl_nonnegative(seed, d):
    rng = np.random.default_rng(seed)
    q = _g(rng.normal(scale=3, size=d), np.exp(rng.normal(size=d)))
    p = _g(rng.normal(scale=3, size=d), np.exp(rng.normal(size=d)))
    assert float(tcvae.kl_divergence(q, p).data) >= -1e-9


def test_reconstruction_examples():
    o = Tensor(np.random.default_rng(0).normal(size=(3, 2)))
    assert float(tcvae.reconstruction_loss(o, o).data) == 0.0
    assert float(tcvae.reconstruction_loss(Tensor(np.ones((3, 2))), Tensor(np.zeros((3, 2)))).data) == -3.0


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 2**31))
def test_reconstruction_nonpositive(seed):
    rng = np.random.default_rng(seed)
    assert float(tcvae.reconstruction_loss(Tensor(rng.normal(size=(3, 5))), Tensor(rng.normal(size=(3, 5)))).data) <= 0


def test_prior_regularizer_examples():
    assert float(tcvae.prior_regularizer(_g([0.0], [1.0]), CFG).data) == pytest.approx(-0.0001, abs=1e-15)
    assert float(tcvae.prior_regularizer(_g([10000.0], [1.0]), CFG).data) == pytest.approx(-0.5001, abs=1e-15)


def test_prior_regularizer_matches_direct_sum():
    rng = np.random.default_rng(4)
    mu, sigma = rng.normal(scale=100, size=50), np.exp(rng.normal(size=50))
    direct = 0.0
    for m, s in zip(mu, sigma):
        direct += -m * m / (2 * 10000.0**2) + 0.0001 * (np.log(s) - s)
    assert abs(float(tcvae.prior_regularizer(_g(mu, sigma), CFG).data) - direct) < 1e-12


def test_log_sigma_clamped(full):
    cfg = ModelConfig(dim=2, latent_dim=1, tcvae_hidden=2)
    p = {"tcvae/prior/ff/w": Tensor(np.zeros((2, 2))), "tcvae/prior/ff/b": Tensor(np.zeros(2)),
         "tcvae/prior/mu/w": Tensor(np.zeros((2, 1))), "tcvae/prior/mu/b": Tensor(np.zeros(1)),
         "tcvae/prior/logsig/w": Tensor(np.zeros((2, 1))), "tcvae/prior/logsig/b": Tensor(np.array([500.0]))}
    pr = tcvae.prior(Tensor(np.ones(2)), p, cfg)
    assert pr.sigma.data[0] == np.exp(10.0)


def test_augment_counts_and_determinism(full):
    o_r = _o(5)[1]
    assert tcvae.augment(o_r, 0, full, CFG, np.random.default_rng(0)) == []
    a = tcvae.augment(o_r, 8, full, CFG, np.random.default_rng(1))
    b = tcvae.augment(o_r, 8, full, CFG, np.random.default_rng(1))
    assert len(a) == 8 and all(g.shape == (3, 100) and np.all(np.isfinite(g.data)) for g in a)
    assert all(np.array_equal(x.data, y.data) for x, y in zip(a, b))


def test_tcvae_gradients_toy(toy_model):
    params = ParameterSet(tcvae.init_tcvae(toy_model, np.random.default_rng(0)))
    rng = np.random.default_rng(1)
    o_h, o_r, o_t = (rng.normal(size=4) for _ in range(3))
    eps = rng.standard_normal(3)

    def loss(p):
        q = tcvae.recognize(Tensor(o_h), Tensor(o_r), Tensor(o_t), p, toy_model)
        pr = tcvae.prior(Tensor(o_r), p, toy_model)
        g = tcvae.generate(tcvae.reparameterize(q, eps), Tensor(o_r), p, toy_model)
        o = Tensor(np.stack([o_h, o_r, o_t]))
        return -tcvae.reconstruction_loss(o, g) + tcvae.kl_divergence(q, pr) - tcvae.prior_regularizer(pr, toy_model)

    rep = finite_difference_check(loss, params)
    assert rep.ok and rep.worst < 1e-3, rep.max_rel_error
