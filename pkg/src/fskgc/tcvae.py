"""Triplet conditional VAE: recognition tree, conditional prior, deconv generator."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .config import ModelConfig
from .diffcore import Tensor, as_tensor, concat, conv1d, stack, xavier_init


@dataclass
class GaussianParams:
    mu: Tensor
    sigma: Tensor


def init_tcvae(cfg: ModelConfig, rng: np.random.Generator) -> dict[str, np.ndarray]:
    u, hid, dz = cfg.dim, cfg.tcvae_hidden, cfg.latent_dim
    out = {}
    for name, c_in in (("pair_hr", u), ("pair_rt", u), ("root", hid)):
        out[f"tcvae/rec/{name}/w"] = xavier_init((2 * c_in, hid), rng)
        out[f"tcvae/rec/{name}/b"] = xavier_init((hid,), rng)
    for head in ("mu", "logsig"):
        out[f"tcvae/rec/{head}/w"] = xavier_init((hid, dz), rng)
        out[f"tcvae/rec/{head}/b"] = xavier_init((dz,), rng)
    out["tcvae/prior/ff/w"] = xavier_init((u, hid), rng)
    out["tcvae/prior/ff/b"] = xavier_init((hid,), rng)
    for head in ("mu", "logsig"):
        out[f"tcvae/prior/{head}/w"] = xavier_init((hid, dz), rng)
        out[f"tcvae/prior/{head}/b"] = xavier_init((dz,), rng)
    out["tcvae/gen/ff/w"] = xavier_init((dz + u, hid), rng)
    out["tcvae/gen/ff/b"] = xavier_init((hid,), rng)
    for name, c_in in (("deconv1", hid), ("deconv2", hid)):
        for tap in (0, 1):
            out[f"tcvae/gen/{name}/w{tap}"] = xavier_init((c_in, u if name == "deconv2" else hid), rng)
        out[f"tcvae/gen/{name}/b"] = xavier_init((u if name == "deconv2" else hid,), rng)
    return out


def _pair_block(a: Tensor, b: Tensor, p: dict, name: str) -> Tensor:
    # (2, c) matrix, width-2 valid convolution -> (1, hid)
    x = stack([a, b], axis=0)
    y = conv1d(x, p[f"tcvae/rec/{name}/w"], p[f"tcvae/rec/{name}/b"], 2, 0)
    return y.tanh().reshape(-1)


def _gaussian_head(h: Tensor, p: dict, prefix: str, cfg: ModelConfig) -> GaussianParams:
    mu = h @ p[f"{prefix}/mu/w"] + p[f"{prefix}/mu/b"]
    logsig = h @ p[f"{prefix}/logsig/w"] + p[f"{prefix}/logsig/b"]
    c = cfg.log_sigma_clamp
    return GaussianParams(mu, logsig.clip(-c, c).exp())


def recognize(o_h: Tensor, o_r: Tensor, o_t: Tensor, p: dict, cfg: ModelConfig) -> GaussianParams:
    left = _pair_block(o_h, o_r, p, "pair_hr")
    right = _pair_block(o_r, o_t, p, "pair_rt")
    root = _pair_block(left, right, p, "root")
    return _gaussian_head(root, p, "tcvae/rec", cfg)


def prior(o_r: Tensor, p: dict, cfg: ModelConfig) -> GaussianParams:
    h = (o_r @ p["tcvae/prior/ff/w"] + p["tcvae/prior/ff/b"]).tanh()
    return _gaussian_head(h, p, "tcvae/prior", cfg)


def reparameterize(g: GaussianParams, eps) -> Tensor:
    return g.mu + g.sigma * as_tensor(eps)


def _deconv(x: Tensor, p: dict, name: str) -> Tensor:
    """Transposed width-2, stride-1 convolution: (L, c_in) -> (L + 1, c_out)."""
    a = x @ p[f"tcvae/gen/{name}/w0"]
    b = x @ p[f"tcvae/gen/{name}/w1"]
    zero = Tensor(np.zeros((1, a.shape[-1])))
    return concat([a, zero], axis=0) + concat([zero, b], axis=0) + p[f"tcvae/gen/{name}/b"]


def generate(z: Tensor, o_r: Tensor, p: dict, cfg: ModelConfig) -> Tensor:
    """Return G as a (3, u) tensor with rows (g_h, g_r, g_t)."""
    h = (concat([z, o_r], axis=0) @ p["tcvae/gen/ff/w"] + p["tcvae/gen/ff/b"]).tanh()
    h = _deconv(h.reshape(1, -1), p, "deconv1").tanh()
    return _deconv(h, p, "deconv2")


def kl_divergence(q: GaussianParams, p: GaussianParams) -> Tensor:
    """KL(q || p) for diagonal Gaussians."""
    var_ratio = (q.sigma / p.sigma) ** 2
    mean_term = ((q.mu - p.mu) / p.sigma) ** 2
    return ((p.sigma / q.sigma).log() + 0.5 * (var_ratio + mean_term) - 0.5).sum()


def reconstruction_loss(o: Tensor, g: Tensor) -> Tensor:
    """Unit-variance Gaussian log-likelihood of O under G, constants dropped."""
    d = o - g
    return -0.5 * (d * d).sum()


def prior_regularizer(pr: GaussianParams, cfg: ModelConfig) -> Tensor:
    mu, sigma = pr.mu, pr.sigma
    return (
        -(mu * mu) * (1.0 / (2 * cfg.sigma_mu**2)) + cfg.sigma_sigma * (sigma.log() - sigma)
    ).sum()


def augment(o_r: Tensor, k: int, p: dict, cfg: ModelConfig, rng: np.random.Generator) -> list[Tensor]:
    """Draw ``k`` generated triplets from the relation-conditioned prior."""
    if k == 0:
        return []
    pr = prior(o_r, p, cfg)
    return [generate(reparameterize(pr, rng.standard_normal(cfg.latent_dim)), o_r, p, cfg) for _ in range(k)]
