"""Description encoder: relation CNN, memory-based traits, trait-guided entity CNN.

All functions take ``p``, a dict of parameter name to :class:`Tensor`, so the
same code serves training (differentiable leaves) and evaluation (constants).
Sequences are ``(L, u)`` or batched ``(B, L, u)``.
"""
from __future__ import annotations

import numpy as np

from .config import ModelConfig
from .diffcore import (
    Tensor,
    conv1d,
    cosine_rows,
    embedding,
    instance_norm,
    max_pool,
    stack,
    xavier_init,
)

MEMORIES = ("mem_rh", "mem_h", "mem_rt", "mem_t")


class SequenceTooShort(ValueError):
    pass


def init_encoder(cfg: ModelConfig, vocab_size: int, rng: np.random.Generator) -> dict[str, np.ndarray]:
    u, w = cfg.dim, cfg.filter_width
    out = {"enc/embed": xavier_init((vocab_size, u), rng)}
    for i in range(cfg.n_layers):
        for j in (1, 2):
            out[f"enc/block{i}/conv{j}/w"] = xavier_init((w * u, u), rng)
            out[f"enc/block{i}/conv{j}/b"] = xavier_init((u,), rng)
        out[f"enc/block{i}/norm/scale"] = np.ones(u)
        out[f"enc/block{i}/norm/shift"] = xavier_init((u,), rng)
    for i in range(1, cfg.n_layers):
        for name in ("q", "k", "v"):
            out[f"enc/attn{i}/{name}"] = xavier_init((u, u), rng)
    for name in MEMORIES:
        out[f"enc/{name}"] = xavier_init((cfg.memory_size, u), rng)
    return out


def conv_block(x: Tensor, p: dict, i: int, cfg: ModelConfig) -> Tensor:
    """conv -> conv -> instance norm -> tanh; keeps the sequence length."""
    if x.shape[-2] < cfg.filter_width:
        raise SequenceTooShort(f"length {x.shape[-2]} < filter width {cfg.filter_width}")
    pad = cfg.filter_width // 2
    pre = f"enc/block{i}"
    h = conv1d(x, p[f"{pre}/conv1/w"], p[f"{pre}/conv1/b"], cfg.filter_width, pad)
    h = conv1d(h, p[f"{pre}/conv2/w"], p[f"{pre}/conv2/b"], cfg.filter_width, pad)
    h = instance_norm(h, cfg.norm_eps) * p[f"{pre}/norm/scale"] + p[f"{pre}/norm/shift"]
    return h.tanh()


def attention_weights(x: Tensor, p: dict, i: int) -> tuple[Tensor, Tensor]:
    q = x @ p[f"enc/attn{i}/q"]
    k = x @ p[f"enc/attn{i}/k"]
    v = x @ p[f"enc/attn{i}/v"]
    scores = (q @ k.swapaxes(-1, -2)) * (1.0 / np.sqrt(x.shape[-1]))
    return scores.softmax(axis=-1), v


def self_attention(x: Tensor, p: dict, i: int) -> Tensor:
    """Single-head scaled dot-product self-attention, no positional terms."""
    a, v = attention_weights(x, p, i)
    return a @ v


def _pool(x: Tensor, layer: int, cfg: ModelConfig) -> Tensor:
    if layer < cfg.n_layers - 1:
        return max_pool(x, cfg.pool_stride)
    return x.mean(axis=-2)


def _embed(ids: np.ndarray, p: dict) -> Tensor:
    return embedding(p["enc/embed"], ids)


def encode_relation(d_r: np.ndarray, p: dict, cfg: ModelConfig) -> Tensor:
    x = _embed(d_r, p)
    for i in range(cfg.n_layers):
        x = _pool(conv_block(x, p, i, cfg), i, cfg)
    return x


def memory_address(o_r: Tensor, mem_rel: Tensor, cfg: ModelConfig) -> Tensor:
    """Softmax over cosine similarities between ``o_r`` and each memory row."""
    return cosine_rows(o_r, mem_rel, cfg.cos_eps).softmax(axis=-1)


def compute_trait(o_r: Tensor, mem_rel: Tensor, mem_ent: Tensor, cfg: ModelConfig) -> Tensor:
    return memory_address(o_r, mem_rel, cfg) @ mem_ent


def relation_traits(o_r: Tensor, p: dict, cfg: ModelConfig) -> tuple[Tensor, Tensor]:
    t_head = compute_trait(o_r, p["enc/mem_rh"], p["enc/mem_h"], cfg)
    t_tail = compute_trait(o_r, p["enc/mem_rt"], p["enc/mem_t"], cfg)
    return t_head, t_tail


def trait_weights(s1: Tensor, trait: Tensor, cfg: ModelConfig) -> Tensor:
    """Distribution over positions of ``s1`` from cosine with the trait."""
    return cosine_rows(trait, s1, cfg.cos_eps).softmax(axis=-1)


def trait_reweight(s1: Tensor, trait: Tensor, cfg: ModelConfig) -> Tensor:
    # scaled by L so that a uniform distribution leaves s1 unchanged
    a = trait_weights(s1, trait, cfg) * float(s1.shape[-2])
    return s1 * a.reshape(*a.shape, 1)


def entity_tail(s1: Tensor, p: dict, cfg: ModelConfig) -> Tensor:
    """Layers after the first block: pool, then (block, attention, pool) repeats."""
    x = _pool(s1, 0, cfg)
    for i in range(1, cfg.n_layers):
        x = conv_block(x, p, i, cfg)
        x = self_attention(x, p, i)
        x = _pool(x, i, cfg)
    return x


def encode_entity(
    d_e: np.ndarray, trait: Tensor | None, p: dict, cfg: ModelConfig, use_trait: bool | None = None
) -> Tensor:
    use_trait = cfg.use_trait if use_trait is None else use_trait
    s1 = conv_block(_embed(d_e, p), p, 0, cfg)
    if use_trait:
        s1 = trait_reweight(s1, trait, cfg)
    return entity_tail(s1, p, cfg)


def encode_entity_rows(descs: list[np.ndarray], traits: list[Tensor], p: dict, cfg: ModelConfig) -> list[Tensor]:
    """Differentiable encoding of several entities, each under its own trait.

    Equal-length descriptions share one batched forward pass.
    """
    groups: dict[int, list[int]] = {}
    for i, d in enumerate(descs):
        groups.setdefault(len(d), []).append(i)
    out: list[Tensor | None] = [None] * len(descs)
    for _, idxs in groups.items():
        if len(idxs) == 1:
            i = idxs[0]
            out[i] = encode_entity(descs[i], traits[i], p, cfg)
            continue
        ids = np.stack([descs[i] for i in idxs])
        trait = stack([traits[i] for i in idxs]) if cfg.use_trait else None
        enc = encode_entity(ids, trait, p, cfg)
        for row, i in enumerate(idxs):
            out[i] = enc[row]
    return out


def encode_triplet(d_h, d_r, d_t, p: dict, cfg: ModelConfig, use_trait: bool | None = None):
    o_r = encode_relation(d_r, p, cfg)
    t_head, t_tail = relation_traits(o_r, p, cfg)
    o_h = encode_entity(d_h, t_head, p, cfg, use_trait)
    o_t = encode_entity(d_t, t_tail, p, cfg, use_trait)
    return o_h, o_r, o_t


def encode_entities(descs: list[np.ndarray], trait: Tensor | None, p: dict, cfg: ModelConfig) -> Tensor:
    """Encode many entities under one trait, batching equal-length descriptions.

    Returns an ``(n, u)`` constant tensor in input order; matches
    :func:`encode_entity` per item up to BLAS rounding.
    """
    groups: dict[int, list[int]] = {}
    for idx, d in enumerate(descs):
        groups.setdefault(len(d), []).append(idx)
    out = np.empty((len(descs), cfg.dim))
    for _, idxs in groups.items():
        ids = np.stack([descs[i] for i in idxs])
        out[idxs] = encode_entity(ids, trait, p, cfg).data
    return Tensor(out)
