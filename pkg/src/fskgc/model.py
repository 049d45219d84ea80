"""Parameter construction and the per-task training losses."""
from __future__ import annotations

import numpy as np

from . import encoder as enc
from . import tcvae
from .config import ModelConfig
from .data import KnowledgeGraphDataset, Triplet
from .diffcore import ParameterSet, Tensor, concat
from .objective import LossWeights, kgc_loss, score_triplet, total_loss


def init_params(cfg: ModelConfig, vocab_size: int, rng: np.random.Generator) -> ParameterSet:
    arrays = enc.init_encoder(cfg, vocab_size, rng)
    arrays.update(tcvae.init_tcvae(cfg, rng))
    return ParameterSet(arrays)


def task_loss(
    p: dict,
    ds: KnowledgeGraphDataset,
    positive: Triplet,
    negative: Triplet,
    eps: np.ndarray,
    cfg: ModelConfig,
) -> tuple[Tensor, dict[str, float]]:
    """Meta-training objective for one positive/negative pair.

    ``eps`` is the standard-normal draw for the posterior sample, supplied by
    the caller so the loss is a deterministic function of ``p``.
    """
    o_r = enc.encode_relation(ds.relation_desc[positive.relation], p, cfg)
    t_head, t_tail = enc.relation_traits(o_r, p, cfg)
    o_h, o_t, o_neg = enc.encode_entity_rows(
        [ds.entity_desc[e] for e in (positive.head, positive.tail, negative.tail)],
        [t_head, t_tail, t_tail],
        p,
        cfg,
    )
    c_pos = score_triplet(o_h, o_r, o_t)
    c_neg = score_triplet(o_h, o_r, o_neg)
    l_kgc = kgc_loss(c_pos, c_neg, cfg.margin)
    parts = {"kgc": float(l_kgc.data)}
    if not cfg.use_tcvae:
        return l_kgc, parts
    if cfg.detach_tcvae_inputs:
        o_h, o_r, o_t = o_h.detach(), o_r.detach(), o_t.detach()
    q = tcvae.recognize(o_h, o_r, o_t, p, cfg)
    pr = tcvae.prior(o_r, p, cfg)
    g = tcvae.generate(tcvae.reparameterize(q, eps), o_r, p, cfg)
    o = concat([o_h.reshape(1, -1), o_r.reshape(1, -1), o_t.reshape(1, -1)], axis=0)
    l_rec = tcvae.reconstruction_loss(o, g)
    l_kld = tcvae.kl_divergence(q, pr)
    l_reg = tcvae.prior_regularizer(pr, cfg)
    parts.update(rec=float(l_rec.data), kld=float(l_kld.data), reg=float(l_reg.data))
    total = total_loss(l_kgc, l_rec, l_kld, l_reg, LossWeights.from_model(cfg))
    parts["total"] = float(total.data)
    return total, parts


def _encode_group(ds: KnowledgeGraphDataset, entities, trait, p, cfg) -> list[Tensor]:
    """Differentiable batched entity encoding; returns one (n_i, u) tensor per length group."""
    groups: dict[int, list[int]] = {}
    for e in entities:
        groups.setdefault(len(ds.entity_desc[e]), []).append(e)
    out = []
    for _, es in sorted(groups.items()):
        ids = np.stack([ds.entity_desc[e] for e in es])
        out.append((es, enc.encode_entity(ids, trait, p, cfg)))
    return out


def adaptation_loss(
    p: dict,
    ds: KnowledgeGraphDataset,
    relation: int,
    support: list[Triplet],
    negatives: list[Triplet],
    generated: np.ndarray,
    generated_neg_entities: np.ndarray,
    cfg: ModelConfig,
) -> Tensor:
    """Mean hinge loss over real support pairs and generated positives.

    ``generated`` is a constant (K, 3, u) array; each generated triplet is
    contrasted with (g_h, g_r, o_t') where o_t' encodes a random entity under
    the relation's tail trait.
    """
    o_r = enc.encode_relation(ds.relation_desc[relation], p, cfg)
    t_head, t_tail = enc.relation_traits(o_r, p, cfg)
    terms = []
    ents, traits = [], []
    for pos, neg in zip(support, negatives):
        ents += [pos.head, pos.tail, neg.tail]
        traits += [t_head, t_tail, t_tail]
    encoded = enc.encode_entity_rows([ds.entity_desc[e] for e in ents], traits, p, cfg)
    for i in range(len(support)):
        o_h, o_t, o_n = encoded[3 * i : 3 * i + 3]
        terms.append(kgc_loss(score_triplet(o_h, o_r, o_t), score_triplet(o_h, o_r, o_n), cfg.margin))
    total = terms[0]
    for t in terms[1:]:
        total = total + t
    n_terms = len(terms)
    if len(generated):
        g = np.asarray(generated)
        c_pos = np.abs(g[:, 0] + g[:, 1] - g[:, 2]).sum(axis=-1)
        slot = {e: [] for e in generated_neg_entities.tolist()}
        for j, e in enumerate(generated_neg_entities.tolist()):
            slot[e].append(j)
        for es, enc_t in _encode_group(ds, sorted(slot), t_tail, p, cfg):
            rows = [j for e in es for j in slot[e]]
            which = [i for i, e in enumerate(es) for _ in slot[e]]
            neg_t = enc_t[np.asarray(which)]
            c_neg = score_triplet(Tensor(g[rows, 0] + g[rows, 1]), 0.0, neg_t)
            total = total + kgc_loss(Tensor(c_pos[rows]), c_neg, cfg.margin).sum()
        n_terms += len(g)
    return total * (1.0 / n_terms)

