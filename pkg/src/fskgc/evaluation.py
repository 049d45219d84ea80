"""Tail ranking and MRR / Hits@P over few-shot relations."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import encoder as enc
from .config import ExperimentConfig
from .data import KnowledgeGraphDataset, Triplet
from .diffcore import ParameterSet, no_grad
from .objective import score_numpy


class EmptyInput(ValueError):
    pass


@dataclass(frozen=True)
class RankResult:
    relation: int
    query: Triplet
    rank: int
    candidate_count: int


@dataclass
class MetricsReport:
    mrr: float
    hits: dict[int, float]
    per_relation: dict[str, dict] = field(default_factory=dict)
    seeds: list[int] = field(default_factory=list)
    count: int = 0

    def to_dict(self) -> dict:
        return {
            "mrr": self.mrr,
            "hits": {str(k): v for k, v in sorted(self.hits.items())},
            "per_relation": self.per_relation,
            "seeds": list(self.seeds),
            "count": self.count,
        }


def rank_of(scores: np.ndarray, true_index: int) -> int:
    """Pessimistic rank of ``true_index`` under ascending ``scores``."""
    s = scores[true_index]
    return 1 + int(np.sum(scores < s)) + int(np.sum(scores == s)) - 1


def candidate_scores(
    W: ParameterSet, relation: int, heads: list[int], ds: KnowledgeGraphDataset, cfg: ExperimentConfig
) -> np.ndarray:
    """(len(heads), n_entities) matrix of scores C(h, r, e) for every entity e."""
    mcfg = cfg.model
    with no_grad():
        p = W.constants()
        o_r = enc.encode_relation(ds.relation_desc[relation], p, mcfg)
        t_head, t_tail = enc.relation_traits(o_r, p, mcfg)
        cands = enc.encode_entities(ds.entity_desc, t_tail, p, mcfg).data
        o_h = enc.encode_entities([ds.entity_desc[h] for h in heads], t_head, p, mcfg).data
        return score_numpy(o_h[:, None, :], o_r.data[None, None, :], cands[None, :, :])


def rank_tails(
    W: ParameterSet, relation: int, queries: list[Triplet], ds: KnowledgeGraphDataset, cfg: ExperimentConfig
) -> list[RankResult]:
    if not queries:
        return []
    heads = sorted({q.head for q in queries})
    row = {h: i for i, h in enumerate(heads)}
    scores = candidate_scores(W, relation, heads, ds, cfg)
    out = []
    for q in queries:
        s = scores[row[q.head]]
        if cfg.eval.filtered:
            others = [t for t in ds.known_tails(q.head, q.relation) if t != q.tail]
            keep = np.ones(len(s), dtype=bool)
            keep[others] = False
            true_idx = int(np.sum(keep[: q.tail]))
            s = s[keep]
        else:
            true_idx = q.tail
        out.append(RankResult(relation, q, rank_of(s, true_idx), len(s)))
    return out


def rank_tail(W: ParameterSet, query: Triplet, ds: KnowledgeGraphDataset, cfg: ExperimentConfig) -> RankResult:
    return rank_tails(W, query.relation, [query], ds, cfg)[0]


def compute_metrics(ranks: list[RankResult], hits_at=(1, 5, 10), ds: KnowledgeGraphDataset | None = None) -> MetricsReport:
    if not ranks:
        raise EmptyInput("no ranks to aggregate")
    r = np.asarray([x.rank for x in ranks], dtype=np.float64)
    report = MetricsReport(
        mrr=float(np.mean(1.0 / r)),
        hits={int(P): float(np.mean(r <= P)) for P in hits_at},
        count=len(ranks),
    )
    by_rel: dict[int, list[int]] = {}
    for x in ranks:
        by_rel.setdefault(x.relation, []).append(x.rank)
    for rel, rs in sorted(by_rel.items()):
        rr = np.asarray(rs, dtype=np.float64)
        name = ds.relation_names[rel] if ds is not None else str(rel)
        report.per_relation[name] = {
            "mrr": float(np.mean(1.0 / rr)),
            "hits": {str(int(P)): float(np.mean(rr <= P)) for P in hits_at},
            "count": len(rs),
        }
    return report


def meta_evaluate(
    W: ParameterSet,
    ds: KnowledgeGraphDataset,
    split: str,
    k: int,
    cfg: ExperimentConfig,
    rng: np.random.Generator,
) -> MetricsReport:
    """Adapt to each relation of ``split`` from k shots, then rank its queries.

    ``W`` itself is never modified; each relation starts from it.
    """
    from .meta import meta_test_adapt

    ranks: list[RankResult] = []
    for relation in ds.splits[split]:
        adapted, queries = meta_test_adapt(W, relation, ds, k, cfg, rng)
        ranks.extend(rank_tails(adapted, relation, queries, ds, cfg))
    return compute_metrics(ranks, cfg.eval.hits_at, ds)


def random_rank_mrr(n: int) -> float:
    """E[1/rank] for a rank uniform on 1..n, i.e. H_n / n."""
    return float(np.sum(1.0 / np.arange(1, n + 1)) / n)
