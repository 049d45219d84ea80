"""Reptile meta-training and few-shot adaptation."""
from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from . import encoder as enc
from . import tcvae
from .config import ExperimentConfig
from .data import EmptySplit, KnowledgeGraphDataset, TaskBatch, Triplet, sample_negative, sample_task
from .diffcore import (
    AdamState,
    ParameterSet,
    SGDState,
    adam_step,
    mean_of,
    no_grad,
    sgd_step,
    value_and_grad,
)
from .model import adaptation_loss, init_params, task_loss

log = logging.getLogger(__name__)


class TooFewTriplets(ValueError):
    pass


@dataclass(frozen=True)
class Optimizer:
    """Pairs a state factory with its update rule."""

    fresh: Callable
    step: Callable


ADAM = Optimizer(AdamState.fresh, adam_step)
SGD = Optimizer(SGDState.fresh, sgd_step)


def inner_train(
    W: ParameterSet,
    task: TaskBatch,
    ds: KnowledgeGraphDataset,
    cfg: ExperimentConfig,
    rng: np.random.Generator,
    optimizer: Optimizer = ADAM,
    history: list | None = None,
    loss=task_loss,
) -> ParameterSet:
    """Run S optimizer steps on one task from a copy of ``W``.

    Step 1 uses the task's own negative; later steps redraw it. Each step
    draws a fresh posterior noise vector from ``rng`` before anything else.
    ``loss(p, ds, positive, negative, eps, model_cfg) -> (Tensor, dict)``
    can be swapped out in tests.
    """
    params = W.copy()
    state = optimizer.fresh(params)
    mcfg = cfg.model
    negative = task.negative
    for s in range(cfg.train.inner_steps):
        if s > 0:
            negative = sample_negative(task.positive, ds, rng)
        eps = rng.standard_normal(mcfg.latent_dim)
        parts = {}

        def loss_fn(p, negative=negative, eps=eps):
            value, info = loss(p, ds, task.positive, negative, eps, mcfg)
            parts.update(info)
            return value

        _, grads = value_and_grad(loss_fn, params)
        optimizer.step(params, grads, state, cfg.train.inner_lr)
        if history is not None:
            history.append(parts)
    return params


def reptile_update(W: ParameterSet, inner_results: list[ParameterSet], outer_lr: float) -> ParameterSet:
    """W + outer_lr * (mean(W_i) - W)."""
    if not inner_results:
        raise ValueError("need at least one inner result")
    avg = mean_of(inner_results)
    W.check_compatible(avg)
    return W + (avg - W).scale(outer_lr)


def meta_iteration(
    W: ParameterSet,
    ds: KnowledgeGraphDataset,
    cfg: ExperimentConfig,
    rng: np.random.Generator,
    optimizer: Optimizer = ADAM,
    history: list | None = None,
) -> ParameterSet:
    """One outer step: B independent inner runs from W, then the Reptile update.

    Each inner run gets its own child stream from ``rng.spawn``, so the
    runs are order-independent.
    """
    results = []
    for stream in rng.spawn(cfg.train.batch_size):
        task = sample_task(ds, "train", stream)
        results.append(inner_train(W, task, ds, cfg, stream, optimizer, history))
    return reptile_update(W, results, cfg.train.outer_lr)


@dataclass
class TrainingResult:
    params: ParameterSet
    best_epoch: int
    best_val_mrr: float
    log: list[dict] = field(default_factory=list)


def meta_train(
    ds: KnowledgeGraphDataset,
    cfg: ExperimentConfig,
    rng: np.random.Generator,
    init: ParameterSet | None = None,
    on_epoch: Callable[[dict, ParameterSet], None] | None = None,
) -> TrainingResult:
    """Reptile over R_train with per-epoch validation checkpoint selection.

    The returned params are those of the epoch with the best validation MRR
    (epoch 0 is the initialization). ``log`` holds one record per epoch.
    """
    from .evaluation import meta_evaluate

    if not ds.splits.get("train"):
        raise EmptySplit("R_train is empty")
    init_rng, val_seed_rng, train_rng = rng.spawn(3)
    W = init if init is not None else init_params(cfg.model, ds.vocab.size, init_rng)
    val_seed = int(val_seed_rng.integers(2**32))
    has_val = bool(ds.splits.get("val"))

    def validate() -> float:
        if not has_val:
            return float("nan")
        rep = meta_evaluate(W, ds, "val", cfg.eval.k_shot, cfg, np.random.default_rng(val_seed))
        return rep.mrr

    best = W.copy()
    best_mrr = validate()
    best_epoch = 0
    records = []
    for epoch in range(1, cfg.train.max_epochs + 1):
        t0 = time.perf_counter()
        history: list[dict] = []
        for _ in range(cfg.train.iterations_per_epoch):
            W = meta_iteration(W, ds, cfg, train_rng, ADAM, history)
        val_mrr = validate()
        rec = {"epoch": epoch, "iteration": epoch * cfg.train.iterations_per_epoch, "val_mrr": val_mrr}
        for key in ("kgc", "rec", "kld", "reg", "total"):
            vals = [h[key] for h in history if key in h]
            if vals:
                rec[f"loss_{key}"] = float(np.mean(vals))
        rec["seconds"] = time.perf_counter() - t0
        records.append(rec)
        log.info("epoch %d val_mrr=%.4f kgc=%.4f", epoch, val_mrr, rec.get("loss_kgc", float("nan")))
        if on_epoch is not None:
            on_epoch(rec, W)
        if not has_val or val_mrr > best_mrr:
            best, best_mrr, best_epoch = W.copy(), val_mrr, epoch
    return TrainingResult(best, best_epoch, best_mrr, records)


def meta_test_adapt(
    W: ParameterSet,
    relation: int,
    ds: KnowledgeGraphDataset,
    k: int,
    cfg: ExperimentConfig,
    rng: np.random.Generator,
) -> tuple[ParameterSet, list[Triplet]]:
    """Adapt a copy of W to ``relation`` from k support triplets (+ K generated).

    Returns the adapted parameters and the held-out query triplets.
    """
    pool = ds.triplets_by_relation[relation]
    if len(pool) <= k:
        raise TooFewTriplets(f"relation {ds.relation_names[relation]!r}: {len(pool)} <= k={k}")
    order = rng.permutation(len(pool))
    support = [pool[i] for i in order[:k]]
    query = [pool[i] for i in sorted(order[k:])]
    # child streams keep the support draws of later relations independent of K
    aug_rng, neg_rng, gen_neg_rng = rng.spawn(3)
    mcfg = cfg.model
    n_gen = cfg.train.n_generated if mcfg.use_tcvae else 0
    params = W.copy()
    if n_gen:
        with no_grad():
            p = W.constants()
            o_r = enc.encode_relation(ds.relation_desc[relation], p, mcfg)
            generated = np.stack([g.data for g in tcvae.augment(o_r, n_gen, p, mcfg, aug_rng)])
    else:
        generated = np.zeros((0, 3, mcfg.dim))
    state = AdamState.fresh(params)
    for _ in range(cfg.train.inner_steps):
        negatives = [sample_negative(t, ds, neg_rng) for t in support]
        gen_neg = gen_neg_rng.integers(ds.n_entities, size=len(generated))

        def loss_fn(p, negatives=negatives, gen_neg=gen_neg):
            return adaptation_loss(p, ds, relation, support, negatives, generated, gen_neg, mcfg)

        _, grads = value_and_grad(loss_fn, params)
        adam_step(params, grads, state, cfg.train.inner_lr)
    return params, query
