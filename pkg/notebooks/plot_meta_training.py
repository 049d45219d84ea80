"""
===============================
Meta-training and K-shot testing
===============================

A short Reptile run on the synthetic graph, followed by one-shot testing on
held-out relations with and without generated triplets. The budget is a
small fraction of the desk runs in the README, yet the test MRR already sits
well above the random baseline.
"""

# %%
# Setup
# -----

import numpy as np

from fskgc.config import desk_config
from fskgc.evaluation import meta_evaluate, random_rank_mrr
from fskgc.experiment import build_dataset, eval_rng
from fskgc.meta import meta_train

cfg = desk_config(train={"max_epochs": 3, "iterations_per_epoch": 100}, seeds=[1])
ds = build_dataset(cfg)
print("random baseline MRR:", round(random_rank_mrr(ds.n_entities), 4))

# %%
# Training
# --------
#
# Validation runs after every epoch and the best epoch is kept.

result = meta_train(ds, cfg, np.random.default_rng(1))
for rec in result.log:
    print(rec["epoch"], round(rec["val_mrr"], 3), round(rec["loss_kgc"], 3))
print("best epoch", result.best_epoch)

# %%
# One-shot testing
# ----------------
#
# Every K sees the same support draws. Generated triplets only change the
# result when their hinge terms are active, which is rare once training has
# separated positives from random negatives.

for K in (0, 2, 8):
    kcfg = cfg.replace(train={"n_generated": K})
    rep = meta_evaluate(result.params, ds, "test", 1, kcfg, eval_rng(1))
    print(f"K={K}: MRR {rep.mrr:.3f}  Hits@10 {rep.hits[10]:.3f}")
