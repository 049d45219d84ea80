"""
====================================
Checking gradients of the full model
====================================

The models here run on a small reverse-mode autodiff layer written in numpy.
Before trusting any training curve, compare its gradients with central
differences on a toy-sized model.
"""

# %%
# A toy configuration
# -------------------

import time

import numpy as np

from fskgc.config import ModelConfig
from fskgc.data import Triplet, build_dataset
from fskgc.diffcore import finite_difference_check
from fskgc.model import init_params, task_loss

cfg = ModelConfig(dim=4, memory_size=3, n_layers=2, latent_dim=3, tcvae_hidden=4, kld_sign="elbo")
entities = {f"e{i}": f"entity number {i} has a short text" for i in range(4)}
ds = build_dataset(entities, {"r": "links one entity to another"}, [("e0", "r", "e1")], {"train": ["r"]}, min_len=8)
params = init_params(cfg, ds.vocab.size, np.random.default_rng(0))
print(params)

# %%
# Frozen noise makes the loss deterministic
# -----------------------------------------

eps = np.random.default_rng(1).standard_normal(cfg.latent_dim)
pos, neg = Triplet(0, 0, 1), Triplet(0, 0, 2)


def loss(p):
    return task_loss(p, ds, pos, neg, eps, cfg)[0]


t0 = time.perf_counter()
report = finite_difference_check(loss, params, h=1e-5, tol=1e-3)
print(f"{time.perf_counter() - t0:.1f}s, worst relative error {report.worst:.2e}, ok={report.ok}")

# %%
# The five groups with the largest error:

for name, err in sorted(report.max_rel_error.items(), key=lambda kv: -kv[1])[:5]:
    print(f"{name:<28} {err:.2e}")
