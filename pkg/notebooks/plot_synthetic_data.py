"""
==================================
The synthetic knowledge graph
==================================

Every run in this repository can work on a small generated graph whose
answers are known by construction. This script builds it, looks at a few
descriptions, and draws training tasks from it.
"""

# %%
# Building the graph
# ------------------
#
# Entities carry a type word and a slot word. A relation maps the head in
# slot ``i`` of its source type to the tail in slot ``i`` of its target type,
# so the tail is recoverable from text alone.

import numpy as np

from fskgc.data import SyntheticSpec, generate_synthetic_dataset, sample_negative, sample_task

spec = SyntheticSpec(n_entities=50, n_relations=12, n_types=5, triplets_per_relation=8, seed=7)
ds = generate_synthetic_dataset(spec, min_len=12)
print(ds.n_entities, "entities,", ds.n_relations, "relations,", len(ds.triplets), "triplets")
print({name: len(rels) for name, rels in ds.splits.items()})

# %%
# Descriptions
# ------------

for i in range(3):
    print(f"{ds.entity_names[i]:>6}: {ds.entity_text[i]}")
r = ds.splits["test"][0]
print(f"{ds.relation_names[r]:>6}: {ds.relation_text[r]}")

# %%
# Tokenised descriptions are padded up to the shortest length the encoder
# accepts (12 for three layers with stride 2).

print(ds.entity_desc[0], len(ds.entity_desc[0]))

# %%
# Tasks and negatives
# -------------------
#
# A meta-training task is one relation from the training split with one
# positive triplet and one corrupted tail. The corrupted triplet is never a
# known fact.

rng = np.random.default_rng(0)
task = sample_task(ds, "train", rng)
print("positive", task.positive, "negative", task.negative)

known = sum(sample_negative(task.positive, ds, rng) in ds for _ in range(1000))
print("negatives that hit a known fact:", known)
