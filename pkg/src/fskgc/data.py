"""Knowledge-graph datasets with textual descriptions.

On-disk layout of a dataset directory::

    entities.tsv    id<TAB>description text        (UTF-8, no header)
    relations.tsv   id<TAB>description text
    triplets.tsv    head_id<TAB>relation_id<TAB>tail_id
    splits.json     {"train": [...], "val": [...], "test": [...]} of relation ids
"""
from __future__ import annotations

import json
import re
import string
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

PAD = 0
OOV = 1
MAX_DESCRIPTION_LEN = 200
SPLITS = ("train", "val", "test")


class DatasetError(ValueError):
    pass


class MissingFile(DatasetError):
    pass


class UnknownId(DatasetError):
    pass


class EmptyDescription(DatasetError):
    pass


class SplitOverlap(DatasetError):
    pass


class DuplicateTriplet(DatasetError):
    pass


class NoValidNegative(DatasetError):
    pass


class EmptySplit(DatasetError):
    pass


class InfeasibleSpec(DatasetError):
    pass


def min_description_length(stride: int, n_layers: int, width: int = 3) -> int:
    """Shortest padded length that leaves ``width`` positions for the last block."""
    return width * stride ** (n_layers - 1)


_punct = re.compile(f"[{re.escape(string.punctuation)}]")


def words(text: str) -> list[str]:
    return _punct.sub(" ", text.lower()).split()


@dataclass
class Vocabulary:
    token_to_id: dict[str, int]

    @classmethod
    def build(cls, texts) -> "Vocabulary":
        seen = sorted({w for t in texts for w in words(t)})
        mapping = {"<pad>": PAD, "<oov>": OOV}
        for w in seen:
            mapping.setdefault(w, len(mapping))
        return cls(mapping)

    @property
    def size(self) -> int:
        return len(self.token_to_id)

    def __len__(self) -> int:
        return self.size


def tokenize(text: str, vocab: Vocabulary, max_len: int = MAX_DESCRIPTION_LEN, min_len: int = 1) -> np.ndarray:
    """Map ``text`` to ids, truncate to ``max_len``, right-pad with PAD to ``min_len``."""
    if max_len < 1:
        raise ValueError("max_len must be >= 1")
    ids = [vocab.token_to_id.get(w, OOV) for w in words(text)][:max_len]
    target = min(max(min_len, len(ids), 1), max(max_len, min_len))
    ids = ids + [PAD] * (target - len(ids))
    return np.asarray(ids, dtype=np.int64)


@dataclass(frozen=True)
class Triplet:
    head: int
    relation: int
    tail: int


@dataclass(frozen=True)
class TaskBatch:
    relation: int
    positive: Triplet
    negative: Triplet


@dataclass
class KnowledgeGraphDataset:
    """Validated, tokenized dataset. Entities and relations are indexed densely.

    ``entity_names[i]`` / ``relation_names[j]`` hold the original string ids.
    """

    entity_names: list[str]
    relation_names: list[str]
    entity_text: list[str]
    relation_text: list[str]
    triplets: list[Triplet]
    splits: dict[str, list[int]]
    vocab: Vocabulary
    entity_desc: list[np.ndarray]
    relation_desc: list[np.ndarray]
    # synthetic ground truth (None for loaded data)
    entity_types: np.ndarray | None = None
    relation_types: list[tuple[int, int]] | None = None
    triplets_by_relation: dict[int, list[Triplet]] = field(init=False)
    _tails: dict[tuple[int, int], frozenset[int]] = field(init=False, repr=False)
    _triplet_set: frozenset[Triplet] = field(init=False, repr=False)

    def __post_init__(self):
        by_rel: dict[int, list[Triplet]] = {r: [] for r in range(len(self.relation_names))}
        tails: dict[tuple[int, int], set[int]] = {}
        for t in self.triplets:
            by_rel[t.relation].append(t)
            tails.setdefault((t.head, t.relation), set()).add(t.tail)
        self.triplets_by_relation = by_rel
        self._tails = {k: frozenset(v) for k, v in tails.items()}
        self._triplet_set = frozenset(self.triplets)
        if len(self._triplet_set) != len(self.triplets):
            raise DuplicateTriplet("triplet list contains duplicates")

    @property
    def n_entities(self) -> int:
        return len(self.entity_names)

    @property
    def n_relations(self) -> int:
        return len(self.relation_names)

    def __contains__(self, t: Triplet) -> bool:
        return t in self._triplet_set

    def known_tails(self, head: int, relation: int) -> frozenset[int]:
        return self._tails.get((head, relation), frozenset())

    def relation_index(self, name: str) -> int:
        return self.relation_names.index(name)

    def validate(self) -> None:
        """Raise if any structural invariant is broken."""
        seen: dict[int, str] = {}
        for split in SPLITS:
            for r in self.splits.get(split, []):
                if r in seen:
                    raise SplitOverlap(f"relation {self.relation_names[r]!r} in {seen[r]} and {split}")
                seen[r] = split
        if len(seen) != self.n_relations:
            missing = [self.relation_names[r] for r in range(self.n_relations) if r not in seen]
            raise SplitOverlap(f"relations missing from splits: {missing}")
        for r, ts in self.triplets_by_relation.items():
            if not ts:
                raise DatasetError(f"relation {self.relation_names[r]!r} has no triplets")
        for d in (*self.entity_desc, *self.relation_desc):
            if d.size < 1:
                raise DatasetError("empty description")
            if d.max() >= self.vocab.size:
                raise DatasetError("token id outside vocabulary")


def build_dataset(
    entities: dict[str, str],
    relations: dict[str, str],
    triplet_rows: list[tuple[str, str, str]],
    splits: dict[str, list[str]],
    max_len: int = MAX_DESCRIPTION_LEN,
    min_len: int = 1,
) -> KnowledgeGraphDataset:
    for kind, table in (("entity", entities), ("relation", relations)):
        for key, text in table.items():
            if not words(text):
                raise EmptyDescription(f"{kind} {key!r} has an empty description")
    ent_names = list(entities)
    rel_names = list(relations)
    ent_idx = {n: i for i, n in enumerate(ent_names)}
    rel_idx = {n: i for i, n in enumerate(rel_names)}
    triplets = []
    for h, r, t in triplet_rows:
        for name, table in ((h, ent_idx), (r, rel_idx), (t, ent_idx)):
            if name not in table:
                raise UnknownId(f"triplet ({h}, {r}, {t}) references unknown id {name!r}")
        triplets.append(Triplet(ent_idx[h], rel_idx[r], ent_idx[t]))
    split_idx = {}
    for s in SPLITS:
        ids = []
        for name in splits.get(s, []):
            if name not in rel_idx:
                raise UnknownId(f"split {s!r} references unknown relation {name!r}")
            ids.append(rel_idx[name])
        split_idx[s] = ids
    vocab = Vocabulary.build([*entities.values(), *relations.values()])
    ds = KnowledgeGraphDataset(
        entity_names=ent_names,
        relation_names=rel_names,
        entity_text=list(entities.values()),
        relation_text=list(relations.values()),
        triplets=triplets,
        splits=split_idx,
        vocab=vocab,
        entity_desc=[tokenize(t, vocab, max_len, min_len) for t in entities.values()],
        relation_desc=[tokenize(t, vocab, max_len, min_len) for t in relations.values()],
    )
    ds.validate()
    return ds


def _read_table(path: Path) -> dict[str, str]:
    out: dict[str, str] = {}
    for lineno, line in enumerate(path.read_text(encoding="utf-8").splitlines(), 1):
        if not line.strip():
            continue
        key, sep, text = line.partition("\t")
        if not sep:
            raise EmptyDescription(f"{path.name}:{lineno}: missing description for {key!r}")
        out[key.strip()] = text
    return out


def load_dataset(root, max_len: int = MAX_DESCRIPTION_LEN, min_len: int = 1) -> KnowledgeGraphDataset:
    root = Path(root)
    files = {n: root / n for n in ("entities.tsv", "relations.tsv", "triplets.tsv", "splits.json")}
    for name, p in files.items():
        if not p.is_file():
            raise MissingFile(f"{root}: missing {name}")
    entities = _read_table(files["entities.tsv"])
    relations = _read_table(files["relations.tsv"])
    rows = []
    for lineno, line in enumerate(files["triplets.tsv"].read_text(encoding="utf-8").splitlines(), 1):
        if not line.strip():
            continue
        parts = [p.strip() for p in line.split("\t")]
        if len(parts) != 3:
            raise DatasetError(f"triplets.tsv:{lineno}: expected 3 columns")
        rows.append(tuple(parts))
    splits = json.loads(files["splits.json"].read_text(encoding="utf-8"))
    return build_dataset(entities, relations, rows, splits, max_len, min_len)


def save_dataset(ds: KnowledgeGraphDataset, root) -> None:
    root = Path(root)
    root.mkdir(parents=True, exist_ok=True)
    (root / "entities.tsv").write_text(
        "".join(f"{n}\t{t}\n" for n, t in zip(ds.entity_names, ds.entity_text)), encoding="utf-8"
    )
    (root / "relations.tsv").write_text(
        "".join(f"{n}\t{t}\n" for n, t in zip(ds.relation_names, ds.relation_text)), encoding="utf-8"
    )
    (root / "triplets.tsv").write_text(
        "".join(
            f"{ds.entity_names[t.head]}\t{ds.relation_names[t.relation]}\t{ds.entity_names[t.tail]}\n"
            for t in ds.triplets
        ),
        encoding="utf-8",
    )
    splits = {s: [ds.relation_names[r] for r in ds.splits[s]] for s in SPLITS}
    (root / "splits.json").write_text(json.dumps(splits, indent=2) + "\n", encoding="utf-8")


# sampling -------------------------------------------------------------------

def sample_negative(positive: Triplet, ds: KnowledgeGraphDataset, rng: np.random.Generator) -> Triplet:
    """Corrupt the tail uniformly, redrawing whenever the result is a known triplet."""
    known = ds.known_tails(positive.head, positive.relation) | {positive.tail}
    n = ds.n_entities
    if len(known) >= n:
        raise NoValidNegative(f"every entity is a known tail of {positive}")
    while True:
        t = int(rng.integers(n))
        if t not in known:
            return Triplet(positive.head, positive.relation, t)


def sample_task(ds: KnowledgeGraphDataset, split: str, rng: np.random.Generator) -> TaskBatch:
    rels = ds.splits.get(split, [])
    if not rels:
        raise EmptySplit(f"split {split!r} is empty")
    r = rels[int(rng.integers(len(rels)))]
    pool = ds.triplets_by_relation[r]
    pos = pool[int(rng.integers(len(pool)))]
    return TaskBatch(r, pos, sample_negative(pos, ds, rng))


# synthetic data -------------------------------------------------------------

_TYPE_WORDS = [
    "animal", "city", "person", "river", "company", "planet", "mineral", "song",
    "vehicle", "disease", "language", "building", "plant", "mountain", "weapon", "sport",
]
_MARK_WORDS = [
    "alpha", "bravo", "charlie", "delta", "echo", "foxtrot", "golf", "hotel", "india",
    "juliet", "kilo", "lima", "mike", "november", "oscar", "papa", "quebec", "romeo",
    "sierra", "tango", "uniform", "victor", "whiskey", "xray", "yankee", "zulu",
]
_FILLER_WORDS = [
    "the", "of", "and", "in", "known", "was", "is", "for", "with", "as", "by", "on",
    "notable", "some", "often", "also", "many", "from", "large", "small", "early", "late",
    "region", "history", "period", "form", "several", "other", "which", "this", "an",
    "used", "called", "part", "famous", "local", "general", "common", "its", "first",
]


@dataclass(frozen=True)
class SyntheticSpec:
    n_entities: int = 50
    n_relations: int = 12
    n_types: int = 5
    triplets_per_relation: int = 8
    seed: int = 7
    filler_length: int = 6


def _type_word(k: int) -> str:
    return _TYPE_WORDS[k] if k < len(_TYPE_WORDS) else f"kind{k}"


def _mark_word(k: int) -> str:
    return _MARK_WORDS[k] if k < len(_MARK_WORDS) else f"mark{k}"


def split_sizes(n_relations: int) -> tuple[int, int, int]:
    n_eval = max(1, n_relations // 6)
    return n_relations - 2 * n_eval, n_eval, n_eval


def generate_synthetic_dataset(
    spec: SyntheticSpec, out_dir=None, max_len: int = MAX_DESCRIPTION_LEN, min_len: int = 1
) -> KnowledgeGraphDataset:
    """Typed toy KG whose true tails are recoverable from descriptions.

    Entities get a type and a within-type slot; their text starts with the
    type word and a slot marker word, then random filler. Relation ``r`` maps
    source type to target type, linking the head at slot ``i`` to the tail at
    the same slot. Relation text names both types. Signatures are drawn from a
    schema of ``n_types`` (source, target) pairs forming one cycle over the
    types, so several relations share a signature and differ only in wording.
    """
    if spec.n_types < 2:
        raise InfeasibleSpec("n_types must be >= 2")
    if spec.n_entities < 2 * spec.n_types:
        raise InfeasibleSpec("n_entities must be >= 2 * n_types")
    n_train, n_val, n_test = split_sizes(spec.n_relations)
    if n_train < 1:
        raise InfeasibleSpec("need at least 6 relations for three non-empty splits")
    rng = np.random.default_rng(spec.seed)
    types = rng.permutation(np.arange(spec.n_entities) % spec.n_types)
    members = [np.flatnonzero(types == k) for k in range(spec.n_types)]
    slot = np.empty(spec.n_entities, dtype=np.int64)
    for m in members:
        slot[m] = np.arange(m.size)
    # fewest members of any type bounds the head pool of a relation
    if spec.triplets_per_relation > min(m.size for m in members):
        raise InfeasibleSpec("triplets_per_relation exceeds entities per type")

    entities = {}
    for e in range(spec.n_entities):
        filler = rng.choice(_FILLER_WORDS, size=spec.filler_length)
        text = " ".join([_type_word(types[e]), _mark_word(slot[e]), *filler])
        entities[f"e{e}"] = text

    # relation signatures come from a small schema: one random cycle over the types
    cycle = [int(x) for x in rng.permutation(spec.n_types)]
    schema = [(cycle[i], cycle[(i + 1) % spec.n_types]) for i in range(spec.n_types)]
    relations = {}
    rel_types = []
    rows = []
    for r in range(spec.n_relations):
        src, dst = schema[int(rng.integers(len(schema)))]
        rel_types.append((src, dst))
        filler = rng.choice(_FILLER_WORDS, size=2)
        relations[f"r{r}"] = " ".join(
            ["from", _type_word(src), "to", _type_word(dst), *filler]
        )
        heads = rng.choice(members[src], size=spec.triplets_per_relation, replace=False)
        for h in sorted(int(x) for x in heads):
            t = members[dst][slot[h] % members[dst].size]
            rows.append((f"e{h}", f"r{r}", f"e{t}"))

    order = rng.permutation(spec.n_relations)
    names = [f"r{i}" for i in order]
    splits = {
        "train": sorted(names[:n_train], key=lambda s: int(s[1:])),
        "val": sorted(names[n_train : n_train + n_val], key=lambda s: int(s[1:])),
        "test": sorted(names[n_train + n_val :], key=lambda s: int(s[1:])),
    }
    ds = build_dataset(entities, relations, rows, splits, max_len, min_len)
    ds.entity_types = types
    ds.relation_types = rel_types
    if out_dir is not None:
        save_dataset(ds, out_dir)
    return ds
