"""Multi-seed orchestration, K sweeps, and checkpoint inspection.

A run writes under ``<root>/<name>/``::

    report.json            aggregate RunReport (config echo, per-seed, mean, std)
    FAILED                 present only if a seed raised; holds the traceback
    <seed>/best.ckpt       parameters of the epoch with the best validation MRR
    <seed>/log.jsonl       one JSON record per epoch
    <seed>/report.json     that seed's test metrics

The root defaults to ``runs`` and can be set with ``$FSKGC_OUT``.
"""
from __future__ import annotations

import json
import logging
import os
import time
import traceback
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .config import ExperimentConfig, from_dict
from .data import KnowledgeGraphDataset, generate_synthetic_dataset, load_dataset
from .diffcore import ParameterSet, read_checkpoint, save_checkpoint
from .evaluation import MetricsReport, meta_evaluate
from .meta import meta_train

log = logging.getLogger(__name__)

OUT_ENV = "FSKGC_OUT"
SWEEP_KS = (0, 2, 4, 8, 16, 32)
# Salt that separates the evaluation stream from the training stream of a seed.
_EVAL_STREAM = 0xE7A1


def output_root(out: str | os.PathLike | None = None) -> Path:
    if out is not None:
        return Path(out)
    return Path(os.environ.get(OUT_ENV) or "runs")


def build_dataset(cfg: ExperimentConfig) -> KnowledgeGraphDataset:
    min_len = cfg.model.min_len
    if cfg.data.path:
        return load_dataset(cfg.data.path, max_len=cfg.data.max_len, min_len=min_len)
    return generate_synthetic_dataset(cfg.data.synthetic, max_len=cfg.data.max_len, min_len=min_len)


def eval_rng(seed: int) -> np.random.Generator:
    return np.random.default_rng([seed, _EVAL_STREAM])


def _metric_row(m: MetricsReport) -> dict[str, float]:
    row = {"mrr": m.mrr}
    row.update({f"hits@{k}": v for k, v in sorted(m.hits.items())})
    return row


def _summary(rows: list[dict[str, float]]) -> tuple[dict, dict]:
    keys = rows[0].keys()
    mean = {k: float(np.mean([r[k] for r in rows])) for k in keys}
    std = {k: float(np.std([r[k] for r in rows])) for k in keys}
    return mean, std


@dataclass
class SeedResult:
    seed: int
    metrics: MetricsReport
    best_epoch: int
    best_val_mrr: float
    seconds: float

    def to_dict(self) -> dict:
        return {
            "seed": self.seed,
            "metrics": self.metrics.to_dict(),
            "best_epoch": self.best_epoch,
            "best_val_mrr": self.best_val_mrr,
            "seconds": self.seconds,
        }


@dataclass
class RunReport:
    config: dict
    per_seed: list[SeedResult] = field(default_factory=list)
    wall_clock: float = 0.0

    @property
    def mean(self) -> dict[str, float]:
        return _summary([_metric_row(s.metrics) for s in self.per_seed])[0]

    @property
    def std(self) -> dict[str, float]:
        """Population standard deviation across seeds."""
        return _summary([_metric_row(s.metrics) for s in self.per_seed])[1]

    def to_dict(self) -> dict:
        out = {"config": self.config, "per_seed": [s.to_dict() for s in self.per_seed], "wall_clock": self.wall_clock}
        if self.per_seed:
            out["mean"], out["std"] = self.mean, self.std
        return out


def _write_json(path: Path, obj) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_suffix(path.suffix + ".tmp")
    tmp.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    tmp.replace(path)


def train_seed(
    cfg: ExperimentConfig, seed: int, ds: KnowledgeGraphDataset, run_dir: Path | None = None
) -> tuple[ParameterSet, int, float]:
    """Meta-train one seed; writes ``log.jsonl`` and ``best.ckpt`` if ``run_dir`` is given."""
    log_file = None
    if run_dir is not None:
        run_dir.mkdir(parents=True, exist_ok=True)
        log_file = open(run_dir / "log.jsonl", "w", encoding="utf-8")

    def on_epoch(rec: dict, _W) -> None:
        if log_file is not None:
            log_file.write(json.dumps(rec, sort_keys=True) + "\n")
            log_file.flush()

    try:
        result = meta_train(ds, cfg, np.random.default_rng(seed), on_epoch=on_epoch)
    finally:
        if log_file is not None:
            log_file.close()
    if run_dir is not None:
        meta = {"config": cfg.to_dict(), "seed": seed, "epoch": result.best_epoch, "val_mrr": result.best_val_mrr}
        save_checkpoint(run_dir / "best.ckpt", result.params, meta=meta)
    return result.params, result.best_epoch, result.best_val_mrr


def run_experiment(cfg: ExperimentConfig, out: str | os.PathLike | None = None, write: bool = True) -> RunReport:
    """Train and test every seed in ``cfg.seeds``.

    On failure the report of the finished seeds is still written, together
    with a ``FAILED`` marker, and the exception is re-raised.
    """
    t0 = time.perf_counter()
    root = output_root(out) / cfg.name
    report = RunReport(config=cfg.to_dict())
    if write:
        root.mkdir(parents=True, exist_ok=True)
        (root / "FAILED").unlink(missing_ok=True)
    try:
        ds = build_dataset(cfg)
        for seed in cfg.seeds:
            ts = time.perf_counter()
            run_dir = root / str(seed) if write else None
            W, epoch, val = train_seed(cfg, seed, ds, run_dir)
            metrics = meta_evaluate(W, ds, "test", cfg.eval.k_shot, cfg, eval_rng(seed))
            metrics.seeds = [seed]
            res = SeedResult(seed, metrics, epoch, val, time.perf_counter() - ts)
            report.per_seed.append(res)
            log.info("seed %d test mrr=%.4f (best epoch %d)", seed, metrics.mrr, epoch)
            if write:
                _write_json(run_dir / "report.json", res.to_dict())
    except BaseException:
        if write:
            report.wall_clock = time.perf_counter() - t0
            _write_json(root / "report.json", report.to_dict())
            (root / "FAILED").write_text(traceback.format_exc(), encoding="utf-8")
        raise
    report.wall_clock = time.perf_counter() - t0
    if write:
        _write_json(root / "report.json", report.to_dict())
    return report


def evaluate_checkpoint(
    path: str | os.PathLike, cfg: ExperimentConfig | None = None, split: str = "test", seed: int | None = None
) -> MetricsReport:
    """Meta-evaluate saved parameters; the config defaults to the one stored in the file."""
    params, _, meta = read_checkpoint(path)
    if cfg is None:
        cfg = from_dict(meta["config"])
    if seed is None:
        seed = int(meta.get("seed", cfg.seeds[0]))
    ds = build_dataset(cfg)
    report = meta_evaluate(params, ds, split, cfg.eval.k_shot, cfg, eval_rng(seed))
    report.seeds = [seed]
    return report


def sweep_k(
    cfg: ExperimentConfig, ks=SWEEP_KS, out: str | os.PathLike | None = None, write: bool = True
) -> dict:
    """Train once per seed, then test with each number K of generated triplets.

    Every K sees the same evaluation stream, so differences come from the
    augmentation alone. Returns ``{"ks", "per_seed", "mean"}``; ``per_seed``
    maps seed to a list of MRRs aligned with ``ks``.
    """
    root = output_root(out) / cfg.name
    ds = build_dataset(cfg)
    per_seed: dict[str, list[float]] = {}
    for seed in cfg.seeds:
        W, _, _ = train_seed(cfg, seed, ds, root / str(seed) if write else None)
        row = []
        for K in ks:
            kcfg = cfg.replace(train={"n_generated": int(K)})
            row.append(meta_evaluate(W, ds, "test", cfg.eval.k_shot, kcfg, eval_rng(seed)).mrr)
        per_seed[str(seed)] = row
        log.info("seed %d sweep %s", seed, dict(zip(ks, np.round(row, 4))))
    out_obj = {
        "ks": [int(k) for k in ks],
        "per_seed": per_seed,
        "mean": [float(np.mean([r[i] for r in per_seed.values()])) for i in range(len(ks))],
        "config": cfg.to_dict(),
    }
    if write:
        _write_json(root / "sweep_k.json", out_obj)
    return out_obj


def inspect_checkpoint(path: str | os.PathLike) -> dict:
    """Names, shapes, and L2 norms of a checkpoint's arrays. Read-only."""
    params, adam, meta = read_checkpoint(path)
    return {
        "path": str(path),
        "n_params": params.size,
        "arrays": [
            {"name": k, "shape": list(params[k].shape), "norm": float(np.linalg.norm(params[k]))} for k in params
        ],
        "adam_step": None if adam is None else adam.t,
        "meta": {k: v for k, v in meta.items() if k != "config"},
    }


def format_inspection(info: dict) -> str:
    lines = [f"{info['path']}: {len(info['arrays'])} arrays, {info['n_params']} values"]
    width = max(len(a["name"]) for a in info["arrays"]) if info["arrays"] else 0
    for a in info["arrays"]:
        shape = "x".join(map(str, a["shape"])) or "scalar"
        lines.append(f"  {a['name']:<{width}}  {shape:>12}  {a['norm']:.6g}")
    if info["adam_step"] is not None:
        lines.append(f"  adam step {info['adam_step']}")
    for k, v in sorted(info["meta"].items()):
        lines.append(f"  {k}: {v}")
    return "\n".join(lines)
