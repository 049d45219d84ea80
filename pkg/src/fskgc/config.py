"""Experiment configuration: nested dataclasses with a published JSON schema."""
from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import jsonschema
import yaml

from .data import MAX_DESCRIPTION_LEN, SyntheticSpec, min_description_length


class ConfigInvalid(ValueError):
    pass


@dataclass(frozen=True)
class ModelConfig:
    dim: int = 100  # u: word embedding / hidden / filter count
    n_layers: int = 3  # N
    memory_size: int = 128  # m
    filter_width: int = 3
    pool_stride: int = 2
    latent_dim: int = 50  # d_z
    tcvae_hidden: int = 100
    norm_eps: float = 1e-5
    cos_eps: float = 1e-8
    log_sigma_clamp: float = 10.0
    sigma_mu: float = 10000.0
    sigma_sigma: float = 0.0001
    margin: float = 1.0  # gamma
    lambda_kld: float = 1.0
    lambda_reg: float = 1.0
    kld_sign: str = "paper"  # "paper" subtracts lambda1 * KL, "elbo" adds it
    use_trait: bool = True
    use_tcvae: bool = True
    # stop TCVAE gradients at the encoder outputs (TCVAE sees O as data)
    detach_tcvae_inputs: bool = False

    @property
    def min_len(self) -> int:
        return min_description_length(self.pool_stride, self.n_layers, self.filter_width)


@dataclass(frozen=True)
class ReptileConfig:
    batch_size: int = 8  # B
    inner_steps: int = 5  # S
    inner_lr: float = 0.001  # alpha_1
    outer_lr: float = 0.001  # alpha_2
    n_generated: int = 8  # K
    iterations_per_epoch: int = 100
    max_epochs: int = 50


@dataclass(frozen=True)
class EvalConfig:
    k_shot: int = 1
    filtered: bool = False
    hits_at: tuple = (1, 5, 10)


@dataclass(frozen=True)
class DataConfig:
    path: str | None = None
    synthetic: SyntheticSpec = field(default_factory=SyntheticSpec)
    max_len: int = MAX_DESCRIPTION_LEN


@dataclass(frozen=True)
class ExperimentConfig:
    name: str = "default"
    seeds: tuple = (1, 2, 3, 4)
    model: ModelConfig = field(default_factory=ModelConfig)
    train: ReptileConfig = field(default_factory=ReptileConfig)
    eval: EvalConfig = field(default_factory=EvalConfig)
    data: DataConfig = field(default_factory=DataConfig)

    def __post_init__(self):
        validate(self)

    def to_dict(self) -> dict:
        return _jsonable(dataclasses.asdict(self))

    def replace(self, **sections) -> "ExperimentConfig":
        """``cfg.replace(model={"use_trait": False}, seeds=[1])``."""
        d = self.to_dict()
        for key, value in sections.items():
            if isinstance(value, dict) and isinstance(d.get(key), dict):
                _deep_update(d[key], value)
            else:
                d[key] = value
        return from_dict(d)


def _jsonable(x):
    if isinstance(x, dict):
        return {k: _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    return x


def _deep_update(base: dict, new: dict) -> None:
    for k, v in new.items():
        if isinstance(v, dict) and isinstance(base.get(k), dict):
            _deep_update(base[k], v)
        else:
            base[k] = v


_pos_int = {"type": "integer", "minimum": 1}
_nonneg_int = {"type": "integer", "minimum": 0}
_pos_num = {"type": "number", "exclusiveMinimum": 0}
_nonneg_num = {"type": "number", "minimum": 0}

SCHEMA: dict[str, Any] = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "title": "fskgc experiment config",
    "type": "object",
    "additionalProperties": False,
    "properties": {
        "name": {"type": "string", "minLength": 1},
        "seeds": {"type": "array", "items": {"type": "integer"}, "minItems": 1},
        "model": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "dim": _pos_int,
                "n_layers": _pos_int,
                "memory_size": _pos_int,
                "filter_width": {"type": "integer", "minimum": 1, "multipleOf": 1},
                "pool_stride": _pos_int,
                "latent_dim": _pos_int,
                "tcvae_hidden": _pos_int,
                "norm_eps": _pos_num,
                "cos_eps": _pos_num,
                "log_sigma_clamp": _pos_num,
                "sigma_mu": _pos_num,
                "sigma_sigma": _nonneg_num,
                "margin": _pos_num,
                "lambda_kld": _nonneg_num,
                "lambda_reg": _nonneg_num,
                "kld_sign": {"enum": ["paper", "elbo"]},
                "use_trait": {"type": "boolean"},
                "use_tcvae": {"type": "boolean"},
                "detach_tcvae_inputs": {"type": "boolean"},
            },
        },
        "train": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "batch_size": _pos_int,
                "inner_steps": _nonneg_int,
                "inner_lr": _pos_num,
                "outer_lr": _pos_num,
                "n_generated": _nonneg_int,
                "iterations_per_epoch": _pos_int,
                "max_epochs": _nonneg_int,
            },
        },
        "eval": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "k_shot": _pos_int,
                "filtered": {"type": "boolean"},
                "hits_at": {"type": "array", "items": _pos_int, "minItems": 1},
            },
        },
        "data": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "path": {"type": ["string", "null"]},
                "max_len": {"type": "integer", "minimum": 1, "maximum": MAX_DESCRIPTION_LEN},
                "synthetic": {
                    "type": "object",
                    "additionalProperties": False,
                    "properties": {
                        "n_entities": _pos_int,
                        "n_relations": _pos_int,
                        "n_types": {"type": "integer", "minimum": 2},
                        "triplets_per_relation": _pos_int,
                        "seed": {"type": "integer"},
                        "filler_length": _nonneg_int,
                    },
                },
            },
        },
    },
}


def validate(cfg: ExperimentConfig) -> None:
    try:
        jsonschema.validate(_jsonable(dataclasses.asdict(cfg)), SCHEMA)
    except jsonschema.ValidationError as exc:
        where = "/".join(str(p) for p in exc.absolute_path) or "<root>"
        raise ConfigInvalid(f"{where}: {exc.message}") from None
    if cfg.model.filter_width % 2 == 0:
        raise ConfigInvalid("model/filter_width must be odd for same-padding")


def from_dict(d: dict) -> ExperimentConfig:
    try:
        jsonschema.validate(d, SCHEMA)
    except jsonschema.ValidationError as exc:
        where = "/".join(str(p) for p in exc.absolute_path) or "<root>"
        raise ConfigInvalid(f"{where}: {exc.message}") from None
    data = dict(d.get("data", {}))
    if "synthetic" in data:
        data["synthetic"] = SyntheticSpec(**data["synthetic"])
    ev = dict(d.get("eval", {}))
    if "hits_at" in ev:
        ev["hits_at"] = tuple(ev["hits_at"])
    return ExperimentConfig(
        name=d.get("name", "default"),
        seeds=tuple(d.get("seeds", (1, 2, 3, 4))),
        model=ModelConfig(**d.get("model", {})),
        train=ReptileConfig(**d.get("train", {})),
        eval=EvalConfig(**ev),
        data=DataConfig(**data),
    )


def load_config(path) -> ExperimentConfig:
    """Read a YAML or JSON config file."""
    text = Path(path).read_text(encoding="utf-8")
    try:
        d = yaml.safe_load(text) or {}
    except yaml.YAMLError as exc:
        raise ConfigInvalid(f"{path}: {exc}") from None
    if not isinstance(d, dict):
        raise ConfigInvalid(f"{path}: top level must be a mapping")
    return from_dict(d)


def write_schema(path) -> None:
    Path(path).write_text(json.dumps(SCHEMA, indent=2) + "\n", encoding="utf-8")


def desk_config(**sections) -> ExperimentConfig:
    """Settings used for the desk-scale synthetic runs (see README).

    A narrower network than the defaults, the ELBO sign for the KL term, TCVAE
    inputs detached from the encoder, and a plain-averaging Reptile step
    (outer rate 1) over batches of four tasks. Four seeds train in about a
    quarter of an hour on one CPU core.
    """
    base = ExperimentConfig(name="desk").replace(
        model={
            "dim": 32,
            "memory_size": 32,
            "latent_dim": 16,
            "tcvae_hidden": 32,
            "kld_sign": "elbo",
            "detach_tcvae_inputs": True,
        },
        train={"batch_size": 4, "outer_lr": 1.0, "iterations_per_epoch": 200, "max_epochs": 7},
    )
    return base.replace(**sections) if sections else base
