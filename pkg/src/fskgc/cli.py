"""Command line entry point: ``fskgc {synth,train,eval,sweep-k,inspect}``.

Exit codes: 0 success, 2 configuration error, 1 any other failure.
"""
from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import sys
from pathlib import Path

from .config import ConfigInvalid, ExperimentConfig, desk_config, from_dict, load_config
from .diffcore import read_checkpoint
from .experiment import (
    SWEEP_KS,
    evaluate_checkpoint,
    format_inspection,
    inspect_checkpoint,
    output_root,
    run_experiment,
    sweep_k,
)

EXIT_OK, EXIT_RUNTIME, EXIT_CONFIG = 0, 1, 2


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise ConfigInvalid(message)


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="YAML or JSON experiment config (default: built-in desk config)")
    p.add_argument("--seed", type=int, help="run only this seed")
    p.add_argument("--out", help="output root (default $FSKGC_OUT or ./runs)")
    p.add_argument("--k-shot", type=int, dest="k_shot")
    p.add_argument("--no-trait", action="store_true", dest="no_trait")
    p.add_argument("--no-tcvae", action="store_true", dest="no_tcvae")
    p.add_argument("--filtered", action="store_true")
    p.add_argument("-v", "--verbose", action="store_true")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="fskgc", description="Few-shot knowledge graph completion from text descriptions.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("synth", help="write the synthetic dataset to a directory")
    _common(p)
    p.add_argument("directory", nargs="?", help="target directory (default <out>/data)")

    p = sub.add_parser("train", help="meta-train and test every seed")
    _common(p)

    p = sub.add_parser("eval", help="meta-evaluate a saved checkpoint")
    _common(p)
    p.add_argument("checkpoint")
    p.add_argument("--split", default="test", choices=("train", "val", "test"))

    p = sub.add_parser("sweep-k", help="test MRR as a function of the number of generated triplets")
    _common(p)
    p.add_argument("--ks", type=int, nargs="+", default=list(SWEEP_KS))

    p = sub.add_parser("inspect", help="print parameter names, shapes, and norms of a checkpoint")
    p.add_argument("checkpoint")
    p.add_argument("--json", action="store_true")
    return parser


def resolve_config(args: argparse.Namespace, base: ExperimentConfig | None = None) -> ExperimentConfig:
    """``--config`` file (else ``base``, else the desk default) with flag overrides applied."""
    if args.config:
        try:
            cfg = load_config(args.config)
        except OSError as exc:
            raise ConfigInvalid(f"cannot read config: {exc}") from None
    else:
        cfg = base if base is not None else desk_config()
    model, ev, top = {}, {}, {}
    if args.seed is not None:
        top["seeds"] = [args.seed]
    if args.no_trait:
        model["use_trait"] = False
    if args.no_tcvae:
        model["use_tcvae"] = False
    if args.k_shot is not None:
        ev["k_shot"] = args.k_shot
    if args.filtered:
        ev["filtered"] = True
    if model or ev or top:
        cfg = cfg.replace(model=model, eval=ev, **top)
    return cfg


def _cmd_synth(args) -> None:
    from .data import generate_synthetic_dataset

    cfg = resolve_config(args)
    spec = cfg.data.synthetic
    if args.seed is not None:
        spec = dataclasses.replace(spec, seed=args.seed)
    target = Path(args.directory) if args.directory else output_root(args.out) / "data"
    ds = generate_synthetic_dataset(spec, target, max_len=cfg.data.max_len, min_len=cfg.model.min_len)
    print(f"wrote {ds.n_entities} entities, {ds.n_relations} relations, {len(ds.triplets)} triplets to {target}")


def _cmd_train(args) -> None:
    cfg = resolve_config(args)
    report = run_experiment(cfg, args.out)
    print(json.dumps({"name": cfg.name, "mean": report.mean, "std": report.std}, indent=2))


def _cmd_eval(args) -> None:
    _, _, meta = read_checkpoint(args.checkpoint)
    stored = from_dict(meta["config"]) if "config" in meta else None
    seed = args.seed
    args.seed = None  # selects the evaluation stream here, not the seed list
    cfg = resolve_config(args, stored)
    rep = evaluate_checkpoint(args.checkpoint, cfg, args.split, seed)
    print(json.dumps(rep.to_dict(), indent=2))


def _cmd_sweep(args) -> None:
    cfg = resolve_config(args)
    res = sweep_k(cfg, args.ks, args.out)
    for K, m in zip(res["ks"], res["mean"]):
        print(f"K={K:<3d} mrr={m:.4f}")


def _cmd_inspect(args) -> None:
    info = inspect_checkpoint(args.checkpoint)
    print(json.dumps(info, indent=2) if args.json else format_inspection(info))


COMMANDS = {"synth": _cmd_synth, "train": _cmd_train, "eval": _cmd_eval, "sweep-k": _cmd_sweep, "inspect": _cmd_inspect}


def main(argv: list[str] | None = None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except ConfigInvalid as exc:
        print(f"fskgc: error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except SystemExit as exc:  # --help
        return int(exc.code or 0)
    logging.basicConfig(
        level=logging.INFO if getattr(args, "verbose", False) else logging.WARNING,
        format="%(asctime)s %(name)s %(message)s",
    )
    try:
        COMMANDS[args.command](args)
    except ConfigInvalid as exc:
        print(f"fskgc: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except Exception as exc:  # noqa: BLE001 - top-level reporting
        print(f"fskgc: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
