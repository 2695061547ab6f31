"""Command-line front door: generate data, train, evaluate, query.

Every subcommand reads an optional config file, applies flag overrides,
validates the merged configuration before touching the filesystem, and
derives all randomness from one seed. Identical invocations produce
byte-identical outputs.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import sys
from pathlib import Path

from .config import RunConfig, load_config
from .data import (
    Dataset,
    generate_synthetic,
    load_jsonl,
    make_splits,
    save_jsonl,
)
from .encoders import IMAGE, RECIPE, EncoderDims, EncoderParams, encode_recipe
from .evaluation import (
    build_index,
    evaluate_directions,
    format_report_table,
    report_to_json,
)
from .exceptions import ConfigError, CookspaceError
from .mining import squared_distance
from .params import ParamStore
from .plots import save_eval_figure, save_loss_curve
from .queries import (
    CLASS_CONSTRAINED,
    CROSS_MODAL,
    SAME_MODAL,
    QuerySpec,
    class_constrained_query,
    ingredient_query,
    ingredient_vector,
    multimodal_query,
    remove_ingredient,
)
from .training import fit

log = logging.getLogger("cookspace")


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="run config file (sectioned key/value)")
    common.add_argument("--seed", type=int, help="seed for every stochastic stage")
    common.add_argument("--verbose", action="store_true", help="log details to stderr")

    parser = argparse.ArgumentParser(
        prog="cookspace",
        description="Cross-modal recipe/image embedding training and retrieval.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    gen = sub.add_parser("gen-data", parents=[common], help="generate a synthetic dataset")
    gen.add_argument("--out", help="dataset file to write")
    gen.add_argument("--classes", type=int, help="number of classes")
    gen.add_argument("--instances", type=int, help="instances per class")

    train = sub.add_parser("train", parents=[common], help="train the encoders")
    train.add_argument("--data", help="dataset file")
    train.add_argument("--out", help="final checkpoint file to write")
    train.add_argument("--run-dir", help="directory for run artifacts")
    train.add_argument("--epochs", type=int)
    train.add_argument("--batch-size", type=int)
    train.add_argument("--learning-rate", type=float)
    train.add_argument("--margin", type=float)
    train.add_argument("--semantic-weight", type=float)
    train.add_argument("--strategy", help="negative strategy: all | hardest | random-one")
    train.add_argument("--optimizer", help="sgd | adam")

    ev = sub.add_parser("eval", parents=[common], help="run the bag retrieval protocol")
    ev.add_argument("--data", help="dataset file")
    ev.add_argument("--model", help="checkpoint file")
    ev.add_argument("--out", help="directory for report files")
    ev.add_argument("--split", help="split to evaluate")
    ev.add_argument("--bag-size", type=int)
    ev.add_argument("--n-bags", type=int)

    qu = sub.add_parser("query", parents=[common], help="query the embedding space")
    qu.add_argument("--data", help="dataset file")
    qu.add_argument("--model", help="checkpoint file")
    qu.add_argument(
        "--mode", required=True, choices=("cross", "ingredients", "remove")
    )
    qu.add_argument("--from", dest="from_modality", choices=(IMAGE, RECIPE))
    qu.add_argument("--id", dest="instance_id", help="query instance id")
    qu.add_argument("--target", choices=(IMAGE, RECIPE), help="modality to search")
    qu.add_argument("--tokens", help="comma-separated ingredient tokens")
    qu.add_argument("--class", dest="class_name", help="restrict results to a class")
    qu.add_argument("--token", help="ingredient token to remove")
    qu.add_argument("--k", type=int, default=10, help="results to return")
    qu.add_argument("--out", help="file for machine-readable results")
    return parser


def _merged_config(args) -> RunConfig:
    config = load_config(args.config) if args.config else RunConfig()
    if args.seed is not None:
        if args.seed < 0:
            raise ConfigError(f"seed must be nonnegative, got {args.seed}")
        config = config.with_seed(args.seed)
    return config


def _override(section, **updates):
    present = {k: v for k, v in updates.items() if v is not None}
    return dataclasses.replace(section, **present) if present else section


def _require_file(path: str, what: str) -> Path:
    p = Path(path)
    if not p.is_file():
        raise CookspaceError(f"{what} file not found: {p}")
    return p


def _load_split_dataset(path: str, config: RunConfig) -> Dataset:
    dataset = load_jsonl(_require_file(path, "dataset"))
    return make_splits(dataset, seed=config.data.seed)


def _dims_for(dataset: Dataset, config: RunConfig) -> EncoderDims:
    dims = config.model
    if dims.image_dim != dataset.feature_dim:
        raise ConfigError(
            f"model image_dim {dims.image_dim} does not match dataset "
            f"feature dimension {dataset.feature_dim}"
        )
    if dims.vocab_size < len(dataset.vocab):
        raise ConfigError(
            f"model vocab_size {dims.vocab_size} is smaller than the dataset "
            f"vocabulary ({len(dataset.vocab)} tokens)"
        )
    return dims


def _load_params(path: str) -> EncoderParams:
    store = ParamStore.load(_require_file(path, "checkpoint"))
    return EncoderParams.from_store(store)


def _cmd_gen_data(args) -> int:
    config = _merged_config(args)
    config = dataclasses.replace(
        config,
        data=_override(
            config.data, n_classes=args.classes, instances_per_class=args.instances
        ),
    )
    config.data.validate()
    out = Path(args.out or config.paths.dataset)
    dataset = generate_synthetic(config.data)
    log.info("generated %d pairs over %d classes", len(dataset.pairs), len(dataset.class_names))
    out.parent.mkdir(parents=True, exist_ok=True)
    save_jsonl(dataset, out)
    print(f"wrote {len(dataset.pairs)} pairs to {out}")
    return 0


def _cmd_train(args) -> int:
    config = _merged_config(args)
    config = dataclasses.replace(
        config,
        train=_override(
            config.train,
            epochs=args.epochs,
            batch_size=args.batch_size,
            learning_rate=args.learning_rate,
            margin=args.margin,
            semantic_weight=args.semantic_weight,
            negative_strategy=args.strategy,
            optimizer=args.optimizer,
        ),
    )
    config.train.validate()
    dataset = _load_split_dataset(args.data or config.paths.dataset, config)
    dims = _dims_for(dataset, config)
    run_dir = Path(args.run_dir or config.paths.out_dir)
    checkpoint = Path(args.out or config.paths.checkpoint)

    result = fit(dataset, config.train, dims=dims, out_dir=run_dir)
    checkpoint.parent.mkdir(parents=True, exist_ok=True)
    result.params.store.save(checkpoint)
    figure = save_loss_curve(result.loss_history, run_dir / "loss.png")

    print(f"trained {config.train.epochs} epochs on {len(dataset.splits['train'])} pairs")
    print(f"first-epoch loss {result.loss_history[0]:.4f}, final {result.loss_history[-1]:.4f}")
    if result.best_val_medr is not None:
        print(f"best validation MedR {result.best_val_medr:.1f} at epoch {result.best_epoch}")
    print(f"checkpoint: {checkpoint}")
    print(f"loss curve: {figure}")
    return 0


def _cmd_eval(args) -> int:
    config = _merged_config(args)
    config = dataclasses.replace(
        config,
        eval=_override(
            config.eval, split=args.split, bag_size=args.bag_size, n_bags=args.n_bags
        ),
    )
    config.eval.validate()
    params = _load_params(args.model or config.paths.checkpoint)
    dataset = _load_split_dataset(args.data or config.paths.dataset, config)

    reports = evaluate_directions(
        params,
        dataset,
        config.eval.split,
        bag_size=config.eval.bag_size,
        n_bags=config.eval.n_bags,
        seed=config.data.seed,
    )
    table = format_report_table(reports)
    print(table, end="")
    if args.out:
        out_dir = Path(args.out)
        out_dir.mkdir(parents=True, exist_ok=True)
        (out_dir / "report.txt").write_text(table, encoding="utf-8")
        (out_dir / "report.json").write_text(report_to_json(reports), encoding="utf-8")
        save_eval_figure(reports, out_dir / "report.png")
        print(f"report files in {out_dir}")
    return 0


def _class_id_for(dataset: Dataset, name: str) -> int:
    if name not in dataset.class_names:
        raise CookspaceError(f"unknown class {name!r}")
    return dataset.class_names.index(name)


def _query_payload(dataset: Dataset, args):
    if not args.instance_id:
        raise ConfigError("cross mode needs --id")
    if not args.from_modality:
        raise ConfigError("cross mode needs --from image|recipe")
    try:
        img, rec = dataset.pair(args.instance_id)
    except KeyError:
        raise CookspaceError(f"unknown instance id {args.instance_id!r}") from None
    return img if args.from_modality == IMAGE else rec


def _cmd_query(args) -> int:
    config = _merged_config(args)
    params = _load_params(args.model or config.paths.checkpoint)
    dataset = load_jsonl(_require_file(args.data or config.paths.dataset, "dataset"))
    index = build_index(dataset, params)

    if args.mode == "cross":
        payload = _query_payload(dataset, args)
        source = args.from_modality
        target = args.target or (RECIPE if source == IMAGE else IMAGE)
        kind = CROSS_MODAL if target != source else SAME_MODAL
        spec = QuerySpec(kind, payload, target, k=args.k)
        result = multimodal_query(spec, index, params)
    elif args.mode == "ingredients":
        if not args.tokens:
            raise ConfigError("ingredients mode needs --tokens a,b,c")
        tokens = []
        for token in args.tokens.split(","):
            token = token.strip()
            if token not in dataset.vocab:
                raise CookspaceError(f"unknown ingredient token {token!r}")
            tokens.append(dataset.vocab.id(token))
        if args.class_name is not None:
            vec = ingredient_vector(tokens, params)
            spec = QuerySpec(
                CLASS_CONSTRAINED,
                vec,
                args.target or RECIPE,
                k=args.k,
                class_filter=_class_id_for(dataset, args.class_name),
            )
            result = class_constrained_query(spec, spec.class_filter, index, params)
        else:
            result = ingredient_query(
                tokens, index, params, k=args.k, target_modality=args.target or RECIPE
            )
    else:
        if not args.instance_id or not args.token:
            raise ConfigError("remove mode needs --id and --token")
        if args.token not in dataset.vocab:
            raise CookspaceError(f"unknown ingredient token {args.token!r}")
        try:
            _, recipe = dataset.pair(args.instance_id)
        except KeyError:
            raise CookspaceError(f"unknown instance id {args.instance_id!r}") from None
        modified = remove_ingredient(recipe, dataset.vocab.id(args.token))
        before = encode_recipe(recipe, params, None)
        after = encode_recipe(modified, params, None)
        moved = squared_distance(before, after)
        print(f"removed {args.token!r}: embedding moved by squared distance {moved:.6f}")
        spec = QuerySpec(SAME_MODAL, after, RECIPE, k=args.k)
        result = multimodal_query(spec, index, params)

    print(result.format_table(), end="")
    if args.out:
        payload = {"results": result.to_rows(), "class_missing": result.class_missing}
        Path(args.out).parent.mkdir(parents=True, exist_ok=True)
        Path(args.out).write_text(
            json.dumps(payload, sort_keys=True, indent=2) + "\n", encoding="utf-8"
        )
    return 0


_COMMANDS = {
    "gen-data": _cmd_gen_data,
    "train": _cmd_train,
    "eval": _cmd_eval,
    "query": _cmd_query,
}


def run(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        stream=sys.stderr,
        format="%(levelname)s %(message)s",
    )
    try:
        return _COMMANDS[args.command](args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except CookspaceError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


def main() -> None:
    sys.exit(run())
