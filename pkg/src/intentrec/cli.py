"""Command-line interface.

Subcommands: train, evaluate, inspect-intents, gen-synthetic.  Settings come
from built-in defaults, overridden by an optional plain-text ``key = value``
config file (``--config``), overridden in turn by explicit flags.  Unknown
config keys are rejected.  The resolved configuration is echoed before work
starts so any run can be reproduced from its log.

Exit codes: 0 success, 1 usage or config error, 2 data error, 3 numeric error.
"""

from __future__ import annotations

import argparse
import sys
from dataclasses import dataclass, fields

import numpy as np

from .augment import AugmentConfig
from .autograd import NumericError
from .checkpoint import CheckpointError, load_checkpoint, save_checkpoint
from .clustering import assign_batch
from .data import (
    DatasetError,
    five_core_filter,
    inject_test_noise,
    load_interactions,
    padded_matrix,
    split_leave_one_out,
)
from .encoder import EncoderConfig, encode_summaries
from .evaluation import evaluate, robustness_report
from .losses import LossWeights, SamplingExhaustedError
from .synthetic import generate_corpus, write_corpus, write_labels
from .trainer import TrainConfig, task_mode, train


class ConfigError(Exception):
    """Bad config file contents or invalid option values."""


@dataclass
class RunConfig:
    """Union of every tunable the train/evaluate commands accept."""

    data: str = ""
    max_seq_len: int = 50
    dim: int = 64
    blocks: int = 2
    heads: int = 2
    dropout: float = 0.2
    ffn_mult: int = 4
    k: int = 8
    intent_weight: float = 0.5
    seq_weight: float = 0.1
    batch_size: int = 256
    lr: float = 0.001
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8
    epochs: int = 100
    patience: int = 10
    temperature: float = 1.0
    fnm: bool = True
    kmeans_iters: int = 20
    crop_ratio: float = 0.6
    mask_ratio: float = 0.3
    reorder_ratio: float = 0.2
    five_core: bool = True
    seed: int = 42


# config-file aliases for the weight names used on the command line
_ALIASES = {"lambda": "intent_weight", "beta": "seq_weight"}
_FIELD_TYPES = {f.name: f.type for f in fields(RunConfig)}


def _coerce(name: str, type_name: str, raw: str):
    if type_name == "bool":
        low = raw.strip().lower()
        if low in ("true", "1", "yes", "on"):
            return True
        if low in ("false", "0", "no", "off"):
            return False
        raise ConfigError(f"config key {name!r}: cannot parse {raw!r} as a boolean")
    try:
        if type_name == "int":
            return int(raw)
        if type_name == "float":
            return float(raw)
    except ValueError:
        raise ConfigError(f"config key {name!r}: cannot parse {raw!r} as {type_name}") from None
    return raw


def parse_config_file(path: str) -> dict:
    """Read ``key = value`` lines; '#' starts a comment; unknown keys reject."""
    try:
        with open(path, "r", encoding="utf-8") as fh:
            lines = fh.readlines()
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path!r}: {exc}") from exc
    values = {}
    for lineno, line in enumerate(lines, start=1):
        text = line.split("#", 1)[0].strip()
        if not text:
            continue
        if "=" not in text:
            raise ConfigError(f"{path}:{lineno}: expected 'key = value', got {text!r}")
        key, raw = (part.strip() for part in text.split("=", 1))
        key = _ALIASES.get(key, key)
        if key not in _FIELD_TYPES:
            raise ConfigError(f"{path}:{lineno}: unknown config key {key!r}")
        values[key] = _coerce(key, _FIELD_TYPES[key], raw)
    return values


def resolve_config(args: argparse.Namespace) -> RunConfig:
    """defaults < config file < explicit command-line flags."""
    cfg = RunConfig()
    if getattr(args, "config", None):
        for key, val in parse_config_file(args.config).items():
            setattr(cfg, key, val)
    for f in fields(RunConfig):
        flag_val = getattr(args, f.name, None)
        if flag_val is not None:
            setattr(cfg, f.name, flag_val)
    return cfg


def echo_config(cfg: RunConfig, stream=None) -> None:
    stream = stream or sys.stdout
    stream.write("# resolved configuration\n")
    for f in sorted(fields(RunConfig), key=lambda f: f.name):
        stream.write(f"{f.name} = {getattr(cfg, f.name)}\n")
    stream.flush()


def _build_components(cfg: RunConfig, vocab_size: int):
    try:
        encoder_cfg = EncoderConfig(
            vocab_size=vocab_size + 2,
            max_seq_len=cfg.max_seq_len,
            dim=cfg.dim,
            blocks=cfg.blocks,
            heads=cfg.heads,
            dropout=cfg.dropout,
            ffn_mult=cfg.ffn_mult,
        )
        train_cfg = TrainConfig(
            k=cfg.k,
            weights=LossWeights(intent=cfg.intent_weight, seq_contrast=cfg.seq_weight),
            batch_size=cfg.batch_size,
            lr=cfg.lr,
            adam_beta1=cfg.adam_beta1,
            adam_beta2=cfg.adam_beta2,
            adam_eps=cfg.adam_eps,
            max_epochs=cfg.epochs,
            patience=cfg.patience,
            temperature=cfg.temperature,
            fnm=cfg.fnm,
            kmeans_iters=cfg.kmeans_iters,
            seed=cfg.seed,
        )
        aug_cfg = AugmentConfig(
            crop_ratio=cfg.crop_ratio,
            mask_ratio=cfg.mask_ratio,
            reorder_ratio=cfg.reorder_ratio,
        )
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    return encoder_cfg, train_cfg, aug_cfg


def _load_split(cfg: RunConfig, path: str):
    ds = load_interactions(path)
    print(
        "loaded corpus: "
        + " ".join(f"{k}={v:.6g}" if isinstance(v, float) else f"{k}={v}" for k, v in ds.summary().items())
    )
    if cfg.five_core:
        ds = five_core_filter(ds)
        s = ds.summary()
        print(f"after 5-core filter: users={s['users']} items={s['items']} actions={s['actions']}")
    return split_leave_one_out(ds)


def cmd_train(args) -> int:
    cfg = resolve_config(args)
    if not cfg.data:
        raise ConfigError("train requires --data (or a 'data' entry in the config file)")
    echo_config(cfg)
    split = _load_split(cfg, cfg.data)
    encoder_cfg, train_cfg, aug_cfg = _build_components(cfg, split.vocab_size)
    try:
        params, intent_model, report = train(split, encoder_cfg, train_cfg, aug_cfg)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc

    save_checkpoint(args.out, params, intent_model, report.optimizer, run_config=report.config)
    report_path = f"{args.out.rstrip('/')}/report.jsonl"
    with open(report_path, "w", encoding="utf-8") as fh:
        fh.write(report.jsonl())

    print(f"task mode: {task_mode(train_cfg.weights)}")
    print(f"trained {len(report.epochs)} epochs; best epoch {report.best_epoch} "
          f"(valid NDCG@{train_cfg.stop_metric_k} = {report.best_valid_ndcg:.6f})")
    for name, value in report.final_test.as_dict().items():
        print(f"test {name} = {value:.6f}" if isinstance(value, float) else f"test {name} = {value}")
    print(f"checkpoint written to {args.out}")
    print(f"report written to {report_path}")
    return 0


def cmd_evaluate(args) -> int:
    cfg = resolve_config(args)
    data_path = cfg.data or args.data
    if not data_path:
        raise ConfigError("evaluate requires --data")
    params, intent_model, _, manifest = load_checkpoint(args.checkpoint)
    split = _load_split(cfg, data_path)
    if params.config.vocab_size != split.vocab_size + 2:
        raise DatasetError(
            f"checkpoint vocabulary ({params.config.vocab_size - 2} items) does not match "
            f"the corpus ({split.vocab_size} items)"
        )
    ks = tuple(int(k) for k in args.ks.split(","))
    exclude = not args.no_exclude_seen

    eval_split = split
    if args.noise_ratio > 0:
        eval_split = inject_test_noise(split, args.noise_ratio, cfg.seed)
        print(f"applied noise ratio {args.noise_ratio} (seed {cfg.seed}) to test inputs")
    result = evaluate(params, eval_split, phase=args.phase, ks=ks, exclude_seen=exclude)
    print(f"phase={args.phase} users={result.n_users} exclude_seen={str(exclude).lower()}")
    for name, value in result.as_dict().items():
        if name != "n_users":
            print(f"{name} = {value:.6f}")

    if args.noise_ratios or args.n_groups:
        ratios = tuple(float(r) for r in args.noise_ratios.split(",")) if args.noise_ratios else (0.0,)
        report = robustness_report(
            params,
            split,
            noise_ratios=ratios,
            n_groups=args.n_groups,
            rng_seed=cfg.seed,
            ks=ks,
            exclude_seen=exclude,
        )
        print()
        sys.stdout.write(report.render_text())
    return 0


def cmd_inspect_intents(args) -> int:
    cfg = resolve_config(args)
    data_path = cfg.data or args.data
    if not data_path:
        raise ConfigError("inspect-intents requires --data")
    params, intent_model, _, _ = load_checkpoint(args.checkpoint)
    if intent_model is None:
        raise CheckpointError("checkpoint contains no intent model")
    split = _load_split(cfg, data_path)
    if params.config.vocab_size != split.vocab_size + 2:
        raise DatasetError("checkpoint vocabulary does not match the corpus")

    ids = padded_matrix(split.train_seqs, params.config.max_seq_len, split.pad_id)
    _, pooled = encode_summaries(params, ids)
    assignments = assign_batch(intent_model, pooled)

    k = intent_model.k
    print(f"intent prototypes: k={k} fit_seed={intent_model.rng_seed} "
          f"distortion={intent_model.distortion:.6f}")
    d2 = ((pooled[:, None, :] - intent_model.centroids[None, :, :]) ** 2).sum(axis=-1)
    for c in range(k):
        members = np.flatnonzero(assignments == c)
        print(f"\ncluster {c}: {members.size} sequences")
        order = members[np.argsort(d2[members, c], kind="stable")][: args.top]
        for u in order:
            items = " ".join(str(i) for i in split.train_seqs[u][:10])
            more = " ..." if len(split.train_seqs[u]) > 10 else ""
            print(f"  {split.user_labels[u]} (dist {np.sqrt(d2[u, c]):.4f}): {items}{more}")
    print("\ninter-centroid distances:")
    cc = np.sqrt(((intent_model.centroids[:, None, :] - intent_model.centroids[None, :, :]) ** 2).sum(-1))
    for row in cc:
        print("  " + " ".join(f"{v:8.4f}" for v in row))
    return 0


def cmd_gen_synthetic(args) -> int:
    try:
        corpus = generate_corpus(
            n_users=args.users,
            n_intents=args.intents,
            pool_size=args.pool_size,
            min_len=args.min_len,
            max_len=args.max_len,
            rng_seed=args.seed,
        )
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    write_corpus(corpus, args.out)
    print(f"wrote {len(corpus.sequences)} users over {args.intents * args.pool_size} items to {args.out}")
    if args.labels_out:
        write_labels(corpus, args.labels_out)
        print(f"wrote intent labels to {args.labels_out}")
    return 0


class _Parser(argparse.ArgumentParser):
    """argparse that exits 1 (not 2) on usage errors, per our exit-code map."""

    def error(self, message):
        self.print_usage(sys.stderr)
        sys.stderr.write(f"{self.prog}: error: {message}\n")
        raise SystemExit(1)


def _add_config_flags(p: argparse.ArgumentParser, include_train: bool = True):
    p.add_argument("--config", help="plain-text key = value config file")
    p.add_argument("--data", help="interaction corpus (user-per-line)")
    p.add_argument("--seed", type=int)
    p.add_argument("--max-seq-len", dest="max_seq_len", type=int)
    p.add_argument("--five-core", dest="five_core", action=argparse.BooleanOptionalAction, default=None)
    if include_train:
        p.add_argument("--dim", type=int)
        p.add_argument("--blocks", type=int)
        p.add_argument("--heads", type=int)
        p.add_argument("--dropout", type=float)
        p.add_argument("--ffn-mult", dest="ffn_mult", type=int)
        p.add_argument("--k", type=int, help="number of intent prototypes")
        p.add_argument("--lambda", dest="intent_weight", type=float,
                       help="intent contrastive loss weight")
        p.add_argument("--beta", dest="seq_weight", type=float,
                       help="sequence contrastive loss weight")
        p.add_argument("--batch-size", dest="batch_size", type=int)
        p.add_argument("--lr", type=float)
        p.add_argument("--adam-beta1", dest="adam_beta1", type=float)
        p.add_argument("--adam-beta2", dest="adam_beta2", type=float)
        p.add_argument("--adam-eps", dest="adam_eps", type=float)
        p.add_argument("--epochs", type=int)
        p.add_argument("--patience", type=int)
        p.add_argument("--temperature", type=float)
        p.add_argument("--fnm", action=argparse.BooleanOptionalAction, default=None,
                       help="false-negative mitigation in the intent loss")
        p.add_argument("--kmeans-iters", dest="kmeans_iters", type=int)
        p.add_argument("--crop-ratio", dest="crop_ratio", type=float)
        p.add_argument("--mask-ratio", dest="mask_ratio", type=float)
        p.add_argument("--reorder-ratio", dest="reorder_ratio", type=float)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="intentrec", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p_train = sub.add_parser("train", help="train a model and write a checkpoint")
    _add_config_flags(p_train)
    p_train.add_argument("--out", required=True, help="checkpoint directory to create")
    p_train.set_defaults(func=cmd_train)

    p_eval = sub.add_parser("evaluate", help="rank held-out targets with a checkpoint")
    _add_config_flags(p_eval, include_train=False)
    p_eval.add_argument("--checkpoint", required=True)
    p_eval.add_argument("--phase", choices=("valid", "test"), default="test")
    p_eval.add_argument("--ks", default="5,20", help="comma-separated cutoffs")
    p_eval.add_argument("--no-exclude-seen", action="store_true",
                        help="keep already-seen items in the candidate set")
    p_eval.add_argument("--noise-ratio", dest="noise_ratio", type=float, default=0.0,
                        help="perturb test inputs with this unseen-item ratio")
    p_eval.add_argument("--noise-ratios", dest="noise_ratios",
                        help="comma-separated ratios for the robustness sweep")
    p_eval.add_argument("--n-groups", dest="n_groups", type=int, default=0,
                        help="length-group count for the robustness report")
    p_eval.set_defaults(func=cmd_evaluate)

    p_ins = sub.add_parser("inspect-intents", help="describe a checkpoint's intent prototypes")
    _add_config_flags(p_ins, include_train=False)
    p_ins.add_argument("--checkpoint", required=True)
    p_ins.add_argument("--top", type=int, default=5, help="nearest sequences to print per cluster")
    p_ins.set_defaults(func=cmd_inspect_intents)

    p_gen = sub.add_parser("gen-synthetic", help="write a synthetic corpus with planted intents")
    p_gen.add_argument("--out", required=True)
    p_gen.add_argument("--users", type=int, default=400)
    p_gen.add_argument("--intents", type=int, default=4)
    p_gen.add_argument("--pool-size", dest="pool_size", type=int, default=25)
    p_gen.add_argument("--min-len", dest="min_len", type=int, default=10)
    p_gen.add_argument("--max-len", dest="max_len", type=int, default=20)
    p_gen.add_argument("--seed", type=int, default=0)
    p_gen.add_argument("--labels-out", dest="labels_out", help="also write per-user intent labels")
    p_gen.set_defaults(func=cmd_gen_synthetic)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if exc.code else 0
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    except (DatasetError, CheckpointError, SamplingExhaustedError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 2
    except (NumericError, FloatingPointError) as exc:
        print(f"numeric error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
