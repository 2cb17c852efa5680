"""Command-line entry point.

Subcommands: train, eval, infer, ablate, gradcheck, synth, dataset validate.
Settings resolve as CLI flag > config file > built-in default; every run with
an output directory writes the resolved config, the seed, metrics JSON, and
(for train) the best checkpoint. Human-readable text goes to stdout, machine
artifacts go to files, diagnostics to stderr. Exit codes: 0 success, 1 data
or config error (one machine-parsable line on stderr), 2 usage error.
"""

from __future__ import annotations

import argparse
import json
import sys
import time
from pathlib import Path

import numpy as np

from .ablation import VARIANTS, run_ablation
from .checkpoint import load_checkpoint, save_checkpoint
from .dataset import DatasetSplit, read_manifest, resolve_instances, load_dataset, write_dataset
from .errors import ConfigError, DataError, VideoQAError
from .metrics import evaluate_accuracy
from .model import ModelConfig, VideoQAModel, trace_to_dict
from .synth import PlantedRule, synth_generate
from .training import TrainConfig, full_model_grad_check, train
from .vocab import Vocabulary

# defaults double as the type table for config-file coercion
DEFAULTS: dict[str, object] = {
    "embed_dim": 16,
    "hidden_dim": 16,
    "reasoning_steps": 1,
    "use_attributes": True,
    "mean_pool_baseline": False,
    "max_answer_len": 8,
    "max_vocab": 6500,
    "learning_rate": 0.01,
    "adagrad_eps": 1e-8,
    "l2": 1e-4,
    "epochs": 30,
    "patience": 5,
    "seed": 0,
    "task": "mc",
    "manifest": "",
    "out": "",
}


def parse_config_file(path: str | Path) -> dict[str, str]:
    """Flat ``key = value`` lines; blank lines and # comments are ignored."""
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file not found: {path}")
    values: dict[str, str] = {}
    for lineno, raw in enumerate(path.read_text(encoding="utf-8").splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{lineno}: expected 'key = value', got {raw!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        if key not in DEFAULTS:
            raise ConfigError(f"{path}:{lineno}: unknown config key {key!r}")
        values[key] = value
    return values


def _coerce(key: str, raw: str):
    kind = type(DEFAULTS[key])
    if kind is bool:
        lowered = raw.lower()
        if lowered in ("true", "1", "yes"):
            return True
        if lowered in ("false", "0", "no"):
            return False
        raise ConfigError(f"config key {key!r}: expected a boolean, got {raw!r}")
    try:
        return kind(raw)
    except ValueError as exc:
        raise ConfigError(f"config key {key!r}: {exc}") from exc


def resolve_settings(config_path: str | None, overrides: dict) -> dict:
    """Merge defaults, config file, and CLI overrides (highest priority last)."""
    settings = dict(DEFAULTS)
    if config_path:
        for key, raw in parse_config_file(config_path).items():
            settings[key] = _coerce(key, raw)
    for key, value in overrides.items():
        if value is not None:
            settings[key] = value
    return settings


def settings_text(settings: dict, derived: dict | None = None) -> str:
    lines = [f"{key} = {settings[key]}" for key in DEFAULTS]
    if derived:
        lines.append("# derived from dataset")
        lines += [f"# {key} = {value}" for key, value in derived.items()]
    return "\n".join(lines) + "\n"


def write_run_artifacts(out_dir: Path, settings: dict, derived: dict | None,
                        metrics: dict) -> None:
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "config.resolved").write_text(settings_text(settings, derived), encoding="utf-8")
    (out_dir / "seed.txt").write_text(f"{settings['seed']}\n", encoding="utf-8")
    (out_dir / "metrics.json").write_text(json.dumps(metrics, indent=2) + "\n", encoding="utf-8")


def _model_config_for(settings: dict, split: DatasetSplit) -> ModelConfig:
    if not split.train and not split.valid and not split.test:
        raise DataError("dataset is empty")
    return ModelConfig(
        vocab_size=len(split.vocab),
        n_classes=len(split.answer_classes),
        frame_dim=split.frame_dim,
        embed_dim=settings["embed_dim"],
        hidden_dim=settings["hidden_dim"],
        n_frames=split.n_frames,
        reasoning_steps=settings["reasoning_steps"],
        use_attributes=settings["use_attributes"],
        max_answer_len=settings["max_answer_len"],
        mean_pool_baseline=settings["mean_pool_baseline"],
    )


def _train_config_for(settings: dict) -> TrainConfig:
    return TrainConfig(
        learning_rate=settings["learning_rate"],
        adagrad_eps=settings["adagrad_eps"],
        l2=settings["l2"],
        epochs=settings["epochs"],
        patience=settings["patience"],
        seed=settings["seed"],
    )


def _derived_for(config: ModelConfig) -> dict:
    return {
        "frame_dim": config.frame_dim,
        "n_frames": config.n_frames,
        "vocab_size": config.vocab_size,
        "n_classes": config.n_classes,
    }


def _require(settings: dict, key: str) -> str:
    value = settings.get(key)
    if not value:
        raise ConfigError(f"{key} is required (flag --{key} or config key {key!r})")
    return str(value)


# ---------------------------------------------------------------------------
# subcommands


def cmd_train(args) -> int:
    settings = resolve_settings(args.config, {
        "seed": args.seed, "task": args.task, "out": args.out, "manifest": args.manifest})
    out_dir = Path(_require(settings, "out"))
    split = load_dataset(_require(settings, "manifest"), max_vocab=settings["max_vocab"])
    config = _model_config_for(settings, split)
    model = VideoQAModel.initialize(config, seed=settings["seed"])
    report = train(model, split, _train_config_for(settings), task=settings["task"])

    test_report = (evaluate_accuracy(model, split.test, settings["task"], k=1)
                   if split.test else None)
    metrics = {
        "train": report.to_dict(),
        "test": test_report.to_dict() if test_report else None,
    }
    write_run_artifacts(out_dir, settings, _derived_for(config), metrics)
    (out_dir / "loss_curve.csv").write_text(report.curve_csv(), encoding="utf-8")
    save_checkpoint(out_dir / "checkpoint.json", model, split.vocab, split.answer_classes)

    best = f"{report.best_val_accuracy:.4f}" if report.best_val_accuracy is not None else "n/a"
    print(f"trained task={settings['task']} epochs={report.epochs_run} "
          f"best_val_accuracy={best} out={out_dir}")
    return 0


def _load_eval_instances(manifest: str, split_name: str, vocab: Vocabulary,
                         classes: list[str]):
    path = Path(manifest)
    if path.is_dir():
        split = load_dataset(path, vocab=vocab, answer_classes=classes)
        instances = split.split(split_name)
    else:
        instances = read_manifest(path)
        resolve_instances(instances, vocab, {c: i for i, c in enumerate(classes)})
    if not instances:
        raise DataError(f"no instances to evaluate in {manifest} (split {split_name!r})")
    return instances


def cmd_eval(args) -> int:
    model, vocab, classes = load_checkpoint(args.checkpoint)
    instances = _load_eval_instances(args.manifest, args.split, vocab, classes)
    report = evaluate_accuracy(model, instances, args.task, k=args.K)
    payload = report.to_dict()
    print(json.dumps(payload, indent=2))
    if args.out:
        out_dir = Path(args.out)
        out_dir.mkdir(parents=True, exist_ok=True)
        (out_dir / "metrics.json").write_text(json.dumps(payload, indent=2) + "\n",
                                              encoding="utf-8")
    return 0


def cmd_infer(args) -> int:
    model, vocab, classes = load_checkpoint(args.checkpoint)
    instances = _load_eval_instances(args.manifest, "test", vocab, classes) \
        if Path(args.manifest).is_file() else None
    if instances is None:
        split = load_dataset(args.manifest, vocab=vocab, answer_classes=classes)
        instances = split.train + split.valid + split.test
    matches = [inst for inst in instances if inst.video_id == args.video]
    if not matches:
        raise DataError(f"video {args.video!r} not found in {args.manifest}")
    inst = matches[0]
    question_ids = vocab.encode(args.question.split())
    if not question_ids:
        raise DataError("empty question")

    rows = inst.feature_rows()
    z, trace = model.joint_representation(rows, inst.attribute_ids, question_ids)
    distribution = model.classify(z)
    mc_answer = classes[int(np.argmax(distribution.values))]
    oe_tokens = vocab.decode(model.decode_answer(z))
    print(f"video={inst.video_id}")
    print(f"mc_answer={mc_answer}")
    print(f"oe_answer={' '.join(oe_tokens)}")
    if args.trace:
        print(json.dumps({"attention": trace_to_dict(trace)}))
    return 0


def cmd_ablate(args) -> int:
    settings = resolve_settings(args.config, {
        "seed": args.seed, "out": args.out, "manifest": args.manifest})
    out_dir = Path(_require(settings, "out"))
    split = load_dataset(_require(settings, "manifest"), max_vocab=settings["max_vocab"])
    config = _model_config_for(settings, split)

    variants = tuple(v.strip() for v in args.variants.split(",") if v.strip())
    seeds = tuple(settings["seed"] + i for i in range(args.seeds))
    tasks = tuple(t.strip() for t in args.tasks.split(",") if t.strip())
    report = run_ablation(split, config, _train_config_for(settings),
                          variants=variants, seeds=seeds, tasks=tasks)

    write_run_artifacts(out_dir, settings, _derived_for(config), report.to_dict())
    table = report.format_table("valid") + "\n" + report.format_table("test")
    (out_dir / "table.txt").write_text(table, encoding="utf-8")
    print(table, end="")
    failures = [r for r in report.runs if r.error]
    for r in failures:
        print(f"warning: {r.variant} seed={r.seed} task={r.task}: {r.error}", file=sys.stderr)
    return 0


GRADCHECK_DIMS = {
    "tiny": dict(vocab_size=8, n_classes=3, frame_dim=4, embed_dim=4, hidden_dim=3,
                 n_frames=3, reasoning_steps=2, max_answer_len=4),
    "small": dict(vocab_size=12, n_classes=4, frame_dim=8, embed_dim=8, hidden_dim=6,
                  n_frames=5, reasoning_steps=2, max_answer_len=4),
}


def cmd_gradcheck(args) -> int:
    config = ModelConfig(**GRADCHECK_DIMS[args.dims])
    worst = 0.0
    for task, lam in (("mc", 1e-4), ("oe", 0.0)):
        started = time.monotonic()
        report = full_model_grad_check(config, task=task, lam=lam, eps=args.eps,
                                       tol=args.tol, seed=args.seed)
        worst = max(worst, report.max_rel_error)
        print(f"gradcheck dims={args.dims} task={task} lam={lam} "
              f"max_rel_error={report.max_rel_error:.3e} tol={args.tol:.1e} "
              f"seconds={time.monotonic() - started:.1f}")
    print(f"gradcheck {'pass' if worst <= args.tol else 'FAIL'} max_rel_error={worst:.3e}")
    return 0 if worst <= args.tol else 1


def cmd_synth(args) -> int:
    rule = PlantedRule.from_kind(args.rule, seed=args.seed, n_classes=args.classes)
    split = synth_generate(rule, args.count, n_frames=args.frames,
                           frame_dim=args.frame_dim, seed=args.seed,
                           feature_noise=args.noise)
    out_dir = Path(args.out)
    write_dataset(split, out_dir)
    (out_dir / "rule.json").write_text(json.dumps(rule.to_dict(), indent=2) + "\n",
                                       encoding="utf-8")
    print(f"synth rule={args.rule} train={len(split.train)} valid={len(split.valid)} "
          f"test={len(split.test)} out={out_dir}")
    return 0


def cmd_dataset_validate(args) -> int:
    path = Path(args.manifest)
    if path.is_dir():
        split = load_dataset(path)
        n = sum(len(split.split(name)) for name in ("train", "valid", "test"))
        print(f"ok: {n} instances across splits "
              f"({len(split.train)}/{len(split.valid)}/{len(split.test)}), "
              f"vocab={len(split.vocab)}, classes={len(split.answer_classes)}")
    else:
        instances = read_manifest(path)
        print(f"ok: {len(instances)} instances in {path}")
    return 0


# ---------------------------------------------------------------------------
# parser


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="videoqa",
        description="Attribute-fused temporal attention for video question answering.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="train a model and write run artifacts")
    p.add_argument("--config", required=True, help="key = value config file")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--task", choices=("mc", "oe"), default=None)
    p.add_argument("--out", default=None, help="output directory")
    p.add_argument("--manifest", default=None, help="dataset directory")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="evaluate a checkpoint on a manifest")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--manifest", required=True, help="dataset directory or one .jsonl manifest")
    p.add_argument("--K", type=int, default=1)
    p.add_argument("--task", choices=("mc", "oe"), default="mc")
    p.add_argument("--split", choices=("train", "valid", "test"), default="test")
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("infer", help="answer one question about one video")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--manifest", required=True, help="dataset directory or one .jsonl manifest")
    p.add_argument("--video", required=True)
    p.add_argument("--question", required=True)
    p.add_argument("--trace", action="store_true", help="print attention weights as JSON")
    p.set_defaults(func=cmd_infer)

    p = sub.add_parser("ablate", help="train and score model variants on shared seeds")
    p.add_argument("--config", required=True)
    p.add_argument("--variants", default=",".join(VARIANTS))
    p.add_argument("--seeds", type=int, default=3, help="number of seeds, starting at 'seed'")
    p.add_argument("--tasks", default="mc,oe")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out", default=None)
    p.add_argument("--manifest", default=None)
    p.set_defaults(func=cmd_ablate)

    p = sub.add_parser("gradcheck", help="finite-difference check of the full model gradient")
    p.add_argument("--dims", choices=tuple(GRADCHECK_DIMS), default="tiny")
    p.add_argument("--tol", type=float, default=1e-4)
    p.add_argument("--eps", type=float, default=1e-5)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_gradcheck)

    p = sub.add_parser("synth", help="generate a planted-rule dataset")
    p.add_argument("--rule", choices=("one-hop", "two-hop"), required=True)
    p.add_argument("--count", type=int, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.add_argument("--frames", type=int, default=8)
    p.add_argument("--frame-dim", type=int, default=32)
    p.add_argument("--classes", type=int, default=8)
    p.add_argument("--noise", type=float, default=0.5)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("dataset", help="dataset utilities")
    dataset_sub = p.add_subparsers(dest="dataset_command", required=True)
    v = dataset_sub.add_parser("validate", help="check a manifest for schema conformance")
    v.add_argument("--manifest", required=True)
    v.set_defaults(func=cmd_dataset_validate)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if exc.code is not None else 0
    try:
        return args.func(args)
    except VideoQAError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
