"""Command-line entry point. One subcommand per pipeline stage; all artifacts
land under --out together with a fully-resolved config.json for reproducibility.

Exit codes: 0 ok, 1 bad flags, 2 data validation failure, 3 runtime failure.
"""

import argparse
import csv
import json
import os
import sys

import numpy as np

from . import evaluation, experiments, pooling_regressor, synthcorpus
from .embedding_io import load_manifest, validate_corpus
from .errors import DataValidationError
from .experiments import ScaleMap
from .pooling_regressor import TrainConfig, load_head, save_head, train


class _Parser(argparse.ArgumentParser):
    # spec'd exit code for flag errors is 1, not argparse's default 2
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"error: {message}", file=sys.stderr)
        raise SystemExit(1)


TRAIN_KEYS = [
    "epochs",
    "batch_size",
    "learning_rate",
    "seed",
    "model_selection",
    "clamp_predictions",
    "hidden_dim",
    "activation",
]


def add_train_flags(parser):
    parser.add_argument("--config", help="JSON config file; explicit flags override it")
    parser.add_argument("--epochs", type=int, default=None)
    parser.add_argument("--batch-size", type=int, default=None, dest="batch_size")
    parser.add_argument("--lr", type=float, default=None, dest="learning_rate")
    parser.add_argument("--seed", type=int, default=None)
    parser.add_argument("--hidden", type=int, default=None, dest="hidden_dim")
    parser.add_argument("--activation", choices=["leaky_relu", "linear"], default=None)
    parser.add_argument(
        "--model-selection",
        choices=["best-validation-loss", "last-epoch"],
        default=None,
        dest="model_selection",
    )
    parser.add_argument("--clamp", action="store_const", const=True, default=None,
                        dest="clamp_predictions")


def resolve_train_config(args):
    """Precedence: explicit flag > config file > TrainConfig default."""
    from_file = {}
    if getattr(args, "config", None):
        with open(args.config, encoding="utf-8") as f:
            from_file = json.load(f)
    kwargs = {}
    for key in TRAIN_KEYS:
        flag = getattr(args, key, None)
        if flag is not None:
            kwargs[key] = flag
        elif key in from_file:
            kwargs[key] = from_file[key]
    return TrainConfig(**kwargs)


def echo_config(out_dir, payload):
    os.makedirs(out_dir, exist_ok=True)
    with open(os.path.join(out_dir, "config.json"), "w", encoding="utf-8") as f:
        json.dump(payload, f, indent=2, sort_keys=True)
        f.write("\n")


def write_loss_curve(curve, path):
    with open(path, "w", newline="", encoding="utf-8") as f:
        writer = csv.writer(f)
        writer.writerow(["epoch", "train_mse", "valid_mse"])
        for epoch, (tr, va) in enumerate(zip(curve.train_mse, curve.valid_mse)):
            writer.writerow([epoch, repr(tr), repr(va)])


def build_parser():
    parser = _Parser(prog="speechscore", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("validate", help="check a corpus manifest and its embedding files")
    p.add_argument("--manifest", required=True)

    p = sub.add_parser("synth", help="generate a synthetic embedding corpus")
    p.add_argument("--layout", choices=["train", "test", "paired"], required=True)
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--dim", type=int, default=64)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--noise", type=float, default=0.5)
    p.add_argument("--label-noise", type=float, default=0.3, dest="label_noise")
    p.add_argument("--score-min", type=float, default=0.0)
    p.add_argument("--score-max", type=float, default=10.0)
    p.add_argument("--duration-min", type=float, default=22.0)
    p.add_argument("--duration-max", type=float, default=44.0)
    p.add_argument("--frame-rate", type=float, default=50.0)
    p.add_argument("--out", required=True)

    p = sub.add_parser("train", help="train one regression head")
    p.add_argument("--manifest", required=True)
    p.add_argument("--task", choices=["intelligibility", "severity"], required=True)
    p.add_argument("--valid-frac", type=float, default=0.1,
                   help="speaker fraction held out for epoch selection")
    p.add_argument("--out", required=True)
    add_train_flags(p)

    p = sub.add_parser("evaluate", help="evaluate a trained head on a corpus")
    p.add_argument("--model", required=True)
    p.add_argument("--manifest", required=True)
    p.add_argument("--task", choices=["intelligibility", "severity"], required=True)
    p.add_argument("--out", required=True)

    p = sub.add_parser("kfold", help="10-fold protocol with a fixed external test set")
    p.add_argument("--manifest", required=True)
    p.add_argument("--test-manifest", required=True, dest="test_manifest")
    p.add_argument("--task", choices=["intelligibility", "severity"], required=True)
    p.add_argument("--k", type=int, default=10)
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--out", required=True)
    add_train_flags(p)

    p = sub.add_parser("segments", help="fixed-duration segment scores per utterance")
    p.add_argument("--model", required=True)
    p.add_argument("--manifest", required=True)
    p.add_argument("--duration", type=float, required=True)
    p.add_argument("--out", required=True)

    p = sub.add_parser("sweep", help="absolute error across segment durations")
    p.add_argument("--model", required=True)
    p.add_argument("--manifest", required=True)
    p.add_argument("--task", choices=["intelligibility", "severity"], required=True)
    p.add_argument("--durations", default="1,2,5,10,20")
    p.add_argument("--out", required=True)

    p = sub.add_parser("crossdomain", help="evaluate on a foreign score scale")
    p.add_argument("--model", required=True)
    p.add_argument("--manifest", required=True)
    p.add_argument("--task", choices=["intelligibility", "severity"], required=True)
    p.add_argument("--source-min", type=float, required=True, dest="source_min")
    p.add_argument("--source-max", type=float, required=True, dest="source_max")
    p.add_argument("--inverted", action="store_true")
    p.add_argument("--out", required=True)

    p = sub.add_parser("consistency", help="paired-content prediction correlation")
    p.add_argument("--model", required=True)
    p.add_argument("--manifest", required=True)
    p.add_argument("--out", required=True)

    return parser


def cmd_validate(args):
    manifest = load_manifest(args.manifest)
    report = validate_corpus(manifest)
    for record, reason in report.failures():
        print(f"FAIL {record.speaker_id}/{record.utterance_id}: {reason}")
    print(f"{sum(ok for _, ok, _ in report.results)}/{len(report.results)} records ok")
    if not report.all_ok:
        raise DataValidationError("corpus validation failed")
    return 0


def cmd_synth(args):
    cfg = synthcorpus.SynthConfig(
        n_speakers=args.n,
        dim=args.dim,
        duration_range=(args.duration_min, args.duration_max),
        frame_rate=args.frame_rate,
        seed=args.seed,
        label_noise_std=args.label_noise,
        noise_scale=args.noise,
        score_range=(args.score_min, args.score_max),
    )
    manifest = synthcorpus.gen_corpus(cfg, args.layout, args.out)
    echo_config(args.out, {"command": "synth", "layout": args.layout, **vars(cfg)})
    print(f"wrote {len(manifest.records)} records to {args.out}")
    return 0


def cmd_train(args):
    cfg = resolve_train_config(args)
    manifest = load_manifest(args.manifest)
    data = experiments.load_dataset(manifest, args.task)
    speakers = manifest.speakers()
    rng = np.random.default_rng(cfg.seed)
    order = [speakers[i] for i in rng.permutation(len(speakers))]
    n_valid = max(1, int(round(args.valid_frac * len(speakers)))) if args.valid_frac > 0 else 0
    valid_speakers = set(order[:n_valid])
    train_set = [(x, t) for r, x, t in data if r.speaker_id not in valid_speakers]
    valid_set = [(x, t) for r, x, t in data if r.speaker_id in valid_speakers]
    head, curve = train(train_set, valid_set, cfg)
    os.makedirs(args.out, exist_ok=True)
    save_head(head, os.path.join(args.out, "model.bin"))
    write_loss_curve(curve, os.path.join(args.out, "loss_curve.csv"))
    echo_config(args.out, {"command": "train", "task": args.task,
                           "valid_frac": args.valid_frac, **vars(cfg)})
    return 0


def _pairs_for(head, manifest, task):
    pairs = []
    for record, x, target in experiments.load_dataset(manifest, task):
        pairs.append(evaluation.ScorePair(record.speaker_id,
                                          pooling_regressor.forward(head, x)[0], target))
    return pairs


def cmd_evaluate(args):
    head = load_head(args.model)
    manifest = load_manifest(args.manifest)
    pairs = _pairs_for(head, manifest, args.task)
    report = evaluation.evaluate(pairs)
    evaluation.emit_report(report, pairs, args.out)
    echo_config(args.out, {"command": "evaluate", "task": args.task, "model": args.model})
    print(f"mse={report.mse:.4f} rho={report.spearman_rho:.4f}")
    return 0


def cmd_kfold(args):
    cfg = resolve_train_config(args)
    train_manifest = load_manifest(args.manifest)
    test_manifest = load_manifest(args.test_manifest)
    result = experiments.run_kfold(train_manifest, test_manifest, args.task, cfg,
                                   k=args.k, jobs=args.jobs)
    os.makedirs(args.out, exist_ok=True)
    for i, (report, curve, head, pairs) in enumerate(
        zip(result.reports, result.curves, result.heads, result.test_pairs)
    ):
        fold_dir = os.path.join(args.out, "folds", f"fold_{i}")
        evaluation.emit_report(report, pairs, fold_dir)
        save_head(head, os.path.join(fold_dir, "model.bin"))
        write_loss_curve(curve, os.path.join(args.out, f"loss_curve_{i}.csv"))
    with open(os.path.join(args.out, "aggregate.json"), "w", encoding="utf-8") as f:
        json.dump(
            {
                "per_fold_mse": result.aggregate.per_fold_mse,
                "mean": result.aggregate.mean,
                "std": result.aggregate.std,
                "rendered": result.aggregate.render(),
            },
            f,
            indent=2,
            sort_keys=True,
        )
        f.write("\n")
    echo_config(args.out, {"command": "kfold", "task": args.task, "k": args.k,
                           "jobs": args.jobs, **vars(cfg)})
    print(f"aggregate test MSE: {result.aggregate.render()}")
    return 0


def cmd_segments(args):
    from .embedding_io import read_embedding

    head = load_head(args.model)
    manifest = load_manifest(args.manifest)
    os.makedirs(args.out, exist_ok=True)
    for record in manifest.records:
        matrix = read_embedding(manifest.resolve(record))
        scores = experiments.segment_predictions(head, matrix, args.duration)
        name = f"segments_{record.speaker_id}_{args.duration:g}.csv"
        with open(os.path.join(args.out, name), "w", newline="", encoding="utf-8") as f:
            writer = csv.writer(f)
            writer.writerow(["segment_index", "score"])
            for i, s in enumerate(scores):
                writer.writerow([i, repr(s)])
    echo_config(args.out, {"command": "segments", "duration": args.duration,
                           "model": args.model})
    return 0


def cmd_sweep(args):
    from .embedding_io import read_embedding

    head = load_head(args.model)
    manifest = load_manifest(args.manifest)
    durations = [float(d) for d in args.durations.split(",") if d]
    utterances = []
    for record in manifest.records:
        target = record.score(args.task)
        if target is None:
            raise DataValidationError(f"missing {args.task} score for {record.speaker_id}")
        utterances.append((record, read_embedding(manifest.resolve(record)), float(target)))
    reports = experiments.duration_sweep(head, utterances, durations)
    os.makedirs(args.out, exist_ok=True)
    with open(os.path.join(args.out, "duration_sweep.csv"), "w", newline="",
              encoding="utf-8") as f:
        writer = csv.writer(f)
        writer.writerow(["speaker_id", "group", "duration_s", "segment_mean",
                         "global_prediction", "target", "abs_error"])
        for r in reports:
            writer.writerow([r.speaker_id, experiments.severity_group(r.target),
                             repr(r.duration_s), repr(r.segment_mean),
                             repr(r.global_prediction), repr(r.target), repr(r.abs_error)])
    echo_config(args.out, {"command": "sweep", "task": args.task,
                           "durations": durations, "model": args.model})
    return 0


def cmd_crossdomain(args):
    head = load_head(args.model)
    manifest = load_manifest(args.manifest)
    scale_map = ScaleMap(args.source_min, args.source_max, args.inverted)
    report, pairs = experiments.cross_domain_eval(head, manifest, scale_map, args.task)
    evaluation.emit_report(report, pairs, args.out)
    echo_config(args.out, {"command": "crossdomain", "task": args.task,
                           "source_min": args.source_min, "source_max": args.source_max,
                           "inverted": args.inverted, "model": args.model})
    print(f"mse={report.mse:.4f} rho={report.spearman_rho:.4f}")
    return 0


def cmd_consistency(args):
    head = load_head(args.model)
    manifest = load_manifest(args.manifest)
    rho, p = experiments.content_consistency(head, manifest)
    os.makedirs(args.out, exist_ok=True)
    with open(os.path.join(args.out, "content_consistency.json"), "w",
              encoding="utf-8") as f:
        json.dump({"spearman_rho": rho, "p_value": p}, f, indent=2, sort_keys=True)
        f.write("\n")
    echo_config(args.out, {"command": "consistency", "model": args.model})
    print(f"rho={rho:.4f} p={p:.4g}")
    return 0


COMMANDS = {
    "validate": cmd_validate,
    "synth": cmd_synth,
    "train": cmd_train,
    "evaluate": cmd_evaluate,
    "kfold": cmd_kfold,
    "segments": cmd_segments,
    "sweep": cmd_sweep,
    "crossdomain": cmd_crossdomain,
    "consistency": cmd_consistency,
}


def run(argv):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return COMMANDS[args.command](args)
    except DataValidationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # noqa: BLE001 - CLI boundary
        print(f"error: {exc}", file=sys.stderr)
        return 3


def main():
    sys.exit(run(sys.argv[1:]))


if __name__ == "__main__":
    main()
