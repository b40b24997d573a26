"""``edsnet`` command-line entry point."""
from __future__ import annotations

import argparse
import itertools
import json
import logging
import sys
from pathlib import Path

from .bench import DEFAULT_LENGTHS, run_bench
from .config import MIXERS, POOLINGS, ConfigError, RunConfig
from .dataio import FormatError, SyntheticSpec, gen_synthetic, load_manifest, read_archive, read_header, split_folds
from .summarize import make_summary
from .train_eval import (TrainingDiverged, cross_validate, evaluate, load_params, save_params, train,
                         training_pairs, write_history_csv)


class UsageError(Exception):
    """Invalid command input, reported before any file is written."""


def _int_list(text: str) -> list:
    try:
        return [int(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


def _name_list(choices):
    def parse(text: str) -> list:
        names = [x.strip() for x in text.split(",") if x.strip()]
        bad = [n for n in names if n not in choices]
        if bad or not names:
            raise argparse.ArgumentTypeError(f"choose from {','.join(choices)}; got {text!r}")
        return names
    return parse


def _load_inputs(args):
    config = RunConfig.load(args.config)
    manifest = load_manifest(args.manifest)
    for video in manifest.videos:
        _, dim = read_header(manifest.root / video.feature_path)
        if dim != config.feat_dim:
            raise UsageError(f"video {video.id!r} has feat_dim {dim}, config expects {config.feat_dim}")
    return config, manifest


def _check_out_dir(path: Path):
    if path.exists() and not path.is_dir():
        raise UsageError(f"--out {path} exists and is not a directory")


def cmd_train(args) -> int:
    config, manifest = _load_inputs(args)
    out = Path(args.out)
    _check_out_dir(out)
    videos = manifest
    if args.fold is not None:
        if not 0 <= args.fold < config.folds:
            raise UsageError(f"--fold {args.fold} outside [0, {config.folds}) for folds={config.folds}")
        train_idx, _ = split_folds(len(manifest.videos), config.folds, seed=config.seed)[args.fold]
        videos = manifest.subset(train_idx)
    result = train(training_pairs(videos), config.model_config(), config.train_config(), config.anchor_config())
    out.mkdir(parents=True, exist_ok=True)
    save_params(out / "params.npz", result.params, config)
    write_history_csv(result.history, out / "history.csv")
    (out / "config.json").write_text(json.dumps(config.to_dict(), indent=1, sort_keys=True) + "\n")
    print(f"final loss {result.history[-1][3]:.6f}; wrote {out}", file=sys.stderr)
    return 0


def cmd_eval(args) -> int:
    config, manifest = _load_inputs(args)
    if args.cross_validate:
        report = cross_validate(manifest, config)
    else:
        report = evaluate(manifest, config, load_params(args.params, config))
    print(json.dumps(report, indent=1, sort_keys=True))
    return 0


def cmd_summarize(args) -> int:
    config = RunConfig.load(args.config)
    params = load_params(args.params, config)
    feats = read_archive(args.features)
    if feats.shape[1] != config.feat_dim:
        raise UsageError(f"{args.features} has feat_dim {feats.shape[1]}, config expects {config.feat_dim}")
    summary = make_summary(feats, config, params)
    video_id = args.video_id or Path(args.features).stem
    print(summary.to_json(video_id))
    return 0


def cmd_bench(args) -> int:
    report = run_bench(args.mixers, args.lengths, args.dim, args.trials, args.landmarks, args.seed)
    text = report.to_csv()
    if args.out:
        Path(args.out).write_text(text)
    else:
        sys.stdout.write(text)
    for kind, slope in report.slopes.items():
        print(f"slope {kind} {slope:.3f}", file=sys.stderr)
    return 0


def cmd_gen_synth(args) -> int:
    out = Path(args.out)
    _check_out_dir(out)
    data = {}
    if args.spec:
        path = Path(args.spec)
        if not path.is_file():
            raise UsageError(f"spec file not found: {path}")
        try:
            data = json.loads(path.read_text())
        except json.JSONDecodeError as exc:
            raise UsageError(f"invalid JSON in {path}: {exc}") from None
    spec = SyntheticSpec.from_dict(data)
    manifest = gen_synthetic(spec, out)
    print(f"wrote {len(manifest.videos)} videos to {out}", file=sys.stderr)
    return 0


def cmd_sweep(args) -> int:
    config, manifest = _load_inputs(args)
    rows = []
    for mixer, pooling, scales, depth in itertools.product(
        args.mixers or [config.mixer], args.poolings or [config.pooling],
        args.scales or [list(config.anchor_scales)], args.fc_depths or [config.fc_depth],
    ):
        run = config.replace(mixer=mixer, pooling=pooling, anchor_scales=tuple(scales), fc_depth=depth)
        cv = cross_validate(manifest, run)
        rows.append({"mixer": mixer, "pooling": pooling, "anchor_scales": list(scales), "fc_depth": depth,
                     "mean_f1": cv["mean_f1"], "std_f1": cv["std_f1"], "fold_f1": cv["fold_f1"]})
    print(json.dumps(rows, indent=1))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="edsnet", description="Keyshot video summarization with efficient token mixers.")
    parser.add_argument("-v", "--verbose", action="store_true", help="log per-epoch losses")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="train a model on a manifest")
    p.add_argument("--config", required=True, help="run configuration JSON")
    p.add_argument("--manifest", required=True, help="dataset manifest JSON")
    p.add_argument("--out", required=True, help="output directory for params.npz, history.csv, config.json")
    p.add_argument("--fold", type=int, help="train only on the training split of this fold")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="score summaries against reference masks")
    p.add_argument("--config", required=True, help="run configuration JSON")
    p.add_argument("--manifest", required=True, help="dataset manifest JSON")
    group = p.add_mutually_exclusive_group(required=True)
    group.add_argument("--params", help="trained parameter file")
    group.add_argument("--cross-validate", action="store_true", help="train and evaluate every fold")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("summarize", help="emit a keyshot summary for one feature archive")
    p.add_argument("--config", required=True, help="run configuration JSON")
    p.add_argument("--params", required=True, help="trained parameter file")
    p.add_argument("--features", required=True, help="EDSF feature archive")
    p.add_argument("--video-id", help="id written into the JSON (default: file stem)")
    p.set_defaults(func=cmd_summarize)

    p = sub.add_parser("bench", help="time mixers over sequence lengths")
    p.add_argument("--mixers", type=_name_list(MIXERS), default=["softmax", "fourier", "nystrom"],
                   help="comma-separated mixers (default: softmax,fourier,nystrom)")
    p.add_argument("--lengths", type=_int_list, default=list(DEFAULT_LENGTHS),
                   help="comma-separated power-of-two sequence lengths")
    p.add_argument("--dim", type=int, default=64, help="feature width (default: 64)")
    p.add_argument("--trials", type=int, default=5, help="timed trials per cell, at least 5")
    p.add_argument("--landmarks", type=int, default=16, help="Nystrom landmark count (default: 16)")
    p.add_argument("--seed", type=int, default=0, help="input seed")
    p.add_argument("--out", help="write CSV here instead of stdout")
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("gen-synth", help="write a planted-keyshot synthetic dataset")
    p.add_argument("--spec", help="synthetic spec JSON (default: built-in spec)")
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=cmd_gen_synth)

    p = sub.add_parser("sweep", help="cross-validated ablation grid")
    p.add_argument("--config", required=True, help="base run configuration JSON")
    p.add_argument("--manifest", required=True, help="dataset manifest JSON")
    p.add_argument("--mixers", type=_name_list(MIXERS), help="comma-separated mixers")
    p.add_argument("--poolings", type=_name_list(POOLINGS), help="comma-separated poolings")
    p.add_argument("--scales", type=_int_list, action="append",
                   help="one anchor-scale set, e.g. 4,8,16,32; repeat for several")
    p.add_argument("--fc-depths", type=_int_list, help="comma-separated FC depths")
    p.set_defaults(func=cmd_sweep)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING, format="%(message)s")
    try:
        return args.func(args)
    except (ConfigError, FormatError, UsageError, ValueError) as exc:
        print(f"edsnet {args.command}: error: {exc}", file=sys.stderr)
        return 2
    except (TrainingDiverged, FloatingPointError) as exc:
        print(f"edsnet {args.command}: training diverged: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"edsnet {args.command}: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
