"""Command-line interface: ``s2vs <command> [flags]``.

Every library error maps to its own exit status (see :mod:`s2vs.errors`);
argparse usage errors exit with 2.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import sys
from pathlib import Path

import numpy as np
import torch

from . import config as cfgmod
from .augment import center_view
from .benchmark import copy_detection_run
from .errors import ConfigError, IngestError, S2VSError
from .evaluation import (EvalRun, apply_hard_subset, build_hard_subset, diagonal_dominance, dump_similarity_matrix,
                         mean_ap, micro_ap, per_query_report, similarity_normalize)
from .model import SimilarityModel
from .train import Checkpoint, train
from .video import generate_synthetic_corpus, load_video, read_corpus, read_features, write_corpus, write_features

log = logging.getLogger("s2vs")

FEATURE_SUFFIX = ".s2vf"


def _run_config(args) -> cfgmod.RunConfig:
    overrides = {}
    for item in args.set or []:
        if "=" not in item:
            raise ConfigError(f"--set expects key=value, got {item!r}")
        key, raw = (s.strip() for s in item.split("=", 1))
        if key not in cfgmod.KEY_INDEX:
            raise ConfigError(f"unknown key {key!r}")
        overrides.update(cfgmod.parse_text(f"{key} = {raw}"))
    if getattr(args, "seed", None) is not None:
        overrides["seed"] = args.seed
    path = args.config
    if path is not None and not Path(path).exists() and cfgmod.preset_path(path).exists():
        path = cfgmod.preset_path(path)
    return cfgmod.load(path, overrides)


def _load_model(path) -> tuple[SimilarityModel, Checkpoint]:
    ckpt = Checkpoint.load(path)
    ckpt.model.eval()
    return ckpt.model, ckpt


def _video_input(path, model: SimilarityModel, size: int) -> torch.Tensor:
    """Region features of a video file, frame directory or ``.s2vf`` feature file."""
    path = Path(path)
    if path.suffix == FEATURE_SUFFIX:
        return torch.as_tensor(read_features(path), dtype=model.dtype)
    if not path.exists():
        raise IngestError(f"no such video: {path}")
    with torch.no_grad():
        return model.extract(center_view(load_video(path), size))


def _print(obj) -> None:
    print(json.dumps(obj, indent=2, sort_keys=True))


# ---------------------------------------------------------------------------
# commands


def cmd_make_synthetic(args) -> int:
    rc = _run_config(args)
    spec = rc.corpus
    if args.seed is not None:
        spec = dataclasses.replace(spec, seed=args.seed)
    corpus = generate_synthetic_corpus(spec)
    root = write_corpus(corpus, args.out, spec)
    print(f"wrote {len(corpus)} videos to {root}")
    return 0


def cmd_extract(args) -> int:
    model, ckpt = _load_model(args.ckpt)
    size = ckpt.train_config.augment.H_B
    out = Path(args.out)
    if args.corpus:
        out.mkdir(parents=True, exist_ok=True)
        videos = read_corpus(args.corpus)
    else:
        videos = [load_video(args.video)]
    for video in videos:
        with torch.no_grad():
            feats = model.extract(center_view(video, size)).double().numpy()
        target = out / f"{video.source_id}{FEATURE_SUFFIX}" if args.corpus else out
        write_features(feats, target)
        print(f"{video.source_id}: {feats.shape[0]}x{feats.shape[1]}x{feats.shape[2]} -> {target}")
    return 0


def cmd_train(args) -> int:
    rc = _run_config(args)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    corpus = read_corpus(args.corpus) if args.corpus else generate_synthetic_corpus(rc.corpus)
    (out / "config.cfg").write_text(cfgmod.dump(rc))
    resume = Checkpoint.load(args.resume) if args.resume else None
    ckpt = train(corpus, rc.train, resume=resume, out_dir=out)
    print(f"trained {ckpt.iteration} iterations on {len(corpus)} videos; checkpoint {out / 'checkpoint.pt'}")
    return 0


def cmd_score(args) -> int:
    model, ckpt = _load_model(args.ckpt)
    size = ckpt.train_config.augment.H_B
    fa = _video_input(args.a, model, size)
    fb = _video_input(args.b, model, size)
    with torch.no_grad():
        s = float(model.score_features(fa, fb))
    print(f"{(s + 1.0) / 2.0:.6f}")
    return 0


def _metrics(run: EvalRun) -> dict:
    return {"mAP": mean_ap(run), "uAP": micro_ap(run)}


def cmd_evaluate(args) -> int:
    if args.run:
        run = EvalRun.from_csv(args.run)
    else:
        if not (args.ckpt and args.corpus):
            raise ConfigError("evaluate needs --run, or --ckpt together with --corpus")
        model, ckpt = _load_model(args.ckpt)
        corpus = read_corpus(args.corpus)
        seed = args.seed if args.seed is not None else 12345
        run = copy_detection_run(model, corpus, ckpt.train_config.augment, seed=seed)
    metrics = _metrics(run)
    print(f"mAP  {metrics['mAP']:.2f}\nuAP  {metrics['uAP']:.2f}")
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        run.to_csv(out / "run.csv")
        (out / "metrics.json").write_text(json.dumps({**metrics, "queries": per_query_report(run)}, indent=2))
    return 0


def cmd_normalize(args) -> int:
    run = EvalRun.from_csv(args.run)
    bg_run = EvalRun.from_csv(args.background)
    background = {q: np.array(list(c.values())) for q, c in bg_run.scores.items()}
    normed = similarity_normalize(run, background, args.k)
    normed.to_csv(args.out)
    before, after = _metrics(run), _metrics(normed)
    print(f"mAP  {before['mAP']:.2f} -> {after['mAP']:.2f}\nuAP  {before['uAP']:.2f} -> {after['uAP']:.2f}")
    return 0


def cmd_hard_subset(args) -> int:
    paths = [p.strip() for p in args.models.split(",") if p.strip()]
    runs = [EvalRun.from_csv(p) for p in paths]
    _, removed = build_hard_subset(runs)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "removed.csv", "w") as fh:
        fh.write("query_id,candidate_id\n")
        for q, c in sorted(removed):
            fh.write(f"{q},{c}\n")
    summary = {"removed": len(removed), "runs": {}}
    for path, run in zip(paths, runs):
        hard = apply_hard_subset(run, removed)
        hard.to_csv(out / f"hard_{Path(path).stem}.csv")
        summary["runs"][path] = {"full_mAP": mean_ap(run), "hard_mAP": mean_ap(hard)}
    _print(summary)
    return 0


def cmd_dump_simmatrix(args) -> int:
    model, ckpt = _load_model(args.ckpt)
    size = ckpt.train_config.augment.H_B
    v = center_view(load_video(args.a), size)
    if args.b:
        u = center_view(load_video(args.b), size)
    else:
        u = v[::-1].copy() if args.transform == "reverse" else v.copy()
    paths = dump_similarity_matrix(v, u, model, args.out)
    raw = np.loadtxt(paths["raw"], delimiter=",", ndmin=2)
    anti = args.transform == "reverse" and not args.b
    label = "anti-diagonal" if anti else "diagonal"
    print(f"{label} dominance (raw): {diagonal_dominance(raw, anti=anti):.4f}")
    for name, p in sorted(paths.items()):
        print(f"{name}: {p}")
    return 0


# ---------------------------------------------------------------------------
# parser


COMMANDS = {
    "make-synthetic": (cmd_make_synthetic, "render the synthetic corpus to PNG frame directories"),
    "extract": (cmd_extract, "write region feature maps (.s2vf) for a video or a corpus"),
    "train": (cmd_train, "self-supervised training; writes checkpoint.pt and train_log.jsonl"),
    "score": (cmd_score, "print the similarity of two videos on [0, 1]"),
    "evaluate": (cmd_evaluate, "mAP and uAP of a run CSV (or of a checkpoint on a corpus)"),
    "normalize": (cmd_normalize, "subtract each query's top-k background similarity mean"),
    "hard-subset": (cmd_hard_subset, "drop positives every model ranks with perfect precision"),
    "dump-simmatrix": (cmd_dump_simmatrix, "write raw and filtered frame-to-frame matrices"),
}


def build_parser() -> argparse.ArgumentParser:
    fmt = argparse.RawDescriptionHelpFormatter
    parser = argparse.ArgumentParser(prog="s2vs", description=__doc__.splitlines()[0],
                                     epilog=cfgmod.help_text(), formatter_class=fmt)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, metavar="command")

    def add(name):
        fn, help_ = COMMANDS[name]
        p = sub.add_parser(name, help=help_, description=help_, epilog=cfgmod.help_text(), formatter_class=fmt)
        p.set_defaults(func=fn)
        p.add_argument("--config", help="config file or preset name (desk, full)")
        p.add_argument("--set", action="append", metavar="KEY=VALUE", help="override one config key")
        p.add_argument("--seed", type=int, help="seed override")
        return p

    p = add("make-synthetic")
    p.add_argument("--out", required=True)

    p = add("extract")
    p.add_argument("--ckpt", required=True)
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--video")
    src.add_argument("--corpus")
    p.add_argument("--out", required=True, help="feature file (--video) or directory (--corpus)")

    p = add("train")
    p.add_argument("--out", required=True)
    p.add_argument("--corpus", help="corpus directory; synthetic corpus from the config when omitted")
    p.add_argument("--resume", help="checkpoint to continue from")

    p = add("score")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--a", required=True, help="video, frame directory or .s2vf file")
    p.add_argument("--b", required=True, help="video, frame directory or .s2vf file")

    p = add("evaluate")
    p.add_argument("--run", help="run CSV: query_id,candidate_id,similarity,relevant")
    p.add_argument("--ckpt")
    p.add_argument("--corpus")
    p.add_argument("--out", help="directory for run.csv and metrics.json")

    p = add("normalize")
    p.add_argument("--run", required=True)
    p.add_argument("--background", required=True, help="run CSV of query-to-background similarities")
    p.add_argument("--k", type=int, required=True)
    p.add_argument("--out", required=True)

    p = add("hard-subset")
    p.add_argument("--models", required=True, help="comma-separated run CSVs")
    p.add_argument("--out", required=True)

    p = add("dump-simmatrix")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--a", required=True)
    p.add_argument("--b", help="second video; --transform of --a when omitted")
    p.add_argument("--transform", choices=("identity", "reverse"), default="identity")
    p.add_argument("--out", required=True, help="output prefix")
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except S2VSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code


if __name__ == "__main__":
    sys.exit(main())
