"""Batch command-line driver: ``embedmap {synth,evaluate,cross,sensitivity,rank}``."""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from . import io as eio
from .errors import EmbedMapError
from .experiments import rank_sweep, sensitivity_sweep
from .metrics import average_video_embeddings
from .protocol import cross_matrix, evaluate
from .synthetic import emit_embeddings, generate_protocol, generate_world
from .types import EvalConfig

log = logging.getLogger("embedmap")


def pct(x: float) -> str:
    return f"{100 * x:.2f}%"


def _load_set(path: str, args):
    emb = eio.read_embeddings(path)
    if getattr(args, "average_frames", None):
        emb = average_video_embeddings(emb, args.average_frames)
    return emb


def _config(args, parser) -> EvalConfig:
    mode, rank = args.mode[0], None
    if mode not in ("fitted", "identity", "rank"):
        parser.error(f"--mode must be fitted, identity or rank K, got {mode!r}")
    if mode == "rank":
        if len(args.mode) != 2 or not args.mode[1].isdigit():
            parser.error("--mode rank needs a positive integer rank, e.g. --mode rank 16")
        rank = int(args.mode[1])
    elif len(args.mode) != 1:
        parser.error(f"--mode {mode} takes no argument")
    return EvalConfig(lam=args.lam, mapping_mode=mode, rank=rank, subsample=args.pairs_subsample,
                      seed=args.seed, normalize_before_fit=not args.no_normalize)


def _curve_path(args) -> Path:
    return Path(args.csv) if args.csv else Path(args.report).with_suffix(".csv")


def cmd_synth(args, parser) -> int:
    bad = [d for d in args.out_dims if d < args.latent_dim]
    if bad:
        parser.error(f"--out-dims {bad} smaller than --latent-dim {args.latent_dim}")
    world = generate_world(args.n_identities, args.latent_dim, args.images_per_identity,
                           [(d, args.obs_sigma) for d in args.out_dims], args.seed, args.sigma)
    proto = generate_protocol(world, args.folds, args.matched, args.mismatched)
    out = Path(args.out_dir)
    ext = ".csv" if args.format == "csv" else ".emb"
    files = []
    for k in range(len(world.systems)):
        path = out / f"system_{k}{ext}"
        eio.write_embeddings(emit_embeddings(world, k), path)
        files.append(path.name)
    eio.write_pairs_lfw(proto, out / "pairs.txt")
    manifest = {
        "seed": args.seed,
        "n_identities": args.n_identities,
        "images_per_identity": args.images_per_identity,
        "latent_dim": args.latent_dim,
        "out_dims": list(args.out_dims),
        "latent_sigma": args.sigma,
        "obs_sigma": args.obs_sigma,
        "folds": args.folds,
        "matched_per_fold": args.matched,
        "mismatched_per_fold": args.mismatched,
        "embeddings": files,
        "pairs": "pairs.txt",
    }
    text = eio.dumps(manifest)
    eio.atomic_write(out / "manifest.json", text)
    sys.stdout.write(text)
    return 0


def cmd_evaluate(args, parser) -> int:
    config = _config(args, parser)
    source = _load_set(args.source, args)
    target = _load_set(args.target, args)
    proto = eio.read_pairs(args.pairs, args.pairs_format)
    report = evaluate(source, target, proto, config, jobs=args.jobs)
    eio.write_report(report, args.report)
    for w in report.warnings:
        log.warning(w)
    print(f"{source.system_tag} -> {target.system_tag} [{config.mapping_mode}]: {report.summary()}")
    return 0


def format_cross_table(cm) -> str:
    acc, base = cm.accuracy(), cm.baseline_accuracy()
    n = len(cm.tags)
    cells = [[pct(acc[i, j]) + ("" if i == j or base[i, j] != base[i, j] else f" ({pct(base[i, j])})")
              for j in range(n)] for i in range(n)]
    head = ["from \\ to"] + list(cm.tags)
    rows = [[cm.tags[i]] + cells[i] for i in range(n)]
    widths = [max(len(r[c]) for r in [head] + rows) for c in range(n + 1)]
    line = lambda r: "  ".join(s.ljust(w) for s, w in zip(r, widths)).rstrip()
    return "\n".join([line(head)] + [line(r) for r in rows])


def cmd_cross(args, parser) -> int:
    config = _config(args, parser)
    systems = [_load_set(p, args) for p in args.systems]
    proto = eio.read_pairs(args.pairs, args.pairs_format)
    cm = cross_matrix(systems, proto, config, jobs=args.jobs)
    eio.write_report(cm, args.report)
    print(format_cross_table(cm))
    print(f"max drop vs native: {100 * cm.max_drop():.2f} points")
    return 0


def cmd_sensitivity(args, parser) -> int:
    config = _config(args, parser).replace(subsample=None)
    source, target = _load_set(args.source, args), _load_set(args.target, args)
    proto = eio.read_pairs(args.pairs, args.pairs_format)
    curve = sensitivity_sweep(source, target, proto, config, num_points=args.points, seed=args.seed,
                              drop_threshold=args.drop, repetitions=args.repetitions, jobs=args.jobs)
    csv_path = _curve_path(args)
    eio.write_curve_csv(curve, csv_path)
    eio.write_report(curve, args.report, extra={"config": config.to_dict()})
    print(f"full accuracy {pct(curve.full_accuracy)}; m = {curve.m}; "
          f"p for {100 * args.drop:g}% drop: {curve.p_for_drop if curve.p_for_drop is not None else 'none'}")
    return 0


def _ranks(text: str) -> list[int]:
    try:
        ranks = [int(x) for x in text.replace(",", " ").split()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"ranks must be integers, got {text!r}") from None
    if not ranks:
        raise argparse.ArgumentTypeError("empty rank list")
    return ranks


def cmd_rank(args, parser) -> int:
    config = _config(args, parser)
    source, target = _load_set(args.source, args), _load_set(args.target, args)
    proto = eio.read_pairs(args.pairs, args.pairs_format)
    curve = rank_sweep(source, target, proto, config, ranks=args.ranks, jobs=args.jobs)
    eio.write_curve_csv(curve, _curve_path(args))
    eio.write_report(curve, args.report, extra={"config": config.to_dict()})
    var = dict(curve.variance_points)
    for k, a in curve.points:
        print(f"k={k:<4d} accuracy {pct(a)}  variance explained {var[k]:.4f}")
    print(f"untruncated accuracy {pct(curve.full_accuracy)}")
    return 0


def _common(p, pairs=True):
    if pairs:
        p.add_argument("--pairs", required=True, help="pairs file (.txt LFW, .csv YTF, .tsv generic)")
        p.add_argument("--pairs-format", default="auto", choices=["auto", "lfw", "ytf", "tsv"])
    p.add_argument("--mode", nargs="+", default=["fitted"], metavar="MODE",
                   help="fitted | identity | rank K (default: fitted)")
    p.add_argument("--lambda", dest="lam", type=float, default=1.0, help="ridge coefficient (default 1.0)")
    p.add_argument("--pairs-subsample", type=int, default=None, metavar="P",
                   help="fit each fold's map on P randomly drawn matched pairs")
    p.add_argument("--seed", type=int, default=42)
    p.add_argument("--no-normalize", action="store_true", help="do not l2-normalise rows before fitting")
    p.add_argument("--average-frames", type=int, default=None, metavar="N",
                   help="treat ids as video/frame and average the first N frames per video")
    p.add_argument("--jobs", type=int, default=1, help="worker threads; results do not depend on this")
    p.add_argument("--report", required=True, help="JSON report path")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="embedmap", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic world: embedding files plus pairs.txt")
    p.add_argument("--seed", type=int, default=42)
    p.add_argument("--n-identities", type=int, default=3000)
    p.add_argument("--images-per-identity", type=int, default=4)
    p.add_argument("--latent-dim", type=int, default=32)
    p.add_argument("--out-dims", type=int, nargs="+", default=[64, 64])
    p.add_argument("--sigma", type=float, default=0.05, help="per-image latent jitter")
    p.add_argument("--obs-sigma", type=float, default=0.0, help="per-system output noise")
    p.add_argument("--folds", type=int, default=10)
    p.add_argument("--matched", type=int, default=300)
    p.add_argument("--mismatched", type=int, default=300)
    p.add_argument("--format", choices=["csv", "bin"], default="csv")
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("evaluate", help="cross-validated accuracy of one source -> target pairing")
    p.add_argument("--source", required=True)
    p.add_argument("--target", required=True)
    _common(p)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("cross", help="full from/to accuracy matrix with identity baselines")
    p.add_argument("--systems", nargs="+", required=True)
    _common(p)
    p.set_defaults(func=cmd_cross)

    p = sub.add_parser("sensitivity", help="accuracy against number of fitting pairs")
    p.add_argument("--source", required=True)
    p.add_argument("--target", required=True)
    _common(p)
    p.add_argument("--points", type=int, default=100)
    p.add_argument("--drop", type=float, default=0.01)
    p.add_argument("--repetitions", type=int, default=1)
    p.add_argument("--csv", default=None, help="curve CSV path (default: report path with .csv)")
    p.set_defaults(func=cmd_sensitivity)

    p = sub.add_parser("rank", help="accuracy against rank of the truncated map")
    p.add_argument("--source", required=True)
    p.add_argument("--target", required=True)
    _common(p)
    p.add_argument("--ranks", type=_ranks, default=[2, 4, 8, 16, 32, 64], help="e.g. 2,4,8,16")
    p.add_argument("--csv", default=None, help="curve CSV path (default: report path with .csv)")
    p.set_defaults(func=cmd_rank)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s: %(message)s")
    try:
        return args.func(args, parser)
    except (EmbedMapError, OSError) as exc:
        print(f"embedmap {args.command}: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
