"""Command line surface: synth, compress, inspect, stats, align-train, loss.

Exit codes: 0 success, 1 usage error, 2 data error. Diagnostics go to
standard error; machine-readable output (--json) goes to standard out.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

import numpy as np

from . import containers, refembed
from .errors import Px3dError, UsageError
from .pipeline import CompressConfig, compress_file
from .posenc import AlignConfig, train_coordinate_alignment
from .synth import SceneSpec, generate_scene

THREADS_ENV = "PROXY3D_THREADS"


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _default_threads() -> int:
    env = os.environ.get(THREADS_ENV)
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            raise UsageError(f"{THREADS_ENV} must be an integer, got {env!r}")
    return os.cpu_count() or 1


def _parse_grid(text: str) -> tuple[int, int]:
    try:
        h, w = text.lower().split("x")
        return int(h), int(w)
    except ValueError:
        raise UsageError(f"grid must look like 16x21, got {text!r}")


def _parse_refer(pairs) -> dict[int, int]:
    refer = {}
    for item in pairs or []:
        if "=" not in item:
            raise UsageError(f"--refer expects OBJxxx=LABEL, got {item!r}")
        token, label = item.split("=", 1)
        try:
            ident = refembed.parse_object_token(
                token if token.startswith("<") else f"<{token}>")
        except Px3dError as exc:
            raise UsageError(str(exc))
        try:
            refer[int(label)] = ident
        except ValueError:
            raise UsageError(f"--refer label must be an integer, got {label!r}")
    return refer


def _parse_overrides(pairs) -> dict[int, int]:
    overrides = {}
    for item in pairs or []:
        try:
            label, count = item.split("=", 1)
            overrides[int(label)] = int(count)
        except ValueError:
            raise UsageError(f"--override expects LABEL=COUNT, got {item!r}")
    return overrides


def _cmd_synth(args) -> int:
    ph, pw = _parse_grid(args.grid)
    spec = SceneSpec(seed=args.seed, frames=args.frames, patch_h=ph, patch_w=pw,
                     channels=args.channels, objects=args.objects,
                     pixel_q=args.pixel_q, noise_std=args.noise_std)
    bundle, truth = generate_scene(spec)
    containers.write_scene(bundle, args.out)
    if args.truth:
        truth.save(args.truth)
    print(f"wrote {args.out}: {len(bundle.frames)} frames, grid {ph}x{pw}, "
          f"{spec.objects} objects", file=sys.stderr)
    return 0


def _cmd_compress(args) -> int:
    config = CompressConfig(
        tokens=args.tokens,
        min_proxies=args.min_proxies,
        per_label_override=_parse_overrides(args.override),
        edges=args.edges,
        posenc=args.posenc,
        refer=_parse_refer(args.refer),
        seed=args.seed,
        threads=args.threads if args.threads is not None else _default_threads(),
        patch_size=args.patch_size,
    )
    seq = compress_file(args.infile, args.out, config)
    print(f"wrote {args.out}: K={seq.k}, C={seq.channels}, "
          f"G={len(seq.group_table)}", file=sys.stderr)
    return 0


def _cmd_inspect(args) -> int:
    seq = containers.read_tokens(args.infile)
    doc = {
        "k": seq.k,
        "c": seq.channels,
        "groups": [
            {"label": e.label, "count": e.count,
             "centroid": [float(x) for x in e.centroid]}
            for e in seq.group_table
        ],
        "meta": seq.meta,
    }
    if args.json:
        print(json.dumps(doc, sort_keys=True))
    else:
        print(f"K={seq.k} C={seq.channels} groups={len(seq.group_table)}")
        for e in seq.group_table:
            c = e.centroid
            print(f"  label={e.label} count={e.count} "
                  f"centroid=({c[0]:.4f}, {c[1]:.4f}, {c[2]:.4f})")
        print(f"meta: {json.dumps(seq.meta, sort_keys=True)}")
    return 0


def _cmd_stats(args) -> int:
    bundle = containers.read_scene(args.infile)
    hist: dict[int, int] = {}
    for f in bundle.frames:
        values, counts = np.unique(f.labels[f.labels >= 0], return_counts=True)
        for v, c in zip(values.tolist(), counts.tolist()):
            hist[v] = hist.get(v, 0) + c
    doc = {
        "frames": len(bundle.frames),
        "granularity": bundle.granularity.name,
        "grid": [bundle.patch_h, bundle.patch_w],
        "pixels": [bundle.height, bundle.width],
        "channels": bundle.channels,
        "histogram": {str(k): hist[k] for k in sorted(hist)},
    }
    if args.json:
        print(json.dumps(doc, sort_keys=True))
    else:
        print(f"frames={doc['frames']} granularity={doc['granularity']} "
              f"grid={bundle.patch_h}x{bundle.patch_w} channels={bundle.channels}")
        for k in sorted(hist):
            print(f"  label={k} cells={hist[k]}")
    return 0


def _cmd_align_train(args) -> int:
    config = AlignConfig(steps=args.steps, lr=args.lr, batch=args.batch,
                         seed=args.seed, samples=args.samples,
                         eval_samples=args.eval_samples,
                         channels=args.channels)
    metrics = train_coordinate_alignment(config)
    doc = {key: metrics[key] for key in
           ("steps", "final_train_mse", "final_eval_mse", "r2", "loss_curve")}
    with open(args.out, "w", encoding="utf-8") as fh:
        json.dump(doc, fh)
    r2 = ", ".join(f"{v:.4f}" for v in metrics["r2"])
    print(f"steps={metrics['steps']} eval_mse={metrics['final_eval_mse']:.6g} "
          f"r2=[{r2}]", file=sys.stderr)
    return 0


def _cmd_loss(args) -> int:
    loss_input = refembed.read_logits(args.infile)
    value = refembed.nll_loss(loss_input)
    print(f"{value:.17g}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="px3d", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic scene file")
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--frames", type=int, default=32)
    p.add_argument("--grid", default="16x21", help="patch grid, e.g. 16x21")
    p.add_argument("--channels", type=int, default=64)
    p.add_argument("--objects", type=int, default=8)
    p.add_argument("--noise-std", type=float, default=0.01)
    p.add_argument("--pixel-q", type=int, default=None,
                   help="emit pixel-granularity geometry, q pixels per patch side")
    p.add_argument("--truth", default=None, help="write ground truth JSON here")
    p.set_defaults(func=_cmd_synth)

    p = sub.add_parser("compress", help="compile a scene into proxy tokens")
    p.add_argument("--in", dest="infile", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--tokens", type=int, default=450)
    p.add_argument("--min-proxies", type=int, default=1)
    p.add_argument("--override", action="append", metavar="LABEL=COUNT",
                   help="per-label minimum proxy count (repeatable)")
    p.add_argument("--edges", type=int, default=3,
                   help="k-NN adjacency density, recorded in metadata; the "
                        "serialized order itself follows the nearest-neighbor "
                        "chain")
    p.add_argument("--posenc", action="store_true",
                   help="apply positional encoding to the output tokens")
    p.add_argument("--refer", action="append", metavar="OBJxxx=LABEL",
                   help="fuse an identifier embedding into a label (repeatable)")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--threads", type=int, default=None,
                   help=f"worker threads (default: ${THREADS_ENV} or cpu count)")
    p.add_argument("--patch-size", type=int, default=None,
                   help="q for pixel-granularity scenes")
    p.set_defaults(func=_cmd_compress)

    p = sub.add_parser("inspect", help="summarize a token file")
    p.add_argument("--in", dest="infile", required=True)
    p.add_argument("--json", action="store_true")
    p.set_defaults(func=_cmd_inspect)

    p = sub.add_parser("stats", help="summarize a scene file")
    p.add_argument("--in", dest="infile", required=True)
    p.add_argument("--json", action="store_true")
    p.set_defaults(func=_cmd_stats)

    p = sub.add_parser("align-train", help="run the coordinate alignment check")
    p.add_argument("--steps", type=int, default=5000)
    p.add_argument("--lr", type=float, default=1e-3)
    p.add_argument("--batch", type=int, default=256)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--samples", type=int, default=2048)
    p.add_argument("--eval-samples", type=int, default=512)
    p.add_argument("--channels", type=int, default=64)
    p.add_argument("--out", required=True, help="metrics JSON path")
    p.set_defaults(func=_cmd_align_train)

    p = sub.add_parser("loss", help="compute the response NLL from a PXLG file")
    p.add_argument("--in", dest="infile", required=True)
    p.set_defaults(func=_cmd_loss)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return args.func(args)
    except UsageError as exc:
        print(f"px3d: usage error: {exc}", file=sys.stderr)
        return 1
    except Px3dError as exc:
        print(f"px3d: error: {exc}", file=sys.stderr)
        return 2


def entry() -> None:
    raise SystemExit(main())
