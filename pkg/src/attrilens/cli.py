"""Command-line driver for the end-to-end demo workflow.

Subcommands cover dataset synthesis, training, attribution, analysis,
heatmap rendering and the viewer server:

    attrilens synth     --out data --seed 0
    attrilens train     --data data --out model --epochs 30
    attrilens attribute --data data --model model --out attr
    attrilens analyze   --attr attr --out analysis
    attrilens render    --attr attr --indices 0,1 --out pngs
    attrilens serve     project.json --port 8000

Every producing subcommand writes a run.json next to its outputs with
the resolved parameters and headline results, so runs are
self-describing. Exit codes: 0 success, 1 runtime failure, 2 usage.
"""

from __future__ import annotations

import argparse
import json
import shutil
import sys
from pathlib import Path

import numpy as np

from . import nn
from . import pipeline as pl
from . import tensor as T
from .analysis import AnalysisParams, spray_pipeline
from .attribution.attributors import Gradient
from .attribution.composites import COMPOSITE_NAMES, make_composite
from .attribution.image import COLORMAPS, render_heatmap
from .errors import IndexOutOfRange, StoreInconsistent, ToolkitError
from .store import (
    VALID_STRATEGIES,
    load_label_map,
    open_attribution_store,
    open_dataset_store,
    write_analysis,
    write_attribution_store,
)
from .synth import LABEL_MAP_FILE, SynthSpec, write_synth_dataset
from .tensor import Tensor

RUN_FILE = "run.json"


def _write_run(out_dir, payload: dict) -> None:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / RUN_FILE).write_text(json.dumps(payload, indent=1, sort_keys=True), "utf-8")


def _normalize(data: Tensor) -> Tensor:
    """Map u8 pixels 0..255 onto [0, 1], the model's input range.

    Zero stays zero so the black background contributes nothing to the
    first layer and attribution mass lands on the drawn pixels.
    """
    return Tensor(data.data.astype(np.float32) / 255.0, dtype="f32")


def _category_names(store_dir, labels: np.ndarray) -> list[str]:
    """Class names from the store's label map, else positional names."""
    path = Path(store_dir) / LABEL_MAP_FILE
    if path.exists():
        return [e.name for e in load_label_map(path)]
    return [f"class_{i}" for i in range(int(labels.max()) + 1 if labels.size else 0)]


# -- model zoo --------------------------------------------------------

def demo_model(image_size: int = 32, channels: int = 1, n_classes: int = 3) -> nn.Model:
    """The fixed demo CNN: two conv/pool stages, then two dense layers."""
    side = image_size // 4
    layers = [
        nn.conv2d("conv1", T.zeros((8, channels, 3, 3), "f32"), T.zeros((8,), "f32"), pad=1),
        nn.relu("relu1"),
        nn.maxpool2d("pool1", 2),
        nn.conv2d("conv2", T.zeros((16, 8, 3, 3), "f32"), T.zeros((16,), "f32"), pad=1),
        nn.relu("relu2"),
        nn.maxpool2d("pool2", 2),
        nn.flatten("flatten"),
        nn.linear("dense1", T.zeros((64, 16 * side * side), "f32"), T.zeros((64,), "f32")),
        nn.relu("relu3"),
        nn.linear("dense2", T.zeros((n_classes, 64), "f32"), T.zeros((n_classes,), "f32")),
    ]
    return nn.Model(layers, (channels, image_size, image_size))


# -- subcommands -------------------------------------------------------

def _cmd_synth(args) -> int:
    spec = SynthSpec(
        n_per_class=args.n_per_class,
        watermark_fraction=args.watermark_fraction,
        seed=args.seed,
    )
    summary = write_synth_dataset(args.out, spec)
    _write_run(
        args.out,
        {
            "command": "synth",
            "n_per_class": spec.n_per_class,
            "image_size": spec.image_size,
            "watermark_fraction": spec.watermark_fraction,
            "seed": spec.seed,
            **summary,
        },
    )
    print(f"wrote {summary['n_samples']} samples ({summary['n_watermarked']} watermarked)")
    return 0


def _cmd_train(args) -> int:
    store = open_dataset_store(args.data)
    if store.label.ndim != 1:
        raise StoreInconsistent("training requires a single-label dataset")
    names = _category_names(args.data, store.label.data)
    _, channels, height, width = store.data.shape
    if height != width:
        raise StoreInconsistent(f"demo model expects square images, got {height}x{width}")
    model = nn.he_uniform_init(demo_model(height, channels, len(names)), args.seed)
    trained, accuracy = nn.train_sgd(
        model, _normalize(store.data), store.label, args.epochs, args.lr, args.batch, args.seed
    )
    nn.save_model(args.out, trained)
    _write_run(
        args.out,
        {
            "command": "train",
            "data": str(args.data),
            "epochs": args.epochs,
            "lr": args.lr,
            "batch": args.batch,
            "seed": args.seed,
            "n_classes": len(names),
            "train_accuracy": accuracy,
        },
    )
    print(f"train accuracy {accuracy:.4f}")
    return 0


def _cmd_attribute(args) -> int:
    store = open_dataset_store(args.data)
    if store.label.ndim != 1:
        raise StoreInconsistent("attribution requires a single-label dataset")
    model = nn.load_model(args.model)
    kwargs = {"low": args.low, "high": args.high} if args.composite == "epsilon-gamma-box" else {}
    attributor = Gradient(model, make_composite(args.composite, **kwargs))

    x = _normalize(store.data)
    y = store.label.data.astype(np.int64)
    logits = nn.predict_logits(model, x)
    n, n_out = logits.shape
    maps = np.empty((n,) + tuple(x.shape[1:]), np.float32)
    for i in range(n):
        unit = int(y[i]) if args.strategy == "true_label" else int(logits.data[i].argmax())
        seed_rel = np.zeros(n_out, np.float32)
        seed_rel[unit] = 1.0
        maps[i] = attributor(Tensor(x.data[i]), Tensor(seed_rel, dtype="f32")).relevance.data
    write_attribution_store(args.out, Tensor(maps, dtype="f32"), store.label, logits)

    label_map = Path(args.data) / LABEL_MAP_FILE
    if label_map.exists():
        shutil.copyfile(label_map, Path(args.out) / LABEL_MAP_FILE)
    _write_run(
        args.out,
        {
            "command": "attribute",
            "data": str(args.data),
            "model": str(args.model),
            "composite": args.composite,
            "low": args.low,
            "high": args.high,
            "strategy": args.strategy,
            "n_samples": n,
        },
    )
    print(f"wrote {n} attribution maps")
    return 0


def _cmd_analyze(args) -> int:
    store = open_attribution_store(args.attr)
    if store.label.ndim != 1:
        raise StoreInconsistent("analysis requires a single-label attribution store")
    y = store.label.data
    names = _category_names(args.attr, y)
    wanted = [tok for tok in (args.categories or "").split(",") if tok]
    unknown = sorted(set(wanted) - set(names))
    if unknown:
        raise ToolkitError(f"unknown categories: {', '.join(unknown)}")

    params = AnalysisParams(
        knn_k=args.knn_k,
        n_eigval=args.n_eigval,
        kmeans_range=list(range(args.kmeans_min, args.kmeans_max + 1)),
        tsne_perplexity=args.tsne_perplexity,
        tsne_iters=args.tsne_iters,
        tsne_on=args.tsne_on,
        seed=args.seed,
    )
    cache = pl.CacheStore(Path(args.out) / "cache")
    analyzed = []
    with pl.execution_log() as record:
        for value, name in enumerate(names):
            if wanted and name not in wanted:
                continue
            idx = np.nonzero(y == value)[0]
            if idx.size == 0:
                continue
            analysis = spray_pipeline(
                Tensor(store.attribution.data[idx], dtype="f32"),
                params,
                io=cache,
                index=idx.astype(np.int64),
            )
            write_analysis(args.out, analysis, args.name, name)
            analyzed.append(name)

    _write_run(
        args.out,
        {
            "command": "analyze",
            "attr": str(args.attr),
            "name": args.name,
            "categories": analyzed,
            "knn_k": params.knn_k,
            "n_eigval": params.n_eigval,
            "kmeans_min": args.kmeans_min,
            "kmeans_max": args.kmeans_max,
            "tsne_perplexity": params.tsne_perplexity,
            "tsne_iters": params.tsne_iters,
            "tsne_on": params.tsne_on,
            "seed": params.seed,
            "executed": len(record.executed),
            "cache_hits": len(record.cache_hits),
        },
    )
    print(
        f"analyzed {len(analyzed)} categories "
        f"({len(record.executed)} steps computed, {len(record.cache_hits)} cache hits)"
    )
    return 0


def _cmd_render(args) -> int:
    store = open_attribution_store(args.attr)
    try:
        indices = [int(tok) for tok in args.indices.split(",") if tok.strip()]
    except ValueError:
        args.parser.error("--indices must be a comma-separated list of integers")
    if not indices:
        args.parser.error("--indices must name at least one sample")

    base = None
    if args.mode == "overlay":
        if args.data is None:
            args.parser.error("--data is required for overlay mode")
        base = open_dataset_store(args.data)
        if base.n_samples != store.n_samples:
            raise StoreInconsistent(
                f"dataset has {base.n_samples} samples, attributions {store.n_samples}"
            )

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    files = []
    n = store.n_samples
    for i in indices:
        if not 0 <= i < n:
            raise IndexOutOfRange(f"index {i} outside [0, {n})")
        relevance = Tensor(store.attribution.data[i])
        image = Tensor(base.data.data[i]) if base is not None else None
        png = render_heatmap(relevance, args.colormap, args.mode, base_image=image)
        path = out / f"{i:05d}.png"
        path.write_bytes(png)
        files.append(path.name)

    _write_run(
        args.out,
        {
            "command": "render",
            "attr": str(args.attr),
            "indices": indices,
            "colormap": args.colormap,
            "mode": args.mode,
            "files": files,
        },
    )
    print(f"wrote {len(files)} images to {out}")
    return 0


def _cmd_serve(args) -> int:
    from . import server

    server.serve(args.manifests, host=args.host, port=args.port, cors=args.cors)
    return 0


# -- argument parsing --------------------------------------------------

def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="attrilens",
        description="attribution analysis workflow: synthesize, train, attribute, analyze, view",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate the synthetic shape dataset")
    p.add_argument("--out", required=True, help="dataset store directory")
    p.add_argument("--n-per-class", type=int, default=200)
    p.add_argument("--watermark-fraction", type=float, default=0.5)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=_cmd_synth)

    p = sub.add_parser("train", help="train the demo CNN on a dataset store")
    p.add_argument("--data", required=True, help="dataset store directory")
    p.add_argument("--out", required=True, help="model output directory")
    p.add_argument("--epochs", type=int, default=30)
    p.add_argument("--lr", type=float, default=0.05)
    p.add_argument("--batch", type=int, default=32)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=_cmd_train)

    p = sub.add_parser("attribute", help="write one attribution map per sample")
    p.add_argument("--data", required=True, help="dataset store directory")
    p.add_argument("--model", required=True, help="trained model directory")
    p.add_argument("--out", required=True, help="attribution store directory")
    p.add_argument(
        "--composite",
        default="epsilon-gamma-box",
        help=f"rule composite, one of: {', '.join(COMPOSITE_NAMES)}",
    )
    p.add_argument("--low", type=float, default=-3.0, help="input-domain lower bound")
    p.add_argument("--high", type=float, default=3.0, help="input-domain upper bound")
    p.add_argument("--strategy", default="true_label", choices=VALID_STRATEGIES)
    p.set_defaults(func=_cmd_attribute)

    p = sub.add_parser("analyze", help="cluster attribution maps per category")
    p.add_argument("--attr", required=True, help="attribution store directory")
    p.add_argument("--out", required=True, help="analysis store directory")
    p.add_argument("--name", default="spectral", help="analysis name in the store")
    p.add_argument("--categories", default=None, help="comma-separated subset of categories")
    p.add_argument("--knn-k", type=int, default=10)
    p.add_argument("--n-eigval", type=int, default=8)
    p.add_argument("--kmeans-min", type=int, default=2)
    p.add_argument("--kmeans-max", type=int, default=19)
    p.add_argument("--tsne-perplexity", type=float, default=30.0)
    p.add_argument("--tsne-iters", type=int, default=1000)
    p.add_argument("--tsne-on", default="raw", choices=("raw", "spectral"))
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=_cmd_analyze)

    p = sub.add_parser("render", help="render attribution heatmaps as PNG")
    p.add_argument("--attr", required=True, help="attribution store directory")
    p.add_argument("--indices", required=True, help="comma-separated sample indices")
    p.add_argument("--out", required=True, help="output directory for PNG files")
    p.add_argument("--colormap", default="coldnhot", choices=COLORMAPS)
    p.add_argument("--mode", default="attribution", choices=("attribution", "overlay"))
    p.add_argument("--data", default=None, help="dataset store (overlay mode only)")
    p.set_defaults(func=_cmd_render)

    p = sub.add_parser("serve", help="serve projects over HTTP")
    p.add_argument("manifests", nargs="+", help="project manifest files")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8000)
    p.add_argument("--cors", action="store_true", help="allow cross-origin requests")
    p.set_defaults(func=_cmd_serve)

    return parser


def main(argv=None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    args.parser = parser
    try:
        return args.func(args)
    except ToolkitError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
