"""Command-line front end: signal generation, segmentation, evaluation,
model inspection, and the HTTP service launcher.

Exit codes: 1 I/O failure, 2 requested class missing from the labels,
3 unreadable or corrupt weight container, 4 dimension mismatch. Every
failure prints a single line on stderr.
"""

from __future__ import annotations

import json
import os
import sys
import time
from pathlib import Path

import click
import numpy as np

from . import imageio
from .metrics import metrics_report
from .nn import (
    WeightContainerError,
    build_efficient_unet,
    count_parameters,
    init_weights,
    load_tensor,
    load_weights,
    save_tensor,
    save_weights,
)
from .pipeline import CLASS_NAMES, ClassProbMap, NetworkModel, assemble_semantic_map, segment_one
from .signals import GenParams, make_training_pair, rasterize_squiggle

EXIT_IO = 1
EXIT_NO_CLASS = 2
EXIT_BAD_WEIGHTS = 3
EXIT_DIM_MISMATCH = 4


def _fail(code: int, message: str):
    click.echo(f"error: {message}", err=True)
    sys.exit(code)


def _load_weights_or_exit(path):
    try:
        return load_weights(path)
    except WeightContainerError as exc:
        _fail(EXIT_BAD_WEIGHTS, f"bad weight container {path}: {exc}")
    except OSError as exc:
        _fail(EXIT_IO, f"cannot read weights {path}: {exc}")


@click.group()
def main():
    """Interactive-segmentation toolkit."""


@main.command()
@click.option("--gt", "gt_path", required=True, type=click.Path(), help="Label PNG.")
@click.option("--class", "class_id", required=True, type=int, help="Target class id.")
@click.option("--seed", default=0, type=int, show_default=True)
@click.option("--params", "params_json", default=None, help="Generator knobs as JSON.")
@click.option("--out", "out_dir", required=True, type=click.Path())
def gensig(gt_path, class_id, seed, params_json, out_dir):
    """Generate an inclusion/exclusion signal pair from a label image."""
    started = time.perf_counter()
    try:
        labels = imageio.load_label_png(gt_path)
    except (OSError, ValueError) as exc:
        _fail(EXIT_IO, f"cannot read labels {gt_path}: {exc}")
    try:
        overrides = json.loads(params_json) if params_json else {}
        params = GenParams(seed=seed, **overrides)
    except (TypeError, ValueError) as exc:
        _fail(EXIT_IO, f"bad params JSON: {exc}")

    provenance: dict = {}
    try:
        pair = make_training_pair(labels, class_id, params, provenance=provenance)
    except ValueError as exc:
        if "class not present" in str(exc):
            _fail(EXIT_NO_CLASS, f"class {class_id} not present in {gt_path}")
        _fail(EXIT_IO, str(exc))

    out = Path(out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
        imageio.save_mask_png(out / "inclusion.png", pair.inclusion)
        imageio.save_mask_png(out / "exclusion.png", pair.exclusion)
        record = {
            "seed": seed,
            "class": class_id,
            "params": {k: list(v) if isinstance(v, tuple) else v
                       for k, v in vars(params).items()},
            **provenance,
        }
        (out / "provenance.json").write_text(json.dumps(record, indent=2, sort_keys=True))
    except OSError as exc:
        _fail(EXIT_IO, f"cannot write outputs: {exc}")
    click.echo(f"gensig class {class_id} seed {seed}: "
               f"{int(pair.inclusion.sum())} inclusion px, "
               f"{int(pair.exclusion.sum())} exclusion px, "
               f"{(time.perf_counter() - started) * 1000:.1f} ms")


@main.command()
@click.option("--image", "image_path", required=True, type=click.Path())
@click.option("--squiggles", "squiggles_path", required=True, type=click.Path())
@click.option("--weights", "weights_path", required=True, type=click.Path(),
              envvar="SQSEG_WEIGHTS", show_envvar=True)
@click.option("--out", "out_dir", required=True, type=click.Path())
@click.option("--probs/--no-probs", default=False, help="Also write per-class prob tensors.")
@click.option("--threads", default=1, type=int, show_default=True)
def segment(image_path, squiggles_path, weights_path, out_dir, probs, threads):
    """Segment an image guided by drawn squiggles; writes a label PNG."""
    try:
        image = imageio.load_rgb_png(image_path)
        squiggles = imageio.squiggles_from_json(Path(squiggles_path).read_text())
    except OSError as exc:
        _fail(EXIT_IO, f"cannot read inputs: {exc}")
    except (ValueError, json.JSONDecodeError) as exc:
        _fail(EXIT_IO, f"bad squiggle JSON {squiggles_path}: {exc}")
    if not squiggles:
        _fail(EXIT_IO, "no squiggles given")

    weights = _load_weights_or_exit(weights_path)
    h, w = image.shape[:2]
    if h % 32 or w % 32:
        _fail(EXIT_DIM_MISMATCH, f"image is {w}x{h}; both sides must be divisible by 32")

    model = NetworkModel(weights.spec, weights, threads=threads)
    maps = []
    timings = {}
    for cid in sorted({s.class_id for s in squiggles}):
        t0 = time.perf_counter()
        pair = rasterize_squiggle(squiggles, cid, width=w, height=h)
        maps.append(ClassProbMap(class_id=cid, probs=segment_one(image, pair, model)))
        timings[cid] = (time.perf_counter() - t0) * 1000
    labels = assemble_semantic_map(maps)

    out = Path(out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
        imageio.save_label_png(out / "labels.png", labels)
        if probs:
            for m in maps:
                save_tensor(m.probs, out / f"probs_class_{m.class_id}.eutn")
    except OSError as exc:
        _fail(EXIT_IO, f"cannot write outputs: {exc}")
    for cid, ms in timings.items():
        click.echo(f"class {cid}: {ms:.1f} ms")
    click.echo(f"wrote {out / 'labels.png'}")


@main.command(name="eval")
@click.option("--pred", "pred_path", required=True, type=click.Path())
@click.option("--gt", "gt_path", required=True, type=click.Path())
@click.option("--probs", "probs_dir", default=None, type=click.Path())
@click.option("--out", "out_dir", default=None, type=click.Path(),
              help="Write report.json/report.csv here instead of stdout.")
def eval_cmd(pred_path, gt_path, probs_dir, out_dir):
    """Score a predicted label image against ground truth."""
    try:
        pred = imageio.load_label_png(pred_path)
        gt = imageio.load_label_png(gt_path)
    except (OSError, ValueError) as exc:
        _fail(EXIT_IO, f"cannot read label images: {exc}")
    if pred.shape != gt.shape:
        _fail(EXIT_DIM_MISMATCH, f"prediction {pred.shape} vs ground truth {gt.shape}")

    probs = None
    if probs_dir:
        probs = {}
        try:
            for path in sorted(Path(probs_dir).glob("probs_class_*.eutn")):
                cid = int(path.stem.rsplit("_", 1)[1])
                tensor = load_tensor(path)
                if tensor.shape != gt.shape:
                    _fail(EXIT_DIM_MISMATCH, f"{path.name} is {tensor.shape}, labels are {gt.shape}")
                probs[cid] = tensor
        except OSError as exc:
            _fail(EXIT_IO, f"cannot read prob tensors: {exc}")

    report = metrics_report(pred, gt, probs, CLASS_NAMES)
    if out_dir:
        out = Path(out_dir)
        try:
            out.mkdir(parents=True, exist_ok=True)
            (out / "report.json").write_text(report.to_json())
            (out / "report.csv").write_text(report.to_csv())
        except OSError as exc:
            _fail(EXIT_IO, f"cannot write report: {exc}")
        click.echo(f"wrote {out / 'report.json'} and {out / 'report.csv'}")
    else:
        click.echo(report.to_json())


@main.command()
@click.option("--weights", "weights_path", required=True, type=click.Path(),
              envvar="SQSEG_WEIGHTS", show_envvar=True)
def info(weights_path):
    """Describe a weight container: variant, factors, parameter count."""
    weights = _load_weights_or_exit(weights_path)
    spec = weights.spec
    click.echo(json.dumps({
        "variant": spec.variant,
        "width_factor": spec.w,
        "depth_factor": spec.d,
        "in_channels": spec.in_channels,
        "out_channels": spec.out_channels,
        "parameters": count_parameters(spec),
        "layers": len(weights.tensors),
    }, indent=2))


@main.command(name="init-weights")
@click.option("--variant", default="B0", show_default=True,
              help="B0..B3, or 'W,D' width/depth factors.")
@click.option("--seed", default=0, type=int, show_default=True)
@click.option("--out", "out_path", required=True, type=click.Path())
def init_weights_cmd(variant, seed, out_path):
    """Write a freshly initialized weight container."""
    try:
        if "," in variant:
            w, d = (float(v) for v in variant.split(","))
            spec = build_efficient_unet((w, d))
        else:
            spec = build_efficient_unet(variant)
    except ValueError as exc:
        _fail(EXIT_IO, str(exc))
    try:
        save_weights(init_weights(spec, seed=seed), out_path)
    except OSError as exc:
        _fail(EXIT_IO, f"cannot write weights: {exc}")
    click.echo(f"wrote {out_path} ({count_parameters(spec)} parameters)")


@main.command()
@click.option("--port", default=8000, type=int, show_default=True)
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--weights", "weights_path", default=None, type=click.Path(),
              envvar="SQSEG_WEIGHTS", show_envvar=True)
@click.option("--palette", "palette_json", default=None, help="{class_id: [r,g,b]} JSON.")
@click.option("--data-dir", default=None, type=click.Path(),
              help="Directory server-side image paths resolve against.")
@click.option("--workers", default=None, type=int,
              help="Concurrent forward passes (default: CPU cores).")
@click.option("--ui", "ui_dir", default=None, type=click.Path(exists=True, file_okay=False),
              help="Directory with the browser annotator, served at /.")
def serve(port, host, weights_path, palette_json, data_dir, workers, ui_dir):
    """Run the HTTP segmentation service."""
    import uvicorn

    from .server import create_app

    if not weights_path:
        _fail(EXIT_IO, "no weights given (use --weights or SQSEG_WEIGHTS)")
    palette = None
    if palette_json:
        try:
            palette = {int(k): tuple(v) for k, v in json.loads(palette_json).items()}
        except (TypeError, ValueError) as exc:
            _fail(EXIT_IO, f"bad palette JSON: {exc}")
    try:
        app = create_app(weights_path, palette=palette, data_dir=data_dir,
                         workers=workers, static_dir=ui_dir)
    except WeightContainerError as exc:
        _fail(EXIT_BAD_WEIGHTS, f"bad weight container {weights_path}: {exc}")
    except OSError as exc:
        _fail(EXIT_IO, f"cannot read weights {weights_path}: {exc}")
    uvicorn.run(app, host=host, port=port, log_level="warning")


if __name__ == "__main__":
    main()
