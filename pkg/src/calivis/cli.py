"""Command line entry point: ``synth``, ``run``, ``overlay``, ``check``.

Exit status is 0 on success, 2 on validation errors (bad config, malformed
tensors, inconsistent shapes), 1 on other failures.
"""
from __future__ import annotations

import argparse
import json
import logging
import os
import sys

import numpy as np

from .config import PipelineConfig, dumps_config, load_config
from .errors import ValidationError
from .pipeline import load_frames, load_weights, results_document, run_video
from .results import emit_overlays, emit_results, load_results
from .synth import ground_truth_document, load_scene, synth_scene
from .temporal import TemporalNet
from .tensorio import atomic_write, save_tensor_file

log = logging.getLogger("calivis")

CONFIG_NAME = "config.txt"
WEIGHTS_NAME = "temporal_weights.sten"


def _config(args, scene_dir=None) -> PipelineConfig:
    if args.config:
        cfg = load_config(args.config)
    elif scene_dir and os.path.exists(os.path.join(scene_dir, CONFIG_NAME)):
        cfg = load_config(os.path.join(scene_dir, CONFIG_NAME))
    else:
        cfg = PipelineConfig()
    if args.seed is not None:
        cfg = cfg.replace(seed=args.seed)
    return cfg


def cmd_synth(args):
    cfg = _config(args)
    scene = load_scene(args.scene) if args.scene else None
    frames, gt = synth_scene(cfg, scene)
    os.makedirs(args.out, exist_ok=True)
    for t, fr in enumerate(frames):
        save_tensor_file(os.path.join(args.out, f"frame_{t:03d}.sten"), fr.tensors())
    atomic_write(os.path.join(args.out, "ground_truth.json"), json.dumps(ground_truth_document(gt), indent=1) + "\n")
    atomic_write(os.path.join(args.out, CONFIG_NAME), dumps_config(cfg))
    TemporalNet.build(frames[0].features.shape[2], cfg.corr_side, cfg.k_proto).save(
        os.path.join(args.out, WEIGHTS_NAME)
    )
    log.info("wrote %d frames to %s", len(frames), args.out)
    return 0


def cmd_run(args):
    scene_dir = args.frames[0] if len(args.frames) == 1 and os.path.isdir(args.frames[0]) else None
    cfg = _config(args, scene_dir)
    frames = load_frames(scene_dir if scene_dir else args.frames)
    weights = args.weights
    if weights is None and scene_dir and os.path.exists(os.path.join(scene_dir, WEIGHTS_NAME)):
        weights = os.path.join(scene_dir, WEIGHTS_NAME)
    feat_c = frames[0].features.shape[2]
    if args.random_weights:
        net = TemporalNet.build(feat_c, cfg.corr_side, cfg.k_proto, rng=np.random.default_rng(cfg.seed))
        heads = None
    else:
        net, heads = load_weights(weights, feat_c, cfg)
    result = run_video(frames, net, cfg, heads)
    doc = results_document([result])
    emit_results(doc, args.out)
    if args.overlays:
        emit_overlays(doc, args.overlays)
    log.info("%d frames, %d tracks -> %s", len(frames), len(result.store.tracks), args.out)
    return 0


def cmd_overlay(args):
    doc = load_results(args.results)
    for v in range(len(doc["videos"])):
        out = args.out if len(doc["videos"]) == 1 else os.path.join(args.out, f"video_{v + 1:03d}")
        emit_overlays(doc, out, video=v)
    return 0


def cmd_check(args):
    from .checks import run_all

    return 0 if run_all() else 1


def build_parser():
    p = argparse.ArgumentParser(prog="calivis", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--config", help="flat key = value config file")
        sp.add_argument("--seed", type=int)

    sp = sub.add_parser("synth", help="generate a synthetic moving-rectangle scene")
    common(sp)
    sp.add_argument("--scene", help="scene description JSON (default: built-in crossing scene)")
    sp.add_argument("--out", required=True, help="output directory")
    sp.set_defaults(func=cmd_synth)

    sp = sub.add_parser("run", help="run detection + tracking on frame tensor files")
    common(sp)
    sp.add_argument("frames", nargs="+", help="scene directory or frame .sten files in order")
    sp.add_argument("--weights", help="temporal network (and optional FCB head) weights")
    sp.add_argument("--random-weights", action="store_true", help="seeded random temporal network")
    sp.add_argument("--out", required=True, help="results document path")
    sp.add_argument("--overlays", help="also write PPM overlays to this directory")
    sp.set_defaults(func=cmd_run)

    sp = sub.add_parser("overlay", help="render PPM overlays from a results document")
    sp.add_argument("results")
    sp.add_argument("--out", required=True)
    sp.set_defaults(func=cmd_overlay)

    sp = sub.add_parser("check", help="run the oracle acceptance checks")
    sp.set_defaults(func=cmd_check)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        return args.func(args)
    except ValidationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
