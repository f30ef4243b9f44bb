"""Command-line driver: ``python -m dynagg <command> [options]``.

Exit codes: 0 success, 2 invalid configuration or arguments, 1 a pipeline
stage failed.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import sys
from pathlib import Path

from .cloud import load_cloud, nearest_neighbor_extrapolate, normalize_unit_cube, save_cloud
from .config import ConfigError, RunConfig, load_config
from .index import build_index
from .metrics import ConfusionMatrix
from .pipeline import (SceneInput, StageError, ablation_csv, derive_seed, ordering_wins,
                       run_ablation, run_pipeline, synthetic_scenes, train_scene_skeleton)
from .som import Skeleton


def _config(args) -> RunConfig:
    cfg = load_config(args.config) if args.config else RunConfig()
    if args.seed is not None:
        cfg = dataclasses.replace(cfg, seed=args.seed)
    return cfg


def _ext(fmt):
    return "csv" if fmt == "csv" else "bin"


def cmd_synth(args):
    cfg = _config(args)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    for i, scene in enumerate(synthetic_scenes(cfg, cfg.seed)):
        save_cloud(scene.cloud, out / f"scene_{i:03d}.{_ext(args.format)}", args.format)
        meta = {"centers": scene.centers.tolist(), "radii": scene.radii.tolist(),
                "n": len(scene.cloud)}
        (out / f"scene_{i:03d}.json").write_text(json.dumps(meta, indent=1) + "\n")
    return 0


def cmd_skeleton(args):
    cfg = _config(args)
    cloud = load_cloud(args.input, args.format)
    scene = SceneInput(cloud, derive_seed(cfg.seed, 0, 2))
    _, _, _, skeleton = train_scene_skeleton(scene, dataclasses.replace(
        cfg, cloud=dataclasses.replace(cfg.cloud, cell=None)))
    skeleton.save(args.out)
    print(f"skeleton: m={skeleton.m} grid={skeleton.grid_shape} "
          f"epochs={len(skeleton.training_log)}")
    return 0


def cmd_index(args):
    cfg = _config(args)
    cloud = load_cloud(args.input, args.format)
    ncloud, _ = normalize_unit_cube(cloud)
    skeleton = Skeleton.load(args.skeleton)
    index = build_index(ncloud, skeleton, cfg.index.k)
    index.save(args.out)
    print(f"index: n={index.n} m={index.m} k_eff={index.k_eff} g={index.g:.4f}")
    return 0


def cmd_pipeline(args):
    cfg = _config(args)
    scenes = None
    if args.input:
        scenes = [SceneInput(load_cloud(p, args.format), derive_seed(cfg.seed, i, 2))
                  for i, p in enumerate(args.input)]
    report = run_pipeline(cfg, args.out, scenes=scenes, jobs=args.jobs, fmt=args.format)
    if report is not None:
        print(f"mIoU={report['mIoU']:.4f} mA={report['mA']:.4f}")
    return 0


def cmd_ablate(args):
    cfg = _config(args)
    rows = run_ablation(cfg, jobs=args.jobs)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "ablation.csv").write_text(ablation_csv(rows), encoding="utf-8")
    for knob, better, worse in (("k", 3, 7), ("sizing", "logarithm", "static(100)")):
        wins = ordering_wins(rows, knob, better, worse)
        if wins:
            print(f"{knob}: {better} >= {worse} in {sum(wins.values())}/{len(wins)} seeds")
    return 0


def cmd_eval(args):
    if len(args.truth) != len(args.pred):
        raise ConfigError("--pred", "need one prediction file per truth file")
    pairs = []
    for t, p in zip(args.truth, args.pred):
        truth = load_cloud(t, args.format)
        pred = load_cloud(p, args.format)
        if truth.labels is None or pred.labels is None:
            raise ConfigError("--truth", f"{t} or {p} carries no labels")
        if len(pred) == len(truth) and (pred.positions == truth.positions).all():
            labels = pred.labels
        else:
            labels = nearest_neighbor_extrapolate(pred, truth)
        pairs.append((truth.labels, labels))
    n_cls = args.classes or 1 + max(int(max(a.max(), b.max())) for a, b in pairs)
    cm = ConfusionMatrix(n_cls)
    for truth, pred in pairs:
        cm.accumulate(truth, pred)
    sys.stdout.write(cm.to_text())
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        (out / "metrics.json").write_text(cm.to_json(), encoding="utf-8")
        (out / "metrics.txt").write_text(cm.to_text(), encoding="utf-8")
    return 0


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="YAML run configuration")
    common.add_argument("--seed", type=int, help="override the configured seed")
    common.add_argument("--jobs", type=int, default=1, help="worker processes")
    common.add_argument("--format", choices=("csv", "binary"), default="csv")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(prog="dynagg", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", parents=[common], help="generate synthetic rooms")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("skeleton", parents=[common], help="train a skeleton for one cloud")
    p.add_argument("--input", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_skeleton)

    p = sub.add_parser("index", parents=[common], help="build the point-to-node index")
    p.add_argument("--input", required=True)
    p.add_argument("--skeleton", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_index)

    p = sub.add_parser("pipeline", parents=[common], help="run the full chain")
    p.add_argument("--input", action="append", help="cloud file (repeatable); "
                   "default is the configured synthetic corpus")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_pipeline)

    p = sub.add_parser("ablate", parents=[common], help="one-knob-at-a-time sweep")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_ablate)

    p = sub.add_parser("eval", parents=[common], help="score predicted labels")
    p.add_argument("--truth", action="append", required=True)
    p.add_argument("--pred", action="append", required=True)
    p.add_argument("--classes", type=int, help="number of classes")
    p.add_argument("--out")
    p.set_defaults(func=cmd_eval)
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if args.jobs < 1:
        print("error: --jobs: must be >= 1", file=sys.stderr)
        return 2
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except StageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (OSError, ValueError) as exc:
        print(f"error: stage 'io' failed: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
