"""End-to-end chain over scenes and the one-knob-at-a-time ablation sweep.

Per scene: downsample -> size -> train skeleton -> index -> aggregate ->
integrate -> propagate -> nearest-centroid labelling -> metrics.  Every
random choice derives from ``(run seed, scene number)``, so results do not
depend on how scenes are distributed over worker processes.
"""

from __future__ import annotations

import csv
import dataclasses
import io
import json
import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .cloud import PointCloud, grid_downsample, normalize_unit_cube, save_cloud
from .config import RunConfig, parse_sizing_label
from .index import build_index, density_stats
from .integrate import GruParams, gru_forward, pad_sequence
from .metrics import ConfusionMatrix
from .pool import PoolChoice, aggregate, propagate
from .sizing import skeleton_size
from .som import fit_skeleton
from .synth import generate_scene, random_scene_spec

log = logging.getLogger(__name__)

COVERAGE_FACTOR = 1.5


class StageError(RuntimeError):
    def __init__(self, stage, exc):
        super().__init__(f"stage '{stage}' failed: {exc}")
        self.stage = stage


def derive_seed(*parts) -> int:
    return int(np.random.SeedSequence(list(parts)).generate_state(1, dtype=np.uint64)[0])


@dataclass
class SceneInput:
    cloud: PointCloud
    seed: int
    # synthetic scenes only: object centers and radii in meters
    centers: np.ndarray | None = None
    radii: np.ndarray | None = None


@dataclass
class SceneResult:
    cloud: PointCloud
    skeleton: object
    index: object
    node_positions_raw: np.ndarray
    predictions: np.ndarray | None
    confusion: ConfusionMatrix | None
    coverage: float | None

    def stats(self):
        out = density_stats(self.index)
        out["grid_shape"] = list(self.skeleton.grid_shape)
        out["som_epochs"] = len(self.skeleton.training_log)
        out["quantization_error"] = self.skeleton.training_log[-1]
        if self.coverage is not None:
            out["cluster_coverage"] = self.coverage
        return out


def synthetic_scenes(cfg: RunConfig, seed: int, n_scenes: int | None = None):
    sy = cfg.synth
    scenes = []
    for i in range(n_scenes or sy.n_scenes):
        spec_seed = derive_seed(seed, i, 1)
        spec = random_scene_spec(spec_seed % 2**32, n_clusters=sy.n_clusters,
                                 plane_points=sy.plane_points,
                                 radius_range=(sy.radius_min, sy.radius_max))
        sc = generate_scene(spec)
        scenes.append(SceneInput(sc.cloud, derive_seed(seed, i, 2), sc.centers, sc.radii))
    return scenes


def nearest_centroid_labels(features, labels):
    """Standardize features, then label each point by the closest class mean."""
    mu = features.mean(axis=0)
    sd = features.std(axis=0)
    sd[sd == 0] = 1.0
    z = (features - mu) / sd
    classes = np.unique(labels)
    centroids = np.array([z[labels == c].mean(axis=0) for c in classes])
    d2 = ((z[:, None, :] - centroids[None, :, :]) ** 2).sum(axis=2)
    return classes[np.argmin(d2, axis=1)]


def cluster_coverage(nodes_raw, centers, radii, factor=COVERAGE_FACTOR):
    """Fraction of objects with a node within ``factor`` times their radius."""
    if centers is None or len(centers) == 0:
        return None
    d = np.linalg.norm(nodes_raw[None, :, :] - centers[:, None, :], axis=2).min(axis=1)
    return float(np.mean(d <= factor * radii))


def _stage(name, fn, *args, **kw):
    try:
        return fn(*args, **kw)
    except Exception as exc:  # noqa: BLE001 - re-raised with the stage name
        raise StageError(name, exc) from exc


def train_scene_skeleton(scene: SceneInput, cfg: RunConfig, sizing=None):
    """Downsample, size and train; returns (cloud, normalized cloud, transform, skeleton)."""
    sizing = sizing or cfg.sizing
    cloud = scene.cloud
    if cfg.cloud.cell is not None:
        cloud = _stage("downsample", grid_downsample, cloud, cfg.cloud.cell)
    m = _stage("size", skeleton_size, sizing, len(cloud))
    ncloud, tf = normalize_unit_cube(cloud)
    som_cfg = dataclasses.replace(cfg.som, rng_seed=scene.seed)
    skeleton = _stage("skeleton", fit_skeleton, ncloud, m, som_cfg)
    return cloud, ncloud, tf, skeleton


def run_scene(scene: SceneInput, cfg: RunConfig, k=None, pool=None, sizing=None,
              trained=None) -> SceneResult:
    k = cfg.index.k if k is None else k
    pool = pool or cfg.pool
    cloud, ncloud, tf, skeleton = trained or train_scene_skeleton(scene, cfg, sizing)
    log.info("scene n=%d m=%d k=%d pool=%s/%s", len(cloud), skeleton.m, k,
             pool.aggregate, pool.propagate)

    index = _stage("index", build_index, ncloud, skeleton, k)
    local = ncloud.positions
    if cloud.features is not None:
        local = np.hstack([local, cloud.features])
    node_feat = _stage("aggregate", aggregate, local, index, pool.aggregate)

    ig = cfg.integrate
    params = GruParams.random(local.shape[1], ig.hidden_dim, ig.output_dim, seed=ig.seed)
    order = skeleton.node_order
    seq = pad_sequence(node_feat[order], cfg.sequence_length)
    integrated = np.empty((index.m, ig.output_dim))
    integrated[order] = _stage("integrate", gru_forward, seq, params)

    carried = np.hstack([node_feat, integrated])
    point_ctx = _stage("propagate", propagate, carried, index, pool.propagate)

    predictions = confusion = None
    if cloud.labels is not None:
        descriptor = np.hstack([local, point_ctx])
        predictions = _stage("classify", nearest_centroid_labels, descriptor, cloud.labels)
        n_cls = int(max(cloud.labels.max(), predictions.max())) + 1
        confusion = ConfusionMatrix(n_cls).accumulate(cloud.labels, predictions)

    nodes_raw = tf.invert(skeleton.node_positions)
    coverage = cluster_coverage(nodes_raw, scene.centers, scene.radii)
    return SceneResult(cloud, skeleton, index, nodes_raw, predictions, confusion, coverage)


def merge_confusions(mats):
    mats = [c for c in mats if c is not None]
    if not mats:
        return None
    n = max(c.n_classes for c in mats)
    total = ConfusionMatrix(n)
    for c in mats:
        total.counts[:c.n_classes, :c.n_classes] += c.counts
    return total


def _map(fn, items, jobs):
    if jobs <= 1 or len(items) <= 1:
        return [fn(it) for it in items]
    with ProcessPoolExecutor(max_workers=jobs) as ex:
        return list(ex.map(fn, items))


# --------------------------------------------------------------------------
# pipeline command
# --------------------------------------------------------------------------


def _dump_json(obj, path):
    Path(path).write_text(json.dumps(obj, indent=1, sort_keys=True) + "\n", encoding="utf-8")


def _pipeline_job(args):
    scene, cfg = args
    return run_scene(scene, cfg)


def run_pipeline(cfg: RunConfig, out_dir, scenes=None, jobs=1, fmt="csv"):
    """Run every scene and write artifacts; returns the dataset metrics report."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    if scenes is None:
        scenes = synthetic_scenes(cfg, cfg.seed)
    results = _map(_pipeline_job, [(s, cfg) for s in scenes], jobs)

    ext = "csv" if fmt == "csv" else "bin"
    for i, res in enumerate(results):
        sdir = out_dir / f"scene_{i:03d}"
        sdir.mkdir(exist_ok=True)
        save_cloud(res.cloud, sdir / f"cloud.{ext}", fmt)
        res.skeleton.save(sdir / "skeleton.json")
        res.index.save(sdir / "index.bin")
        _dump_json(res.stats(), sdir / "density.json")
        if res.predictions is not None:
            pred = dataclasses.replace(res.cloud, labels=res.predictions)
            save_cloud(pred, sdir / f"pred.{ext}", fmt)

    ig = cfg.integrate
    n_in = 3 + results[0].cloud.n_channels
    GruParams.random(n_in, ig.hidden_dim, ig.output_dim, seed=ig.seed).save(out_dir / "gru_params")

    total = merge_confusions([r.confusion for r in results])
    report = None
    if total is not None:
        report = total.report()
        coverage = [r.coverage for r in results if r.coverage is not None]
        if coverage:
            report["cluster_coverage"] = float(np.mean(coverage))
        _dump_json(report, out_dir / "metrics.json")
        (out_dir / "metrics.txt").write_text(total.to_text(), encoding="utf-8")
    return report


# --------------------------------------------------------------------------
# ablation
# --------------------------------------------------------------------------

ABLATION_FIELDS = ("knob", "value", "seed", "metric", "coverage", "mIoU", "mA")
DEFAULT_POINT = {"k": 3, "sizing": "logarithm", "aggregate": "semi_average",
                 "propagate": "max"}


def surrogate(coverage, mean_acc):
    """Single ablation score: average of cluster coverage and mA."""
    if coverage is None:
        return mean_acc
    return 0.5 * (coverage + mean_acc)


def ablation_grid(cfg: RunConfig):
    """(knob, value) pairs, one knob at a time; each knob includes the default."""
    ab = cfg.ablate
    knobs = {"k": list(ab.k_values), "sizing": list(ab.sizing),
             "aggregate": list(ab.aggregate), "propagate": list(ab.propagate)}
    grid = []
    for knob, values in knobs.items():
        if DEFAULT_POINT[knob] not in values:
            values = [DEFAULT_POINT[knob]] + values
        grid.extend((knob, v) for v in values)
    return grid


def _setting(knob, value):
    s = dict(DEFAULT_POINT)
    s[knob] = value
    return s


def _ablate_seed(args):
    cfg, seed, grid = args
    scenes = synthetic_scenes(cfg, seed, cfg.ablate.scenes_per_seed)
    trained = {}
    scored = {}
    rows = []
    for knob, value in grid:
        s = _setting(knob, value)
        key = tuple(sorted(s.items()))
        if key not in scored:
            sizing = parse_sizing_label(s["sizing"], cfg.sizing)
            results = []
            for i, scene in enumerate(scenes):
                tkey = (i, s["sizing"])
                if tkey not in trained:
                    trained[tkey] = train_scene_skeleton(scene, cfg, sizing)
                results.append(run_scene(scene, cfg, k=s["k"],
                                         pool=PoolChoice(s["aggregate"], s["propagate"]),
                                         trained=trained[tkey]))
            total = merge_confusions([r.confusion for r in results])
            cov = [r.coverage for r in results if r.coverage is not None]
            cov = float(np.mean(cov)) if cov else None
            ma = total.mean_class_accuracy()
            scored[key] = (surrogate(cov, ma), cov, total.mean_iou(), ma)
        metric, cov, miou, ma = scored[key]
        rows.append({"knob": knob, "value": str(value), "seed": seed, "metric": metric,
                     "coverage": cov, "mIoU": miou, "mA": ma})
    return rows


def run_ablation(cfg: RunConfig, jobs=1):
    grid = ablation_grid(cfg)
    per_seed = _map(_ablate_seed, [(cfg, s, grid) for s in cfg.ablate.seeds], jobs)
    rows = [r for batch in per_seed for r in batch]
    # knob-major order, seeds ascending within each value
    order = {kv: i for i, kv in enumerate(grid)}
    rows.sort(key=lambda r: (order[(r["knob"], _typed(r["knob"], r["value"]))], r["seed"]))
    return rows


def _typed(knob, value):
    return int(value) if knob == "k" else value


def ablation_csv(rows) -> str:
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=ABLATION_FIELDS, lineterminator="\n")
    w.writeheader()
    for r in rows:
        w.writerow({k: ("" if r[k] is None else repr(r[k]) if isinstance(r[k], float) else r[k])
                    for k in ABLATION_FIELDS})
    return buf.getvalue()


def load_ablation_csv(text):
    rows = []
    for r in csv.DictReader(io.StringIO(text)):
        rows.append({
            "knob": r["knob"], "value": r["value"], "seed": int(r["seed"]),
            "metric": float(r["metric"]),
            "coverage": float(r["coverage"]) if r["coverage"] else None,
            "mIoU": float(r["mIoU"]), "mA": float(r["mA"]),
        })
    return rows


def ordering_wins(rows, knob, better, worse, field="metric"):
    """Per seed: does ``better`` score at least as high as ``worse``?"""
    by = {}
    for r in rows:
        if r["knob"] == knob and r["value"] in (str(better), str(worse)):
            by.setdefault(r["seed"], {})[r["value"]] = r[field]
    return {seed: v[str(better)] >= v[str(worse)]
            for seed, v in sorted(by.items()) if len(v) == 2}
