import json

import numpy as np
import pytest

from dynagg.cli import main
from dynagg.cloud import PointCloud, load_cloud, save_cloud
from dynagg.index import IndexMatrix
from dynagg.integrate import GruParams
from dynagg.pipeline import ablation_csv, load_ablation_csv
from dynagg.som import Skeleton

SMALL = ("synth:\n  n_scenes: 2\n  plane_points: 1500\n  n_clusters: 3\n"
         "som:\n  epochs_max: 30\n")


@pytest.fixture
def small_cfg(tmp_path):
    p = tmp_path / "small.yaml"
    p.write_text(SMALL)
    return str(p)


def _tree(root):
    return {p.relative_to(root).as_posix(): p.read_bytes()
            for p in sorted(root.rglob("*")) if p.is_file()}


def test_pipeline_artifacts_reload(tmp_path, small_cfg, capsys):
    out = tmp_path / "run"
    assert main(["pipeline", "--config", small_cfg, "--out", str(out)]) == 0
    assert "mIoU=" in capsys.readouterr().out
    for i in range(2):
        sdir = out / f"scene_{i:03d}"
        cloud = load_cloud(sdir / "cloud.csv")
        sk = Skeleton.load(sdir / "skeleton.json")
        idx = IndexMatrix.load(sdir / "index.bin")
        dens = json.loads((sdir / "density.json").read_text())
        pred = load_cloud(sdir / "pred.csv")
        assert idx.n == len(cloud) == len(pred) and idx.m == sk.m
        assert sum(dens["counts"]) == idx.n * idx.k_eff
        assert dens["m"] == sk.m
    metrics = json.loads((out / "metrics.json").read_text())
    assert 0 <= metrics["mIoU"] <= 1 and 0 <= metrics["mA"] <= 1
    assert "cluster_coverage" in metrics
    GruParams.load(out / "gru_params")


def test_pipeline_deterministic_across_runs_and_jobs(tmp_path, small_cfg):
    trees = []
    for name, jobs in (("a", 1), ("b", 1), ("c", 2)):
        out = tmp_path / name
        assert main(["pipeline", "--config", small_cfg, "--out", str(out),
                     "--jobs", str(jobs), "--seed", "11"]) == 0
        trees.append(_tree(out))
    assert trees[0] == trees[1] == trees[2]


def test_pipeline_binary_format(tmp_path, small_cfg):
    out = tmp_path / "bin"
    assert main(["pipeline", "--config", small_cfg, "--out", str(out),
                 "--format", "binary"]) == 0
    c = load_cloud(out / "scene_000" / "cloud.bin", "binary")
    assert c.labels is not None


def test_unknown_pooling_exits_2(tmp_path, capsys):
    p = tmp_path / "bad.yaml"
    p.write_text("pool:\n  aggregate: bogus\n")
    assert main(["pipeline", "--config", str(p), "--out", str(tmp_path / "x")]) == 2
    assert "pool.aggregate" in capsys.readouterr().err


def test_missing_input_exits_1(tmp_path, capsys):
    code = main(["pipeline", "--input", str(tmp_path / "nope.csv"),
                 "--out", str(tmp_path / "x")])
    assert code == 1
    assert "error" in capsys.readouterr().err


def test_bad_jobs_exits_2(tmp_path):
    assert main(["pipeline", "--out", str(tmp_path), "--jobs", "0"]) == 2


def test_failing_stage_is_named(tmp_path, small_cfg, capsys, monkeypatch):
    import dynagg.pipeline

    def broken(*args, **kw):
        raise FloatingPointError("diverged")

    monkeypatch.setattr(dynagg.pipeline, "fit_skeleton", broken)
    assert main(["pipeline", "--config", small_cfg, "--out", str(tmp_path / "x")]) == 1
    err = capsys.readouterr().err
    assert "stage 'skeleton' failed" in err and "diverged" in err


def test_synth_skeleton_index_chain(tmp_path, small_cfg, capsys):
    data = tmp_path / "data"
    assert main(["synth", "--config", small_cfg, "--out", str(data)]) == 0
    cloud_path = data / "scene_000.csv"
    meta = json.loads((data / "scene_000.json").read_text())
    assert meta["n"] == len(load_cloud(cloud_path))
    sk_path = tmp_path / "sk.json"
    assert main(["skeleton", "--config", small_cfg, "--input", str(cloud_path),
                 "--out", str(sk_path)]) == 0
    idx_path = tmp_path / "index.bin"
    assert main(["index", "--input", str(cloud_path), "--skeleton", str(sk_path),
                 "--out", str(idx_path)]) == 0
    idx = IndexMatrix.load(idx_path)
    assert idx.m == Skeleton.load(sk_path).m
    assert idx.k_eff == 3


def test_pipeline_on_input_files(tmp_path, small_cfg):
    data = tmp_path / "data"
    main(["synth", "--config", small_cfg, "--out", str(data)])
    out = tmp_path / "run"
    assert main(["pipeline", "--config", small_cfg, "--input", str(data / "scene_000.csv"),
                 "--out", str(out)]) == 0
    assert (out / "scene_000" / "index.bin").exists()
    assert not (out / "scene_001").exists()


def test_eval_with_extrapolation(tmp_path, capsys):
    fine = PointCloud(np.array([[0.0, 0, 0], [0.1, 0, 0], [1.0, 0, 0]]),
                      labels=np.array([0, 0, 1]))
    coarse = PointCloud(np.array([[0.05, 0, 0], [0.9, 0, 0]]), labels=np.array([0, 0]))
    save_cloud(fine, tmp_path / "truth.csv")
    save_cloud(coarse, tmp_path / "pred.csv")
    out = tmp_path / "ev"
    assert main(["eval", "--truth", str(tmp_path / "truth.csv"),
                 "--pred", str(tmp_path / "pred.csv"), "--classes", "2",
                 "--out", str(out)]) == 0
    rep = json.loads((out / "metrics.json").read_text())
    # truth [0,0,1], extrapolated [0,0,0]
    assert rep["mIoU"] == pytest.approx((2 / 3 + 0) / 2, abs=1e-12)
    assert rep["mA"] == pytest.approx(0.5, abs=1e-12)
    assert "mIoU" in capsys.readouterr().out


def test_ablate_rows_and_round_trip(tmp_path, capsys):
    p = tmp_path / "ab.yaml"
    p.write_text(SMALL.replace("n_scenes: 2", "n_scenes: 1") +
                 "ablate:\n  k_values: [1, 3]\n  sizing: [logarithm]\n"
                 "  aggregate: [semi_average]\n  propagate: [max]\n"
                 "  seeds: [0, 1]\n  scenes_per_seed: 1\n")
    out = tmp_path / "ab"
    assert main(["ablate", "--config", str(p), "--out", str(out)]) == 0
    text = (out / "ablation.csv").read_text()
    rows = load_ablation_csv(text)
    k_rows = [r for r in rows if r["knob"] == "k"]
    assert len(k_rows) == 2 * 2
    for knob, default in (("k", "3"), ("sizing", "logarithm"),
                          ("aggregate", "semi_average"), ("propagate", "max")):
        assert any(r["knob"] == knob and r["value"] == default for r in rows)
    # every non-k sweep here is the default point, so their scores coincide
    default_k = {r["seed"]: r["metric"] for r in k_rows if r["value"] == "3"}
    for r in rows:
        if r["knob"] != "k":
            assert r["metric"] == default_k[r["seed"]]
    # reload loses nothing
    assert ablation_csv(rows) == text
