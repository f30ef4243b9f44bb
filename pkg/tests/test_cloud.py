import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from dynagg.cloud import (BINARY_MAGIC, CloudFormatError, PointCloud, grid_downsample,
                          invert_unit_cube, load_cloud, nearest_neighbor_extrapolate,
                          normalize_unit_cube, save_cloud)

from oracles import nearest_label_loop, voxel_count


def _write(tmp_path, text, name="c.csv"):
    p = tmp_path / name
    p.write_text(text, encoding="utf-8")
    return p


# --- construction ---------------------------------------------------------

def test_rejects_non_finite_positions():
    with pytest.raises(ValueError):
        PointCloud(np.array([[0.0, np.inf, 0.0]]))


def test_rejects_feature_row_mismatch():
    with pytest.raises(ValueError):
        PointCloud(np.zeros((3, 3)), features=np.zeros((2, 1)))


def test_rejects_empty_cloud():
    with pytest.raises(ValueError):
        PointCloud(np.zeros((0, 3)))


# --- CSV ------------------------------------------------------------------

def test_csv_minimal(tmp_path):
    p = _write(tmp_path, "x,y,z\n0,0,0\n1,2,3\n4,5,6\n")
    c = load_cloud(p)
    assert len(c) == 3 and c.n_channels == 0 and c.labels is None
    assert c.positions[2].tolist() == [4.0, 5.0, 6.0]


def test_csv_features_and_labels(tmp_path):
    rows = "\n".join(f"{i},{i},{i},0.{i},1.{i},{i % 2}" for i in range(5))
    c = load_cloud(_write(tmp_path, "x,y,z,f0,f1,label\n" + rows + "\n"))
    assert len(c) == 5 and c.n_channels == 2
    assert c.labels.tolist() == [0, 1, 0, 1, 0]


def test_csv_nan_names_line(tmp_path):
    p = _write(tmp_path, "x,y,z\n0,0,0\n1,nan,3\n")
    with pytest.raises(CloudFormatError, match="line 3"):
        load_cloud(p)


def test_csv_inconsistent_channels_names_line(tmp_path):
    p = _write(tmp_path, "x,y,z,f0\n0,0,0,1\n1,1,1\n")
    with pytest.raises(CloudFormatError, match="line 3"):
        load_cloud(p)


def test_csv_bad_header(tmp_path):
    with pytest.raises(CloudFormatError, match="line 1"):
        load_cloud(_write(tmp_path, "a,b,c\n0,0,0\n"))


@pytest.mark.parametrize("fmt", ["csv", "binary"])
def test_round_trip(tmp_path, fmt):
    rng = np.random.default_rng(0)
    c = PointCloud(rng.normal(size=(40, 3)), rng.normal(size=(40, 3)),
                   rng.integers(0, 5, 40))
    p = tmp_path / f"c.{fmt}"
    save_cloud(c, p, fmt)
    back = load_cloud(p, fmt)
    np.testing.assert_array_equal(back.positions, c.positions)
    np.testing.assert_array_equal(back.features, c.features)
    np.testing.assert_array_equal(back.labels, c.labels)


def test_binary_layout(tmp_path):
    c = PointCloud(np.array([[1.0, 2.0, 3.0]]), np.array([[7.0]]), np.array([4]))
    p = tmp_path / "c.bin"
    save_cloud(c, p, "binary")
    raw = p.read_bytes()
    assert raw[:4] == BINARY_MAGIC
    assert int.from_bytes(raw[4:12], "little") == 1
    assert int.from_bytes(raw[12:16], "little") == 1
    assert raw[16] == 1
    assert np.frombuffer(raw[17:49], "<f8").tolist() == [1.0, 2.0, 3.0, 7.0]
    assert int.from_bytes(raw[49:53], "little") == 4
    assert len(raw) == 53


def test_binary_truncated_names_offset(tmp_path):
    c = PointCloud(np.zeros((4, 3)))
    p = tmp_path / "c.bin"
    save_cloud(c, p, "binary")
    p.write_bytes(p.read_bytes()[:-5])
    with pytest.raises(CloudFormatError, match="offset"):
        load_cloud(p, "binary")


def test_binary_bad_magic(tmp_path):
    p = tmp_path / "c.bin"
    p.write_bytes(b"XXXX" + bytes(13))
    with pytest.raises(CloudFormatError, match="offset 0"):
        load_cloud(p, "binary")


# --- normalisation --------------------------------------------------------

def test_normalize_two_points():
    c = PointCloud(np.array([[0.0, 0, 0], [2, 4, 8]]))
    n, tf = normalize_unit_cube(c)
    np.testing.assert_array_equal(n.positions, [[0, 0, 0], [1, 1, 1]])
    np.testing.assert_array_equal(tf.scale, [2, 4, 8])


def test_normalize_single_point():
    n, _ = normalize_unit_cube(PointCloud(np.array([[5.0, 5, 5]])))
    np.testing.assert_array_equal(n.positions, [[0.5, 0.5, 0.5]])


@settings(max_examples=60, deadline=None)
@given(arrays(np.float64, st.tuples(st.integers(1, 30), st.just(3)),
              elements=st.floats(-1e4, 1e4, allow_nan=False)))
def test_normalize_round_trip(pos):
    c = PointCloud(pos)
    n, tf = normalize_unit_cube(c)
    assert n.positions.min() >= 0 and n.positions.max() <= 1
    back = invert_unit_cube(n, tf)
    np.testing.assert_allclose(back.positions, pos, atol=1e-9, rtol=0)


# --- downsampling ---------------------------------------------------------

def test_downsample_single_cell_centroid():
    c = PointCloud(np.array([[0.0, 0, 0], [0.01, 0, 0]]))
    d = grid_downsample(c, 5)
    assert len(d) == 1
    np.testing.assert_allclose(d.positions, [[0.005, 0, 0]], atol=1e-15)
    assert d.resolution_tag == 5


def test_downsample_no_merging():
    c = PointCloud(np.array([[0.0, 0, 0], [1, 1, 1], [2, 2, 2]]) + 0.01)
    assert len(grid_downsample(c, 20)) == 3


def test_downsample_matches_bucketing_oracle():
    pos = np.random.default_rng(11).uniform(0, 1, size=(1000, 3))
    d = grid_downsample(PointCloud(pos), 20)
    assert len(d) == voxel_count(pos, 0.2, 5)


def test_downsample_idempotent():
    pos = np.random.default_rng(12).uniform(0, 1, size=(1000, 3))
    once = grid_downsample(PointCloud(pos), 20)
    twice = grid_downsample(once, 20)
    assert len(twice) == len(once)
    np.testing.assert_allclose(twice.positions, once.positions, atol=1e-15)


def test_downsample_features_and_majority_label():
    pos = np.array([[0.01, 0, 0], [0.02, 0, 0], [0.03, 0, 0], [0.5, 0, 0]])
    feats = np.array([[1.0], [2.0], [6.0], [9.0]])
    c = PointCloud(pos, feats, np.array([2, 1, 1, 4]))
    d = grid_downsample(c, 20)
    assert d.features[:, 0].tolist() == [3.0, 9.0]
    assert d.labels.tolist() == [1, 4]


def test_downsample_label_tie_goes_to_smallest():
    pos = np.array([[0.01, 0, 0], [0.02, 0, 0]])
    d = grid_downsample(PointCloud(pos, labels=np.array([5, 3])), 20)
    assert d.labels.tolist() == [3]


def test_downsample_keeps_well_represented_labels():
    # each label fills its own block of cells densely enough to win somewhere
    rng = np.random.default_rng(3)
    pos, lab = [], []
    for label, x0 in enumerate([0.0, 1.0, 2.0]):
        pos.append(rng.uniform([x0, 0, 0], [x0 + 0.6, 0.6, 0.6], size=(300, 3)))
        lab.append(np.full(300, label))
    pos, lab = np.vstack(pos), np.concatenate(lab)
    c = PointCloud(pos, labels=lab)
    d = grid_downsample(c, 20)
    n_cells = len(d)
    kept = set(d.labels.tolist())
    for label in range(3):
        if (lab == label).sum() >= n_cells:
            assert label in kept


# --- nearest-neighbour extrapolation ---------------------------------------

def test_extrapolate_identity():
    rng = np.random.default_rng(5)
    c = PointCloud(rng.normal(size=(30, 3)), labels=rng.integers(0, 4, 30))
    np.testing.assert_array_equal(nearest_neighbor_extrapolate(c, c), c.labels)


def test_extrapolate_two_points():
    coarse = PointCloud(np.array([[0.0, 0, 0], [1, 0, 0]]), labels=np.array([1, 2]))
    fine = PointCloud(np.array([[0.8, 0, 0]]))
    assert nearest_neighbor_extrapolate(coarse, fine).tolist() == [2]


def test_extrapolate_tie_goes_to_lowest_index():
    coarse = PointCloud(np.array([[1.0, 0, 0], [-1, 0, 0]]), labels=np.array([7, 3]))
    fine = PointCloud(np.array([[0.0, 0, 0]]))
    assert nearest_neighbor_extrapolate(coarse, fine).tolist() == [7]


def test_extrapolate_matches_exhaustive_scan():
    rng = np.random.default_rng(9)
    coarse = PointCloud(rng.uniform(size=(10, 3)), labels=rng.integers(0, 6, 10))
    fine = PointCloud(rng.uniform(size=(50, 3)))
    expected = nearest_label_loop(coarse.positions, coarse.labels, fine.positions)
    np.testing.assert_array_equal(nearest_neighbor_extrapolate(coarse, fine), expected)


def test_extrapolate_needs_labels():
    c = PointCloud(np.zeros((2, 3)))
    with pytest.raises(ValueError):
        nearest_neighbor_extrapolate(c, c)
