import numpy as np
import pytest

from fsp import (
    DataError,
    Domain,
    DomainError,
    HolderParams,
    SampleSet,
    derive_seed,
    load_csv,
    rng_stream,
)


def test_rng_stream_same_pair_identical():
    a = rng_stream(42, "retrieval").random(100)
    b = rng_stream(42, "retrieval").random(100)
    assert np.array_equal(a, b)


def test_rng_stream_label_changes_stream():
    a = rng_stream(42, "retrieval").random(100)
    b = rng_stream(42, "pilot").random(100)
    assert not np.array_equal(a, b)


def test_rng_stream_seed_changes_stream():
    a = rng_stream(42, "retrieval").random(100)
    b = rng_stream(43, "retrieval").random(100)
    assert not np.array_equal(a, b)


def test_derive_seed_stable_and_distinct():
    assert derive_seed(7, "x") == derive_seed(7, "x")
    assert derive_seed(7, "x") != derive_seed(7, "y")
    assert derive_seed(7, "x") != derive_seed(8, "x")


def test_domain_validation():
    with pytest.raises(ValueError):
        Domain([0.0], [0.0])
    with pytest.raises(ValueError):
        Domain([0.0, 1.0], [1.0, 0.5])
    with pytest.raises(ValueError):
        Domain([], [])


def test_domain_geometry():
    d = Domain([-0.5, -0.5], [0.5, 0.5])
    assert d.dim == 2
    assert d.volume() == pytest.approx(1.0)
    assert d.min_edge() == pytest.approx(1.0)
    assert d.contains([0.5, 0.5])  # closed box
    assert not d.contains([0.5, 0.50001])
    with pytest.raises(DomainError):
        d.require([[0.0, 0.0], [0.6, 0.0]])


def test_domain_uniform_and_grid():
    d = Domain.cube(2, 0.0, 2.0)
    pts = d.uniform(1000, rng_stream(0, "u"))
    assert pts.shape == (1000, 2)
    assert d.contains(pts).all()
    centers, cell = d.grid(4)
    assert centers.shape == (16, 2)
    assert cell == pytest.approx(4.0 / 16)
    assert centers.mean(axis=0) == pytest.approx([1.0, 1.0])


def test_holder_params_validation_and_order():
    with pytest.raises(ValueError):
        HolderParams(-0.1, 0.5)
    with pytest.raises(ValueError):
        HolderParams(1.0, 1.5)
    assert HolderParams(0.0, 0.0) < HolderParams(0.0, 0.5) < HolderParams(1.0, 0.0)


def test_labeled_sample_normalizes_fields():
    from fsp import LabeledSample

    s = LabeledSample((0.25, np.float64(0.5)), np.float64(2.0))
    assert s.x == (0.25, 0.5)
    assert isinstance(s.y, float) and s.y == 2.0


def test_sample_set_samples_view():
    x = np.array([[0.1, 0.2], [0.3, 0.4]])
    ss = SampleSet(x, np.array([1.0, 2.0]))
    samples = ss.samples()
    assert [s.y for s in samples] == [1.0, 2.0]
    assert samples[1].x == (0.3, 0.4)


def test_sample_set_partitions():
    x = np.arange(10, dtype=float).reshape(5, 2)
    y = np.arange(5, dtype=float)
    ss = SampleSet(x, y, train_idx=[2, 3, 4], val_idx=[0, 1])
    assert len(ss) == 5
    assert np.array_equal(ss.train_y, [2.0, 3.0, 4.0])
    assert np.array_equal(ss.val_x, x[:2])
    with pytest.raises(ValueError):
        SampleSet(x, y, train_idx=[0, 1], val_idx=[1, 2])
    with pytest.raises(ValueError):
        SampleSet(x, y, train_idx=[5], val_idx=[])
    with pytest.raises(ValueError):
        ss.x[0, 0] = 99.0


def _write(tmp_path, name, text):
    path = tmp_path / name
    path.write_text(text, encoding="utf-8")
    return path


def test_load_csv_labeled(tmp_path):
    path = _write(tmp_path, "d.csv", "x1,x2,y\n0.1,0.2,1.0\n0.3,0.4,2.0\n0.5,0.6,3.0\n")
    ss = load_csv(path, ["x1", "x2"], response="y")
    assert len(ss) == 3
    assert np.array_equal(ss.y, [1.0, 2.0, 3.0])
    assert np.array_equal(ss.x[2], [0.5, 0.6])


def test_load_csv_pool_without_response(tmp_path):
    path = _write(tmp_path, "d.csv", "a,b\n1,2\n3,4\n")
    pool = load_csv(path, ["b", "a"])
    assert pool.shape == (2, 2)
    assert np.array_equal(pool[0], [2.0, 1.0])  # column order follows the request


def test_load_csv_header_only(tmp_path):
    path = _write(tmp_path, "d.csv", "x1,y\n")
    with pytest.raises(DataError, match="empty data"):
        load_csv(path, ["x1"], response="y")


def test_load_csv_bad_cell_names_row_and_column(tmp_path):
    path = _write(tmp_path, "d.csv", "x1,y\n0.5,1\nabc,2\n")
    with pytest.raises(DataError, match=r"row 2, column 'x1'"):
        load_csv(path, ["x1"], response="y")


def test_load_csv_missing_column(tmp_path):
    path = _write(tmp_path, "d.csv", "x1,y\n0.5,1\n")
    with pytest.raises(DataError, match="missing column 'x9'"):
        load_csv(path, ["x9"], response="y")
