import numpy as np
import pytest

from conftest import housing_csv, mnist_dir, needs_housing, needs_mnist
from exptest import linear_oracle as lo
from exptest.data_io import (
    DataError,
    Dataset,
    fit_stats,
    load_csv_housing,
    load_idx,
    load_mnist,
    normalize,
    one_hot,
    read_idx_images,
    split,
    synthetic_linear,
    write_idx_images,
    write_idx_labels,
)
from exptest.numstats import covariance_operator, max_eigenvalue


@pytest.fixture
def idx_pair(tmp_path):
    rng = np.random.default_rng(0)
    images = rng.integers(0, 256, size=(7, 28, 28), dtype=np.uint8)
    labels = np.array([3, 0, 9, 1, 1, 5, 7], dtype=np.uint8)
    write_idx_images(tmp_path / "img", images)
    write_idx_labels(tmp_path / "lab", labels)
    return tmp_path / "img", tmp_path / "lab", images, labels


def test_idx_round_trip_is_bit_exact(idx_pair):
    img, lab, images, labels = idx_pair
    assert np.array_equal(read_idx_images(img), images)
    ds = load_idx(img, lab)
    assert (ds.s, ds.n, ds.m) == (7, 784, 10)
    assert np.array_equal(np.rint(ds.inputs * 255).astype(np.uint8), images.reshape(7, -1))
    assert ds.inputs.min() >= 0 and ds.inputs.max() <= 1
    assert np.array_equal(ds.labels, labels)


def test_one_hot_columns():
    assert one_hot(np.array([3]))[0].tolist() == [0, 0, 0, 1, 0, 0, 0, 0, 0, 0]
    y = one_hot(np.array([3, 0, 9, 9, 2]))
    assert np.array_equal(y.sum(axis=1), np.ones(5))


def test_idx_truncated_file_reports_byte_counts(idx_pair, tmp_path):
    img, _, _, _ = idx_pair
    data = img.read_bytes()
    bad = tmp_path / "short"
    bad.write_bytes(data[:-10])
    with pytest.raises(DataError, match=f"expected {len(data)} bytes.*got {len(data) - 10}"):
        read_idx_images(bad)


def test_idx_bad_magic_reports_offset(idx_pair):
    _, lab, _, _ = idx_pair
    with pytest.raises(DataError, match="magic.*offset 0"):
        read_idx_images(lab)


def test_idx_count_mismatch(tmp_path):
    write_idx_images(tmp_path / "img", np.zeros((3, 2, 2), dtype=np.uint8))
    write_idx_labels(tmp_path / "lab", np.zeros(4, dtype=np.uint8))
    with pytest.raises(DataError):
        load_idx(tmp_path / "img", tmp_path / "lab")


@needs_mnist
def test_canonical_mnist_shapes_and_spectrum():
    train, test = load_mnist(mnist_dir())
    assert (train.s, train.n, test.s) == (60_000, 784, 10_000)
    x = normalize(train).inputs
    lam = max_eigenvalue(covariance_operator(x), x.shape[1])
    assert np.isfinite(lam) and lam > 0


def _write_csv(path, rows, header="a,b,c,d,e,f,g,h,target"):
    path.write_text(header + "\n" + "".join(",".join(map(str, r)) + "\n" for r in rows))
    return path


def test_csv_loading_and_errors(tmp_path):
    rng = np.random.default_rng(1)
    rows = rng.standard_normal((5, 9)).round(4)
    ds = load_csv_housing(_write_csv(tmp_path / "ok.csv", rows))
    assert (ds.s, ds.n, ds.m) == (5, 8, 1)
    np.testing.assert_array_equal(ds.targets[:, 0], rows[:, 8])

    with pytest.raises(DataError, match="zero samples"):
        load_csv_housing(_write_csv(tmp_path / "empty.csv", []))
    bad = rows.astype(object)
    bad[2, 4] = "n/a"
    with pytest.raises(DataError, match="row 4, column 5"):
        load_csv_housing(_write_csv(tmp_path / "bad.csv", bad))
    with pytest.raises(DataError, match="columns"):
        load_csv_housing(_write_csv(tmp_path / "wide.csv", rows[:, :7], header="a,b,c,d,e,f,g"))


def test_csv_single_row_is_flagged_degenerate(tmp_path):
    ds = load_csv_housing(_write_csv(tmp_path / "one.csv", [[1, 2, 3, 4, 5, 6, 7, 8, 9]]))
    assert ds.s == 1 and ds.degenerate


@needs_housing
def test_canonical_housing_shape():
    ds = load_csv_housing(housing_csv())
    assert (ds.s, ds.n) == (20_640, 8)


def test_normalize_statistics_and_idempotence():
    rng = np.random.default_rng(2)
    x = rng.normal(5.0, 3.0, size=(200, 4))
    x[:, 2] = 7.0  # constant feature
    ds = normalize(Dataset(x, np.zeros((200, 1))))
    assert np.abs(ds.inputs.mean(axis=0)).max() < 1e-9
    np.testing.assert_allclose(ds.inputs.std(axis=0, ddof=1)[[0, 1, 3]], 1.0, rtol=1e-12)
    assert not ds.inputs[:, 2].any()
    assert ds.feature_stats.std[2] == 1.0
    again = normalize(ds)
    np.testing.assert_allclose(again.inputs, ds.inputs, atol=1e-12)


def test_normalize_uses_training_rows_only():
    rng = np.random.default_rng(3)
    x = rng.standard_normal((100, 3))
    x[80:] += 50.0  # held-out rows far away
    y = rng.standard_normal((100, 1))
    tr = np.arange(80)
    ds = normalize(Dataset(x, y), tr, normalize_targets=True)
    ref = fit_stats(x[:80])
    np.testing.assert_allclose(ds.feature_stats.mean, ref.mean)
    np.testing.assert_allclose(ds.feature_stats.std, ref.std)
    np.testing.assert_allclose(ds.target_stats.mean, y[:80].mean(axis=0))
    np.testing.assert_allclose(ds.target_stats.invert(ds.targets), y)


def test_split_sizes_disjoint_and_seeded():
    sp = split(20_640, (0.6, 0.2, 0.2), seed=0)
    assert (sp.train.size, sp.validation.size, sp.test.size) == (12_384, 4_128, 4_128)
    allidx = np.concatenate([sp.train, sp.validation, sp.test])
    assert np.array_equal(np.sort(allidx), np.arange(20_640))
    again = split(20_640, (0.6, 0.2, 0.2), seed=0)
    assert np.array_equal(sp.train, again.train)
    assert not np.array_equal(sp.train, split(20_640, (0.6, 0.2, 0.2), seed=1).train)
    with pytest.raises(ValueError):
        split(10, (0.5, 0.4, 0.2))


def test_synthetic_linear_recovers_ground_truth():
    ds, T_star = synthetic_linear(6, 3, 60, noise=0.0, seed=5)
    X, Y = ds.columns()
    T_inf = lo.exact_minimizer(lo.LinearProblem(X, Y, np.zeros((3, 6)), 0.1))
    np.testing.assert_allclose(T_inf, T_star, atol=1e-8)
    ds2, T2 = synthetic_linear(6, 3, 60, noise=0.0, seed=5)
    assert np.array_equal(ds.inputs, ds2.inputs) and np.array_equal(T_star, T2)


def test_synthetic_linear_spans_input_space():
    for seed in range(100):
        n = 1 + seed % 8
        ds, _ = synthetic_linear(n, 2, n + 5, seed=seed)
        assert np.linalg.matrix_rank(ds.inputs) == n
    with pytest.raises(ValueError):
        synthetic_linear(5, 1, 5)
