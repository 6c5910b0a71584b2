import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from kandkd.data import (
    DataError,
    Dataset,
    MissingColumnError,
    RawTable,
    ScalerError,
    apply_scaler,
    clean_columns,
    fit_scaler,
    gen_synthetic,
    load_csv,
    load_dataset,
    prepare,
    random_mask,
    save_dataset,
    split,
    split_indices,
    split_sizes,
    to_dataset,
)
from kandkd.metrics import report_from_predictions


def _table(cells, labels=None, columns=None, metadata=()):
    cells = np.asarray(cells, dtype=float)
    labels = np.zeros(len(cells), dtype=np.uint8) if labels is None else np.asarray(labels, np.uint8)
    columns = columns or [f"c{i}" for i in range(cells.shape[1])]
    return RawTable(columns, cells, "label", labels, metadata_columns=tuple(metadata))


def test_toy_csv_labels(tmp_path):
    p = tmp_path / "toy.csv"
    p.write_text("a,b,Normal/Attack\n1,2,Normal\n3,4,Attack\n5,6,Normal\n")
    t = load_csv(p, "Normal/Attack")
    assert t.labels.tolist() == [0, 1, 0]
    assert t.columns == ["a", "b"]


def test_label_variants(tmp_path):
    p = tmp_path / "v.csv"
    p.write_text("x,y\n1,Normal\n2,A ttack\n3,Attack\n")
    assert load_csv(p, "y").labels.tolist() == [0, 1, 1]
    p.write_text("x,y\n1,1\n2,-1\n3,1\n")
    assert load_csv(p, "y").labels.tolist() == [0, 1, 0]
    p.write_text("x,y\n1,0\n2,1\n")
    assert load_csv(p, "y").labels.tolist() == [0, 1]
    p.write_text("x,y\n1,bad\n2,good\n")
    with pytest.raises(DataError):
        load_csv(p, "y")
    assert load_csv(p, "y", positive_label_values=["bad"]).labels.tolist() == [1, 0]


def test_missing_header(tmp_path):
    p = tmp_path / "nohdr.csv"
    p.write_text("1,2,3\n4,5,6\n")
    with pytest.raises(DataError, match="header"):
        load_csv(p, "label")


def test_missing_label_column(tmp_path):
    p = tmp_path / "a.csv"
    p.write_text("a,b\n1,2\n")
    with pytest.raises(MissingColumnError):
        load_csv(p, "label")


def test_unparseable_cell_reports_line(tmp_path):
    p = tmp_path / "bad.csv"
    p.write_text("a,b,label\n1,2,Normal\n3,oops,Attack\n")
    with pytest.raises(DataError, match="line\\(s\\) 3"):
        load_csv(p, "label")


def test_ragged_row(tmp_path):
    p = tmp_path / "ragged.csv"
    p.write_text("a,b,label\n1,2,Normal\n3,4,5,6,Attack\n")
    with pytest.raises(DataError):
        load_csv(p, "label")


def test_wadi_shaped_fixture(wadi_csv):
    path, labels = wadi_csv
    table = load_csv(path, "Attack LABLE (1:No Attack -1:Attack)")
    assert len(table.columns) == 130
    assert len(table.columns) - len(table.metadata_columns) == 127
    assert table.labels.tolist() == (labels == -1).astype(int).tolist()
    cleaned = clean_columns(table)
    assert len(cleaned.columns) == 123
    reasons = [r for _, r in cleaned.dropped]
    assert reasons.count("nan-only") == 4 and reasons.count("timestamp/index") == 3


def test_clean_columns_reasons_and_idempotence():
    cells = [[1, np.nan, 5, 0.1], [2, np.nan, 5, 0.3], [3, np.nan, 5, 0.2]]
    t = clean_columns(_table(cells))
    assert t.columns == ["c0", "c3"]
    assert dict(t.dropped) == {"c1": "nan-only", "c2": "zero-variance"}
    again = clean_columns(t)
    assert again.columns == t.columns and again.dropped == t.dropped
    np.testing.assert_array_equal(again.cells, t.cells)


def test_scattered_missing_rows_dropped():
    t = clean_columns(_table([[1, 2], [np.nan, 3], [2, 5], [4, 1]]))
    ds = to_dataset(t)
    assert len(ds) == 3 and ds.info["rows_dropped_missing"] == 1


def test_scaler_simple_column():
    p = fit_scaler(np.array([[1.0], [2.0], [3.0]]))
    assert p.mu[0] == 2.0
    assert p.sigma[0] == pytest.approx(np.sqrt(2 / 3))  # population convention
    assert apply_scaler([[1.0], [2.0], [3.0]], p).mean() == pytest.approx(0, abs=1e-15)


def test_scaler_rejects_constant_column():
    with pytest.raises(ScalerError):
        fit_scaler(np.array([[1.0, 2.0], [1.0, 3.0]]))


def test_scaler_train_statistics(rng):
    x = rng.normal(3, 7, size=(500, 6))
    p = fit_scaler(x)
    z = apply_scaler(x, p)
    assert np.abs(z.mean(axis=0)).max() <= 1e-10
    assert np.abs(z.std(axis=0) - 1).max() <= 1e-8
    shifted = apply_scaler(x + 5, p)
    np.testing.assert_allclose(shifted.mean(axis=0), 5 / p.sigma, atol=1e-10)


def test_minmax_scaler(rng):
    x = rng.uniform(-4, 9, size=(100, 3))
    z = apply_scaler(x, fit_scaler(x, "minmax"))
    np.testing.assert_allclose(z.min(axis=0), 0, atol=1e-15)
    np.testing.assert_allclose(z.max(axis=0), 1, atol=1e-15)


def test_split_sizes():
    assert split_sizes(10, 0.2) == (8, 2)
    assert split_sizes(449_919, 0.2) == (359_935, 89_984)
    assert split_sizes(172_801, 0.2) == (138_240, 34_561)
    for bad in (0.0, 1.0, -0.1):
        with pytest.raises(DataError):
            split_sizes(10, bad)
    with pytest.raises(DataError):
        split_sizes(1, 0.5)


@settings(max_examples=50, deadline=None)
@given(st.integers(2, 400), st.floats(0.05, 0.95), st.integers(0, 10), st.booleans())
def test_split_partitions(n, frac, seed, shuffle):
    try:
        tr, te = split_indices(n, frac, seed, shuffle)
    except DataError:
        return
    assert len(np.intersect1d(tr, te)) == 0
    assert sorted(np.concatenate([tr, te]).tolist()) == list(range(n))
    tr2, te2 = split_indices(n, frac, seed, shuffle)
    assert np.array_equal(tr, tr2) and np.array_equal(te, te2)
    if not shuffle:
        assert tr.max() < te.min()


def test_no_test_leakage(rng):
    t = _table(rng.normal(size=(50, 3)))
    train_a, _ = prepare(t)
    cells = t.cells.copy()
    cells[40:] += 100.0  # rows 40..49 are the sequential test split
    train_b, test_b = prepare(_table(cells))
    np.testing.assert_array_equal(train_a.scaler.mu, train_b.scaler.mu)
    np.testing.assert_array_equal(train_a.scaler.sigma, train_b.scaler.sigma)
    assert test_b.features.mean() > 10


def test_random_mask(rng):
    x = rng.normal(size=(100, 100))
    np.testing.assert_array_equal(random_mask(x, 0.0), x)
    with pytest.raises(DataError):
        random_mask(x, 1.0)
    masked = random_mask(x, 0.25, seed=3)
    frac = np.mean(masked == 0)
    assert 0.22 <= frac <= 0.28
    np.testing.assert_array_equal(masked, random_mask(x, 0.25, seed=3))


def test_gen_synthetic_reproducible_and_flags():
    a, b = gen_synthetic(900, 100, 6, seed=4), gen_synthetic(900, 100, 6, seed=4)
    np.testing.assert_array_equal(a.features, b.features)
    assert a.labels.sum() == 100 and len(a) == 1000
    empty = gen_synthetic(50, 0, 4, seed=0)
    assert empty.single_class and empty.info["single_class"]


def test_gen_synthetic_threshold_oracle():
    ds = gen_synthetic(seed=0)
    assert ds.labels.mean() == pytest.approx(0.06)
    x = ds.features[:, ds.info["sentinel_feature"]]
    z = (x - x.mean()) / x.std()
    assert report_from_predictions(ds.labels, z > 1.5).f1 > 0.8


def test_gen_synthetic_attacks_on_both_sides_of_split():
    for seed in range(5):
        tr, te = split(gen_synthetic(1880, 120, 10, seed=seed))
        assert tr.labels.sum() > 0 and te.labels.sum() > 0


def test_dataset_container_roundtrip(tmp_path, rng):
    t = clean_columns(_table(rng.normal(size=(30, 4)), labels=rng.integers(0, 2, 30)))
    train, test = prepare(t)
    path = save_dataset(train, tmp_path / "train.kdds")
    back = load_dataset(path)
    np.testing.assert_array_equal(back.features, train.features.astype(np.float32))
    np.testing.assert_array_equal(back.labels, train.labels)
    np.testing.assert_array_equal(back.scaler.mu, train.scaler.mu)
    assert back.feature_names == train.feature_names
    raw = path.read_bytes()
    path.write_bytes(raw[:-3])
    with pytest.raises(DataError):
        load_dataset(path)
    path.write_bytes(b"XXXX" + raw[4:])
    with pytest.raises(DataError):
        load_dataset(path)


def test_dataset_rejects_bad_labels():
    with pytest.raises(DataError):
        Dataset(np.zeros((2, 1)), np.array([0, 2]), ["a"])
