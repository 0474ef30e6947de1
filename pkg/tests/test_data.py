"""Dataset generation, CSV round trips, view splitting, and stratified
partitioning."""

import numpy as np
import pytest

from wcord.data import Dataset, gen_clusters, load_csv, save_csv, split_views, train_test_split
from wcord.errors import ContractError, CsvParseError
from wcord.train import probe_features


def test_gen_clusters_deterministic():
    a = gen_clusters(3, 10, 4, 0.2, seed=5)
    b = gen_clusters(3, 10, 4, 0.2, seed=5)
    assert np.array_equal(a.X, b.X) and np.array_equal(a.y, b.y) and np.array_equal(a.ids, b.ids)
    c = gen_clusters(3, 10, 4, 0.2, seed=6)
    assert not np.array_equal(a.X, c.X)


def test_gen_clusters_zero_spread_collapses_classes():
    ds = gen_clusters(3, 5, 4, 0.0, seed=1)
    for cls in range(3):
        block = ds.X[ds.y == cls]
        assert np.array_equal(block, np.repeat(block[:1], 5, axis=0))


def test_gen_clusters_rejects_degenerate_sizes():
    with pytest.raises(ContractError):
        gen_clusters(1, 5, 4, 0.1, seed=0)
    with pytest.raises(ContractError):
        gen_clusters(3, 5, 1, 0.1, seed=0)


def test_two_cluster_task_is_linearly_separable():
    ds = gen_clusters(2, 60, 8, 0.05, seed=2)
    train, test = train_test_split(ds, 0.5, seed=2)
    acc = probe_features(train.X, train.y, test.X, test.y, 2, epochs=30, seed=0)
    assert acc >= 0.99


def test_split_views_widths_and_identity():
    ds = gen_clusters(3, 6, 8, 0.1, seed=3)
    two = split_views(ds, 4)
    assert two.view_a.shape == (18, 4) and two.view_b.shape == (18, 4)
    assert np.array_equal(np.concatenate([two.view_a, two.view_b], axis=1), ds.X)
    assert np.array_equal(two.y, ds.y) and np.array_equal(two.ids, ds.ids)


def test_split_views_bounds():
    ds = gen_clusters(2, 4, 4, 0.1, seed=1)
    for bad in (0, 4, 7):
        with pytest.raises(ContractError):
            split_views(ds, bad)


def test_single_view_probe_underperforms_full_probe():
    gaps = []
    for seed in range(3):
        ds = gen_clusters(6, 60, 10, 0.35, seed=seed)
        train, test = train_test_split(ds, 0.5, seed=seed)
        full = probe_features(train.X, train.y, test.X, test.y, 6, epochs=25, seed=0)
        partial = probe_features(
            train.X[:, 5:], train.y, test.X[:, 5:], test.y, 6, epochs=25, seed=0
        )
        gaps.append(full - partial)
    assert np.mean(gaps) > 0.0


def test_csv_round_trip_exact(tmp_path):
    ds = gen_clusters(3, 7, 5, 0.3, seed=4)
    path = tmp_path / "ds.csv"
    save_csv(ds, path)
    loaded = load_csv(path)
    assert np.array_equal(loaded.X, ds.X)
    assert np.array_equal(loaded.y, ds.y)


def test_csv_rejects_missing_column(tmp_path):
    path = tmp_path / "bad.csv"
    path.write_text("label,f0\n", encoding="utf-8")
    good = tmp_path / "short.csv"
    good.write_text("notlabel,f0\n0,1.0\n", encoding="utf-8")
    with pytest.raises(CsvParseError, match="line 1"):
        load_csv(good)


def test_csv_reports_malformed_row_line_number(tmp_path):
    path = tmp_path / "bad.csv"
    path.write_text("label,f0,f1\n0,1.0,2.0\n1,3.0\n", encoding="utf-8")
    with pytest.raises(CsvParseError, match="line 3"):
        load_csv(path)
    path.write_text("label,f0,f1\n0,1.0,oops\n", encoding="utf-8")
    with pytest.raises(CsvParseError, match="line 2"):
        load_csv(path)


def test_csv_hand_written_fixture(tmp_path):
    path = tmp_path / "tiny.csv"
    path.write_text(
        "label,f0,f1\n0,0.5,-1.5\n1,2.0,0.25\n0,-3.0,4.0\n", encoding="utf-8"
    )
    ds = load_csv(path)
    assert np.array_equal(ds.X, [[0.5, -1.5], [2.0, 0.25], [-3.0, 4.0]])
    assert np.array_equal(ds.y, [0, 1, 0])
    assert np.array_equal(ds.ids, [0, 1, 2])


def test_train_test_split_stratified_counts():
    ds = gen_clusters(4, 50, 4, 0.2, seed=7)
    train, test = train_test_split(ds, 0.5, seed=7)
    for c in range(4):
        assert (train.y == c).sum() == 25
        assert (test.y == c).sum() == 25


def test_train_test_split_is_exact_partition():
    ds = gen_clusters(3, 21, 4, 0.2, seed=8)
    train, test = train_test_split(ds, 0.3, seed=8)
    union = np.sort(np.concatenate([train.ids, test.ids]))
    assert np.array_equal(union, ds.ids)
    assert len(np.intersect1d(train.ids, test.ids)) == 0
    # per-class proportions within one sample of nominal
    for c in range(3):
        want = 0.3 * 21
        got = (test.y == c).sum()
        assert abs(got - want) <= 1.0


def test_train_test_split_deterministic():
    ds = gen_clusters(3, 10, 4, 0.2, seed=9)
    a = train_test_split(ds, 0.4, seed=1)
    b = train_test_split(ds, 0.4, seed=1)
    assert np.array_equal(a[0].ids, b[0].ids) and np.array_equal(a[1].ids, b[1].ids)


def test_train_test_split_rejects_tiny_class():
    ds = Dataset(np.zeros((3, 2)), np.array([0, 0, 1]), np.arange(3))
    with pytest.raises(ContractError, match="class 1"):
        train_test_split(ds, 0.5, seed=0)


def test_dataset_invariants():
    with pytest.raises(ContractError):
        Dataset(np.zeros((2, 2)), np.zeros(2, dtype=int), np.array([1, 1]))
    with pytest.raises(ContractError):
        Dataset(np.zeros((2, 2)), np.zeros(3, dtype=int), np.arange(2))
