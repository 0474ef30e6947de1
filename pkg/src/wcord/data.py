"""Synthetic dataset generation, CSV ingestion, two-view splitting, and
deterministic stratified train/test partitioning.

Sample ids are global and stable across epochs; the memory buffer keys on
them. CSV files are UTF-8 with LF endings, header `label,f0,...,f{d-1}`, and
floats printed with shortest round-trip repr so save/load is exact.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ContractError, CsvParseError


@dataclass
class Dataset:
    X: np.ndarray
    y: np.ndarray
    ids: np.ndarray
    split: str = "all"

    def __post_init__(self):
        if len(self.X) != len(self.y) or len(self.y) != len(self.ids):
            raise ContractError("X, y, ids must have equal length")
        if len(np.unique(self.ids)) != len(self.ids):
            raise ContractError("sample ids must be unique")

    def __len__(self) -> int:
        return len(self.y)

    @property
    def dim(self) -> int:
        return self.X.shape[1]

    @property
    def n_classes(self) -> int:
        return int(self.y.max()) + 1 if len(self.y) else 0


@dataclass
class TwoViewDataset:
    view_a: np.ndarray
    view_b: np.ndarray
    y: np.ndarray
    ids: np.ndarray
    split: str = "all"

    def __len__(self) -> int:
        return len(self.y)


def gen_clusters(k: int, n_per: int, d: int, spread: float, seed: int) -> Dataset:
    """k Gaussian clusters with means on the unit sphere; deterministic per seed."""
    if k < 2 or d < 2:
        raise ContractError(f"need k >= 2 and d >= 2, got k={k}, d={d}")
    rng = np.random.default_rng(seed)
    means = rng.standard_normal((k, d))
    means /= np.linalg.norm(means, axis=1, keepdims=True)
    X = np.empty((k * n_per, d))
    y = np.empty(k * n_per, dtype=np.int64)
    for c in range(k):
        block = slice(c * n_per, (c + 1) * n_per)
        X[block] = means[c] + spread * rng.standard_normal((n_per, d))
        y[block] = c
    return Dataset(X, y, np.arange(k * n_per), split="all")


def split_views(ds: Dataset, d_a: int) -> TwoViewDataset:
    """First d_a columns become view A, the remainder view B."""
    if not 1 <= d_a < ds.dim:
        raise ContractError(f"d_a must be in [1, {ds.dim - 1}], got {d_a}")
    return TwoViewDataset(
        view_a=ds.X[:, :d_a].copy(),
        view_b=ds.X[:, d_a:].copy(),
        y=ds.y.copy(),
        ids=ds.ids.copy(),
        split=ds.split,
    )


def save_csv(ds: Dataset, path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        header = "label," + ",".join(f"f{j}" for j in range(ds.dim))
        fh.write(header + "\n")
        for label, row in zip(ds.y, ds.X):
            fh.write(str(int(label)) + "," + ",".join(repr(float(v)) for v in row) + "\n")


def load_csv(path) -> Dataset:
    with open(path, "r", encoding="utf-8") as fh:
        lines = fh.read().splitlines()
    if not lines:
        raise CsvParseError(f"{path}: line 1: empty file")
    header = lines[0].split(",")
    if len(header) < 2 or header[0] != "label" or any(
        name != f"f{j}" for j, name in enumerate(header[1:])
    ):
        raise CsvParseError(f"{path}: line 1: expected header label,f0,...,f{{d-1}}")
    d = len(header) - 1
    rows, labels = [], []
    for lineno, line in enumerate(lines[1:], start=2):
        cells = line.split(",")
        if len(cells) != d + 1:
            raise CsvParseError(f"{path}: line {lineno}: expected {d + 1} cells, got {len(cells)}")
        try:
            labels.append(int(cells[0]))
            rows.append([float(c) for c in cells[1:]])
        except ValueError as exc:
            raise CsvParseError(f"{path}: line {lineno}: {exc}") from None
    X = np.asarray(rows, dtype=np.float64).reshape(len(rows), d)
    y = np.asarray(labels, dtype=np.int64)
    if np.any(y < 0):
        raise CsvParseError(f"{path}: labels must be nonnegative")
    return Dataset(X, y, np.arange(len(y)), split="all")


def train_test_split(ds: Dataset, test_fraction: float, seed: int) -> tuple[Dataset, Dataset]:
    """Stratified split; ids carry over so buffer keys stay stable."""
    if not 0.0 < test_fraction < 1.0:
        raise ContractError(f"test_fraction must be in (0, 1), got {test_fraction}")
    rng = np.random.default_rng(seed)
    train_idx, test_idx = [], []
    for c in np.unique(ds.y):
        members = np.nonzero(ds.y == c)[0]
        if len(members) < 2:
            raise ContractError(f"class {int(c)} has fewer than 2 samples; cannot stratify")
        perm = rng.permutation(len(members))
        n_test = int(round(test_fraction * len(members)))
        n_test = min(max(n_test, 1), len(members) - 1)
        test_idx.extend(members[perm[:n_test]])
        train_idx.extend(members[perm[n_test:]])
    train_idx = np.sort(np.asarray(train_idx))
    test_idx = np.sort(np.asarray(test_idx))

    def take(idx, tag):
        return Dataset(ds.X[idx].copy(), ds.y[idx].copy(), ds.ids[idx].copy(), split=tag)

    return take(train_idx, "train"), take(test_idx, "test")
