"""Memory buffer: replacement semantics, eviction order, exclusion, and
seeded determinism."""

import numpy as np
import pytest

from wcord.buffer import MemoryBuffer
from wcord.errors import ContractError

# chi-square critical value, 9 degrees of freedom, alpha = 0.01
CHI2_CRIT_9DF_1PCT = 21.666


def unit(rng, d):
    v = rng.normal(size=d)
    return v / np.linalg.norm(v)


def test_upsert_round_trip():
    rng = np.random.default_rng(0)
    buf = MemoryBuffer(dim=4, capacity=16, seed=0)
    t, s = unit(rng, 4), unit(rng, 4)
    buf.upsert(7, t, s)
    got_t, got_s = buf.get(7)
    assert np.array_equal(got_t, t) and np.array_equal(got_s, s)


def test_second_upsert_overwrites():
    rng = np.random.default_rng(1)
    buf = MemoryBuffer(dim=3, capacity=8, seed=0)
    buf.upsert(1, unit(rng, 3), unit(rng, 3))
    t2, s2 = unit(rng, 3), unit(rng, 3)
    buf.upsert(1, t2, s2)
    got_t, got_s = buf.get(1)
    assert np.array_equal(got_t, t2) and np.array_equal(got_s, s2)
    assert len(buf) == 1


def test_upsert_requires_unit_norm():
    buf = MemoryBuffer(dim=3, capacity=8, seed=0)
    with pytest.raises(ContractError, match="unit-norm"):
        buf.upsert(0, np.array([3.0, 0.0, 4.0]), np.array([0.0, 1.0, 0.0]))
    with pytest.raises(ContractError, match="unit-norm"):
        buf.upsert(1, np.array([1.0, 0.0, 0.0]), np.zeros(3))
    buf.upsert(2, np.array([0.6, 0.0, 0.8]), np.array([0.0, 1.0, 0.0]))
    t, _s = buf.get(2)
    assert np.linalg.norm(t) == pytest.approx(1.0, abs=1e-9)


def test_dim_mismatch_rejected():
    buf = MemoryBuffer(dim=4, capacity=8, seed=0)
    with pytest.raises(ContractError):
        buf.upsert(0, np.ones(3), np.ones(4))


def test_capacity_eviction_drops_oldest():
    rng = np.random.default_rng(2)
    buf = MemoryBuffer(dim=3, capacity=3, seed=0)
    for i in range(3):
        buf.upsert(i, unit(rng, 3), unit(rng, 3))
    buf.upsert(0, unit(rng, 3), unit(rng, 3))  # refresh id 0: id 1 is now oldest
    buf.upsert(99, unit(rng, 3), unit(rng, 3))
    assert buf.ids() == [0, 2, 99]


def test_sample_negatives_excludes_anchor():
    rng = np.random.default_rng(3)
    buf = MemoryBuffer(dim=3, capacity=16, seed=0)
    feats = {}
    for i in range(10):
        t = unit(rng, 3)
        feats[i] = t
        buf.upsert(i, t, unit(rng, 3))
    anchor_feat = feats[3]
    for _ in range(200):
        negs = buf.sample_negatives(3, 4, side="teacher")
        assert negs.shape == (4, 3)
        assert not any(np.array_equal(row, anchor_feat) for row in negs)


def test_exhaustive_sample_returns_all_others():
    rng = np.random.default_rng(4)
    buf = MemoryBuffer(dim=3, capacity=16, seed=0)
    feats = {}
    for i in range(6):
        t = unit(rng, 3)
        feats[i] = t
        buf.upsert(i, t, unit(rng, 3))
    negs = buf.sample_negatives(2, 5, side="teacher")
    want = np.sort(np.stack([feats[i] for i in range(6) if i != 2]), axis=0)
    assert np.allclose(np.sort(negs, axis=0), want)


def test_insufficient_population_reports_count():
    rng = np.random.default_rng(5)
    buf = MemoryBuffer(dim=3, capacity=8, seed=0)
    buf.upsert(0, unit(rng, 3), unit(rng, 3))
    buf.upsert(1, unit(rng, 3), unit(rng, 3))
    with pytest.raises(ContractError, match="only 1 non-anchor"):
        buf.sample_negatives(0, 2)


def test_student_side_sampling():
    rng = np.random.default_rng(6)
    buf = MemoryBuffer(dim=3, capacity=8, seed=0)
    students = {}
    for i in range(4):
        s = unit(rng, 3)
        students[i] = s
        buf.upsert(i, unit(rng, 3), s)
    negs = buf.sample_negatives(1, 3, side="student")
    pool = np.stack([students[i] for i in (0, 2, 3)])
    for row in negs:
        assert any(np.array_equal(row, p) for p in pool)


def test_fixed_seed_replays_identically():
    def draws(seed):
        rng = np.random.default_rng(7)
        buf = MemoryBuffer(dim=3, capacity=16, seed=seed)
        for i in range(10):
            buf.upsert(i, unit(rng, 3), unit(rng, 3))
        return [buf.sample_negatives(3, 4) for _ in range(20)]

    a, b = draws(42), draws(42)
    assert all(np.array_equal(x, y) for x, y in zip(a, b))
    c = draws(43)
    assert not all(np.array_equal(x, y) for x, y in zip(a, c))


def test_anchor_never_sampled_over_many_draws():
    rng = np.random.default_rng(8)
    buf = MemoryBuffer(dim=2, capacity=16, seed=1)
    # tag each id by a distinguishable direction
    for i in range(11):
        angle = 2 * np.pi * i / 11
        buf.upsert(i, np.array([np.cos(angle), np.sin(angle)]), unit(rng, 2))
    anchor = buf.get(5)[0]
    for _ in range(10_000):
        row = buf.sample_negatives(5, 1)[0]
        assert not np.array_equal(row, anchor)


def test_sampling_is_uniform_chi_square():
    rng = np.random.default_rng(9)
    buf = MemoryBuffer(dim=2, capacity=16, seed=2)
    for i in range(11):
        angle = 2 * np.pi * i / 11
        buf.upsert(i, np.array([np.cos(angle), np.sin(angle)]), unit(rng, 2))
    candidates = {i: buf.get(i)[0] for i in range(11) if i != 5}
    counts = dict.fromkeys(candidates, 0)
    n_draws = 100_000
    for _ in range(n_draws):
        row = buf.sample_negatives(5, 1)[0]
        for i, feat in candidates.items():
            if np.array_equal(row, feat):
                counts[i] += 1
                break
    expected = n_draws / 10
    stat = sum((c - expected) ** 2 / expected for c in counts.values())
    assert stat <= CHI2_CRIT_9DF_1PCT
