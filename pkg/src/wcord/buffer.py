"""Per-sample feature store for drawing incongruent pairs across mini-batches.

Slots hold unit-norm teacher and student features keyed by stable sample id;
callers normalize before inserting and upsert validates the norm so reads
return exactly what was written. Entries are replaced outright (no momentum
blending); the oldest slot is evicted once capacity is exceeded. Sampling is
driven by an internal seeded generator so runs replay exactly.
"""

from __future__ import annotations

import numpy as np

from .errors import ContractError


class MemoryBuffer:
    def __init__(self, dim: int, capacity: int, seed: int = 0):
        if dim < 1 or capacity < 1:
            raise ContractError(f"dim and capacity must be >= 1, got {dim}, {capacity}")
        self.dim = dim
        self.capacity = capacity
        self._slots: dict[int, tuple[np.ndarray, np.ndarray, int]] = {}
        self._clock = 0
        self._rng = np.random.default_rng(seed)

    def __len__(self) -> int:
        return len(self._slots)

    def ids(self) -> list[int]:
        return sorted(self._slots)

    @staticmethod
    def _check_unit(feat: np.ndarray, name: str) -> np.ndarray:
        norm = float(np.linalg.norm(feat))
        if abs(norm - 1.0) > 1e-6:
            raise ContractError(f"{name} feature must be unit-norm, got norm {norm:g}")
        return feat.copy()

    def upsert(self, sample_id: int, teacher_feat, student_feat) -> None:
        t = np.asarray(teacher_feat, dtype=np.float64)
        s = np.asarray(student_feat, dtype=np.float64)
        if t.shape != (self.dim,) or s.shape != (self.dim,):
            raise ContractError(
                f"feature length must be {self.dim}, got {t.shape} and {s.shape}"
            )
        self._slots[sample_id] = (
            self._check_unit(t, "teacher"),
            self._check_unit(s, "student"),
            self._clock,
        )
        self._clock += 1
        if len(self._slots) > self.capacity:
            oldest = min(self._slots, key=lambda k: self._slots[k][2])
            del self._slots[oldest]

    def get(self, sample_id: int) -> tuple[np.ndarray, np.ndarray]:
        if sample_id not in self._slots:
            raise ContractError(f"sample id {sample_id} not in buffer")
        t, s, _age = self._slots[sample_id]
        return t, s

    def sample_negatives(self, anchor_id: int, m: int, side: str = "teacher") -> np.ndarray:
        """m features drawn uniformly without replacement from non-anchor slots."""
        if side not in ("teacher", "student"):
            raise ContractError(f"side must be 'teacher' or 'student', got {side!r}")
        candidates = [k for k in sorted(self._slots) if k != anchor_id]
        if len(candidates) < m:
            raise ContractError(
                f"need {m} negatives but only {len(candidates)} non-anchor ids are buffered"
            )
        chosen = self._rng.choice(len(candidates), size=m, replace=False)
        col = 0 if side == "teacher" else 1
        return np.stack([self._slots[candidates[i]][col] for i in chosen])
