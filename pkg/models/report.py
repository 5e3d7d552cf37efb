from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from utils.errors import ArgumentError


@dataclass(frozen=True)
class SampleMetrics:
    record_id: str
    precision: float
    recall: float
    f_score: float
    n_correct: int
    n_ground_truth: int
    n_recovered: int
    min_dist: Optional[float] = None

    @property
    def has_ground_truth(self):
        return self.n_ground_truth > 0


@dataclass(frozen=True, eq=False)
class AuditTable:
    """Per-record metrics of the target (A) and reference (B) models, aligned by record."""

    record_ids: tuple
    precision_a: np.ndarray
    recall_a: np.ndarray
    f_a: np.ndarray
    precision_b: np.ndarray
    recall_b: np.ndarray
    f_b: np.ndarray
    n_correct_a: np.ndarray
    n_correct_b: np.ndarray
    has_ground_truth: np.ndarray
    min_dist: np.ndarray

    @classmethod
    def from_metrics(cls, metrics_a, metrics_b):
        ids_a = tuple(m.record_id for m in metrics_a)
        ids_b = tuple(m.record_id for m in metrics_b)
        if ids_a != ids_b:
            offending = sorted({a for a, b in zip(ids_a, ids_b) if a != b}
                               | set(ids_a[len(ids_b):]) | set(ids_b[len(ids_a):]))
            raise ArgumentError("target and reference metrics are not aligned", ids=offending)

        def column(ms, attr, dtype=np.float64):
            return np.array([getattr(m, attr) for m in ms], dtype=dtype)

        min_dist = np.array([np.nan if m.min_dist is None else m.min_dist for m in metrics_a],
                            dtype=np.float64)
        return cls(
            record_ids=ids_a,
            precision_a=column(metrics_a, 'precision'),
            recall_a=column(metrics_a, 'recall'),
            f_a=column(metrics_a, 'f_score'),
            precision_b=column(metrics_b, 'precision'),
            recall_b=column(metrics_b, 'recall'),
            f_b=column(metrics_b, 'f_score'),
            n_correct_a=column(metrics_a, 'n_correct', np.int64),
            n_correct_b=column(metrics_b, 'n_correct', np.int64),
            has_ground_truth=np.array([m.has_ground_truth for m in metrics_a], dtype=bool),
            min_dist=min_dist,
        )

    def __len__(self):
        return len(self.record_ids)

    def take(self, indices):
        indices = np.asarray(indices, dtype=np.int64)
        return AuditTable(
            record_ids=tuple(self.record_ids[i] for i in indices),
            precision_a=self.precision_a[indices],
            recall_a=self.recall_a[indices],
            f_a=self.f_a[indices],
            precision_b=self.precision_b[indices],
            recall_b=self.recall_b[indices],
            f_b=self.f_b[indices],
            n_correct_a=self.n_correct_a[indices],
            n_correct_b=self.n_correct_b[indices],
            has_ground_truth=self.has_ground_truth[indices],
            min_dist=self.min_dist[indices],
        )

    def swapped(self):
        """The same table with the target and reference roles exchanged."""
        return AuditTable(
            record_ids=self.record_ids,
            precision_a=self.precision_b, recall_a=self.recall_b, f_a=self.f_b,
            precision_b=self.precision_a, recall_b=self.recall_a, f_b=self.f_a,
            n_correct_a=self.n_correct_b, n_correct_b=self.n_correct_a,
            has_ground_truth=self.has_ground_truth, min_dist=self.min_dist,
        )


@dataclass(frozen=True)
class BootstrapEstimate:
    mean: float
    std: float

    def to_dict(self):
        return {'mean': self.mean, 'std': self.std}


@dataclass(frozen=True)
class PopulationReport:
    ppg: float
    prg: float
    aucg: float
    bootstrap: dict
    n_records: int
    n_recall_excluded: int
    config: dict = field(default_factory=dict)

    def to_dict(self):
        return {
            'ppg': self.ppg,
            'prg': self.prg,
            'aucg': self.aucg,
            'bootstrap': {name: est.to_dict() for name, est in sorted(self.bootstrap.items())},
            'n_records': self.n_records,
            'n_recall_excluded': self.n_recall_excluded,
            'config': self.config,
        }

    def summary_line(self):
        parts = []
        for name in ('ppg', 'prg', 'aucg'):
            est = self.bootstrap.get(name)
            value = getattr(self, name)
            if est is not None:
                parts.append(f"{name.upper()}={value:.4f} ({est.mean:.4f} ± {est.std:.4f})")
            else:
                parts.append(f"{name.upper()}={value:.4f}")
        return f"n={self.n_records} " + " ".join(parts)


@dataclass(frozen=True)
class GapCurve:
    sorted_ids: tuple
    sort_key: str
    grid: tuple
    precision_gap: tuple
    recall_gap: tuple
    f_score_gap: tuple

    def rows(self):
        for i, L in enumerate(self.grid):
            yield L, self.precision_gap[i], self.recall_gap[i], self.f_score_gap[i]

    def value_at(self, L, metric='recall'):
        column = {'precision': self.precision_gap, 'recall': self.recall_gap,
                  'f_score': self.f_score_gap}[metric]
        return column[self.grid.index(L)]
