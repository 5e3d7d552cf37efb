from dataclasses import dataclass, field
from collections.abc import Mapping
from typing import Optional

import numpy as np

from utils.errors import ValidationError

NORM_TOLERANCE = 1e-5


@dataclass(frozen=True, eq=False)
class EmbeddingMatrix:
    """Row-major float32 embeddings keyed by record ID.

    Construction validates the invariants; an instance is immutable (the
    backing array is made read-only) and safe to share across threads.
    """

    ids: tuple
    data: np.ndarray
    normalized: bool = False
    allow_zero: bool = False
    meta: dict = field(default_factory=dict, compare=False)
    # header bytes as read from disk; set only by load_embeddings
    source_header: Optional[bytes] = field(default=None, compare=False, repr=False)

    def __post_init__(self):
        ids = tuple(str(i) for i in self.ids)
        data = np.ascontiguousarray(self.data, dtype=np.float32)
        if data is self.data and data.flags.writeable:
            data = data.copy()
        if data.ndim != 2:
            raise ValidationError(f"embedding data must be 2-d, got shape {data.shape}")
        if data.shape[0] != len(ids):
            raise ValidationError(f"{len(ids)} ids for {data.shape[0]} rows")
        if len(set(ids)) != len(ids):
            raise ValidationError("duplicate record ids", ids=_duplicates(ids))
        bad_rows = ~np.isfinite(data).all(axis=1)
        if bad_rows.any():
            raise ValidationError("non-finite embedding values",
                                  ids=[ids[i] for i in np.flatnonzero(bad_rows)])
        if self.normalized and len(ids):
            norms = np.linalg.norm(data.astype(np.float64), axis=1)
            zero = norms == 0.0
            off = np.abs(norms - 1.0) > NORM_TOLERANCE
            if self.allow_zero:
                off &= ~zero
            if off.any():
                raise ValidationError("rows are not unit-norm",
                                      ids=[ids[i] for i in np.flatnonzero(off)])
        data.setflags(write=False)
        object.__setattr__(self, 'ids', ids)
        object.__setattr__(self, 'data', data)
        object.__setattr__(self, '_index', {rid: i for i, rid in enumerate(ids)})

    @property
    def n(self):
        return self.data.shape[0]

    @property
    def dim(self):
        return self.data.shape[1]

    def row(self, i):
        return self.data[i]

    def index_of(self, record_id):
        return self._index[record_id]

    def __contains__(self, record_id):
        return record_id in self._index

    def __len__(self):
        return self.n

    def subset(self, ids):
        """Rows for `ids`, in the order given."""
        missing = [i for i in ids if i not in self._index]
        if missing:
            raise ValidationError("ids not present in matrix", ids=missing)
        rows = [self._index[i] for i in ids]
        return EmbeddingMatrix(tuple(ids), self.data[rows], normalized=self.normalized,
                               allow_zero=self.allow_zero, meta=dict(self.meta))


class AnnotationTable(Mapping):
    """Record ID -> frozenset of case-folded object labels."""

    def __init__(self, entries=None):
        self._entries = {}
        for record_id, labels in (entries or {}).items():
            self._entries[str(record_id)] = normalize_labels(labels, record_id)

    def __getitem__(self, record_id):
        return self._entries[record_id]

    def __iter__(self):
        return iter(self._entries)

    def __len__(self):
        return len(self._entries)

    def label_counts(self):
        counts = {}
        for labels in self._entries.values():
            for label in labels:
                counts[label] = counts.get(label, 0) + 1
        return counts

    def missing(self, ids):
        return [i for i in ids if i not in self._entries]


def normalize_labels(labels, record_id=None):
    cleaned = set()
    for label in labels:
        if not isinstance(label, str):
            raise ValidationError(f"object label must be a string, got {label!r}",
                                  ids=[record_id] if record_id is not None else None)
        folded = label.strip().casefold()
        if not folded:
            raise ValidationError("empty object label",
                                  ids=[record_id] if record_id is not None else None)
        cleaned.add(folded)
    return frozenset(cleaned)


@dataclass(frozen=True)
class AuditDataset:
    split_name: str
    text_embeddings_target: EmbeddingMatrix
    text_embeddings_reference: EmbeddingMatrix
    ground_truth: AnnotationTable
    public_target: EmbeddingMatrix
    public_reference: EmbeddingMatrix
    public_annotations: AnnotationTable
    public_name: Optional[str] = None

    @property
    def record_ids(self):
        return self.text_embeddings_target.ids

    @property
    def n_records(self):
        return self.text_embeddings_target.n

    @property
    def n_public(self):
        return self.public_target.n


def _duplicates(ids):
    seen, dupes = set(), []
    for i in ids:
        if i in seen and i not in dupes:
            dupes.append(i)
        seen.add(i)
    return dupes
