"""Caption-level and embedding-similarity deduplication, and disjoint splitting."""
import logging
import unicodedata
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Optional

import numpy as np

from config import Config
from models.embedding import EmbeddingMatrix
from utils.errors import ArgumentError, ContractError, ValidationError

logger = logging.getLogger(__name__)

SEMANTIC_METHOD = 'simplified_greedy'


@dataclass(frozen=True)
class CorpusIndex:
    ids: tuple
    captions: tuple
    embeddings: Optional[EmbeddingMatrix] = None

    def __post_init__(self):
        if len(self.ids) != len(self.captions):
            raise ValidationError(f"{len(self.ids)} ids for {len(self.captions)} captions")
        if len(set(self.ids)) != len(self.ids):
            seen, dupes = set(), []
            for i in self.ids:
                if i in seen:
                    dupes.append(i)
                seen.add(i)
            raise ValidationError("duplicate record ids", ids=dupes)

    @classmethod
    def from_pairs(cls, pairs, embeddings=None):
        ids = tuple(i for i, _ in pairs)
        captions = tuple(c for _, c in pairs)
        return cls(ids, captions, embeddings)


def normalize_caption(text):
    return ' '.join(unicodedata.normalize('NFC', text).casefold().split())


def caption_dedup(corpus):
    """One record per distinct normalized caption, the one with the smallest ID.

    Kept IDs are returned in input order.
    """
    keeper = {}
    for rid, caption in zip(corpus.ids, corpus.captions):
        key = normalize_caption(caption)
        if key not in keeper or rid < keeper[key]:
            keeper[key] = rid
    kept = set(keeper.values())
    result = [rid for rid in corpus.ids if rid in kept]
    logger.info("caption dedup: kept %d of %d records", len(result), len(corpus.ids))
    return result


def _max_similarity(block, kept, threads, chunk_rows=65536):
    """Row-wise max of block @ kept.T, split over kept-row chunks."""
    if kept.shape[0] == 0:
        return np.full(block.shape[0], -np.inf)
    chunks = [kept[s:s + chunk_rows] for s in range(0, kept.shape[0], chunk_rows)]
    if threads == 1 or len(chunks) == 1:
        parts = [(block @ c.T).max(axis=1) for c in chunks]
    else:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            parts = list(pool.map(lambda c: (block @ c.T).max(axis=1), chunks))
    return np.max(np.stack(parts), axis=0)


def semantic_dedup(embeddings, threshold, threads=None, block_size=256):
    """Greedy scan in ascending ID order; keep a record iff its similarity to every
    previously kept record is below `threshold`.

    Kept IDs are returned in input order.
    """
    if not embeddings.normalized:
        raise ContractError("semantic dedup needs normalized embeddings")
    if not -1.0 < threshold <= 1.0:
        raise ArgumentError(f"threshold must lie in (-1, 1], got {threshold}")
    threads = threads or Config.THREADS
    order = sorted(range(embeddings.n), key=embeddings.ids.__getitem__)
    data = embeddings.data.astype(np.float64)
    kept_rows = np.empty((embeddings.n, embeddings.dim), dtype=np.float64)
    n_kept = 0
    kept_index = []

    for start in range(0, len(order), block_size):
        rows = order[start:start + block_size]
        block = data[rows]
        prior = _max_similarity(block, kept_rows[:n_kept], threads)
        internal = block @ block.T
        accepted = []
        for j in range(len(rows)):
            if prior[j] >= threshold:
                continue
            if accepted and internal[j, accepted].max() >= threshold:
                continue
            accepted.append(j)
        for j in accepted:
            kept_rows[n_kept] = block[j]
            n_kept += 1
            kept_index.append(rows[j])

    kept = set(kept_index)
    result = [embeddings.ids[i] for i in range(embeddings.n) if i in kept]
    logger.info("semantic dedup (%s, threshold %.4f): kept %d of %d records",
                SEMANTIC_METHOD, threshold, len(result), embeddings.n)
    return result


def split_disjoint(ids, sizes, seed):
    """Seeded shuffle of `ids` cut into consecutive, pairwise-disjoint parts of `sizes`."""
    ids = list(ids)
    sizes = [int(s) for s in sizes]
    if any(s < 0 for s in sizes):
        raise ArgumentError(f"sizes must be non-negative: {sizes}")
    if sum(sizes) > len(ids):
        raise ArgumentError(f"requested {sum(sizes)} records ({'+'.join(map(str, sizes))}) "
                            f"but only {len(ids)} are available")
    perm = np.random.default_rng(seed).permutation(len(ids))
    parts, start = [], 0
    for size in sizes:
        parts.append([ids[i] for i in perm[start:start + size]])
        start += size
    return parts
