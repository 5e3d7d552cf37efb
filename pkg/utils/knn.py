"""Exact top-k cosine retrieval over a public image set.

Scores are first computed block-wise in float32 through BLAS. Every row whose
float32 score lies within the float32 error bound of the k-th best is then
rescored with float64 accumulation, and the final order is taken from the
float64 scores with ties broken by ascending public ID. The float32 pass only
prunes; it never decides the order.
"""
import logging
from concurrent.futures import ThreadPoolExecutor

import numpy as np
from tqdm import tqdm

from config import Config
from models.embedding import NORM_TOLERANCE
from models.neighbors import NeighborSet
from utils.errors import ArgumentError, ContractError

logger = logging.getLogger(__name__)

DEFAULT_K = Config.DEFAULT_K


class PublicIndex:
    """Read-only view of a normalized public matrix prepared for repeated searches."""

    def __init__(self, public):
        if not public.normalized:
            raise ContractError("public embeddings must be normalized")
        self.matrix = public
        self.ids = np.array(public.ids, dtype=object)
        # rank of each row's ID in ascending lexicographic order
        order = sorted(range(public.n), key=public.ids.__getitem__)
        self.id_rank = np.empty(public.n, dtype=np.int64)
        self.id_rank[order] = np.arange(public.n)
        self.tolerance = 8.0 * max(public.dim, 1) * float(np.finfo(np.float32).eps)

    @property
    def n(self):
        return self.matrix.n

    def exact_scores(self, rows, query64):
        cand = self.matrix.data[rows].astype(np.float64)
        return (cand * query64).sum(axis=1)

    def select(self, scores32, query, k):
        """Top-k (indices, float64 similarities) for one query from its float32 scores."""
        query64 = np.asarray(query, dtype=np.float64)
        if k >= scores32.shape[0]:
            candidates = np.arange(scores32.shape[0])
        else:
            kth = np.partition(scores32, scores32.shape[0] - k)[scores32.shape[0] - k]
            candidates = np.flatnonzero(scores32 >= kth - self.tolerance)
        exact = self.exact_scores(candidates, query64)
        order = np.lexsort((self.id_rank[candidates], -exact))[:k]
        return candidates[order], exact[order]


def _check_query(query):
    q = np.asarray(query, dtype=np.float64)
    if q.ndim != 1:
        raise ArgumentError(f"query must be a vector, got shape {q.shape}")
    if abs(np.linalg.norm(q) - 1.0) > NORM_TOLERANCE:
        raise ContractError("query is not unit-norm")
    return q


def _check_k(k, n_public):
    if not isinstance(k, (int, np.integer)) or k < 1:
        raise ArgumentError(f"k must be a positive integer, got {k!r}")
    if k > n_public:
        raise ArgumentError(f"k={k} exceeds the public set size {n_public}")


def top_k(query, public, k=DEFAULT_K, query_id=''):
    index = public if isinstance(public, PublicIndex) else PublicIndex(public)
    _check_k(k, index.n)
    q = _check_query(query)
    if q.shape[0] != index.matrix.dim:
        raise ArgumentError(f"query dim {q.shape[0]} != public dim {index.matrix.dim}")
    scores = index.matrix.data @ q.astype(np.float32)
    rows, sims = index.select(scores, q, k)
    return NeighborSet(query_id, tuple(index.ids[rows]), tuple(float(s) for s in sims))


def _query_blocks(n_queries, n_public, block_floats):
    step = max(1, min(n_queries, block_floats // max(n_public, 1)))
    return [(start, min(start + step, n_queries)) for start in range(0, n_queries, step)]


def batch_top_k(queries, public, k=DEFAULT_K, threads=None, block_floats=None, progress=False):
    """Top-k neighbors of every query row; result[i] belongs to queries.ids[i].

    Work is split into query blocks whose similarity slab fits `block_floats`
    cells; blocks run on a thread pool and write to pre-assigned slots.
    """
    if not queries.normalized:
        raise ContractError("query embeddings must be normalized")
    index = public if isinstance(public, PublicIndex) else PublicIndex(public)
    if queries.n == 0:
        return []
    _check_k(k, index.n)
    if queries.dim != index.matrix.dim:
        raise ArgumentError(f"query dim {queries.dim} != public dim {index.matrix.dim}")

    threads = threads or Config.THREADS
    blocks = _query_blocks(queries.n, index.n, block_floats or Config.KNN_BLOCK_FLOATS)
    results = [None] * queries.n
    public_t = index.matrix.data.T

    def run_block(bounds):
        start, stop = bounds
        block = queries.data[start:stop]
        slab = block @ public_t
        for offset in range(stop - start):
            i = start + offset
            rows, sims = index.select(slab[offset], block[offset], k)
            results[i] = NeighborSet(queries.ids[i], tuple(index.ids[rows]),
                                     tuple(float(s) for s in sims))
        return stop - start

    logger.debug("batch_top_k: %d queries x %d public, k=%d, %d blocks, %d threads",
                 queries.n, index.n, k, len(blocks), threads)
    with tqdm(total=queries.n, desc='knn', unit='q', disable=not progress) as bar:
        if threads == 1:
            for bounds in blocks:
                bar.update(run_block(bounds))
        else:
            with ThreadPoolExecutor(max_workers=threads) as pool:
                for done in pool.map(run_block, blocks):
                    bar.update(done)
    return results


def min_distance(query, public):
    """Cosine distance from `query` to its nearest public image, in [0, 2]."""
    index = public if isinstance(public, PublicIndex) else PublicIndex(public)
    if index.n == 0:
        raise ArgumentError("public set is empty")
    nearest = top_k(query, index, 1)
    return float(np.clip(1.0 - nearest.similarities[0], 0.0, 2.0))


def batch_min_distance(queries, public, threads=None, neighbors=None):
    """`min_distance` for every query row.

    `neighbors` may hold the queries' top-k sets from an earlier `batch_top_k`
    over the same public set; their first similarity is then used as is.
    """
    if neighbors is None:
        neighbors = batch_top_k(queries, public, 1, threads=threads)
    elif len(neighbors) != queries.n:
        raise ArgumentError(f"{len(neighbors)} neighbor sets for {queries.n} queries")
    return np.array([np.clip(1.0 - n.similarities[0], 0.0, 2.0) for n in neighbors])
