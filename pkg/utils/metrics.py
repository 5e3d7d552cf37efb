"""Object-recovery metrics for the target/reference nearest-neighbor test.

Per record: precision, recall and F-score of the objects recovered from the
caption's public-image neighbors. Per population: the precision and recall
gaps (PPG, PRG), the signed area between recall CDFs (AUCG), and their
bootstrap spread. Per sample: vulnerability rankings and top-L gap curves.
"""
import logging
import math
from concurrent.futures import ThreadPoolExecutor

import numpy as np
from tqdm import tqdm

from config import Config
from models.report import AuditTable, BootstrapEstimate, GapCurve, SampleMetrics
from utils.errors import ArgumentError, DataError

logger = logging.getLogger(__name__)

POPULATION_METRICS = ('ppg', 'prg', 'aucg')
SORT_KEYS = ('min_dist', 'correct_preds')


def _neighbor_labels(neighbors, public_annotations):
    missing = [n for n in neighbors.neighbor_ids if n not in public_annotations]
    if missing:
        raise DataError("neighbor images without annotations", ids=missing)
    return [public_annotations[n] for n in neighbors.neighbor_ids]


def recovered_objects(neighbors, public_annotations):
    labels = _neighbor_labels(neighbors, public_annotations)
    return frozenset().union(*labels) if labels else frozenset()


def top_m_objects(neighbors, public_annotations, m=None):
    """Objects ranked by the summed similarity of the neighbors that contain them.

    `m=None` keeps every recovered object. Equal scores are ordered by label.
    """
    if m is not None and m < 1:
        raise ArgumentError(f"m must be a positive integer, got {m!r}")
    labels = _neighbor_labels(neighbors, public_annotations)
    scores = {}
    for sim, objects in zip(neighbors.similarities, labels):
        for obj in objects:
            scores[obj] = scores.get(obj, 0.0) + float(sim)
    ranked = sorted(scores, key=lambda obj: (-scores[obj], obj))
    if m is not None:
        ranked = ranked[:m]
    return frozenset(ranked)


def sample_metrics(ground_truth, recovered, record_id='', min_dist=None):
    ground_truth = frozenset(ground_truth)
    recovered = frozenset(recovered)
    n_correct = len(ground_truth & recovered)
    precision = n_correct / len(recovered) if recovered else 0.0
    recall = n_correct / len(ground_truth) if ground_truth else 0.0
    f_score = 2 * precision * recall / (precision + recall) if precision + recall > 0 else 0.0
    return SampleMetrics(
        record_id=record_id,
        precision=precision,
        recall=recall,
        f_score=f_score,
        n_correct=n_correct,
        n_ground_truth=len(ground_truth),
        n_recovered=len(recovered),
        min_dist=min_dist,
    )


def _sign_gap(a, b):
    if len(a) == 0:
        return 0.0
    return (int(np.count_nonzero(a > b)) - int(np.count_nonzero(a < b))) / len(a)


def _as_table(metrics_a, metrics_b):
    if len(metrics_a) != len(metrics_b):
        raise ArgumentError(f"metric lists differ in length: {len(metrics_a)} vs {len(metrics_b)}")
    return AuditTable.from_metrics(metrics_a, metrics_b)


def table_gaps(table):
    """(ppg, prg) of an AuditTable; records without ground truth are left out of prg."""
    ppg = _sign_gap(table.precision_a, table.precision_b)
    mask = table.has_ground_truth
    prg = _sign_gap(table.recall_a[mask], table.recall_b[mask])
    return ppg, prg


def population_gaps(metrics_a, metrics_b):
    return table_gaps(_as_table(metrics_a, metrics_b))


def auc_gap(recalls_a, recalls_b):
    """Signed area between the empirical recall CDFs, integral of F_B - F_A over [0, 1].

    Computed piecewise on the merged sample points, so it equals
    mean(recalls_a) - mean(recalls_b) up to rounding.
    """
    a = np.sort(np.asarray(recalls_a, dtype=np.float64))
    b = np.sort(np.asarray(recalls_b, dtype=np.float64))
    if a.size == 0 or b.size == 0:
        raise ArgumentError("auc_gap needs non-empty recall lists")
    if a.size != b.size:
        raise ArgumentError(f"recall lists differ in length: {a.size} vs {b.size}")
    if a[0] < 0.0 or b[0] < 0.0 or a[-1] > 1.0 or b[-1] > 1.0:
        raise ArgumentError("recalls must lie in [0, 1]")
    grid = np.unique(np.concatenate(([0.0], a, b, [1.0])))
    left = grid[:-1]
    widths = np.diff(grid)
    cdf_a = np.searchsorted(a, left, side='right') / a.size
    cdf_b = np.searchsorted(b, left, side='right') / b.size
    return float(np.sum((cdf_b - cdf_a) * widths))


def table_auc_gap(table):
    mask = table.has_ground_truth
    if not mask.any():
        return 0.0
    return auc_gap(table.recall_a[mask], table.recall_b[mask])


def recall_cdf(recalls_a, recalls_b):
    """Step points (t, F_A(t), F_B(t)) of both recall CDFs, for plotting."""
    a = np.sort(np.asarray(recalls_a, dtype=np.float64))
    b = np.sort(np.asarray(recalls_b, dtype=np.float64))
    grid = np.unique(np.concatenate(([0.0], a, b, [1.0])))
    cdf_a = np.searchsorted(a, grid, side='right') / max(a.size, 1)
    cdf_b = np.searchsorted(b, grid, side='right') / max(b.size, 1)
    return [(float(t), float(fa), float(fb)) for t, fa, fb in zip(grid, cdf_a, cdf_b)]


def population_metric(table, metric):
    if metric == 'ppg':
        return table_gaps(table)[0]
    if metric == 'prg':
        return table_gaps(table)[1]
    if metric == 'aucg':
        return table_auc_gap(table)
    raise ArgumentError(f"unknown population metric {metric!r}; expected one of {POPULATION_METRICS}")


def _resample_indices(rng, n, size):
    return rng.integers(0, n, size=size)


def bootstrap(table, metric, fraction=Config.DEFAULT_BOOTSTRAP_FRACTION,
              reps=Config.DEFAULT_BOOTSTRAP_REPS, seed=0, threads=None, sampler=None,
              progress=False):
    """Mean and population-form std of `metric` over resampled record subsets.

    Each repetition draws ceil(fraction * n) records with replacement from a
    generator spawned from `seed` for that repetition alone, so the result does
    not depend on how repetitions are scheduled. `sampler(rng, n, size)` can
    replace the uniform draw.
    """
    if metric not in POPULATION_METRICS:
        raise ArgumentError(f"unknown population metric {metric!r}; expected one of {POPULATION_METRICS}")
    n = len(table)
    if n == 0:
        raise ArgumentError("bootstrap needs at least one record")
    if not 0.0 < fraction <= 1.0:
        raise ArgumentError(f"fraction must lie in (0, 1], got {fraction}")
    if reps < 1:
        raise ArgumentError(f"reps must be >= 1, got {reps}")
    size = math.ceil(fraction * n)
    sampler = sampler or _resample_indices
    children = np.random.SeedSequence(seed).spawn(reps)

    def one_rep(child):
        rng = np.random.default_rng(child)
        return population_metric(table.take(sampler(rng, n, size)), metric)

    threads = threads or Config.THREADS
    values = []
    with tqdm(total=reps, desc=f"bootstrap {metric}", unit='rep', disable=not progress) as bar:
        if threads == 1 or reps == 1:
            for child in children:
                values.append(one_rep(child))
                bar.update()
        else:
            with ThreadPoolExecutor(max_workers=threads) as pool:
                for value in pool.map(one_rep, children):
                    values.append(value)
                    bar.update()
    values = np.asarray(values, dtype=np.float64)
    return BootstrapEstimate(mean=float(values.mean()), std=float(values.std(ddof=0)))


def rank_records(table, sort_key):
    """Record IDs ordered from most to least vulnerable under `sort_key`."""
    ids = np.array(table.record_ids, dtype=object)
    if sort_key == 'min_dist':
        if np.isnan(table.min_dist).any():
            missing = [table.record_ids[i] for i in np.flatnonzero(np.isnan(table.min_dist))]
            raise ArgumentError("records without min_dist", ids=missing)
        primary = table.min_dist
    elif sort_key == 'correct_preds':
        primary = -table.n_correct_a
    else:
        raise ArgumentError(f"unknown sort key {sort_key!r}; expected one of {SORT_KEYS}")
    id_order = np.argsort(ids, kind='stable')
    id_rank = np.empty(len(ids), dtype=np.int64)
    id_rank[id_order] = np.arange(len(ids))
    order = np.lexsort((id_rank, primary))
    return [table.record_ids[i] for i in order]


def gap_curve(ordering, metrics_a, metrics_b, grid, sort_key=''):
    table = metrics_a if isinstance(metrics_a, AuditTable) else _as_table(metrics_a, metrics_b)
    n = len(table)
    grid = tuple(int(L) for L in grid)
    if any(L < 1 or L > n for L in grid):
        raise ArgumentError(f"grid values must lie in [1, {n}]: {list(grid)}")
    if any(b <= a for a, b in zip(grid, grid[1:])):
        raise ArgumentError(f"grid must be strictly increasing: {list(grid)}")
    if len(ordering) != n:
        raise ArgumentError(f"ordering has {len(ordering)} records, table has {n}")
    position = {rid: i for i, rid in enumerate(table.record_ids)}
    try:
        index = np.array([position[rid] for rid in ordering], dtype=np.int64)
    except KeyError as e:
        raise ArgumentError("ordering names unknown records", ids=[e.args[0]])

    p_gap = (table.precision_a - table.precision_b)[index]
    r_gap = (table.recall_a - table.recall_b)[index]
    f_gap = (table.f_a - table.f_b)[index]
    has_gt = table.has_ground_truth[index]

    precision, recall, f_score = [], [], []
    for L in grid:
        precision.append(float(p_gap[:L].mean()))
        f_score.append(float(f_gap[:L].mean()))
        mask = has_gt[:L]
        recall.append(float(r_gap[:L][mask].mean()) if mask.any() else 0.0)
    return GapCurve(tuple(ordering), sort_key, grid, tuple(precision), tuple(recall), tuple(f_score))
