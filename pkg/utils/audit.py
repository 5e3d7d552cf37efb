"""Population-level and sample-level memorization audits over an AuditDataset."""
import logging
from dataclasses import dataclass

from models.manifest import AuditConfig
from models.report import AuditTable, PopulationReport
from utils import knn, metrics

logger = logging.getLogger(__name__)


@dataclass
class AuditResult:
    report: PopulationReport
    table: AuditTable
    neighbors_target: list
    neighbors_reference: list


def _neighbors(dataset, k, threads, progress):
    target = knn.batch_top_k(dataset.text_embeddings_target, dataset.public_target, k,
                             threads=threads, progress=progress)
    reference = knn.batch_top_k(dataset.text_embeddings_reference, dataset.public_reference, k,
                                threads=threads, progress=progress)
    return target, reference


def _per_record(dataset, neighbors_target, neighbors_reference, predict):
    # min_dist is measured under the target model only
    min_dist = knn.batch_min_distance(dataset.text_embeddings_target, dataset.public_target,
                                      neighbors=neighbors_target)
    rows_a, rows_b = [], []
    for rid, n_a, n_b, dist in zip(dataset.record_ids, neighbors_target, neighbors_reference, min_dist):
        truth = dataset.ground_truth[rid]
        rows_a.append(metrics.sample_metrics(truth, predict(n_a), rid, float(dist)))
        rows_b.append(metrics.sample_metrics(truth, predict(n_b), rid))
    return AuditTable.from_metrics(rows_a, rows_b)


def population_report(table, config, seed, threads=None, extra=None, progress=False):
    ppg, prg = metrics.table_gaps(table)
    aucg = metrics.table_auc_gap(table)
    estimates = {
        name: metrics.bootstrap(table, name, fraction=config.bootstrap.fraction,
                                reps=config.bootstrap.reps, seed=seed, threads=threads,
                                progress=progress)
        for name in metrics.POPULATION_METRICS
    }
    echo = config.echo()
    echo['seed'] = seed
    echo.update(extra or {})
    return PopulationReport(
        ppg=ppg, prg=prg, aucg=aucg,
        bootstrap=estimates,
        n_records=len(table),
        n_recall_excluded=int((~table.has_ground_truth).sum()),
        config=echo,
    )


def run_population_audit(dataset, config=None, seed=0, threads=None, progress=False, extra=None):
    """k-NN object recovery for every split record under both models, then PPG/PRG/AUCG.

    Objects are the union over all k neighbors.
    """
    config = config or AuditConfig()
    neighbors_a, neighbors_b = _neighbors(dataset, config.k, threads, progress)
    table = _per_record(dataset, neighbors_a, neighbors_b,
                        lambda n: metrics.recovered_objects(n, dataset.public_annotations))
    echo = {'split_name': dataset.split_name, 'public_name': dataset.public_name,
            'n_public': dataset.n_public}
    echo.update(extra or {})
    report = population_report(table, config, seed, threads=threads, extra=echo, progress=progress)
    logger.info("population audit: %s", report.summary_line())
    return AuditResult(report, table, neighbors_a, neighbors_b)


def run_sample_audit(dataset, grid, sort_key='min_dist', config=None, threads=None, progress=False):
    """Top-m object predictions per record, ranked by vulnerability, averaged over top-L prefixes."""
    config = config or AuditConfig()
    neighbors_a, neighbors_b = _neighbors(dataset, config.k, threads, progress)
    table = _per_record(dataset, neighbors_a, neighbors_b,
                        lambda n: metrics.top_m_objects(n, dataset.public_annotations, config.top_m))
    ordering = metrics.rank_records(table, sort_key)
    curve = metrics.gap_curve(ordering, table, None, grid, sort_key=sort_key)
    logger.info("sample audit (%s): L=%d precision gap %.4f, recall gap %.4f",
                sort_key, curve.grid[0], curve.precision_gap[0], curve.recall_gap[0])
    return curve, table
