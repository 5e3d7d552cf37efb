"""End-to-end synthetic memorization experiments.

generate corpus -> caption dedup -> disjoint A/B/P/holdout split -> train f_A
on A and f_B on B for each grid point -> embed A's captions and P's images
under both models -> assemble -> population (and optional sample) audit.
"""
import logging
import os
from dataclasses import dataclass, field
from typing import Optional

from models.report import GapCurve, PopulationReport
from utils import audit, dedup, embedding_store, reporting, synthetic_corpus, trainer
from utils.errors import ArgumentError

logger = logging.getLogger(__name__)


@dataclass
class PointResult:
    name: str
    train_size: int
    train_config: dict
    report: PopulationReport
    loss_trace_a: list
    loss_trace_b: list
    val_loss_trace: list = field(default_factory=list)
    curve: Optional[GapCurve] = None
    audit_result: Optional[audit.AuditResult] = None
    dataset: Optional[object] = None

    @property
    def utility_proxy(self):
        """Final held-out InfoNCE loss of the target model (lower is better)."""
        return self.val_loss_trace[-1] if self.val_loss_trace else None

    def summary(self):
        return {
            'name': self.name,
            'train_size': self.train_size,
            'ppg': self.report.ppg,
            'prg': self.report.prg,
            'aucg': self.report.aucg,
            'bootstrap': {k: v.to_dict() for k, v in sorted(self.report.bootstrap.items())},
            'final_train_loss_A': self.loss_trace_a[-1] if self.loss_trace_a else None,
            'final_train_loss_B': self.loss_trace_b[-1] if self.loss_trace_b else None,
            'utility_proxy_val_loss': self.utility_proxy,
        }


@dataclass
class CorpusSplits:
    records: dict
    train_a: list
    train_b: list
    public: list
    holdout: list


def prepare_splits(exp):
    records = synthetic_corpus.generate_corpus(exp.corpus)
    ids = [r.id for r in records]
    if exp.caption_dedup:
        corpus = dedup.CorpusIndex(tuple(ids), tuple(r.caption for r in records))
        ids = dedup.caption_dedup(corpus)
    n_train = exp.max_train_size()
    sizes = [n_train, 0 if exp.null_reference else n_train, exp.sizes.public, exp.sizes.holdout]
    if sum(sizes) > len(ids):
        raise ArgumentError(f"corpus has {len(ids)} records after dedup, experiment needs "
                            f"{sum(sizes)}; raise corpus.n_records")
    a, b, p, h = dedup.split_disjoint(ids, sizes, exp.split_seed)
    by_id = {r.id: r for r in records}
    return CorpusSplits(by_id, a, b, p, h)


def run_point(exp, splits, point, threads=None, progress=False, keep_audit=False):
    cfg = exp.train_config_for(point)
    n_train = point.train_size or exp.sizes.train
    vocab = exp.corpus.vocab_size
    records_a = [splits.records[i] for i in splits.train_a[:n_train]]
    records_b = records_a if exp.null_reference else [splits.records[i] for i in splits.train_b[:n_train]]
    records_p = [splits.records[i] for i in splits.public]
    holdout = [splits.records[i] for i in splits.holdout]
    name = point.label()

    logger.info("grid point %s: training target model on %d records", name, len(records_a))
    fit_a = trainer.train(records_a, cfg, vocab, holdout=holdout, progress=progress)
    logger.info("grid point %s: training reference model on %d records", name, len(records_b))
    fit_b = trainer.train(records_b, cfg, vocab, progress=progress)

    text_a, _ = trainer.embed_corpus(fit_a.towers, records_a, vocab, meta={'model': 'f_A'})
    text_b, _ = trainer.embed_corpus(fit_b.towers, records_a, vocab, meta={'model': 'f_B'})
    _, public_a = trainer.embed_corpus(fit_a.towers, records_p, vocab, meta={'model': 'f_A'})
    _, public_b = trainer.embed_corpus(fit_b.towers, records_p, vocab, meta={'model': 'f_B'})

    dataset = embedding_store.assemble(
        text_a, text_b, synthetic_corpus.annotations(records_a),
        public_a, public_b, synthetic_corpus.annotations(records_p),
        split_name='A', public_name='synthetic_public')
    seed = exp.audit.seed if exp.audit.seed is not None else exp.split_seed
    extra = {'experiment': exp.name, 'grid_point': name, 'train_size': n_train,
             'utility_proxy': 'heldout_infonce_loss', 'null_reference': exp.null_reference}
    result = audit.run_population_audit(dataset, exp.audit, seed=seed, threads=threads,
                                        progress=progress, extra=extra)
    curve = None
    if exp.sample_grid:
        grid = [L for L in exp.sample_grid if L <= dataset.n_records]
        if grid:
            curve, _ = audit.run_sample_audit(dataset, grid, exp.sample_sort, exp.audit,
                                              threads=threads)

    point_result = PointResult(
        name=name,
        train_size=n_train,
        train_config=cfg.model_dump(),
        report=result.report,
        loss_trace_a=fit_a.loss_trace,
        loss_trace_b=fit_b.loss_trace,
        val_loss_trace=fit_a.val_loss_trace,
        curve=curve,
        audit_result=result if keep_audit else None,
        dataset=dataset if keep_audit else None,
    )
    return point_result


def run_experiment(exp, out_dir=None, threads=None, progress=False):
    """One PopulationReport per grid point; files are written under out_dir when given."""
    splits = prepare_splits(exp)
    results = []
    for i, point in enumerate(exp.grid):
        result = run_point(exp, splits, point, threads=threads, progress=progress,
                           keep_audit=out_dir is not None)
        if out_dir is not None:
            write_point(result, os.path.join(out_dir, f"{i:02d}_{_slug(result.name)}"), exp)
        result.dataset = None
        result.audit_result = None
        results.append(result)
    if out_dir is not None:
        reporting.write_json({'experiment': exp.name, 'points': [r.summary() for r in results]},
                             os.path.join(out_dir, 'summary.json'))
    return results


def _slug(text):
    return ''.join(c if c.isalnum() or c in '.-' else '_' for c in text)


def write_point(result, point_dir, exp):
    """Embedding files, traces, reports and a replayable audit manifest for one grid point."""
    ds = result.dataset
    files = {
        'target_text': embedding_store.save_embeddings(
            ds.text_embeddings_target, os.path.join(point_dir, 'target_text.json')),
        'reference_text': embedding_store.save_embeddings(
            ds.text_embeddings_reference, os.path.join(point_dir, 'reference_text.json')),
        'public_target': embedding_store.save_embeddings(
            ds.public_target, os.path.join(point_dir, 'public_target.json')),
        'public_reference': embedding_store.save_embeddings(
            ds.public_reference, os.path.join(point_dir, 'public_reference.json')),
        'ground_truth': embedding_store.save_annotations(
            ds.ground_truth, os.path.join(point_dir, 'ground_truth.jsonl')),
        'public_annotations': embedding_store.save_annotations(
            ds.public_annotations, os.path.join(point_dir, 'public_annotations.jsonl')),
    }
    manifest = {name: os.path.basename(path) for name, path in files.items()}
    manifest.update({
        'split_name': ds.split_name,
        'public_name': ds.public_name,
        'k': exp.audit.k,
        'top_m': exp.audit.top_m,
        'bootstrap': exp.audit.bootstrap.model_dump(),
        'seed': result.report.config.get('seed'),
        'metadata': {'experiment': exp.name, 'grid_point': result.name,
                     'train_config': result.train_config},
    })
    reporting.write_json(manifest, os.path.join(point_dir, 'manifest.json'))
    reporting.write_json(result.report.to_dict(), os.path.join(point_dir, 'report.json'))
    reporting.write_loss_csv(result.loss_trace_a, result.loss_trace_b, result.val_loss_trace,
                             os.path.join(point_dir, 'loss_trace.csv'))
    if result.audit_result is not None:
        reporting.write_per_record_csv(result.audit_result.table,
                                       os.path.join(point_dir, 'per_record.csv'))
    if result.curve is not None:
        reporting.write_curve_csv(result.curve, os.path.join(point_dir, 'curve.csv'))
    return point_dir
