import argparse
import json
import logging
import os
import secrets
import sys

import pydantic

from config import Config
from models.manifest import AuditManifest, BootstrapSettings
from models.toy import ExperimentConfig
from utils import audit, dedup, embedding_store, knn, metrics, reporting
from utils.errors import AlignmentError, ArgumentError, DejaVuError, FormatError
from utils.experiment import run_experiment
from utils.validators import parse_int_grid, parse_sizes, sanitize_caption

logger = logging.getLogger('dejavu')

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_VALIDATION = 2
EXIT_DATA = 3
EXIT_TRAINING = 4


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def configure_logging(quiet=False):
    level = logging.WARNING if quiet else getattr(logging, Config.LOG_LEVEL.upper(), logging.INFO)
    logging.basicConfig(level=level, format='%(asctime)s %(levelname)s %(name)s: %(message)s',
                        force=True)


def resolve_seed(args, fallback=None):
    if args.seed is not None:
        return args.seed
    if fallback is not None:
        return fallback
    seed = secrets.randbits(32)
    logger.info("no --seed given; using %d", seed)
    return seed


def _record_run(args, command, seed, config, summary):
    url = args.registry or Config.REGISTRY_URL
    if not url:
        return
    from models.database import session_factory
    from models.run import AuditRun

    SessionLocal = session_factory(url)
    db = SessionLocal()
    try:
        run = AuditRun(command=command, seed=seed)
        run.config = config
        run.summary = summary
        db.add(run)
        db.commit()
        logger.info("recorded %s run #%d in %s", command, run.id, url)
    finally:
        db.close()


def _load_normalized(path):
    return embedding_store.normalize(embedding_store.load_embeddings(path))


def load_manifest(path):
    try:
        with open(path, 'r', encoding='utf-8') as fh:
            data = json.load(fh)
    except json.JSONDecodeError as e:
        raise FormatError(f"{path}: manifest is not valid JSON ({e.msg})")
    data['base_dir'] = os.path.dirname(os.path.abspath(path))
    return AuditManifest.model_validate(data)


def load_dataset(manifest):
    paths = manifest.paths()
    return embedding_store.assemble(
        embedding_store.load_embeddings(paths['target_text']),
        embedding_store.load_embeddings(paths['reference_text']),
        embedding_store.load_annotations(paths['ground_truth']),
        embedding_store.load_embeddings(paths['public_target']),
        embedding_store.load_embeddings(paths['public_reference']),
        embedding_store.load_annotations(paths['public_annotations']),
        split_name=manifest.split_name,
        public_name=manifest.public_name,
    )


def manifest_digests(manifest):
    digests = {}
    for name, path in sorted(manifest.paths().items()):
        entry = {'path': getattr(manifest, name), 'sha256': reporting.file_digest(path)}
        if path.endswith('.json'):
            with open(path, 'r', encoding='utf-8') as fh:
                payload = embedding_store.payload_path_for(path, json.load(fh))
            entry['payload_sha256'] = reporting.file_digest(payload)
        digests[name] = entry
    return digests


def _apply_audit_flags(manifest, args):
    updates = {}
    if args.k is not None:
        updates['k'] = args.k
    if args.top_m is not None:
        updates['top_m'] = args.top_m
    if getattr(args, 'bootstrap', None) is not None or getattr(args, 'frac', None) is not None:
        updates['bootstrap'] = BootstrapSettings(
            reps=args.bootstrap if args.bootstrap is not None else manifest.bootstrap.reps,
            fraction=args.frac if args.frac is not None else manifest.bootstrap.fraction)
    return AuditManifest.model_validate({**manifest.model_dump(), 'base_dir': manifest.base_dir,
                                         **updates}) if updates else manifest


def cmd_ingest(args):
    for path in args.embeddings or []:
        matrix = embedding_store.load_embeddings(path)
        if args.check:
            embedding_store.normalize(matrix)
        summary = embedding_store.summarize(matrix)
        print(json.dumps({'file': path, **summary}, sort_keys=True))
    for path in args.annotations or []:
        table = embedding_store.load_annotations(path)
        counts = table.label_counts()
        empty = sum(1 for labels in table.values() if not labels)
        print(json.dumps({'file': path, 'records': len(table), 'distinct_labels': len(counts),
                          'empty_records': empty}, sort_keys=True))
    if not args.embeddings and not args.annotations:
        raise UsageError("ingest: nothing to check; pass --embeddings and/or --annotations")
    return EXIT_OK


def cmd_dedup(args):
    pairs = embedding_store.load_captions(args.captions)
    if args.strip_markup:
        pairs = [(rid, sanitize_caption(caption)) for rid, caption in pairs]
    kept = dedup.caption_dedup(dedup.CorpusIndex.from_pairs(pairs))
    method = 'caption'
    if args.embeddings:
        if args.threshold is None:
            raise UsageError("dedup: --threshold is required with --embeddings")
        matrix = embedding_store.load_embeddings(args.embeddings)
        missing = [rid for rid in kept if rid not in matrix]
        if missing:
            raise AlignmentError("captioned records without embeddings", ids=missing)
        kept_set = set(dedup.semantic_dedup(embedding_store.normalize(matrix.subset(kept)),
                                            args.threshold, threads=args.threads))
        kept = [rid for rid in kept if rid in kept_set]
        method = f"caption+{dedup.SEMANTIC_METHOD}"
    reporting.write_id_list(kept, args.out)
    logger.info("dedup (%s): %d of %d records kept -> %s", method, len(kept), len(pairs), args.out)
    if args.split_sizes:
        sizes = parse_sizes(args.split_sizes, count=3)
        seed = resolve_seed(args)
        split_dir = args.split_dir or os.path.dirname(os.path.abspath(args.out))
        for name, ids in zip(('A', 'B', 'P'), dedup.split_disjoint(kept, sizes, seed)):
            reporting.write_id_list(ids, os.path.join(split_dir, f"{name}.txt"))
        reporting.write_json({'method': method, 'threshold': args.threshold, 'seed': seed,
                              'sizes': sizes, 'kept': len(kept)},
                             os.path.join(split_dir, 'split.json'))
    return EXIT_OK


def cmd_knn(args):
    queries = _load_normalized(args.queries)
    public = _load_normalized(args.public)
    results = knn.batch_top_k(queries, public, args.k, threads=args.threads,
                              progress=not args.quiet)
    reporting.write_neighbors_jsonl(results, args.out)
    logger.info("wrote %d neighbor sets to %s", len(results), args.out)
    return EXIT_OK


def cmd_audit(args):
    manifest = _apply_audit_flags(load_manifest(args.dataset), args)
    seed = resolve_seed(args, manifest.seed)
    dataset = load_dataset(manifest)
    extra = {'files': manifest_digests(manifest), 'metadata': manifest.metadata}
    result = audit.run_population_audit(dataset, manifest.audit_config(), seed=seed,
                                        threads=args.threads, progress=not args.quiet, extra=extra)
    reporting.write_json(result.report.to_dict(), args.out)
    per_record = args.per_record or os.path.join(os.path.dirname(os.path.abspath(args.out)),
                                                 'per_record.csv')
    reporting.write_per_record_csv(result.table, per_record)
    if args.cdf_out:
        mask = result.table.has_ground_truth
        reporting.write_cdf_csv(metrics.recall_cdf(result.table.recall_a[mask],
                                                   result.table.recall_b[mask]), args.cdf_out)
    print(result.report.summary_line())
    _record_run(args, 'audit', seed, result.report.config, result.report.to_dict())
    return EXIT_OK


def cmd_sample_audit(args):
    manifest = _apply_audit_flags(load_manifest(args.dataset), args)
    dataset = load_dataset(manifest)
    grid = parse_int_grid(args.grid)
    if grid[-1] > dataset.n_records:
        raise ArgumentError(f"grid values must lie in [1, {dataset.n_records}]: {grid}")
    curve, table = audit.run_sample_audit(dataset, grid, args.sort, manifest.audit_config(),
                                          threads=args.threads, progress=not args.quiet)
    reporting.write_curve_csv(curve, args.out)
    if args.per_record:
        reporting.write_per_record_csv(table, args.per_record)
    for L, p, r, f in curve.rows():
        print(f"L={L} precision_gap={p:.4f} recall_gap={r:.4f} f_score_gap={f:.4f}")
    config = {**manifest.audit_config().echo(), 'sort': args.sort, 'grid': list(grid)}
    _record_run(args, 'sample-audit', manifest.seed, config,
                {'grid': list(curve.grid), 'precision_gap': list(curve.precision_gap),
                 'recall_gap': list(curve.recall_gap), 'f_score_gap': list(curve.f_score_gap)})
    return EXIT_OK


def load_experiment(path):
    try:
        with open(path, 'r', encoding='utf-8') as fh:
            data = json.load(fh)
    except json.JSONDecodeError as e:
        raise FormatError(f"{path}: experiment config is not valid JSON ({e.msg})")
    return ExperimentConfig.model_validate(data)


def cmd_train_toy(args):
    exp = load_experiment(args.config)
    if args.seed is not None:
        exp = exp.model_copy(update={'split_seed': args.seed})
    results = run_experiment(exp, out_dir=args.out_dir, threads=args.threads,
                             progress=not args.quiet)
    for r in results:
        print(f"{r.name}: {r.report.summary_line()}")
    _record_run(args, 'train-toy', exp.split_seed, exp.model_dump(),
                {'points': [r.summary() for r in results]})
    return EXIT_OK


def cmd_runs(args):
    url = args.registry or Config.REGISTRY_URL
    if not url:
        raise UsageError("runs: no registry configured; pass --registry or set DEJAVU_REGISTRY_URL")
    from models.database import session_factory
    from models.run import AuditRun

    db = session_factory(url)()
    try:
        rows = db.query(AuditRun).order_by(AuditRun.id.desc()).limit(args.limit).all()
        for run in rows:
            print(json.dumps({'id': run.id, 'command': run.command, 'seed': run.seed,
                              'created_at': run.created_at.isoformat() if run.created_at else None,
                              'summary': run.summary}, sort_keys=True))
    finally:
        db.close()
    return EXIT_OK


def build_parser():
    parser = _Parser(prog='dejavu', description='Training-data memorization audits for two-tower embedding models.')
    parser.add_argument('--threads', type=int, default=None, help='worker threads (default: DEJAVU_THREADS or CPU count)')
    parser.add_argument('--seed', type=int, default=None, help='master seed; drawn from entropy and logged when omitted')
    parser.add_argument('--quiet', action='store_true', help='warnings only, no progress bars')
    parser.add_argument('--registry', default=None, help='SQLAlchemy URL of the run registry')
    # global flags are also accepted after the subcommand name
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument('--threads', type=int, default=argparse.SUPPRESS)
    common.add_argument('--seed', type=int, default=argparse.SUPPRESS)
    common.add_argument('--quiet', action='store_true', default=argparse.SUPPRESS)
    sub = parser.add_subparsers(dest='command', parser_class=_Parser)

    p = sub.add_parser('ingest', parents=[common], help='validate embedding/annotation files and print summaries')
    p.add_argument('--embeddings', action='append', help='embedding header file (repeatable)')
    p.add_argument('--annotations', action='append', help='annotation JSON-lines file (repeatable)')
    p.add_argument('--check', action='store_true', help='also reject zero-norm rows')
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser('dedup', parents=[common], help='caption (and optional semantic) deduplication')
    p.add_argument('--captions', required=True)
    p.add_argument('--embeddings')
    p.add_argument('--threshold', type=float, help='cosine similarity at or above which a record is a duplicate')
    p.add_argument('--strip-markup', action='store_true', help='strip HTML tags from captions first')
    p.add_argument('--out', required=True)
    p.add_argument('--split-sizes', help='n_A,n_B,n_P: also write disjoint A/B/P id lists')
    p.add_argument('--split-dir')
    p.set_defaults(func=cmd_dedup)

    p = sub.add_parser('knn', parents=[common], help='exact top-k cosine neighbors')
    p.add_argument('--queries', required=True)
    p.add_argument('--public', required=True)
    p.add_argument('-k', type=int, default=Config.DEFAULT_K)
    p.add_argument('--out', required=True)
    p.set_defaults(func=cmd_knn)

    for name, func in (('audit', cmd_audit), ('sample-audit', cmd_sample_audit)):
        p = sub.add_parser(name, parents=[common], help=f"{name.replace('-', ' ')} from a manifest")
        p.add_argument('--dataset', required=True, help='audit manifest JSON')
        p.add_argument('-k', type=int, default=None)
        p.add_argument('--top-m', dest='top_m', type=int, default=None)
        p.add_argument('--out', required=True)
        p.add_argument('--per-record', dest='per_record')
        p.set_defaults(func=func)
        if name == 'audit':
            p.add_argument('--bootstrap', type=int, default=None, help='bootstrap repetitions')
            p.add_argument('--frac', type=float, default=None, help='bootstrap sample fraction')
            p.add_argument('--cdf-out', dest='cdf_out', help='recall CDF points CSV')
        else:
            p.add_argument('--sort', choices=metrics.SORT_KEYS, default='min_dist')
            p.add_argument('--grid', default='1,10,100,1000')

    p = sub.add_parser('train-toy', parents=[common], help='synthetic contrastive training + audit')
    p.add_argument('--config', required=True)
    p.add_argument('--out-dir', dest='out_dir', required=True)
    p.set_defaults(func=cmd_train_toy)

    p = sub.add_parser('runs', parents=[common], help='list recorded runs')
    p.add_argument('--limit', type=int, default=20)
    p.set_defaults(func=cmd_runs)
    return parser


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if args.command is None:
            raise UsageError(parser.format_usage().strip())
    except UsageError as e:
        print(str(e), file=sys.stderr)
        return EXIT_USAGE
    configure_logging(args.quiet)
    args.threads = args.threads or Config.THREADS
    try:
        return args.func(args)
    except UsageError as e:
        print(str(e), file=sys.stderr)
        return EXIT_USAGE
    except pydantic.ValidationError as e:
        logger.error("invalid configuration: %s", e)
        return EXIT_VALIDATION
    except DejaVuError as e:
        logger.error("%s", e)
        return e.exit_code
    except FileNotFoundError as e:
        logger.error("file not found: %s", e.filename)
        return EXIT_VALIDATION


if __name__ == '__main__':
    sys.exit(main())
