'''
End-to-end audit pipeline tests against an independent enumeration of the
nearest-neighbor object-recovery test.
'''
import time

import numpy as np
import pytest

from conftest import assemble_arrays, random_audit_arrays
from models.manifest import AuditConfig, BootstrapSettings
from utils import audit, knn


def brute_force_report(dataset, k):
    """Per-record (precision, recall, f) for both models, then PPG, PRG, AUCG."""

    def neighbors(text, public, i):
        q = text.data[i].astype(np.float64)
        sims = [(-float((public.data[j].astype(np.float64) * q).sum()), public.ids[j])
                for j in range(public.n)]
        return [pid for _, pid in sorted(sims)[:k]]

    rows = []
    for i, rid in enumerate(dataset.record_ids):
        truth = set(dataset.ground_truth[rid])
        scores = []
        for text, public in ((dataset.text_embeddings_target, dataset.public_target),
                             (dataset.text_embeddings_reference, dataset.public_reference)):
            found = set()
            for pid in neighbors(text, public, i):
                found |= dataset.public_annotations[pid]
            hit = len(truth & found)
            p = hit / len(found) if found else 0.0
            r = hit / len(truth) if truth else 0.0
            f = 2 * p * r / (p + r) if p + r else 0.0
            scores.append((p, r, f))
        rows.append((bool(truth), scores[0], scores[1]))

    def sign_gap(pairs):
        if not pairs:
            return 0.0
        return (sum(a > b for a, b in pairs) - sum(a < b for a, b in pairs)) / len(pairs)

    ppg = sign_gap([(a[0], b[0]) for _, a, b in rows])
    recall_pairs = [(a[1], b[1]) for has, a, b in rows if has]
    prg = sign_gap(recall_pairs)
    aucg = (np.mean([a for a, _ in recall_pairs]) - np.mean([b for _, b in recall_pairs])
            if recall_pairs else 0.0)
    return rows, ppg, prg, aucg


@pytest.fixture
def small_config():
    return AuditConfig(k=3, top_m=3, bootstrap=BootstrapSettings(reps=10, fraction=0.5))


@pytest.mark.unit
class TestPopulationAudit:

    def test_matches_brute_force_on_micro_instances(self):
        rng = np.random.default_rng(2024)
        started = time.perf_counter()
        for _ in range(50):
            arrays = random_audit_arrays(rng, n_records=int(rng.integers(1, 11)),
                                         n_public=int(rng.integers(5, 21)),
                                         d=int(rng.integers(2, 9)),
                                         n_labels=int(rng.integers(1, 7)))
            dataset = assemble_arrays(arrays)
            k = int(rng.integers(1, 6))
            config = AuditConfig(k=k, bootstrap=BootstrapSettings(reps=2, fraction=1.0))
            result = audit.run_population_audit(dataset, config, seed=0, threads=1)
            rows, ppg, prg, aucg = brute_force_report(dataset, k)
            for i, (_, a, b) in enumerate(rows):
                assert result.table.precision_a[i] == pytest.approx(a[0], abs=1e-9)
                assert result.table.recall_a[i] == pytest.approx(a[1], abs=1e-9)
                assert result.table.f_a[i] == pytest.approx(a[2], abs=1e-9)
                assert result.table.precision_b[i] == pytest.approx(b[0], abs=1e-9)
                assert result.table.recall_b[i] == pytest.approx(b[1], abs=1e-9)
                assert result.table.f_b[i] == pytest.approx(b[2], abs=1e-9)
            assert result.report.ppg == pytest.approx(ppg, abs=1e-9)
            assert result.report.prg == pytest.approx(prg, abs=1e-9)
            assert result.report.aucg == pytest.approx(aucg, abs=1e-9)
        assert time.perf_counter() - started < 10.0

    def test_null_audit_is_exactly_zero(self, small_config):
        rng = np.random.default_rng(5)
        arrays = random_audit_arrays(rng, n_records=1000, n_public=300, d=16, shared=True)
        started = time.perf_counter()
        report = audit.run_population_audit(assemble_arrays(arrays), small_config, seed=1).report
        assert time.perf_counter() - started < 1.0
        assert (report.ppg, report.prg, report.aucg) == (0.0, 0.0, 0.0)
        for est in report.bootstrap.values():
            assert (est.mean, est.std) == (0.0, 0.0)

    def test_swapping_models_negates_report(self, micro_arrays, small_config):
        swapped = dict(micro_arrays, text_a=micro_arrays['text_b'], text_b=micro_arrays['text_a'],
                       public_a=micro_arrays['public_b'], public_b=micro_arrays['public_a'])
        forward = audit.run_population_audit(assemble_arrays(micro_arrays), small_config, seed=4).report
        backward = audit.run_population_audit(assemble_arrays(swapped), small_config, seed=4).report
        assert backward.ppg == -forward.ppg
        assert backward.prg == -forward.prg
        assert backward.aucg == -forward.aucg
        for name in forward.bootstrap:
            assert backward.bootstrap[name].mean == -forward.bootstrap[name].mean

    def test_positive_scaling_changes_nothing(self, micro_arrays, small_config):
        base = audit.run_population_audit(assemble_arrays(micro_arrays), small_config, seed=9)
        scaled_arrays = dict(micro_arrays)
        for key in ('text_a', 'text_b', 'public_a', 'public_b'):
            scaled_arrays[key] = np.asarray(micro_arrays[key], dtype=np.float32) * np.float32(4.0)
        scaled = audit.run_population_audit(assemble_arrays(scaled_arrays), small_config, seed=9)
        assert scaled.neighbors_target == base.neighbors_target
        assert scaled.neighbors_reference == base.neighbors_reference
        assert scaled.report.to_dict() == base.report.to_dict()

    def test_report_echoes_configuration(self, micro_dataset, small_config):
        report = audit.run_population_audit(micro_dataset, small_config, seed=3,
                                            extra={'note': 'x'}).report
        assert report.config['k'] == 3
        assert report.config['seed'] == 3
        assert report.config['metric'] == 'cosine'
        assert report.config['note'] == 'x'
        assert report.n_records == micro_dataset.n_records
        assert set(report.to_dict()['bootstrap']) == {'aucg', 'ppg', 'prg'}

    def test_min_dist_recorded_for_target(self, micro_dataset, small_config):
        result = audit.run_population_audit(micro_dataset, small_config)
        first = result.neighbors_target[0].similarities[0]
        assert result.table.min_dist[0] == pytest.approx(1.0 - first)

    def test_min_dist_matches_fresh_nearest_search(self, micro_dataset, small_config):
        result = audit.run_population_audit(micro_dataset, small_config)
        fresh = knn.batch_min_distance(micro_dataset.text_embeddings_target, micro_dataset.public_target)
        np.testing.assert_allclose(result.table.min_dist, fresh, atol=1e-12)


@pytest.mark.unit
class TestSampleAudit:

    def test_curve_over_grid(self, micro_dataset, small_config):
        curve, table = audit.run_sample_audit(micro_dataset, [1, 5, 10], 'min_dist', small_config)
        assert curve.grid == (1, 5, 10)
        assert len(curve.sorted_ids) == micro_dataset.n_records
        order = np.argsort(table.min_dist, kind='stable')
        assert curve.sorted_ids[0] == table.record_ids[order[0]]

    def test_identical_models_give_flat_zero_curve(self, small_config):
        arrays = random_audit_arrays(np.random.default_rng(8), n_records=30, shared=True)
        curve, _ = audit.run_sample_audit(assemble_arrays(arrays), [1, 10, 30], 'correct_preds', small_config)
        assert curve.precision_gap == (0.0, 0.0, 0.0)
        assert curve.recall_gap == (0.0, 0.0, 0.0)
