'''
Tests for the synthetic experiment driver: splits, null configuration,
grid points and written artifacts.
'''
import csv
import json
import os

import numpy as np
import pytest

from models.toy import ExperimentConfig, GridPoint
from utils import embedding_store, experiment
from utils.errors import ArgumentError


def small_experiment(**overrides):
    data = {
        'name': 'tiny',
        'corpus': {'vocab_size': 40, 's_min': 3, 's_max': 5, 'caption_coverage': 1.0,
                   'latent_dim': 12, 'n_records': 400, 'seed': 0},
        'sizes': {'train': 50, 'public': 100, 'holdout': 20},
        'train': {'epochs': 2, 'batch_size': 16, 'embed_dim': 8, 'text_hidden': None, 'seed': 0},
        'audit': {'k': 5, 'top_m': 5, 'bootstrap': {'reps': 10, 'fraction': 0.5}, 'seed': 0},
    }
    data.update(overrides)
    return ExperimentConfig.model_validate(data)


@pytest.mark.unit
class TestPrepareSplits:

    def test_disjoint_and_sized(self):
        exp = small_experiment()
        splits = experiment.prepare_splits(exp)
        parts = [set(splits.train_a), set(splits.train_b), set(splits.public), set(splits.holdout)]
        assert [len(p) for p in parts] == [50, 50, 100, 20]
        for i in range(4):
            for j in range(i + 1, 4):
                assert not parts[i] & parts[j]

    def test_captions_unique_after_dedup(self):
        splits = experiment.prepare_splits(small_experiment())
        used = splits.train_a + splits.train_b + splits.public + splits.holdout
        captions = [splits.records[i].caption for i in used]
        assert len(set(captions)) == len(captions)

    def test_null_reference_has_no_b_split(self):
        splits = experiment.prepare_splits(small_experiment(null_reference=True))
        assert splits.train_b == []

    def test_corpus_too_small(self):
        exp = small_experiment(sizes={'train': 300, 'public': 300, 'holdout': 0})
        with pytest.raises(ArgumentError, match='n_records'):
            experiment.prepare_splits(exp)


@pytest.mark.unit
class TestRunExperiment:

    def test_null_configuration_gives_exact_zeros(self):
        results = experiment.run_experiment(small_experiment(null_reference=True))
        report = results[0].report
        assert (report.ppg, report.prg, report.aucg) == (0.0, 0.0, 0.0)
        for est in report.bootstrap.values():
            assert (est.mean, est.std) == (0.0, 0.0)
        assert results[0].loss_trace_a == results[0].loss_trace_b

    def test_grid_points_apply_overrides(self):
        exp = small_experiment(grid=[{'name': 'plain'},
                                     {'overrides': {'mask_ratio': 0.5}, 'train_size': 30}])
        results = experiment.run_experiment(exp)
        assert [r.name for r in results] == ['plain', 'train_size=30,mask_ratio=0.5']
        assert results[1].train_size == 30
        assert results[1].train_config['mask_ratio'] == 0.5
        assert results[0].train_config['mask_ratio'] == 0.0
        assert len(results[0].val_loss_trace) == 2
        assert results[0].utility_proxy == results[0].val_loss_trace[-1]

    def test_unknown_override_rejected(self):
        with pytest.raises(ValueError, match='unknown'):
            small_experiment(grid=[{'overrides': {'dropout': 0.1}}])

    def test_deterministic(self):
        first = experiment.run_experiment(small_experiment())[0].summary()
        second = experiment.run_experiment(small_experiment())[0].summary()
        assert first == second

    def test_sample_curve_follows_configured_ranking(self):
        result = experiment.run_experiment(small_experiment(sample_grid=[1, 50],
                                                            sample_sort='correct_preds'))[0]
        assert result.curve.sort_key == 'correct_preds'
        assert result.curve.grid == (1, 50)
        with pytest.raises(ValueError):
            small_experiment(sample_sort='luck')

    def test_artifacts_written(self, tmp_path):
        exp = small_experiment(sample_grid=[1, 10, 1000])
        experiment.run_experiment(exp, out_dir=str(tmp_path))
        point_dir = tmp_path / '00_default'
        for name in ('target_text.json', 'target_text.f32', 'reference_text.json', 'public_target.json',
                     'public_reference.json', 'ground_truth.jsonl', 'public_annotations.jsonl',
                     'manifest.json', 'report.json', 'loss_trace.csv', 'per_record.csv', 'curve.csv'):
            assert os.path.exists(point_dir / name), name

        summary = json.loads((tmp_path / 'summary.json').read_text())
        assert summary['experiment'] == 'tiny'
        assert summary['points'][0]['utility_proxy_val_loss'] is not None

        with open(point_dir / 'loss_trace.csv', newline='') as fh:
            rows = list(csv.reader(fh))
        assert rows[0] == ['epoch', 'train_loss_A', 'train_loss_B', 'val_loss_A']
        assert len(rows) == 3

        with open(point_dir / 'curve.csv', newline='') as fh:
            assert [r[0] for r in csv.reader(fh)] == ['L', '1', '10']

        manifest = json.loads((point_dir / 'manifest.json').read_text())
        text = embedding_store.load_embeddings(str(point_dir / manifest['target_text']))
        assert text.n == 50
        assert np.all(np.abs(np.linalg.norm(text.data.astype(np.float64), axis=1) - 1.0) <= 1e-5)
        assert manifest['metadata']['grid_point'] == 'default'


@pytest.mark.unit
def test_grid_point_labels():
    assert GridPoint().label() == 'default'
    assert GridPoint(name='x').label() == 'x'
    assert GridPoint(overrides={'logit_scale': 25.0}).label() == 'logit_scale=25.0'


@pytest.mark.unit
@pytest.mark.parametrize('name', ['standard_benchmark', 'mask_ratio_sweep', 'temperature_sweep',
                                  'weight_decay_sweep', 'epochs_sweep', 'train_size_sweep',
                                  'null_check'])
def test_bundled_configs_validate(name):
    path = os.path.join(os.path.dirname(os.path.abspath(__file__)), '..', 'configs', f"{name}.json")
    with open(path, 'r', encoding='utf-8') as fh:
        exp = ExperimentConfig.model_validate(json.load(fh))
    assert exp.name == name
    for point in exp.grid:
        assert exp.train_config_for(point).effective_epochs <= exp.train.epochs
