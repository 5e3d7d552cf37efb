import json
import os

import numpy as np
import pytest

from models.embedding import AnnotationTable, EmbeddingMatrix
from utils import embedding_store

FIXTURES = os.path.join(os.path.dirname(__file__), 'fixtures')


def unit_rows(rng, n, d):
    x = rng.standard_normal((n, d))
    return (x / np.linalg.norm(x, axis=1, keepdims=True)).astype(np.float32)


def normalized_matrix(ids, data):
    return embedding_store.normalize(EmbeddingMatrix(tuple(ids), np.asarray(data, dtype=np.float32)))


def write_embeddings(directory, name, ids, data, meta=None):
    matrix = EmbeddingMatrix(tuple(ids), np.asarray(data, dtype=np.float32), meta=meta or {})
    return embedding_store.save_embeddings(matrix, os.path.join(str(directory), f"{name}.json"))


def write_annotations(directory, name, table):
    if not isinstance(table, AnnotationTable):
        table = AnnotationTable(table)
    return embedding_store.save_annotations(table, os.path.join(str(directory), f"{name}.jsonl"))


def random_audit_arrays(rng, n_records=10, n_public=20, d=6, n_labels=6, shared=False):
    """Raw arrays and annotations for a small audit; `shared` reuses target for reference."""
    labels = [f"l{i}" for i in range(n_labels)]

    def draw_sets(prefix, count):
        out = {}
        for i in range(count):
            size = int(rng.integers(0, min(3, n_labels) + 1))
            out[f"{prefix}{i:03d}"] = set(rng.choice(labels, size=size, replace=False).tolist())
        return out

    record_ids = [f"r{i:03d}" for i in range(n_records)]
    public_ids = [f"p{i:03d}" for i in range(n_public)]
    text_a = rng.standard_normal((n_records, d))
    public_a = rng.standard_normal((n_public, d))
    text_b = text_a.copy() if shared else rng.standard_normal((n_records, d))
    public_b = public_a.copy() if shared else rng.standard_normal((n_public, d))
    return {
        'record_ids': record_ids,
        'public_ids': public_ids,
        'text_a': text_a, 'text_b': text_b,
        'public_a': public_a, 'public_b': public_b,
        'ground_truth': draw_sets('r', n_records),
        'public_annotations': draw_sets('p', n_public),
    }


def assemble_arrays(arrays):
    return embedding_store.assemble(
        EmbeddingMatrix(tuple(arrays['record_ids']), arrays['text_a']),
        EmbeddingMatrix(tuple(arrays['record_ids']), arrays['text_b']),
        AnnotationTable(arrays['ground_truth']),
        EmbeddingMatrix(tuple(arrays['public_ids']), arrays['public_a']),
        EmbeddingMatrix(tuple(arrays['public_ids']), arrays['public_b']),
        AnnotationTable(arrays['public_annotations']),
    )


def write_audit_dir(directory, arrays, **manifest_fields):
    """Embedding/annotation files plus manifest.json for `arrays`; returns the manifest path."""
    directory = str(directory)
    write_embeddings(directory, 'target_text', arrays['record_ids'], arrays['text_a'])
    write_embeddings(directory, 'reference_text', arrays['record_ids'], arrays['text_b'])
    write_embeddings(directory, 'public_target', arrays['public_ids'], arrays['public_a'])
    write_embeddings(directory, 'public_reference', arrays['public_ids'], arrays['public_b'])
    write_annotations(directory, 'ground_truth', arrays['ground_truth'])
    write_annotations(directory, 'public_annotations', arrays['public_annotations'])
    manifest = {
        'target_text': 'target_text.json',
        'reference_text': 'reference_text.json',
        'ground_truth': 'ground_truth.jsonl',
        'public_target': 'public_target.json',
        'public_reference': 'public_reference.json',
        'public_annotations': 'public_annotations.jsonl',
        'k': 3,
        'top_m': 3,
        'bootstrap': {'reps': 20, 'fraction': 0.5},
        'seed': 7,
        'metadata': {'target_model': 'fixture_A', 'reference_model': 'fixture_B'},
    }
    manifest.update(manifest_fields)
    path = os.path.join(directory, 'manifest.json')
    with open(path, 'w', encoding='utf-8') as fh:
        json.dump(manifest, fh, indent=2)
    return path


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def fixtures_dir():
    return FIXTURES


@pytest.fixture
def four_vector_public():
    '''Public rows a=[1,0], b=[0,1], c=[-1,0], d=[0.6,0.8].'''
    return normalized_matrix(['a', 'b', 'c', 'd'],
                             [[1.0, 0.0], [0.0, 1.0], [-1.0, 0.0], [0.6, 0.8]])


@pytest.fixture
def micro_arrays(rng):
    return random_audit_arrays(rng)


@pytest.fixture
def micro_dataset(micro_arrays):
    return assemble_arrays(micro_arrays)
