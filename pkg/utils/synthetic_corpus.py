"""Seeded synthetic image-caption corpus built from object prototypes.

An image is the normalized sum of its objects' prototype vectors plus
Gaussian noise; its caption names only a random subset of those objects.
"""
import logging
import math

import numpy as np

from models.embedding import AnnotationTable
from models.toy import SyntheticRecord
from utils.errors import ArgumentError

logger = logging.getLogger(__name__)


def object_label(index):
    return f"obj{index:04d}"


def object_frequencies(vocab_size, zipf_exponent):
    ranks = np.arange(1, vocab_size + 1, dtype=np.float64)
    weights = ranks ** -zipf_exponent
    return weights / weights.sum()


def prototypes(cfg, rng):
    protos = rng.standard_normal((cfg.vocab_size, cfg.latent_dim))
    return protos / np.linalg.norm(protos, axis=1, keepdims=True)


def generate_corpus(cfg):
    if cfg.vocab_size < cfg.s_max:
        raise ArgumentError(f"vocab_size {cfg.vocab_size} is smaller than s_max {cfg.s_max}")
    rng = np.random.default_rng(cfg.seed)
    protos = prototypes(cfg, rng)
    freqs = object_frequencies(cfg.vocab_size, cfg.zipf_exponent)
    width = len(str(max(cfg.n_records - 1, 0)))

    records = []
    for i in range(cfg.n_records):
        size = int(rng.integers(cfg.s_min, cfg.s_max + 1))
        objects = np.sort(rng.choice(cfg.vocab_size, size=size, replace=False, p=freqs))
        scene = protos[objects].sum(axis=0)
        norm = np.linalg.norm(scene)
        if norm > 0:
            scene = scene / norm
        if cfg.noise_std > 0:
            scene = scene + cfg.noise_std * rng.standard_normal(cfg.latent_dim)
        n_caption = math.ceil(cfg.caption_coverage * size)
        caption_idx = np.sort(rng.choice(objects, size=n_caption, replace=False))
        records.append(SyntheticRecord(
            id=f"r{i:0{width}d}",
            object_set=frozenset(object_label(o) for o in objects),
            object_indices=tuple(int(o) for o in objects),
            image_vector=scene.astype(np.float32),
            caption_tokens=tuple(object_label(o) for o in caption_idx),
        ))
    logger.info("generated %d synthetic records (V=%d, scenes %d-%d, coverage %.2f)",
                cfg.n_records, cfg.vocab_size, cfg.s_min, cfg.s_max, cfg.caption_coverage)
    return records


def token_indices(tokens):
    return np.array([int(t[3:]) for t in tokens], dtype=np.int64)


def annotations(records):
    return AnnotationTable({r.id: r.object_set for r in records})
