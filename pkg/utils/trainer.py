"""Minibatch contrastive training of a TowerPair on synthetic records.

Parameter updates are serial and every random draw (initialization, data
order, token masks) comes from generators derived from the configured seed,
so a run is bit-reproducible.
"""
import logging
import math
from dataclasses import dataclass, field

import numpy as np
from tqdm import tqdm

from models.embedding import EmbeddingMatrix
from utils.contrastive import info_nce_grad, info_nce_loss
from utils.errors import ArgumentError, TrainingError
from utils.synthetic_corpus import token_indices
from utils.towers import TowerPair, bag_of_tokens

logger = logging.getLogger(__name__)

ADAM_BETAS = (0.9, 0.999)
ADAM_EPS = 1e-8


@dataclass
class TrainResult:
    towers: TowerPair
    loss_trace: list = field(default_factory=list)
    val_loss_trace: list = field(default_factory=list)
    epochs_run: int = 0


def mask_tokens(tokens, mask_ratio, rng):
    """Drop floor(mask_ratio * len(tokens)) tokens chosen uniformly; order is kept."""
    tokens = tuple(tokens)
    n_drop = math.floor(mask_ratio * len(tokens))
    if n_drop == 0:
        return tokens
    keep = np.sort(rng.choice(len(tokens), size=len(tokens) - n_drop, replace=False))
    return tuple(tokens[i] for i in keep)


def init_towers(cfg, vocab_size, image_dim):
    return TowerPair.initialize(vocab_size, image_dim, cfg.embed_dim, cfg.logit_scale,
                                cfg.seed, text_hidden=cfg.text_hidden,
                                image_hidden=cfg.image_hidden)


def batch_objective(towers, text_x, image_x, direction='symmetric', weight_decay=0.0):
    """Loss (InfoNCE plus 0.5 * wd * |theta|^2) and gradients keyed like named_parameters()."""
    t, t_cache = towers.text.forward(text_x)
    v, v_cache = towers.image.forward(image_x)
    loss, d_t, d_v = info_nce_grad(t, v, towers.logit_scale, direction)
    grads = {f"text.{k}": g for k, g in towers.text.backward(t_cache, d_t).items()}
    grads.update({f"image.{k}": g for k, g in towers.image.backward(v_cache, d_v).items()})
    if weight_decay:
        for name, value in towers.named_parameters():
            loss += 0.5 * weight_decay * float((value ** 2).sum())
            grads[name] = grads[name] + weight_decay * value
    return loss, grads


def learning_rate(cfg, step, total_steps):
    base = cfg.learning_rate
    if cfg.warmup_steps and step < cfg.warmup_steps:
        return base * (step + 1) / cfg.warmup_steps
    if cfg.lr_schedule == 'cosine' and total_steps > cfg.warmup_steps:
        progress = (step - cfg.warmup_steps) / (total_steps - cfg.warmup_steps)
        return 0.5 * base * (1.0 + math.cos(math.pi * min(progress, 1.0)))
    return base


class _Optimizer:
    """SGD (optionally with heavy-ball momentum) or Adam, both with decoupled weight decay."""

    def __init__(self, cfg, towers):
        self.cfg = cfg
        self.state = {name: {} for name, _ in towers.named_parameters()}
        self.t = 0

    def step(self, towers, grads, lr):
        self.t += 1
        decay = max(0.0, 1.0 - lr * self.cfg.weight_decay)
        for name, value in towers.named_parameters():
            g = grads[name]
            slot = self.state[name]
            if self.cfg.optimizer == 'adam':
                b1, b2 = ADAM_BETAS
                slot['m'] = b1 * slot.get('m', 0.0) + (1 - b1) * g
                slot['v'] = b2 * slot.get('v', 0.0) + (1 - b2) * g * g
                m_hat = slot['m'] / (1 - b1 ** self.t)
                v_hat = slot['v'] / (1 - b2 ** self.t)
                update = m_hat / (np.sqrt(v_hat) + ADAM_EPS)
            elif self.cfg.momentum:
                slot['buf'] = self.cfg.momentum * slot.get('buf', 0.0) + g
                update = slot['buf']
            else:
                update = g
            value -= lr * update
            if self.cfg.weight_decay:
                value *= decay


def _batches(order, batch_size):
    batches = [order[i:i + batch_size] for i in range(0, len(order), batch_size)]
    if len(batches) > 1 and len(batches[-1]) < 2:
        batches[-2] = np.concatenate([batches[-2], batches.pop()])
    return batches


def _inputs(records):
    tokens = [token_indices(r.caption_tokens) for r in records]
    images = np.stack([r.image_vector for r in records]).astype(np.float64)
    return tokens, images


def validation_loss(towers, records, vocab_size, batch_size, direction='symmetric'):
    """Mean InfoNCE over fixed-order batches of held-out records, without masking."""
    if len(records) < 2:
        return float('nan')
    tokens, images = _inputs(records)
    losses = []
    for batch in _batches(np.arange(len(records)), batch_size):
        t = towers.encode_text(bag_of_tokens([tokens[i] for i in batch], vocab_size))
        v = towers.encode_image(images[batch])
        losses.append(info_nce_loss(t, v, towers.logit_scale, direction))
    return float(np.mean(losses))


def train(records, cfg, vocab_size, holdout=None, progress=False):
    if not records:
        raise ArgumentError("cannot train on an empty corpus")
    if len(records) < 2:
        raise ArgumentError("InfoNCE training needs at least 2 records")
    tokens, images = _inputs(records)
    towers = init_towers(cfg, vocab_size, images.shape[1])
    data_rng = np.random.default_rng(np.random.SeedSequence(cfg.seed).spawn(3)[2])
    optimizer = _Optimizer(cfg, towers)

    epochs = cfg.effective_epochs
    steps_per_epoch = len(_batches(np.arange(len(records)), cfg.batch_size))
    total_steps = epochs * steps_per_epoch
    result = TrainResult(towers=towers)
    step = 0

    for epoch in tqdm(range(epochs), desc='train', unit='epoch', disable=not progress):
        order = data_rng.permutation(len(records))
        epoch_losses = []
        for batch in _batches(order, cfg.batch_size):
            batch_tokens = [mask_tokens(tokens[i], cfg.mask_ratio, data_rng) for i in batch]
            text_x = bag_of_tokens(batch_tokens, vocab_size)
            loss, grads = batch_objective(towers, text_x, images[batch], cfg.loss_direction)
            if not math.isfinite(loss):
                raise TrainingError("non-finite contrastive loss", epoch=epoch)
            optimizer.step(towers, grads, learning_rate(cfg, step, total_steps))
            step += 1
            epoch_losses.append(loss)
        mean_loss = float(np.mean(epoch_losses))
        result.loss_trace.append(mean_loss)
        if holdout:
            result.val_loss_trace.append(
                validation_loss(towers, holdout, vocab_size, cfg.batch_size, cfg.loss_direction))
        if not all(np.isfinite(v).all() for _, v in towers.named_parameters()):
            raise TrainingError("parameters diverged", epoch=epoch)
        logger.debug("epoch %d: loss %.5f", epoch, mean_loss)

    result.epochs_run = epochs
    if epochs:
        logger.info("trained %d epochs on %d records: final loss %.4f",
                    epochs, len(records), result.loss_trace[-1])
    return result


def embed_corpus(towers, records, vocab_size, meta=None):
    """Unmasked caption embeddings and image embeddings, IDs preserved, unit-norm rows."""
    ids = tuple(r.id for r in records)
    if not records:
        empty = np.zeros((0, towers.text.dims[-1]), dtype=np.float32)
        return (EmbeddingMatrix(ids, empty, normalized=True),
                EmbeddingMatrix(ids, empty, normalized=True))
    tokens, images = _inputs(records)
    text = towers.encode_text(bag_of_tokens(tokens, vocab_size))
    image = towers.encode_image(images)
    meta = dict(meta or {})
    return (EmbeddingMatrix(ids, _renormalize32(text), normalized=True,
                            meta={**meta, 'modality': 'text'}),
            EmbeddingMatrix(ids, _renormalize32(image), normalized=True,
                            meta={**meta, 'modality': 'image'}))


def _renormalize32(x):
    x32 = x.astype(np.float32)
    norms = np.linalg.norm(x32.astype(np.float64), axis=1, keepdims=True)
    return (x32 / np.where(norms > 0, norms, 1.0)).astype(np.float32)
