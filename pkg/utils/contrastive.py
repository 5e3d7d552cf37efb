"""InfoNCE loss over a batch of matched text/image embeddings, with its analytic gradient.

Logits are z[i, j] = s * <t_i, v_j>. The text-to-image direction scores each
caption against every image in the batch; image-to-text is the transpose;
the symmetric loss averages both.
"""
import numpy as np

from utils.errors import ArgumentError

DIRECTIONS = ('symmetric', 'text_to_image', 'image_to_text')


def _row_terms(logits):
    """Per-row (lse_i - z_ii) and the row softmax, stabilized by the row max."""
    peak = logits.max(axis=1, keepdims=True)
    shifted = np.exp(logits - peak)
    total = shifted.sum(axis=1, keepdims=True)
    terms = (peak[:, 0] - np.diag(logits)) + np.log(total[:, 0])
    return terms, shifted / total


def _check(text_emb, image_emb, direction):
    if direction not in DIRECTIONS:
        raise ArgumentError(f"unknown loss direction {direction!r}; expected one of {DIRECTIONS}")
    t = np.asarray(text_emb, dtype=np.float64)
    v = np.asarray(image_emb, dtype=np.float64)
    if t.ndim != 2 or t.shape != v.shape:
        raise ArgumentError(f"text and image batches must share a 2-d shape, got {t.shape} and {v.shape}")
    if t.shape[0] < 2:
        raise ArgumentError("InfoNCE needs a batch of at least 2 pairs")
    return t, v


def logits_gradient(logits, direction='symmetric'):
    """(loss, dL/dlogits) for an n x n logit matrix whose diagonal holds the positives."""
    n = logits.shape[0]
    eye = np.eye(n)
    loss, grad = 0.0, np.zeros_like(logits)
    if direction in ('symmetric', 'text_to_image'):
        terms, probs = _row_terms(logits)
        weight = 0.5 if direction == 'symmetric' else 1.0
        loss += weight * terms.mean()
        grad += weight * (probs - eye) / n
    if direction in ('symmetric', 'image_to_text'):
        terms, probs = _row_terms(logits.T)
        weight = 0.5 if direction == 'symmetric' else 1.0
        loss += weight * terms.mean()
        grad += weight * (probs - eye).T / n
    return float(loss), grad


def info_nce_loss(text_emb, image_emb, logit_scale, direction='symmetric'):
    t, v = _check(text_emb, image_emb, direction)
    loss, _ = logits_gradient(logit_scale * (t @ v.T), direction)
    return loss


def info_nce_grad(text_emb, image_emb, logit_scale, direction='symmetric'):
    """(loss, dL/dtext_emb, dL/dimage_emb)."""
    t, v = _check(text_emb, image_emb, direction)
    loss, g = logits_gradient(logit_scale * (t @ v.T), direction)
    return loss, logit_scale * (g @ v), logit_scale * (g.T @ t)
