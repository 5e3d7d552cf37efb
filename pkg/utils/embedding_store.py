"""Embedding and annotation files, and assembly of an ID-aligned audit dataset.

An embedding file is a JSON header plus a raw payload of n*d little-endian
float32 values, row-major. The header names its payload file; when it does
not, the payload sits next to the header with a `.f32` suffix.
"""
import json
import logging
import os

import numpy as np

from models.embedding import AnnotationTable, AuditDataset, EmbeddingMatrix, normalize_labels
from utils.errors import AlignmentError, FormatError, ValidationError
from utils.validators import validate_required_fields

logger = logging.getLogger(__name__)

MAGIC = 'DVEMB1'
PAYLOAD_DTYPE = np.dtype('<f4')


def payload_path_for(header_path, header=None):
    if header and header.get('payload'):
        return os.path.join(os.path.dirname(os.path.abspath(header_path)), header['payload'])
    stem, _ = os.path.splitext(header_path)
    return stem + '.f32'


def load_embeddings(path):
    with open(path, 'rb') as fh:
        raw = fh.read()
    try:
        header = json.loads(raw.decode('utf-8'))
    except (UnicodeDecodeError, json.JSONDecodeError) as e:
        raise FormatError(f"{path}: header is not valid JSON ({getattr(e, 'msg', e.reason)})")
    if not isinstance(header, dict) or header.get('magic') != MAGIC:
        raise FormatError(f"{path}: missing magic {MAGIC!r}")
    missing = validate_required_fields(header, ['n', 'd', 'ids'])
    if missing:
        raise FormatError(f"{path}: header lacks {', '.join(missing)}")
    n, d, ids = header['n'], header['d'], header['ids']
    if not isinstance(n, int) or not isinstance(d, int) or n < 0 or d < 1:
        raise FormatError(f"{path}: invalid shape n={n!r} d={d!r}")
    if not isinstance(ids, list) or len(ids) != n:
        raise FormatError(f"{path}: header has {len(ids) if isinstance(ids, list) else 'no'} ids for n={n}")

    payload = payload_path_for(path, header)
    if not os.path.exists(payload):
        raise FormatError(f"{path}: payload file {payload} not found")
    data = np.fromfile(payload, dtype=PAYLOAD_DTYPE)
    if data.size != n * d:
        raise FormatError(f"{path}: payload holds {data.size} floats, header expects {n * d}")

    matrix = EmbeddingMatrix(tuple(ids), data.reshape(n, d), normalized=False,
                             meta=dict(header.get('meta') or {}), source_header=raw)
    logger.debug("loaded %s: %d x %d", path, n, d)
    return matrix


def save_embeddings(matrix, path, payload_name=None):
    """Write `matrix` as header plus payload.

    A matrix returned by `load_embeddings` keeps its original header bytes,
    which are written back unchanged, so save(load(x)) reproduces x byte for
    byte whatever the header layout. Other matrices get the canonical header:
    sorted keys, one-space indent, a named payload.
    """
    parent = os.path.dirname(os.path.abspath(path))
    os.makedirs(parent, exist_ok=True)
    if matrix.source_header is not None:
        header = json.loads(matrix.source_header.decode('utf-8'))
        payload = payload_path_for(path, header)
        if payload_name is None or os.path.basename(payload) == payload_name:
            with open(path, 'wb') as fh:
                fh.write(matrix.source_header)
            matrix.data.astype(PAYLOAD_DTYPE).tofile(payload)
            return path
    if payload_name is None:
        payload_name = os.path.basename(os.path.splitext(path)[0]) + '.f32'
    header = {
        'magic': MAGIC,
        'n': matrix.n,
        'd': matrix.dim,
        'ids': list(matrix.ids),
        'payload': payload_name,
    }
    if matrix.meta:
        header['meta'] = matrix.meta
    with open(path, 'w', encoding='utf-8') as fh:
        json.dump(header, fh, sort_keys=True, indent=1, ensure_ascii=False)
        fh.write('\n')
    matrix.data.astype(PAYLOAD_DTYPE).tofile(os.path.join(parent, payload_name))
    return path


def _iter_jsonl(path):
    with open(path, 'r', encoding='utf-8') as fh:
        for line_no, raw in enumerate(fh, start=1):
            if not raw.strip():
                continue
            try:
                record = json.loads(raw)
            except json.JSONDecodeError as e:
                raise FormatError(f"{path}: invalid JSON ({e.msg})", line=line_no)
            if not isinstance(record, dict):
                raise FormatError(f"{path}: expected an object", line=line_no)
            yield line_no, record


def load_annotations(path):
    entries = {}
    for line_no, record in _iter_jsonl(path):
        missing = validate_required_fields(record, ['id', 'objects'])
        if missing:
            raise FormatError(f"{path}: missing {', '.join(missing)}", line=line_no)
        record_id = str(record['id'])
        if not isinstance(record['objects'], list):
            raise FormatError(f"{path}: 'objects' must be a list", line=line_no)
        if record_id in entries:
            raise ValidationError(f"{path}: duplicate record id on line {line_no}", ids=[record_id])
        entries[record_id] = normalize_labels(record['objects'], record_id)
    return AnnotationTable(entries)


def save_annotations(table, path):
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    with open(path, 'w', encoding='utf-8') as fh:
        for record_id, labels in table.items():
            fh.write(json.dumps({'id': record_id, 'objects': sorted(labels)}, ensure_ascii=False))
            fh.write('\n')
    return path


def load_captions(path):
    """`{"id", "caption"}` JSON lines -> list of (id, caption) in file order."""
    rows, seen = [], set()
    for line_no, record in _iter_jsonl(path):
        missing = validate_required_fields(record, ['id', 'caption'])
        if missing:
            raise FormatError(f"{path}: missing {', '.join(missing)}", line=line_no)
        record_id = str(record['id'])
        if record_id in seen:
            raise ValidationError(f"{path}: duplicate record id on line {line_no}", ids=[record_id])
        seen.add(record_id)
        rows.append((record_id, str(record['caption'])))
    return rows


def normalize(matrix):
    data = matrix.data.astype(np.float64)
    norms = np.linalg.norm(data, axis=1)
    zero = norms == 0.0
    if zero.any():
        raise ValidationError("cannot normalize zero-norm rows",
                              ids=[matrix.ids[i] for i in np.flatnonzero(zero)])
    if matrix.normalized:
        return matrix
    return EmbeddingMatrix(matrix.ids, (data / norms[:, None]).astype(np.float32),
                           normalized=True, meta=dict(matrix.meta))


def _ensure_normalized(matrix):
    return matrix if matrix.normalized else normalize(matrix)


def _align(target, reference, what):
    if target.ids == reference.ids:
        return reference
    only_target = [i for i in target.ids if i not in reference]
    only_reference = [i for i in reference.ids if i not in target]
    if only_target or only_reference:
        raise AlignmentError(f"{what}: target and reference views hold different records",
                             ids=only_target + only_reference)
    logger.info("%s: reordering reference rows to target order", what)
    return reference.subset(target.ids)


def assemble(split_txt_a, split_txt_b, split_annotations, public_a, public_b,
             public_annotations, split_name='A', public_name=None):
    split_txt_b = _align(split_txt_a, split_txt_b, 'split text embeddings')
    public_b = _align(public_a, public_b, 'public image embeddings')

    if split_txt_a.dim != public_a.dim:
        raise ValidationError(f"target model dims differ: text {split_txt_a.dim}, image {public_a.dim}")
    if split_txt_b.dim != public_b.dim:
        raise ValidationError(f"reference model dims differ: text {split_txt_b.dim}, image {public_b.dim}")

    missing = split_annotations.missing(split_txt_a.ids)
    if missing:
        raise AlignmentError("split records without ground-truth annotations", ids=missing)
    missing = public_annotations.missing(public_a.ids)
    if missing:
        raise AlignmentError("public images without annotations", ids=missing)

    overlap = [i for i in split_txt_a.ids if i in public_a]
    if overlap:
        raise ValidationError("split and public sets overlap", ids=overlap)

    dataset = AuditDataset(
        split_name=split_name,
        text_embeddings_target=_ensure_normalized(split_txt_a),
        text_embeddings_reference=_ensure_normalized(split_txt_b),
        ground_truth=split_annotations,
        public_target=_ensure_normalized(public_a),
        public_reference=_ensure_normalized(public_b),
        public_annotations=public_annotations,
        public_name=public_name,
    )
    logger.info("assembled audit dataset %r: %d records, %d public images, d=%d/%d",
                split_name, dataset.n_records, dataset.n_public,
                split_txt_a.dim, split_txt_b.dim)
    return dataset


def summarize(matrix):
    """Shape and row-norm statistics, as printed by `dejavu ingest --check`."""
    norms = np.linalg.norm(matrix.data.astype(np.float64), axis=1)
    summary = {'n': matrix.n, 'd': matrix.dim, 'meta': matrix.meta}
    if matrix.n:
        summary.update({
            'norm_min': float(norms.min()),
            'norm_mean': float(norms.mean()),
            'norm_max': float(norms.max()),
            'zero_rows': int((norms == 0.0).sum()),
            'unit_norm': bool(np.all(np.abs(norms - 1.0) <= 1e-5)),
        })
    return summary
