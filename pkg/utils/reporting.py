"""JSON and CSV writers for audit outputs. Column sets are fixed; see docs/formats.md."""
import csv
import hashlib
import json
import os

PER_RECORD_COLUMNS = ['id', 'p_A', 'r_A', 'f_A', 'p_B', 'r_B', 'f_B', 'n_correct_A', 'min_dist']
CURVE_COLUMNS = ['L', 'precision_gap', 'recall_gap', 'f_score_gap']
CDF_COLUMNS = ['recall', 'cdf_A', 'cdf_B']
LOSS_COLUMNS = ['epoch', 'train_loss_A', 'train_loss_B', 'val_loss_A']


def _ensure_parent(path):
    parent = os.path.dirname(os.path.abspath(path))
    os.makedirs(parent, exist_ok=True)


def file_digest(path, chunk_size=1 << 20):
    sha = hashlib.sha256()
    with open(path, 'rb') as fh:
        for chunk in iter(lambda: fh.read(chunk_size), b''):
            sha.update(chunk)
    return sha.hexdigest()


def write_json(data, path):
    _ensure_parent(path)
    with open(path, 'w', encoding='utf-8') as fh:
        json.dump(data, fh, sort_keys=True, indent=2, ensure_ascii=False)
        fh.write('\n')
    return path


def _fmt(value):
    if value is None:
        return ''
    if isinstance(value, float):
        return repr(value)
    return str(value)


def _write_rows(path, columns, rows):
    _ensure_parent(path)
    with open(path, 'w', encoding='utf-8', newline='') as fh:
        writer = csv.writer(fh, lineterminator='\n')
        writer.writerow(columns)
        for row in rows:
            writer.writerow([_fmt(v) for v in row])
    return path


def write_per_record_csv(table, path):
    rows = []
    for i, rid in enumerate(table.record_ids):
        min_dist = float(table.min_dist[i])
        rows.append([rid, float(table.precision_a[i]), float(table.recall_a[i]), float(table.f_a[i]),
                     float(table.precision_b[i]), float(table.recall_b[i]), float(table.f_b[i]),
                     int(table.n_correct_a[i]), None if min_dist != min_dist else min_dist])
    return _write_rows(path, PER_RECORD_COLUMNS, rows)


def write_curve_csv(curve, path):
    return _write_rows(path, CURVE_COLUMNS,
                       ([L, float(p), float(r), float(f)] for L, p, r, f in curve.rows()))


def write_cdf_csv(points, path):
    return _write_rows(path, CDF_COLUMNS, points)


def write_loss_csv(trace_a, trace_b, val_trace, path):
    rows = []
    for epoch in range(max(len(trace_a), len(trace_b))):
        rows.append([epoch,
                     trace_a[epoch] if epoch < len(trace_a) else None,
                     trace_b[epoch] if epoch < len(trace_b) else None,
                     val_trace[epoch] if epoch < len(val_trace) else None])
    return _write_rows(path, LOSS_COLUMNS, rows)


def write_neighbors_jsonl(neighbor_sets, path):
    _ensure_parent(path)
    with open(path, 'w', encoding='utf-8') as fh:
        for ns in neighbor_sets:
            fh.write(json.dumps(ns.to_dict(), ensure_ascii=False))
            fh.write('\n')
    return path


def write_id_list(ids, path):
    _ensure_parent(path)
    with open(path, 'w', encoding='utf-8') as fh:
        for rid in ids:
            fh.write(f"{rid}\n")
    return path
