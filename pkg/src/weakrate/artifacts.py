"""Plain-text artifact formats: datasets, parameters, trajectories, provenance, ledgers.

Floats are written with ``repr`` so they round-trip exactly and identical runs
produce identical bytes.
"""
from __future__ import annotations

import csv
import io
import json

import numpy as np

from .models import ParamVector
from .synth import AUGMENTED, Dataset
from .theory import LEDGER_COLUMNS


def _num(v):
    return repr(float(v))


def dataset_csv(data):
    """``kind,seed`` metadata line, then ``x_0..x_{d-1}[,z_0..],label[_0..]`` rows."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["kind", "seed"])
    w.writerow([data.kind, data.seed])
    X = np.atleast_2d(data.X)
    labels = np.asarray(data.labels)
    header = [f"x_{i}" for i in range(X.shape[1])]
    Z = None if data.Z is None else np.atleast_2d(data.Z)
    if Z is not None:
        header += [f"z_{i}" for i in range(Z.shape[1])]
    multi = labels.ndim == 2
    header += [f"label_{i}" for i in range(labels.shape[1])] if multi else ["label"]
    w.writerow(header)
    int_labels = np.issubdtype(labels.dtype, np.integer)
    for i in range(len(X)):
        row = [_num(v) for v in X[i]]
        if Z is not None:
            row += [_num(v) for v in Z[i]]
        lab = labels[i]
        if multi:
            row += [_num(v) for v in lab]
        else:
            row.append(str(int(lab)) if int_labels else _num(lab))
        w.writerow(row)
    return buf.getvalue()


def read_dataset(text):
    rows = list(csv.reader(io.StringIO(text)))
    kind, seed = rows[1][0], int(rows[1][1])
    header = rows[2]
    body = np.array(rows[3:], dtype=float).reshape(-1, len(header))
    xi = [i for i, h in enumerate(header) if h.startswith("x_")]
    zi = [i for i, h in enumerate(header) if h.startswith("z_")]
    li = [i for i, h in enumerate(header) if h.startswith("label")]
    if len(li) == 1:
        raw = [r[li[0]] for r in rows[3:]]
        try:
            labels = np.array([int(v) for v in raw], dtype=np.int64)
        except ValueError:
            labels = body[:, li[0]]
    else:
        labels = body[:, li]
    Z = body[:, zi] if kind == AUGMENTED else None
    return Dataset(kind, body[:, xi], labels, seed, Z)


def params_csv(pv):
    """Header ``family_id,theta_0..`` and one row holding the id and the values."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["family_id"] + [f"theta_{i}" for i in range(len(pv.values))])
    w.writerow([pv.family_id] + [_num(v) for v in pv.values])
    return buf.getvalue()


def read_params(text):
    rows = list(csv.reader(io.StringIO(text)))
    return ParamVector(np.array(rows[1][1:], dtype=float), rows[1][0])


def trajectory_csv(trajectory):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["epoch", "split", "risk"])
    for epoch, split, risk in trajectory:
        w.writerow([epoch, split, _num(risk)])
    return buf.getvalue()


def provenance_json(record):
    """Canonical JSON: sorted keys, fixed indentation, numpy scalars converted."""
    def conv(o):
        if isinstance(o, np.integer):
            return int(o)
        if isinstance(o, np.floating):
            return float(o)
        if isinstance(o, np.ndarray):
            return o.tolist()
        if isinstance(o, tuple):
            return list(o)
        raise TypeError(f"not serializable: {type(o).__name__}")

    return json.dumps(record, sort_keys=True, indent=2, default=conv) + "\n"


def ledger_csv(rows):
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=LEDGER_COLUMNS, lineterminator="\n")
    w.writeheader()
    for r in rows:
        w.writerow(r)
    return buf.getvalue()


def write_text(path, text):
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(text)
