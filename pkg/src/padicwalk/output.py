"""CSV and JSON emitters with a fixed byte format (UTF-8, LF, round-trip floats)."""
from __future__ import annotations

import csv
import json
import math
import os

import numpy as np


def _cell(x):
    if x is None:
        return ""
    if isinstance(x, str):
        return x
    if isinstance(x, (bool, np.bool_)):
        return "true" if x else "false"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    x = float(x)
    if math.isnan(x):
        return "nan"
    if math.isinf(x):
        return "inf" if x > 0 else "-inf"
    return repr(x)


def write_csv(path, header, rows):
    """Write ``rows`` under ``header``; an empty row set gives a header-only file."""
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow([_cell(x) for x in r])
    return path


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_jsonable(v) for v in obj.tolist()]
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating, float)):
        x = float(obj)
        return x if math.isfinite(x) else str(x)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


def write_json(path, obj):
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(json.dumps(_jsonable(obj), sort_keys=True, indent=2))
        fh.write("\n")
    return path


def kernel_rows(model, levels, times):
    """(radius_level, t, Z) sorted by (t, radius_level)."""
    for t in sorted(times):
        for b in sorted(levels):
            yield (b, t, model.z_density(b, t))


def cdf_rows(model, levels, times):
    for t in sorted(times):
        for m in sorted(levels):
            yield (m, t, model.radius_cdf(m, t, "both"))
