"""CSV series files and the metrics used to compare them.

Layout: one header row, comma delimiter, 17 significant digits. Column 1 is
the grid (``t`` or ``omega``); complex components follow as interleaved
``<name>_re, <name>_im`` pairs, real series as a single ``<name>`` column.
"""

from __future__ import annotations

import csv
import json
import math

import numpy as np

from .errors import GridError

FMT = "%.17g"


def write_series(path, grid, columns, grid_name="t", real=()):
    """Write ``columns`` (name -> array) against ``grid``.

    Names listed in ``real`` are written as one column; everything else as a
    re/im pair.
    """
    grid = np.asarray(grid, dtype=float)
    header = [grid_name]
    cols = [grid]
    for name, v in columns.items():
        v = np.asarray(v)
        if v.shape != grid.shape:
            raise ValueError(f"column {name} has shape {v.shape}, grid has {grid.shape}")
        if name in real:
            header.append(name)
            cols.append(v.real.astype(float))
        else:
            header += [f"{name}_re", f"{name}_im"]
            cols += [v.real.astype(float), v.imag.astype(float)]
    data = np.column_stack(cols)
    # '+ 0.0' turns -0.0 into 0.0 so reruns compare byte for byte
    data = data + 0.0
    with open(path, "w", newline="") as fh:
        fh.write(",".join(header) + "\n")
        np.savetxt(fh, data, fmt=FMT, delimiter=",")
    return str(path)


def read_series(path):
    """``(grid_name, grid, {component: complex array})`` from a series CSV."""
    with open(path, newline="") as fh:
        header = next(csv.reader(fh))
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    if data.shape[1] != len(header):
        raise ValueError(f"{path}: header has {len(header)} columns, data has {data.shape[1]}")
    comps = {}
    i = 1
    while i < len(header):
        name = header[i]
        if name.endswith("_re") and i + 1 < len(header) and header[i + 1] == name[:-3] + "_im":
            comps[name[:-3]] = data[:, i] + 1j * data[:, i + 1]
            i += 2
        else:
            comps[name] = data[:, i].astype(complex)
            i += 1
    return header[0], data[:, 0], comps


def _common_grid(ga, gb):
    """Index maps onto the coarser grid when one grid refines the other."""
    if len(ga) == len(gb) and np.allclose(ga, gb, rtol=1e-12, atol=1e-12):
        return np.arange(len(ga)), np.arange(len(gb))
    for fine, coarse, swap in ((ga, gb, False), (gb, ga, True)):
        if len(coarse) < 2 or len(fine) < 2:
            continue
        ratio = (coarse[1] - coarse[0]) / (fine[1] - fine[0])
        stride = int(round(ratio))
        if stride < 1 or abs(ratio - stride) > 1e-9 * ratio:
            continue
        start = int(np.argmin(np.abs(fine - coarse[0])))
        idx = start + stride * np.arange(len(coarse))
        if idx[-1] >= len(fine) or not np.allclose(fine[idx], coarse, rtol=1e-9, atol=1e-12):
            continue
        ci = np.arange(len(coarse))
        return (ci, idx) if swap else (idx, ci)
    raise GridError("series grids are incompatible (no common refinement)")


def series_metrics(a, b, dt):
    """Relative L2 (against ``b``), max-abs and DC-component difference."""
    diff = a - b
    nb = np.linalg.norm(b)
    rel = float(np.linalg.norm(diff) / nb) if nb > 0 else float(np.linalg.norm(diff))
    return {
        "rel_l2": rel,
        "max_abs": float(np.abs(diff).max()) if diff.size else 0.0,
        "dc_diff": float(abs(dt * diff.sum())),
    }


def compare(path_a, path_b):
    """Per-component metrics of ``a`` against ``b`` on their common grid."""
    name_a, ga, ca = read_series(path_a)
    name_b, gb, cb = read_series(path_b)
    if name_a != name_b:
        raise GridError(f"grid columns differ ({name_a} vs {name_b})")
    ia, ib = _common_grid(ga, gb)
    shared = [k for k in ca if k in cb]
    if not shared:
        raise GridError("the two series share no component names")
    g = ga[ia]
    dt = float(g[1] - g[0]) if len(g) > 1 else 1.0
    out = {"a": str(path_a), "b": str(path_b), "grid": name_a, "n_points": int(len(g)),
           "components": {}}
    for k in shared:
        out["components"][k] = series_metrics(ca[k][ia], cb[k][ib], dt)
    return out


def clean(obj):
    """JSON-safe copy: numpy scalars to python, non-finite floats to None."""
    if isinstance(obj, dict):
        return {str(k): clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return clean(obj.tolist())
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        return x if math.isfinite(x) else None
    if isinstance(obj, complex):
        return [obj.real, obj.imag]
    return obj


def write_json(path, obj):
    with open(path, "w") as fh:
        json.dump(clean(obj), fh, indent=1, sort_keys=False)
        fh.write("\n")
    return str(path)
