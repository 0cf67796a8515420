"""CSV, JSON and npz serialisation.

Floats are written with ``repr``, the shortest string that round-trips, so
identical inputs give byte-identical files on every platform.
"""

from __future__ import annotations

import csv
import hashlib
import json
import math
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .simulate import Ensemble, SamplePath


def fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (complex, np.complexfloating)):
        return repr(complex(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def _writer(fh):
    return csv.writer(fh, lineterminator="\n")


def _paths_of(paths) -> list:
    if isinstance(paths, Ensemble):
        return paths.paths
    return list(paths)


def write_paths_csv(file, paths) -> Path:
    """``path_id,t,x_1..x_d``, one row per path and grid time."""
    paths = _paths_of(paths)
    d = paths[0].dim
    file = Path(file)
    with file.open("w", newline="") as fh:
        w = _writer(fh)
        w.writerow(["path_id", "t"] + [f"x_{i + 1}" for i in range(d)])
        for pid, p in enumerate(paths):
            for t, row in zip(p.times, p.values):
                w.writerow([pid, fmt(t)] + [fmt(v) for v in row])
    return file


def read_paths_csv(file) -> list:
    """Inverse of :func:`write_paths_csv`; returns ``SamplePath`` objects."""
    with Path(file).open(newline="") as fh:
        rows = list(csv.reader(fh))
    header, body = rows[0], rows[1:]
    d = len(header) - 2
    data = {}
    for r in body:
        data.setdefault(int(r[0]), []).append([float(v) for v in r[1:]])
    out = []
    for pid in sorted(data):
        arr = np.array(data[pid])
        out.append(SamplePath(arr[:, 0], arr[:, 1:1 + d]))
    return out


def save_ensemble_npz(file, ensemble: Ensemble) -> Path:
    file = Path(file)
    np.savez(file, times=ensemble.times, values=ensemble.values, seeds=np.array(ensemble.seeds, dtype=np.uint64),
             start=ensemble.start, master_seed=np.array(ensemble.master_seed))
    return file


def load_ensemble_npz(file) -> dict:
    with np.load(file) as z:
        return {k: z[k] for k in z.files}


def write_tce_csv(file, solutions: Sequence) -> Path:
    """``path_id,t,alpha1,alpha2,z_1..z_d,unique``."""
    file = Path(file)
    d = solutions[0].z_path.dim
    with file.open("w", newline="") as fh:
        w = _writer(fh)
        w.writerow(["path_id", "t", "alpha1", "alpha2"] + [f"z_{i + 1}" for i in range(d)] + ["unique"])
        for s in solutions:
            u = fmt(s.unique)
            for t, a1, a2, z in zip(s.times, s.alpha, s.alpha_max, s.z_path.values):
                w.writerow([s.path_id, fmt(t), fmt(a1), fmt(a2)] + [fmt(v) for v in z] + [u])
    return file


def write_rows_csv(file, header: Sequence[str], rows: Iterable[Sequence]) -> Path:
    file = Path(file)
    with file.open("w", newline="") as fh:
        w = _writer(fh)
        w.writerow(list(header))
        for r in rows:
            w.writerow([fmt(v) for v in r])
    return file


def write_verify_csv(file, rows: Iterable[Sequence]) -> Path:
    """``test,params,estimate,stderr,pass``."""
    return write_rows_csv(file, ["test", "params", "estimate", "stderr", "pass"], rows)


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        f = float(obj)
        return f if math.isfinite(f) else repr(f)
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, complex):
        return repr(obj)
    return obj


def write_json(file, obj) -> Path:
    file = Path(file)
    file.write_text(json.dumps(_jsonable(obj), indent=2, sort_keys=True) + "\n")
    return file


def sha256(file) -> str:
    return hashlib.sha256(Path(file).read_bytes()).hexdigest()
