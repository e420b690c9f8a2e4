"""CSV and JSON emission for trajectories, ensembles and reports.

Floats are written with ``repr``, i.e. the shortest decimal string that
round-trips to the same double. Layer numbers in file output are 1-based.
"""

from __future__ import annotations

import csv
import json
import math
from pathlib import Path

import numpy as np

from .schedulers import Trajectory
from .stochastic import EnsembleResult

__all__ = ["fmt", "trajectory_header", "write_trajectory_csv", "write_ensemble_csv", "write_json", "jsonable"]

ENSEMBLE_HEADER = [
    "step", "layer", "mean_wnorm_sq", "std_wnorm_sq", "mean_gnorm_sq", "std_gnorm_sq", "mean_elr", "std_elr",
]


def fmt(x) -> str:
    if isinstance(x, (bool, np.bool_)):
        return "1" if x else "0"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return repr(float(x))


def trajectory_header(n_layers: int) -> list[str]:
    head = ["step", "lambda", "kappa_crit", "kappa_sub", "s_rel", "flip"]
    for i in range(1, n_layers + 1):
        head += [f"sigma_sq_{i}", f"gradnorm_{i}", f"elr_{i}"]
    return head


def write_trajectory_csv(traj: Trajectory, path) -> None:
    grad = traj.grad_norm
    elr = traj.elr
    with open(path, "w", newline="") as fh:
        out = csv.writer(fh, lineterminator="\n")
        out.writerow(trajectory_header(traj.n_layers))
        for r in range(len(traj.step)):
            row = [
                fmt(int(traj.step[r])),
                fmt(traj.lam[r]),
                fmt(traj.kappa_crit[r]),
                fmt(traj.kappa_sub[r]),
                fmt(traj.s_rel[r]),
                fmt(bool(traj.flip[r])),
            ]
            for k in range(traj.n_layers):
                row += [fmt(traj.sigma_sq[r, k]), fmt(grad[r, k]), fmt(elr[r, k])]
            out.writerow(row)


def write_ensemble_csv(ens: EnsembleResult, path, record_every: int = 1) -> None:
    n_steps, n_layers = ens.mean_wnorm_sq.shape
    rows = list(range(0, n_steps, record_every))
    if rows[-1] != n_steps - 1:
        rows.append(n_steps - 1)
    with open(path, "w", newline="") as fh:
        out = csv.writer(fh, lineterminator="\n")
        out.writerow(ENSEMBLE_HEADER)
        for i in rows:
            for k in range(n_layers):
                out.writerow([
                    fmt(i), fmt(k + 1),
                    fmt(ens.mean_wnorm_sq[i, k]), fmt(ens.std_wnorm_sq[i, k]),
                    fmt(ens.mean_gnorm_sq[i, k]), fmt(ens.std_gnorm_sq[i, k]),
                    fmt(ens.mean_elr[i, k]), fmt(ens.std_elr[i, k]),
                ])


def jsonable(obj):
    """Convert numpy scalars/arrays and non-finite floats to plain JSON values."""
    if isinstance(obj, dict):
        return {str(k): jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return jsonable(obj.tolist())
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        obj = float(obj)
        return obj if math.isfinite(obj) else None
    return obj


def write_json(obj, path) -> None:
    Path(path).write_text(json.dumps(jsonable(obj), indent=2, sort_keys=True) + "\n")
