"""Spread and convergence measurements over states and trajectories."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import TYPE_CHECKING, Sequence

import numpy as np

from .core import ContractViolation, NetworkState, extreme_layers

if TYPE_CHECKING:
    from .schedulers import Trajectory

__all__ = ["SpreadReport", "s_rel", "max_log_ratio", "spread_report", "flip_count", "mean_s_rel"]


def s_rel(elrs: Sequence[float]) -> float:
    """Relative logarithmic ELR spread: population std of ``ln(E)`` across layers."""
    e = np.asarray(elrs, dtype=float)
    if e.size == 0:
        raise ContractViolation("s_rel needs at least one ELR")
    if not np.all(e > 0):
        raise ContractViolation("ELRs must be positive")
    return float(np.std(np.log(e)))


def max_log_ratio(elrs: Sequence[float]) -> float:
    """Largest pairwise ``|ln R_jk|``, i.e. ``ln(max E / min E)``."""
    e = np.asarray(elrs, dtype=float)
    return float(np.log(e.max()) - np.log(e.min()))


@dataclass(frozen=True)
class SpreadReport:
    s_rel: float
    max_log_ratio: float
    argmin: int
    argmax: int

    def to_dict(self) -> dict:
        # 1-based layer numbers for serialized output
        return {
            "s_rel": self.s_rel,
            "max_log_ratio": self.max_log_ratio,
            "argmin_layer": self.argmin + 1,
            "argmax_layer": self.argmax + 1,
        }


def spread_report(state: NetworkState) -> SpreadReport:
    e = state.elrs
    lo, hi = extreme_layers(state)
    return SpreadReport(s_rel(e), abs(math.log(e[hi]) - math.log(e[lo])), lo, hi)


def _sign_changes(log_ratio: np.ndarray, tol: float) -> int:
    signs = np.sign(np.where(np.abs(log_ratio) <= tol, 0.0, log_ratio))
    signs = signs[signs != 0]
    return int(np.count_nonzero(signs[1:] != signs[:-1]))


def flip_count(trajectory: "Trajectory", pair: tuple[int, int] | None = None, tol: float = 1e-12) -> int:
    """Number of sign changes of ``ln R`` for a fixed layer pair over the recorded rows.

    The default pair is the extreme-ELR pair of the first row. Values with
    ``|ln R| <= tol`` count as neither sign.
    """
    elrs = trajectory.elr
    if pair is None:
        pair = (int(np.argmin(elrs[0])), int(np.argmax(elrs[0])))
    j, k = pair
    if j == k:
        return 0
    return _sign_changes(np.log(elrs[:, j]) - np.log(elrs[:, k]), tol)


def mean_s_rel(trajectory: "Trajectory") -> float:
    """S_rel averaged over the recorded rows of a trajectory."""
    return float(np.mean(trajectory.s_rel))
