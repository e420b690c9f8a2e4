"""Monte Carlo random-walk simulator for scale-invariant layers.

Each layer holds a dense Gaussian weight matrix. At every step its
gradient is replaced by a random matrix whose expected norm is
``c / ||W||_F`` (the inverse scaling induced by normalization), projected
onto the orthogonal complement of ``W``. Averaging many trials gives an
independent check of the deterministic model in :mod:`elrdyn.core`.

Randomness comes from counter-based Philox substreams keyed by
``(seed, trial, layer, counter)``, so an ensemble is bit-reproducible no
matter how trials are scheduled across threads. Counter 0 initialises the
weights; counter ``i + 1`` draws the gradient of step ``i``.
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .core import ConfigurationError, ContractViolation, NetworkState, SimulationOverflow
from .schedulers import Schedule, Trajectory, lr_at

__all__ = [
    "ConstrainPolicy",
    "McConfig",
    "MatrixLayer",
    "substream",
    "init_matrix_layer",
    "random_walk_gradient",
    "constrain_gradient",
    "mc_step",
    "renormalize",
    "EnsembleResult",
    "mc_ensemble",
    "deviation_report",
]


def substream(seed: int, trial: int, layer: int, counter: int) -> np.random.Generator:
    """Independent generator for one ``(seed, trial, layer, counter)`` key."""
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=(int(trial), int(layer), int(counter)))
    return np.random.Generator(np.random.Philox(ss))


@dataclass(frozen=True)
class ConstrainPolicy:
    """Rescale each gradient by ``e_goal / (E + epsilon)`` before the step."""

    e_goal: float
    epsilon: float = 1e-5

    def __post_init__(self):
        if not (self.e_goal > 0 and self.epsilon > 0):
            raise ConfigurationError("e_goal and epsilon must be positive")


@dataclass(frozen=True)
class McConfig:
    rows: int = 64
    cols: int = 64
    trials: int = 256
    seed: int = 0
    constrain: ConstrainPolicy | None = None
    renormalize_weights: bool = False

    def __post_init__(self):
        if self.rows < 1 or self.cols < 1:
            raise ConfigurationError("matrix shape must be positive")
        if self.trials < 1:
            raise ConfigurationError("trials must be >= 1")
        if self.seed < 0:
            raise ConfigurationError("seed must be non-negative")


@dataclass(frozen=True, eq=False)
class MatrixLayer:
    """A weight matrix with its base gradient and stream key ``(seed, trial, layer)``."""

    weights: np.ndarray
    c: float
    stream: tuple[int, int, int] = (0, 0, 0)

    @property
    def norm_sq(self) -> float:
        return float(np.vdot(self.weights, self.weights))

    @property
    def norm(self) -> float:
        return math.sqrt(self.norm_sq)


def init_matrix_layer(
    rows: int,
    cols: int,
    c: float,
    stream: tuple[int, int, int] = (0, 0, 0),
    initial_sigma_sq: float = 2.0,
) -> MatrixLayer:
    """Gaussian matrix with ``E||W||_F^2 = initial_sigma_sq``."""
    if rows < 1 or cols < 1:
        raise ContractViolation("matrix shape must be positive")
    rng = substream(*stream, 0)
    std = math.sqrt(initial_sigma_sq / (rows * cols))
    return MatrixLayer(rng.normal(0.0, std, size=(rows, cols)), float(c), tuple(stream))


def random_walk_gradient(layer: MatrixLayer, rng: np.random.Generator) -> np.ndarray:
    """Random gradient of expected norm ``c / ||W||`` orthogonal to ``W``."""
    w = layer.weights
    w_sq = np.vdot(w, w)
    std = layer.c / math.sqrt(w_sq) / math.sqrt(w.size)
    r = rng.normal(0.0, std, size=w.shape)
    return r - (np.vdot(r, w) / w_sq) * w


def constrain_gradient(grad: np.ndarray, weights: np.ndarray, policy: ConstrainPolicy) -> np.ndarray:
    measured = math.sqrt(np.vdot(grad, grad) / np.vdot(weights, weights))
    return grad * (policy.e_goal / (measured + policy.epsilon))


def _gradient(layer: MatrixLayer, step: int, policy: ConstrainPolicy | None) -> np.ndarray:
    seed, trial, index = layer.stream
    g = random_walk_gradient(layer, substream(seed, trial, index, step + 1))
    if policy is not None:
        g = constrain_gradient(g, layer.weights, policy)
    return g


def _apply(layer: MatrixLayer, grad: np.ndarray, lam: float) -> MatrixLayer:
    with np.errstate(over="ignore", invalid="ignore"):
        w = layer.weights - lam * grad
    if not np.all(np.isfinite(w)):
        raise SimulationOverflow(layer.stream[2])
    return MatrixLayer(w, layer.c, layer.stream)


def mc_step(layer: MatrixLayer, lam: float, policy: ConstrainPolicy | None = None, step: int = 0) -> MatrixLayer:
    """One random-walk SGD step, drawing from the layer's substream for ``step``."""
    if not lam > 0:
        raise ContractViolation("learning rate must be positive")
    return _apply(layer, _gradient(layer, step, policy), lam)


def renormalize(layers: list[MatrixLayer]) -> list[MatrixLayer]:
    """Divide every weight matrix by the largest Frobenius norm among them."""
    if not layers:
        raise ContractViolation("renormalize needs at least one layer")
    top = max(layer.norm for layer in layers)
    return [MatrixLayer(layer.weights / top, layer.c, layer.stream) for layer in layers]


@dataclass
class EnsembleResult:
    """Per-step, per-layer ensemble statistics; arrays have shape ``(steps + 1, L)``.

    ``std_*`` are sample standard deviations across the included trials
    (zero for a single trial); ``stderr`` divides them by ``sqrt(n)``.
    Gradient columns describe the gradient actually applied when leaving
    a step (after any constrain rescaling); on the final row it is drawn
    but not applied.
    """

    mean_wnorm_sq: np.ndarray
    std_wnorm_sq: np.ndarray
    mean_gnorm_sq: np.ndarray
    std_gnorm_sq: np.ndarray
    mean_elr: np.ndarray
    std_elr: np.ndarray
    lam: np.ndarray
    n_trials: int
    excluded_trials: list[int] = field(default_factory=list)
    max_abs_cosine: float = 0.0
    per_trial: dict[str, np.ndarray] | None = None

    @property
    def steps(self) -> int:
        return self.mean_wnorm_sq.shape[0] - 1

    def stderr(self, name: str) -> np.ndarray:
        return getattr(self, f"std_{name}") / math.sqrt(max(self.n_trials, 1))


@dataclass
class _TrialRecord:
    wnorm_sq: np.ndarray
    gnorm_sq: np.ndarray
    elr: np.ndarray
    lam: np.ndarray
    max_abs_cosine: float


def _run_trial(trial: int, initial: NetworkState, schedule: Schedule, steps: int, cfg: McConfig) -> _TrialRecord:
    n_layers = len(initial)
    layers = [
        init_matrix_layer(cfg.rows, cfg.cols, lay.c, (cfg.seed, trial, k), lay.sigma_sq)
        for k, lay in enumerate(initial.layers)
    ]
    c = initial.c
    wn = np.empty((steps + 1, n_layers))
    gn = np.empty((steps + 1, n_layers))
    el = np.empty((steps + 1, n_layers))
    lams = np.full(steps + 1, np.nan)
    worst = 0.0
    last_lr = None
    for i in range(steps + 1):
        if cfg.renormalize_weights:
            layers = renormalize(layers)
        grads = [_gradient(layer, i, cfg.constrain) for layer in layers]
        for k, (layer, g) in enumerate(zip(layers, grads)):
            w_sq = layer.norm_sq
            g_sq = float(np.vdot(g, g))
            wn[i, k] = w_sq
            gn[i, k] = g_sq
            el[i, k] = math.sqrt(g_sq / w_sq)
            if g_sq > 0:
                worst = max(worst, abs(float(np.vdot(g, layer.weights))) / math.sqrt(g_sq * w_sq))
        if i == steps:
            break
        state = NetworkState.from_arrays(wn[i], c, i) if schedule.needs_state else None
        lam = lr_at(schedule, i, state, last_lr)
        lams[i] = lam
        try:
            layers = [_apply(layer, g, lam) for layer, g in zip(layers, grads)]
        except SimulationOverflow as exc:
            exc.step = i
            raise
        last_lr = lam
    return _TrialRecord(wn, gn, el, lams, worst)


def _thread_count(workers: int | None) -> int:
    if workers is not None:
        return max(1, int(workers))
    try:
        return max(1, int(os.environ.get("ELRDYN_THREADS", "1")))
    except ValueError:
        return 1


def mc_ensemble(
    initial: NetworkState,
    schedule: Schedule,
    steps: int,
    config: McConfig = McConfig(),
    workers: int | None = None,
    keep_trials: bool = False,
) -> EnsembleResult:
    """Run ``config.trials`` independent random-walk simulations and aggregate them.

    ``initial`` supplies each layer's base gradient ``c`` and the expected
    initial squared norm. Trials that overflow are dropped and listed in
    ``excluded_trials``. Aggregation always follows trial order, so the
    result does not depend on ``workers`` (default: ``$ELRDYN_THREADS`` or 1).
    With ``keep_trials`` the raw per-trial arrays, shaped
    ``(trials, steps + 1, L)``, are kept in ``per_trial``.
    """
    if steps < 1:
        raise ContractViolation("steps must be >= 1")

    def one(t):
        try:
            return _run_trial(t, initial, schedule, steps, config)
        except SimulationOverflow:
            return None

    n_workers = _thread_count(workers)
    if n_workers == 1:
        records = [one(t) for t in range(config.trials)]
    else:
        with ThreadPoolExecutor(max_workers=n_workers) as pool:
            records = list(pool.map(one, range(config.trials)))

    excluded = [t for t, r in enumerate(records) if r is None]
    good = [r for r in records if r is not None]
    if not good:
        raise SimulationOverflow(0, partial=excluded)
    ddof = 1 if len(good) > 1 else 0

    def stats(name):
        stack = np.stack([getattr(r, name) for r in good])
        return stack.mean(axis=0), stack.std(axis=0, ddof=ddof)

    wm, ws = stats("wnorm_sq")
    gm, gs = stats("gnorm_sq")
    em, es = stats("elr")
    lam = np.append(np.stack([r.lam[:-1] for r in good]).mean(axis=0), np.nan)
    per_trial = None
    if keep_trials:
        per_trial = {name: np.stack([getattr(r, name) for r in good]) for name in ("wnorm_sq", "gnorm_sq", "elr")}
    return EnsembleResult(
        mean_wnorm_sq=wm,
        std_wnorm_sq=ws,
        mean_gnorm_sq=gm,
        std_gnorm_sq=gs,
        mean_elr=em,
        std_elr=es,
        lam=lam,
        n_trials=len(good),
        excluded_trials=excluded,
        max_abs_cosine=max(r.max_abs_cosine for r in good),
        per_trial=per_trial,
    )


def deviation_report(ensemble: EnsembleResult, model: Trajectory, n_sigma: float = 3.0) -> dict:
    """Compare ensemble mean squared weight norms with a deterministic trajectory.

    ``model`` must be recorded at every step. Returns the maximum relative
    deviation, the step (and 1-based layer) where it occurs, and how many
    ``(step, layer)`` cells fall outside ``n_sigma`` standard errors.
    """
    ref = model.sigma_sq
    if ref.shape != ensemble.mean_wnorm_sq.shape:
        raise ContractViolation(
            f"model trajectory shape {ref.shape} does not match ensemble {ensemble.mean_wnorm_sq.shape}"
        )
    rel = np.abs(ensemble.mean_wnorm_sq - ref) / ref
    step, layer = np.unravel_index(int(np.argmax(rel)), rel.shape)
    se = ensemble.stderr("wnorm_sq")
    outside = np.abs(ensemble.mean_wnorm_sq - ref) > n_sigma * se
    return {
        "max_relative_deviation": float(rel.max()),
        "max_deviation_step": int(step),
        "max_deviation_layer": int(layer) + 1,
        "n_sigma": n_sigma,
        "cells_outside_n_sigma": int(np.count_nonzero(outside)),
        "max_abs_cosine": ensemble.max_abs_cosine,
        "trials_used": ensemble.n_trials,
        "excluded_trials": list(ensemble.excluded_trials),
    }
