"""Deterministic expectation model of weight-norm and ELR dynamics.

Each scale-invariant layer is summarised by its expected squared Frobenius
weight norm ``sigma_sq`` and its base gradient magnitude ``c``. One SGD step
with learning rate ``lam`` maps

    sigma_sq -> sigma_sq + lam**2 * c**2 / sigma_sq

and the effective learning rate (ELR) of a layer is ``c / sigma_sq``.

Layer positions in the Python API are 0-based; file outputs use 1-based
layer numbers.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

__all__ = [
    "ConfigurationError",
    "ContractViolation",
    "SimulationOverflow",
    "ModelConfig",
    "LayerState",
    "NetworkState",
    "discrete_step",
    "step_network",
    "evolve_sigma_sq",
    "continuous_sigma_sq",
    "continuous_elr_ratio",
    "elr",
    "elr_ratio",
    "flipping_ratio",
    "extreme_layers",
    "top_two_layers",
    "critical_lr",
    "subcritical_lr",
]


class ConfigurationError(ValueError):
    """Invalid model, profile or schedule parameters."""


class ContractViolation(ValueError):
    """A caller broke an operation's precondition."""


class SimulationOverflow(ArithmeticError):
    """A non-finite weight norm appeared during a simulation.

    ``layer_index`` is 0-based; ``step`` is the step whose update failed
    (``None`` when raised outside a driver loop). Drivers attach whatever
    was recorded before the failure as ``partial``.
    """

    def __init__(self, layer_index: int, step: int | None = None, partial=None):
        self.layer_index = layer_index
        self.step = step
        self.partial = partial
        where = f" at step {step}" if step is not None else ""
        super().__init__(f"non-finite weight norm in layer {layer_index}{where}")


@dataclass(frozen=True)
class ModelConfig:
    k0: float = 4.0
    numeric_tolerance: float = 1e-12

    def __post_init__(self):
        if not (self.k0 > 0 and math.isfinite(self.k0)):
            raise ConfigurationError(f"k0 must be positive, got {self.k0!r}")
        if not self.numeric_tolerance >= 0:
            raise ConfigurationError("numeric_tolerance must be non-negative")


def _check_positive(name: str, value: float) -> float:
    value = float(value)
    if not (value > 0 and math.isfinite(value)):
        raise ConfigurationError(f"{name} must be positive and finite, got {value!r}")
    return value


@dataclass(frozen=True)
class LayerState:
    """Expected squared weight norm and base gradient of one layer."""

    sigma_sq: float
    c: float

    def __post_init__(self):
        object.__setattr__(self, "sigma_sq", _check_positive("sigma_sq", self.sigma_sq))
        object.__setattr__(self, "c", _check_positive("c", self.c))

    @property
    def sigma(self) -> float:
        return math.sqrt(self.sigma_sq)

    @property
    def grad_norm(self) -> float:
        """Expected gradient norm ``c / sigma``."""
        return self.c / self.sigma


@dataclass(frozen=True)
class NetworkState:
    """Ordered layers plus the simulation clock.

    ``elapsed_time`` accumulates ``lam**2`` over the steps taken, which
    reduces to ``step_index * lam**2`` under a constant learning rate.
    """

    layers: tuple[LayerState, ...]
    step_index: int = 0
    elapsed_time: float = 0.0

    def __post_init__(self):
        layers = tuple(self.layers)
        if not layers:
            raise ConfigurationError("a network needs at least one layer")
        object.__setattr__(self, "layers", layers)
        if self.step_index < 0 or self.elapsed_time < 0:
            raise ConfigurationError("clock values must be non-negative")

    @classmethod
    def from_arrays(cls, sigma_sq, c, step_index: int = 0, elapsed_time: float = 0.0):
        sigma_sq = np.broadcast_to(np.asarray(sigma_sq, dtype=float), np.shape(c))
        layers = tuple(LayerState(s, ci) for s, ci in zip(sigma_sq, np.asarray(c, dtype=float)))
        return cls(layers, step_index, elapsed_time)

    def __len__(self) -> int:
        return len(self.layers)

    @property
    def sigma_sq(self) -> np.ndarray:
        return np.array([layer.sigma_sq for layer in self.layers])

    @property
    def c(self) -> np.ndarray:
        return np.array([layer.c for layer in self.layers])

    @property
    def elrs(self) -> np.ndarray:
        return self.c / self.sigma_sq


def discrete_step(layer: LayerState, lam: float, layer_index: int = 0) -> LayerState:
    if not lam > 0:
        raise ContractViolation(f"learning rate must be positive, got {lam!r}")
    new = layer.sigma_sq + lam * lam * layer.c * layer.c / layer.sigma_sq
    if not math.isfinite(new):
        raise SimulationOverflow(layer_index)
    return LayerState(new, layer.c)


def step_network(state: NetworkState, lam: float) -> NetworkState:
    layers = tuple(discrete_step(layer, lam, i) for i, layer in enumerate(state.layers))
    return NetworkState(layers, state.step_index + 1, state.elapsed_time + lam * lam)


def evolve_sigma_sq(sigma_sq, c, lam: float, steps: int):
    """Iterate the discrete model ``steps`` times at a constant ``lam``.

    Scalars take a plain float loop (fast for millions of steps); arrays
    are advanced elementwise, so many independent layers or instances can
    be evolved together.
    """
    if steps < 0:
        raise ContractViolation("steps must be non-negative")
    inc = (lam * c) ** 2
    if np.ndim(sigma_sq) == 0 and np.ndim(c) == 0:
        s = float(sigma_sq)
        inc = float(inc)
        for _ in range(steps):
            s += inc / s
        if not math.isfinite(s):
            raise SimulationOverflow(0)
        return s
    s = np.array(sigma_sq, dtype=float)
    inc = np.broadcast_to(inc, s.shape)
    for _ in range(steps):
        s = s + inc / s
    bad = np.flatnonzero(~np.isfinite(s))
    if bad.size:
        raise SimulationOverflow(int(bad[0]))
    return s


def continuous_sigma_sq(c: float, t: float, config: ModelConfig = ModelConfig()) -> float:
    """Gradient-flow solution ``sqrt(2 c^2 t + k0)``."""
    if not c > 0 or not t >= 0:
        raise ContractViolation("need c > 0 and t >= 0")
    return math.sqrt(2.0 * c * c * t + config.k0)


def continuous_elr_ratio(c_j: float, c_k: float, t: float, config: ModelConfig = ModelConfig()) -> float:
    """ELR ratio of two layers in the gradient flow; tends to 1 as t grows."""
    return (c_j * continuous_sigma_sq(c_k, t, config)) / (c_k * continuous_sigma_sq(c_j, t, config))


def elr(layer: LayerState) -> float:
    return layer.c / layer.sigma_sq


def elr_ratio(j: LayerState, k: LayerState) -> float:
    return (j.c * k.sigma_sq) / (k.c * j.sigma_sq)


def flipping_ratio(j: LayerState, k: LayerState) -> float:
    """Learning rate at which the ELR order of ``j`` and ``k`` reverses in one step."""
    return math.sqrt(j.sigma_sq * k.sigma_sq / (j.c * k.c))


def extreme_layers(state: NetworkState) -> tuple[int, int]:
    """Positions of the lowest- and highest-ELR layers (first index on ties)."""
    e = state.elrs
    return int(np.argmin(e)), int(np.argmax(e))


def top_two_layers(state: NetworkState, config: ModelConfig = ModelConfig()) -> tuple[int, int]:
    """The highest-ELR layer and the highest layer at a strictly lower ELR level.

    Layers whose ELRs agree within ``numeric_tolerance`` (relative) share a
    level, so a group that has already been equalised acts as one layer.
    Without that grouping the warm-up would keep picking two members of the
    same group, whose flipping ratio leaves every other layer behind. When
    all layers sit on one level the second entry is the next member of that
    level (or the layer itself for L = 1).
    """
    return _top_two(state.elrs, config.numeric_tolerance)


def _top_two(e: np.ndarray, tol: float) -> tuple[int, int]:
    h = int(np.argmax(e))
    below = e < e[h] * (1.0 - tol)
    if below.any():
        return h, int(np.argmax(np.where(below, e, -np.inf)))
    if len(e) == 1:
        return h, h
    return h, (1 if h == 0 else 0)


def critical_lr(state: NetworkState) -> float:
    """Flipping ratio of the lowest- and highest-ELR layers."""
    lo, hi = extreme_layers(state)
    return flipping_ratio(state.layers[lo], state.layers[hi])


def subcritical_lr(state: NetworkState, config: ModelConfig = ModelConfig()) -> float:
    """Flipping ratio of the two highest-ELR layers (see :func:`top_two_layers`)."""
    if len(state) < 2:
        raise ConfigurationError("the subcritical learning rate needs at least two layers")
    h, h2 = top_two_layers(state, config)
    return flipping_ratio(state.layers[h], state.layers[h2])


# kept module-private: used by drivers that work on raw arrays
def _step_arrays(sigma_sq: np.ndarray, c: np.ndarray, lam: float) -> np.ndarray:
    with np.errstate(over="ignore", invalid="ignore"):
        new = sigma_sq + (lam * c) ** 2 / sigma_sq
    bad = np.flatnonzero(~np.isfinite(new))
    if bad.size:
        raise SimulationOverflow(int(bad[0]))
    return new
