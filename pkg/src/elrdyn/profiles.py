"""Initial gradient-magnitude profiles.

Base gradients are pinned so that the topmost layer has ``c = 1``; only
ratios between layers matter, an absolute scale folds into the learning
rate. Layer ``i`` in the formulas below is 1-based, matching the usual
``i <= L`` notation; the returned states are ordered bottom to top.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .core import ConfigurationError, LayerState, NetworkState

__all__ = [
    "DEFAULT_ALPHA",
    "ProfileSpec",
    "build_profile",
    "feedforward_profile",
    "resnet_profile",
    "uniform_profile",
    "explicit_profile",
]

#: Per-layer gradient growth factor for ReLU + BatchNorm at He init.
DEFAULT_ALPHA = math.sqrt(math.pi / (math.pi - 1.0))

_KINDS = ("feedforward", "resnet", "uniform", "explicit")


@dataclass(frozen=True)
class ProfileSpec:
    kind: str
    depth: int
    alpha: float = DEFAULT_ALPHA
    block_size: int = 1
    initial_sigma_sq: float = 2.0
    explicit_c: tuple[float, ...] | None = None
    explicit_sigma_sq: tuple[float, ...] | None = None

    def __post_init__(self):
        if self.kind not in _KINDS:
            raise ConfigurationError(f"unknown profile kind {self.kind!r}; expected one of {_KINDS}")
        if self.explicit_c is not None:
            object.__setattr__(self, "explicit_c", tuple(float(v) for v in self.explicit_c))
        if self.explicit_sigma_sq is not None:
            object.__setattr__(self, "explicit_sigma_sq", tuple(float(v) for v in self.explicit_sigma_sq))
        if not isinstance(self.depth, (int, np.integer)) or self.depth < 1:
            raise ConfigurationError(f"depth must be a positive integer, got {self.depth!r}")
        if not (self.alpha > 0 and math.isfinite(self.alpha)):
            raise ConfigurationError(f"alpha must be positive, got {self.alpha!r}")
        if not isinstance(self.block_size, (int, np.integer)) or self.block_size < 1:
            raise ConfigurationError(f"block_size must be a positive integer, got {self.block_size!r}")
        if not (self.initial_sigma_sq > 0 and math.isfinite(self.initial_sigma_sq)):
            raise ConfigurationError("initial_sigma_sq must be positive")
        if self.kind == "explicit":
            if self.explicit_c is None:
                raise ConfigurationError("explicit profile needs explicit_c")
        for name in ("explicit_c", "explicit_sigma_sq"):
            values = getattr(self, name)
            if values is None:
                continue
            if len(values) != self.depth:
                raise ConfigurationError(f"{name} has {len(values)} entries for depth {self.depth}")
            if not all(v > 0 and math.isfinite(v) for v in values):
                raise ConfigurationError(f"{name} entries must be positive and finite")

    @classmethod
    def from_c(cls, c: Sequence[float], initial_sigma_sq: float = 2.0, sigma_sq: Sequence[float] | None = None):
        return cls(
            "explicit",
            len(c),
            explicit_c=tuple(c),
            initial_sigma_sq=initial_sigma_sq,
            explicit_sigma_sq=None if sigma_sq is None else tuple(sigma_sq),
        )


def _state(spec: ProfileSpec, c: np.ndarray) -> NetworkState:
    if spec.explicit_sigma_sq is not None:
        sigma_sq = np.asarray(spec.explicit_sigma_sq)
    else:
        sigma_sq = np.full(spec.depth, spec.initial_sigma_sq)
    if not np.all(np.isfinite(c)):
        raise ConfigurationError("profile base gradients overflow double precision")
    return NetworkState(tuple(LayerState(s, ci) for s, ci in zip(sigma_sq, c)))


def _require(spec: ProfileSpec, kind: str):
    if spec.kind != kind:
        raise ConfigurationError(f"expected a {kind} spec, got {spec.kind!r}")


def feedforward_profile(spec: ProfileSpec) -> NetworkState:
    """``c_i = alpha**(L - i)``: gradients explode exponentially towards the input."""
    _require(spec, "feedforward")
    i = np.arange(1, spec.depth + 1)
    return _state(spec, spec.alpha ** (spec.depth - i).astype(float))


def resnet_profile(spec: ProfileSpec) -> NetworkState:
    """``c_i = 1 + floor((L - i) / s) * alpha**s`` with ``s`` the block size."""
    _require(spec, "resnet")
    i = np.arange(1, spec.depth + 1)
    blocks = (spec.depth - i) // spec.block_size
    return _state(spec, 1.0 + blocks * spec.alpha ** spec.block_size)


def uniform_profile(spec: ProfileSpec) -> NetworkState:
    _require(spec, "uniform")
    return _state(spec, np.ones(spec.depth))


def explicit_profile(spec: ProfileSpec) -> NetworkState:
    _require(spec, "explicit")
    return _state(spec, np.asarray(spec.explicit_c, dtype=float))


_BUILDERS = {
    "feedforward": feedforward_profile,
    "resnet": resnet_profile,
    "uniform": uniform_profile,
    "explicit": explicit_profile,
}


def build_profile(spec: ProfileSpec) -> NetworkState:
    return _BUILDERS[spec.kind](spec)
