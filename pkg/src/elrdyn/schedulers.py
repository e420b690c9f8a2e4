"""Learning-rate schedules and the deterministic simulation driver.

Every schedule maps a step index to a learning rate. The subcritical
warm-up is the exception: it reads the current :class:`NetworkState` and
sets the learning rate to the flipping ratio of the two highest-ELR
layers, which equalises all ELRs within L steps without any ratio flipping.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Any, ClassVar, Iterator, Mapping

import numpy as np

from .core import (
    ConfigurationError,
    ContractViolation,
    ModelConfig,
    NetworkState,
    SimulationOverflow,
    _step_arrays,
    _top_two,
    subcritical_lr,
)

__all__ = [
    "Schedule",
    "Constant",
    "MultiStep",
    "Cosine",
    "LinearWarmup",
    "OneCycle",
    "SubcriticalWarmup",
    "Composite",
    "schedule_from_dict",
    "lr_at",
    "Trajectory",
    "simulate",
    "convergence_horizon",
    "scheduler_scenarios",
]


def _positive(name: str, value: float) -> float:
    value = float(value)
    if not (value > 0 and math.isfinite(value)):
        raise ConfigurationError(f"{name} must be positive and finite, got {value!r}")
    return value


def _anneal(start: float, end: float, frac: float, how: str) -> float:
    frac = min(max(frac, 0.0), 1.0)
    if how == "cos":
        return end + (start - end) * 0.5 * (1.0 + math.cos(math.pi * frac))
    return start + (end - start) * frac


class Schedule:
    """Base class. Subclasses implement ``lr(step, state, last_lr)``."""

    kind: ClassVar[str] = ""
    needs_state: ClassVar[bool] = False

    def lr(self, step: int, state: NetworkState | None = None, last_lr: float | None = None) -> float:
        raise NotImplementedError

    def to_dict(self) -> dict:
        raise NotImplementedError


@dataclass(frozen=True)
class Constant(Schedule):
    kind: ClassVar[str] = "constant"
    lr_value: float

    def __post_init__(self):
        _positive("lr", self.lr_value)

    def lr(self, step, state=None, last_lr=None):
        return self.lr_value

    def to_dict(self):
        return {"kind": self.kind, "lr": self.lr_value}


@dataclass(frozen=True)
class MultiStep(Schedule):
    """``lr * gamma**k`` where ``k`` counts milestones already reached."""

    kind: ClassVar[str] = "multistep"
    lr_value: float
    milestones: tuple[int, ...]
    gamma: float = 0.1

    def __post_init__(self):
        _positive("lr", self.lr_value)
        _positive("gamma", self.gamma)
        object.__setattr__(self, "milestones", tuple(sorted(int(m) for m in self.milestones)))

    def lr(self, step, state=None, last_lr=None):
        passed = sum(1 for m in self.milestones if step >= m)
        return self.lr_value * self.gamma**passed

    def to_dict(self):
        return {"kind": self.kind, "lr": self.lr_value, "milestones": list(self.milestones), "gamma": self.gamma}


@dataclass(frozen=True)
class Cosine(Schedule):
    """Cosine decay from ``peak`` to ``peak / final_div_factor`` over ``total_steps``, then hold."""

    kind: ClassVar[str] = "cosine"
    peak: float
    total_steps: int
    final_div_factor: float = 1e4

    def __post_init__(self):
        _positive("peak", self.peak)
        _positive("final_div_factor", self.final_div_factor)
        if self.total_steps < 1:
            raise ConfigurationError("total_steps must be >= 1")

    def lr(self, step, state=None, last_lr=None):
        return _anneal(self.peak, self.peak / self.final_div_factor, step / self.total_steps, "cos")

    def to_dict(self):
        return {"kind": self.kind, "peak": self.peak, "total_steps": self.total_steps,
                "final_div_factor": self.final_div_factor}


@dataclass(frozen=True)
class LinearWarmup(Schedule):
    """Linear ramp from ``peak / div_factor`` to ``peak`` over ``warmup_steps``, then hold."""

    kind: ClassVar[str] = "linear_warmup"
    peak: float
    warmup_steps: int
    div_factor: float = 25.0

    def __post_init__(self):
        _positive("peak", self.peak)
        _positive("div_factor", self.div_factor)
        if self.warmup_steps < 1:
            raise ConfigurationError("warmup_steps must be >= 1")

    def lr(self, step, state=None, last_lr=None):
        return _anneal(self.peak / self.div_factor, self.peak, step / self.warmup_steps, "linear")

    def to_dict(self):
        return {"kind": self.kind, "peak": self.peak, "warmup_steps": self.warmup_steps,
                "div_factor": self.div_factor}


@dataclass(frozen=True)
class OneCycle(Schedule):
    """One-cycle policy counted in steps.

    Rises from ``peak / div_factor`` to ``peak`` during the first
    ``pct_start`` of ``total_steps``, then cosine-anneals down to
    ``peak / div_factor / final_div_factor`` and holds there.
    """

    kind: ClassVar[str] = "one_cycle"
    peak: float
    total_steps: int
    pct_start: float = 0.3
    div_factor: float = 25.0
    final_div_factor: float = 1e4
    anneal: str = "cos"

    def __post_init__(self):
        _positive("peak", self.peak)
        _positive("div_factor", self.div_factor)
        _positive("final_div_factor", self.final_div_factor)
        if self.total_steps < 2:
            raise ConfigurationError("total_steps must be >= 2")
        if not 0 < self.pct_start < 1:
            raise ConfigurationError("pct_start must lie in (0, 1)")
        if self.anneal not in ("cos", "linear"):
            raise ConfigurationError("anneal must be 'cos' or 'linear'")

    def lr(self, step, state=None, last_lr=None):
        initial = self.peak / self.div_factor
        final = initial / self.final_div_factor
        up = max(1, round(self.pct_start * self.total_steps))
        if step < up:
            return _anneal(initial, self.peak, step / up, self.anneal)
        return _anneal(self.peak, final, (step - up) / max(1, self.total_steps - up), "cos")

    def to_dict(self):
        return {"kind": self.kind, "peak": self.peak, "total_steps": self.total_steps,
                "pct_start": self.pct_start, "div_factor": self.div_factor,
                "final_div_factor": self.final_div_factor, "anneal": self.anneal}


@dataclass(frozen=True)
class SubcriticalWarmup(Schedule):
    """State-feedback warm-up ``lr = safety_factor * kappa(h, h')``.

    Runs for ``warmup_steps`` (default: the number of layers), then hands
    over to ``then`` with the step counter restarted at zero. Without a
    follow-on schedule the last warm-up learning rate is held.
    """

    kind: ClassVar[str] = "subcritical_warmup"
    needs_state: ClassVar[bool] = True
    safety_factor: float = 1.0
    warmup_steps: int | None = None
    then: Schedule | None = None
    config: ModelConfig = field(default_factory=ModelConfig)

    def __post_init__(self):
        if not 0 < self.safety_factor <= 1:
            raise ConfigurationError("safety_factor must lie in (0, 1]")
        if self.warmup_steps is not None and self.warmup_steps < 1:
            raise ConfigurationError("warmup_steps must be >= 1")

    def lr(self, step, state=None, last_lr=None):
        n = self.warmup_steps
        if n is None:
            if state is None:
                raise ContractViolation("subcritical warm-up needs the current network state")
            n = len(state)
        if step < n:
            if state is None:
                raise ContractViolation("subcritical warm-up needs the current network state")
            return self.safety_factor * subcritical_lr(state, self.config)
        if self.then is not None:
            return self.then.lr(step - n, state, last_lr)
        if last_lr is None:
            raise ContractViolation("holding the warm-up rate needs the previous learning rate")
        return last_lr

    def to_dict(self):
        d = {"kind": self.kind, "safety_factor": self.safety_factor}
        if self.warmup_steps is not None:
            d["warmup_steps"] = self.warmup_steps
        if self.then is not None:
            d["then"] = self.then.to_dict()
        return d


@dataclass(frozen=True)
class Composite(Schedule):
    """Phases run back to back; each phase sees its own step counter.

    ``phases`` holds ``(schedule, length)`` pairs. The last phase may have
    length ``None`` and then runs forever; past the end of a finite last
    phase its schedule keeps being evaluated.
    """

    kind: ClassVar[str] = "composite"
    phases: tuple[tuple[Schedule, int | None], ...]

    def __post_init__(self):
        phases = tuple((s, None if n is None else int(n)) for s, n in self.phases)
        if not phases:
            raise ConfigurationError("composite schedule needs at least one phase")
        for s, n in phases[:-1]:
            if n is None or n < 1:
                raise ConfigurationError("all but the last phase need a positive length")
        object.__setattr__(self, "phases", phases)

    @property
    def needs_state(self) -> bool:  # type: ignore[override]
        return any(s.needs_state for s, _ in self.phases)

    def lr(self, step, state=None, last_lr=None):
        start = 0
        for sched, n in self.phases[:-1]:
            if step < start + n:
                return sched.lr(step - start, state, last_lr)
            start += n
        return self.phases[-1][0].lr(step - start, state, last_lr)

    def to_dict(self):
        return {"kind": self.kind,
                "phases": [{"schedule": s.to_dict(), "steps": n} for s, n in self.phases]}


def schedule_from_dict(d: Mapping[str, Any]) -> Schedule:
    """Build a schedule from its JSON form (the inverse of ``to_dict``)."""
    d = dict(d)
    d.pop("name", None)
    try:
        kind = d.pop("kind")
    except KeyError:
        raise ConfigurationError("schedule is missing 'kind'") from None
    try:
        if kind == "constant":
            return Constant(d.pop("lr"), **d)
        if kind == "multistep":
            return MultiStep(d.pop("lr"), tuple(d.pop("milestones")), **d)
        if kind == "cosine":
            return Cosine(**d)
        if kind == "linear_warmup":
            return LinearWarmup(**d)
        if kind == "one_cycle":
            return OneCycle(**d)
        if kind == "subcritical_warmup":
            then = d.pop("then", None)
            return SubcriticalWarmup(then=None if then is None else schedule_from_dict(then), **d)
        if kind == "composite":
            phases = tuple((schedule_from_dict(p["schedule"]), p.get("steps")) for p in d.pop("phases"))
            return Composite(phases, **d)
    except (KeyError, TypeError) as exc:
        raise ConfigurationError(f"bad parameters for {kind!r} schedule: {exc}") from None
    raise ConfigurationError(f"unknown schedule kind {kind!r}")


def lr_at(schedule: Schedule, step: int, state: NetworkState | None = None, last_lr: float | None = None) -> float:
    if step < 0:
        raise ContractViolation("step must be non-negative")
    lam = schedule.lr(step, state, last_lr)
    if not (lam > 0 and math.isfinite(lam)):
        raise ConfigurationError(f"schedule produced invalid learning rate {lam!r} at step {step}")
    return float(lam)


@dataclass
class Trajectory:
    """Per-step record of a deterministic simulation.

    Per-layer columns (``sigma_sq``, ``elr``, ...) and the row-level
    scalars hold only the recorded rows (every ``record_every``-th step
    plus the last one). Arrays ending in ``_full`` keep every step so that
    flip counts and convergence horizons never depend on downsampling.
    ``lam[k]`` is the rate applied when leaving row ``k``; ``flip[k]``
    marks that this step flipped the extreme pair. Both are undefined
    (NaN / False) on the final row.
    """

    c: np.ndarray
    step: np.ndarray
    lam: np.ndarray
    sigma_sq: np.ndarray
    kappa_crit: np.ndarray
    kappa_sub: np.ndarray
    s_rel: np.ndarray
    flip: np.ndarray
    lam_full: np.ndarray
    kappa_crit_full: np.ndarray
    max_log_ratio_full: np.ndarray
    flip_full: np.ndarray
    supercritical_full: np.ndarray
    failure: dict | None = None

    @property
    def n_layers(self) -> int:
        return len(self.c)

    @property
    def steps_completed(self) -> int:
        return len(self.lam_full)

    @property
    def elr(self) -> np.ndarray:
        return self.c / self.sigma_sq

    @property
    def grad_norm(self) -> np.ndarray:
        return self.c / np.sqrt(self.sigma_sq)

    @property
    def grad_norm_sq(self) -> np.ndarray:
        return self.c**2 / self.sigma_sq

    @property
    def flip_steps(self) -> list[int]:
        return [int(i) for i in np.flatnonzero(self.flip_full)]

    @property
    def total_flips(self) -> int:
        return int(np.count_nonzero(self.flip_full))

    def convergence_horizon(self, ratio_tolerance: float) -> int | None:
        hit = np.flatnonzero(self.max_log_ratio_full <= math.log1p(ratio_tolerance))
        return int(hit[0]) if hit.size else None

    def final_state(self) -> NetworkState:
        return NetworkState.from_arrays(self.sigma_sq[-1], self.c, int(self.step[-1]))


@dataclass
class _Row:
    step: int
    sigma_sq: np.ndarray
    kappa_crit: float
    kappa_sub: float
    s_rel: float
    max_log_ratio: float
    lam: float = math.nan
    flip: bool = False
    supercritical: bool = False


def _run(initial: NetworkState, schedule: Schedule, steps: int, config: ModelConfig) -> Iterator[_Row]:
    """Yield one row per state, the last one with no step taken from it."""
    tol = config.numeric_tolerance
    c = initial.c
    s = initial.sigma_sq
    elapsed = initial.elapsed_time
    last_lr = None
    for i in range(steps + 1):
        e = c / s
        lo, hi = int(np.argmin(e)), int(np.argmax(e))
        log_e = np.log(e)
        row = _Row(
            step=i,
            sigma_sq=s,
            kappa_crit=math.sqrt(s[lo] * s[hi] / (c[lo] * c[hi])),
            kappa_sub=math.nan,
            s_rel=float(np.std(log_e)),
            max_log_ratio=float(log_e[hi] - log_e[lo]),
        )
        if len(c) > 1:
            h, h2 = _top_two(e, tol)
            row.kappa_sub = math.sqrt(s[h] * s[h2] / (c[h] * c[h2]))
        if i == steps:
            yield row
            return
        state = None
        if schedule.needs_state:
            state = NetworkState.from_arrays(s, c, initial.step_index + i, elapsed)
        lam = lr_at(schedule, i, state, last_lr)
        try:
            s_new = _step_arrays(s, c, lam)
        except SimulationOverflow as exc:
            exc.step = i
            yield row
            raise
        distinct = e[hi] > e[lo] * (1.0 + tol)
        e_new = c / s_new
        row.lam = lam
        row.flip = bool(distinct and e_new[hi] < e_new[lo] * (1.0 - tol))
        row.supercritical = bool(distinct and lam > row.kappa_crit * (1.0 + tol))
        yield row
        s = s_new
        elapsed += lam * lam
        last_lr = lam


def simulate(
    initial: NetworkState,
    schedule: Schedule,
    steps: int,
    record_every: int = 1,
    config: ModelConfig = ModelConfig(),
) -> Trajectory:
    """Run the discrete model under ``schedule`` for ``steps`` steps.

    A flip is recorded at step ``i`` when the layer with the highest ELR at
    step ``i`` ends below the layer with the lowest ELR, both compared with
    a relative tolerance of ``config.numeric_tolerance``. On overflow the
    raised :class:`SimulationOverflow` carries the rows completed so far as
    ``exc.partial``.
    """
    if steps < 1:
        raise ContractViolation("steps must be >= 1")
    if record_every < 1:
        raise ContractViolation("record_every must be >= 1")
    rows: list[_Row] = []
    kept: list[_Row] = []

    def build(failure=None) -> Trajectory:
        rec = kept if kept and kept[-1] is rows[-1] else kept + rows[-1:]
        return Trajectory(
            c=initial.c,
            step=np.array([r.step for r in rec]),
            lam=np.array([r.lam for r in rec]),
            sigma_sq=np.array([r.sigma_sq for r in rec]),
            kappa_crit=np.array([r.kappa_crit for r in rec]),
            kappa_sub=np.array([r.kappa_sub for r in rec]),
            s_rel=np.array([r.s_rel for r in rec]),
            flip=np.array([r.flip for r in rec], dtype=bool),
            lam_full=np.array([r.lam for r in rows if not math.isnan(r.lam)]),
            kappa_crit_full=np.array([r.kappa_crit for r in rows]),
            max_log_ratio_full=np.array([r.max_log_ratio for r in rows]),
            flip_full=np.array([r.flip for r in rows if not math.isnan(r.lam)], dtype=bool),
            supercritical_full=np.array([r.supercritical for r in rows if not math.isnan(r.lam)], dtype=bool),
            failure=failure,
        )

    try:
        for row in _run(initial, schedule, steps, config):
            rows.append(row)
            if row.step % record_every == 0:
                kept.append(row)
    except SimulationOverflow as exc:
        exc.partial = build({"step": exc.step, "layer": exc.layer_index + 1})
        raise
    return build()


def convergence_horizon(
    initial: NetworkState,
    schedule: Schedule,
    ratio_tolerance: float,
    max_steps: int,
    config: ModelConfig = ModelConfig(),
) -> int | None:
    """First step at which every pairwise ELR ratio lies within ``1 + ratio_tolerance``."""
    if not ratio_tolerance > 0:
        raise ContractViolation("ratio_tolerance must be positive")
    bound = math.log1p(ratio_tolerance)
    for row in _run(initial, schedule, max_steps, config):
        if row.max_log_ratio <= bound:
            return row.step
    return None


def scheduler_scenarios(depth: int = 56) -> dict[str, Schedule]:
    """The scheduler line-up used for the criticality comparison.

    Hyper-parameters are plausible choices for a deep feedforward profile
    simulated for about 300 steps; they are not tuned to any curve.
    """
    return {
        "constant_small": Constant(1e-3),
        "constant_large": Constant(1.0),
        "multistep": MultiStep(1.0, (100, 200), 0.1),
        "cosine": Cosine(1.0, 300),
        "linear_warmup": Composite(((LinearWarmup(1.0, 100, div_factor=1e4), 100), (Cosine(1.0, 200), None))),
        "one_cycle": OneCycle(1.0, 300),
        "subcritical": SubcriticalWarmup(1.0),
        "subcritical_then_cosine": SubcriticalWarmup(0.9, then=Cosine(0.5, 300 - depth)),
    }
