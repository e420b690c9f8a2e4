import math

import numpy as np
import pytest

from elrdyn.core import ConfigurationError, elr_ratio
from elrdyn.metrics import s_rel
from elrdyn.profiles import (
    DEFAULT_ALPHA,
    ProfileSpec,
    build_profile,
    explicit_profile,
    feedforward_profile,
    resnet_profile,
    uniform_profile,
)


def test_default_alpha():
    assert DEFAULT_ALPHA == pytest.approx(1.2112, abs=1e-4)


def test_feedforward_small():
    assert feedforward_profile(ProfileSpec("feedforward", 1)).c.tolist() == [1.0]
    c = feedforward_profile(ProfileSpec("feedforward", 3)).c
    assert c == pytest.approx([1.4669, 1.2112, 1.0], abs=1e-4)
    assert c == pytest.approx([DEFAULT_ALPHA**2, DEFAULT_ALPHA, 1.0], rel=1e-15)


def test_feedforward_deep_is_finite():
    state = feedforward_profile(ProfileSpec("feedforward", 110))
    assert state.c[0] == pytest.approx(DEFAULT_ALPHA**109, rel=1e-12)
    assert 1.0e9 < state.c[0] < 1.3e9
    assert np.all(np.diff(state.c) < 0)
    assert state.step_index == 0 and state.elapsed_time == 0.0
    assert np.all(state.sigma_sq == 2.0)


def test_resnet_profile():
    a = DEFAULT_ALPHA
    c = resnet_profile(ProfileSpec("resnet", 5, block_size=2)).c
    assert c == pytest.approx([1 + 2 * a**2, 1 + a**2, 1 + a**2, 1.0, 1.0], rel=1e-15)
    deep = resnet_profile(ProfileSpec("resnet", 110, block_size=2)).c
    assert deep[-1] == 1.0
    assert np.all(np.diff(deep) <= 0)
    # linear (not exponential) growth with depth
    assert deep[0] == pytest.approx(1 + 54 * a**2)


def test_uniform_and_explicit():
    state = uniform_profile(ProfileSpec("uniform", 4))
    assert s_rel(state.elrs) == 0.0
    state = explicit_profile(ProfileSpec.from_c([1.0, 1.0, 1.0]))
    assert s_rel(state.elrs) == 0.0
    two = explicit_profile(ProfileSpec.from_c([2.0, 1.0]))
    assert elr_ratio(two.layers[0], two.layers[1]) == 2.0
    per_layer = build_profile(ProfileSpec.from_c([1.0, 2.0], sigma_sq=[3.0, 4.0]))
    assert per_layer.sigma_sq.tolist() == [3.0, 4.0]


@pytest.mark.parametrize(
    "kwargs",
    [
        dict(kind="explicit", depth=3, explicit_c=(1.0, 0.0, 1.0)),
        dict(kind="explicit", depth=2, explicit_c=(1.0, 1.0, 1.0)),
        dict(kind="explicit", depth=2),
        dict(kind="feedforward", depth=0),
        dict(kind="resnet", depth=4, block_size=0),
        dict(kind="bogus", depth=2),
        dict(kind="uniform", depth=2, initial_sigma_sq=-1.0),
    ],
)
def test_invalid_specs(kwargs):
    with pytest.raises(ConfigurationError):
        build_profile(ProfileSpec(**kwargs))


def test_wrong_builder():
    with pytest.raises(ConfigurationError):
        resnet_profile(ProfileSpec("feedforward", 3))


@pytest.mark.parametrize("depth", [2, 10, 56, 110])
def test_initial_spread_linear_in_depth(depth):
    state = feedforward_profile(ProfileSpec("feedforward", depth))
    expected = math.log(DEFAULT_ALPHA) * math.sqrt((depth**2 - 1) / 12)
    assert s_rel(state.elrs) == pytest.approx(expected, rel=1e-12)
