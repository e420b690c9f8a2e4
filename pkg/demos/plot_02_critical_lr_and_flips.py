"""
Critical learning rate and flips
================================

For two layers the flipping ratio ``kappa = sigma_j sigma_k / sqrt(c_j c_k)``
is the exact learning rate at which one step swaps their ELR order. Just
below it the order is kept, just above it the order flips, and at it the
two ELRs become equal.
"""

# %%
import math

from elrdyn import (
    Constant,
    NetworkState,
    ProfileSpec,
    feedforward_profile,
    flipping_ratio,
    simulate,
    step_network,
)

state = NetworkState.from_arrays([2.0, 2.0], [3.0, 1.0])
kappa = flipping_ratio(*state.layers)
print(f"kappa = {kappa:.6f}, initial ELR ratio = {state.elrs[0] / state.elrs[1]:.3f}")
for factor in (0.5, 1 - 1e-6, 1.0, 1 + 1e-6, 2.0):
    e = step_network(state, kappa * factor).elrs
    print(f"lam = {factor:>10.6f} kappa  ->  ratio after one step {e[0] / e[1]:.9f}")

# %%
# In a 56-layer feedforward profile the critical learning rate at
# initialization is tiny (the extreme layers differ by alpha**55), so a
# constant lr of 1 is supercritical on the first step and flips the order
# once. After that the ratios shrink and never cross again.
initial = feedforward_profile(ProfileSpec("feedforward", 56))
traj = simulate(initial, Constant(1.0), 2000, record_every=100)
print(f"kappa_crit at init = {traj.kappa_crit[0]:.3e}")
print(f"flip steps: {traj.flip_steps}")
for step, spread in zip(traj.step, traj.s_rel):
    if step % 500 == 0:
        print(f"step {step:5d}: S_rel = {spread:.4f}")
print(f"max log-ratio at the end: {math.log(traj.elr[-1].max() / traj.elr[-1].min()):.4f}")
