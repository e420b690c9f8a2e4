"""
Constraining the ELR
====================

Rescale every gradient so its layer's ELR equals a common goal and divide
all weights by the largest weight norm before each step. The measured
ELRs then agree across layers from the first step on, and the largest
weight norm stays at one.
"""

# %%
import numpy as np

from elrdyn import ConstrainPolicy, Constant, McConfig, ProfileSpec, feedforward_profile, mc_ensemble

initial = feedforward_profile(ProfileSpec("feedforward", 4))
cfg = McConfig(rows=64, cols=64, trials=16, seed=0,
               constrain=ConstrainPolicy(e_goal=0.01), renormalize_weights=True)
ens = mc_ensemble(initial, Constant(0.1), 50, cfg, keep_trials=True)

spread = np.std(np.log(ens.per_trial["elr"]), axis=2)
max_norm = np.sqrt(ens.per_trial["wnorm_sq"].max(axis=2))
print(f"initial ELRs (unconstrained model): {initial.elrs}")
print(f"largest per-trial S_rel over all steps: {spread.max():.2e}")
print(f"largest |max ||W|| - 1|: {np.abs(max_norm - 1).max():.2e}")
print(f"mean ELR at the last step: {ens.mean_elr[-1]}")
