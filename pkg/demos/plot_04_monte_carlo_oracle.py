"""
Random-walk Monte Carlo against the expectation model
=====================================================

Replace every gradient with a Gaussian matrix of the model's expected
norm, projected orthogonal to the weights, and average over trials. The
ensemble mean of the squared weight norm follows the deterministic
recurrence within a few standard errors.
"""

# %%
import numpy as np

from elrdyn import Constant, McConfig, ProfileSpec, deviation_report, feedforward_profile, mc_ensemble, simulate

initial = feedforward_profile(ProfileSpec("feedforward", 2))
schedule = Constant(0.1)
ens = mc_ensemble(initial, schedule, 100, McConfig(rows=64, cols=64, trials=128, seed=0))
model = simulate(initial, schedule, 100)
report = deviation_report(ens, model)
for key in ("max_relative_deviation", "cells_outside_n_sigma", "max_abs_cosine", "trials_used"):
    print(f"{key:24s} {report[key]}")

# %%
# z-scores of the ensemble mean at a few steps.
z = (ens.mean_wnorm_sq - model.sigma_sq) / ens.stderr("wnorm_sq")
for step in (1, 10, 50, 100):
    print(f"step {step:3d}: z = {np.array2string(z[step], precision=2)}")
