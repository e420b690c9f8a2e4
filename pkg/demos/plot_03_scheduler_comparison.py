"""
Comparing learning-rate schedules
=================================

Run the standard schedule line-up on a 56-layer feedforward profile and
track the cross-layer spread S_rel (std of log ELR). Schedules that spend
steps above the critical learning rate flip the ELR order; the subcritical
warm-up equalizes every layer in at most L steps without a flip.
"""

# %%
import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt

from elrdyn import ProfileSpec, feedforward_profile, scheduler_scenarios, simulate

initial = feedforward_profile(ProfileSpec("feedforward", 56))
fig, (ax_lr, ax_spread) = plt.subplots(2, 1, sharex=True, figsize=(7, 7))
for name, schedule in scheduler_scenarios(56).items():
    traj = simulate(initial, schedule, 300)
    horizon = traj.convergence_horizon(1e-9)
    print(f"{name:24s} flips={traj.total_flips}  horizon={horizon}  final S_rel={traj.s_rel[-1]:.3e}")
    ax_lr.semilogy(traj.step[:-1], traj.lam[:-1], label=name)
    ax_spread.semilogy(traj.step, traj.s_rel + 1e-17)

# %%
# The critical learning rate of the constant-lr run, for reference.
traj = simulate(initial, scheduler_scenarios(56)["constant_small"], 300)
ax_lr.semilogy(traj.step, traj.kappa_crit, "k--", label="kappa_crit (lr=1e-3)")
ax_lr.set_ylabel("learning rate")
ax_lr.legend(fontsize=7)
ax_spread.set_ylabel("S_rel")
ax_spread.set_xlabel("step")
fig.savefig("scheduler_comparison.png", dpi=120)
