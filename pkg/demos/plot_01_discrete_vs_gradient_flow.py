"""
Discrete steps versus gradient flow
===================================

Each SGD step grows a layer's squared weight norm by ``lam**2 c**2 / sigma_sq``.
As the learning rate shrinks, the discrete trajectory, measured in virtual
time ``t = steps * lam**2``, approaches ``sqrt(2 c^2 t + 4)``.
"""

# %%
import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

from elrdyn import continuous_sigma_sq, evolve_sigma_sq

T = 10.0
for lam in (1e-1, 1e-2, 1e-3):
    steps = round(T / lam**2)
    s = evolve_sigma_sq(2.0, 1.0, lam, steps)
    print(f"lam={lam:g}: sigma^2(T)={s:.8f}  error={abs(s - continuous_sigma_sq(1.0, T)):.2e}")

# %%
# The error shrinks by roughly lam**2 per decade, i.e. first order in
# virtual time step. Plot the early part of each path against the flow.
t = np.linspace(0, T, 400)
fig, ax = plt.subplots()
ax.plot(t, [continuous_sigma_sq(1.0, x) for x in t], "k", label="gradient flow")
for lam in (1.0, 0.5, 0.2):
    steps = round(T / lam**2)
    path = [2.0]
    for _ in range(steps):
        path.append(evolve_sigma_sq(path[-1], 1.0, lam, 1))
    ax.plot(np.arange(steps + 1) * lam**2, path, "o-", ms=3, label=f"lam={lam}")
ax.set_xlabel("virtual time t")
ax.set_ylabel("sigma^2")
ax.legend()
fig.savefig("discrete_vs_flow.png", dpi=120)
