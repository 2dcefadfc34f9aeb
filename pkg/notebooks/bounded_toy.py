"""Bounded emulation of five points: the mode, the samplers and their ESS.

Run with ``python notebooks/bounded_toy.py``; figures go to ``notebooks/out/``.
"""

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

from ineqgp import datasets, diagnostics, emulator, tmvn

OUT = Path(__file__).with_name("out")
OUT.mkdir(exist_ok=True)

# Five observations in [0, 1]; the response stays inside [-1, 1].
data = datasets.five_point_toy()
print(np.column_stack([data.x, data.y]))

# 100 knots, Matern 5/2 with the variance held at 10, tau2 by maximum likelihood.
model = emulator.fit(data.x, data.y, kernel="matern52", knots=100,
                     constraints=["bounds(-0.75,0.75)"], fixed={"sigma2": 10.0}, seed=0)
print("lengthscale", model.kernel.lengthscales, "tau2", model.tau2)

x = np.linspace(0, 1, 201)[:, None]

# All three samplers target the same truncated Gaussian over the knots.
for name, kw in (("rsm", {}), ("gibbs", {"thinning": 200}), ("hmc", {})):
    chain = emulator.sample_knots(model, name, 2000, seed=1, **kw)
    rep = diagnostics.ess_report(chain)
    print(f"{name:6s} acceptance {chain.acceptance_rate:.3f}  "
          f"ESS q10/q50/q90 {np.round(rep.quantiles).astype(int)}")

# As the band narrows the unconstrained mean leaves it, the mode (a quadratic
# program over the knot values) is pushed onto the bound, and RSM acceptance falls.
for alpha in (1.0, 0.75, 0.6, 0.55):
    m = emulator.fit(data.x, data.y, kernel="matern52", knots=100,
                     constraints=[f"bounds({-alpha},{alpha})"], fixed={"sigma2": 10.0}, seed=0)
    acc, props = tmvn.rsm_acceptance(m.truncated(), 100_000, seed=0,
                                     whitened_mode=m.mode_whitened)
    print(f"alpha {alpha:4}: mean min {m.mean_curve(x).min():+.3f}  "
          f"mode min {m.mode_curve(x).min():+.3f}  RSM acceptance {acc / props:.2e}")

pred = emulator.predict(model, x, sampler="hmc", count=2000, seed=2)
fig, ax = plt.subplots(figsize=(6, 3.5))
ax.fill_between(x[:, 0], pred.lower, pred.upper, alpha=0.3, label="95% band")
ax.plot(x[:, 0], pred.mean, label="mean")
ax.plot(x[:, 0], pred.mode, "--", label="mode")
ax.axhline(0.75, color="k", lw=0.5)
ax.axhline(-0.75, color="k", lw=0.5)
ax.plot(data.x, data.y, "ko")
ax.legend()
fig.savefig(OUT / "bounded_toy.png", dpi=120, bbox_inches="tight")
