"""Noisy sigmoid under bounds and monotonicity, and the cost of finer knots.

Run with ``python notebooks/sigmoid_constraints.py``.
"""

import time
import warnings
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

from ineqgp import datasets, diagnostics, emulator

OUT = Path(__file__).with_name("out")
OUT.mkdir(exist_ok=True)

# Noisy data break bounds and ordering; the noise term absorbs that.
warnings.simplefilter("ignore", emulator.ObservationWarning)

data = datasets.sigmoid_data(n=300, noise=0.1, seed=0)
x = np.linspace(0, 1, 201)[:, None]
truth = datasets.sigmoid(x[:, 0])

# Adding constraints one at a time.
levels = {
    "none": [],
    "bounds": ["bounds(0,1)"],
    "bounds+monotone": ["bounds(0,1)", "monotone(dim=1,up)"],
}
fits = {}
for label, cons in levels.items():
    model = emulator.fit(data.x, data.y, kernel="se", knots=50, constraints=cons,
                         domain=[[0.0, 1.0]], seed=0)
    pred = emulator.predict(model, x, sampler="hmc", count=500, seed=1)
    fits[label] = pred
    print(f"{label:16s} Q2 {diagnostics.q2(truth, pred.mean):.4f}")

# Knot resolution trades accuracy against CPU time.
for m in (5, 25, 100):
    t0 = time.process_time()
    model = emulator.fit(data.x, data.y, kernel="se", knots=m,
                         constraints=levels["bounds+monotone"], minimal=True,
                         domain=[[0.0, 1.0]], seed=0)
    pred = emulator.predict(model, x, sampler="hmc", count=500, seed=1)
    print(f"m={m:3d}  Q2 {diagnostics.q2(truth, pred.mean):.4f}  "
          f"cpu {time.process_time() - t0:.2f} s")

fig, ax = plt.subplots(figsize=(6, 3.5))
ax.plot(data.x, data.y, ".", color="0.7", ms=3)
ax.plot(x, truth, "k", lw=1, label="truth")
for label, pred in fits.items():
    ax.plot(x, pred.mean, label=label)
ax.legend()
fig.savefig(OUT / "sigmoid.png", dpi=120, bbox_inches="tight")
