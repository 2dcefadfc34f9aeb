"""Two-input monotone surface on a tensor grid of hat functions.

Run with ``python notebooks/tensor_2d.py``.
"""

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

from ineqgp import datasets, demos, diagnostics, emulator

OUT = Path(__file__).with_name("out")
OUT.mkdir(exist_ok=True)

# f(x1, x2) = x1 + x2**2 is positive and increasing in both inputs.
data = datasets.surface_2d_data(per_axis=30, noise=0.01, seed=0)
train, test = datasets.split(data, 0.2, seed=0)
print("train", train.x.shape, "test", test.x.shape)

cons = ["positive", "monotone(dim=1,up)", "monotone(dim=2,up)"]
model = emulator.fit_tensor(train.x, train.y, knots=(8, 8), constraints=cons, seed=0)
free = emulator.fit_tensor(train.x, train.y, knots=(8, 8), seed=0)

for label, m in (("constrained", model), ("unconstrained", free)):
    pred = emulator.predict(m, test.x, sampler="hmc", count=500, seed=1)
    print(f"{label:14s} Q2 {diagnostics.q2(test.truth, pred.mean):.5f}")

# Every sampled surface is monotone along both axes on a fine grid.
axis = np.linspace(0, 1, 30)
grid = np.array(np.meshgrid(axis, axis, indexing="ij")).reshape(2, -1).T
paths = emulator.sample_paths(model, "hmc", 200, points=grid, seed=2).paths
print("monotonicity violations", demos.monotone_violations(paths, (30, 30), (0, 1)))

fig, axs = plt.subplots(1, 2, figsize=(8, 3.5))
for ax, m, title in zip(axs, (model, free), ("constrained", "unconstrained")):
    im = ax.imshow(m.mode_curve(grid).reshape(30, 30).T, origin="lower", extent=(0, 1, 0, 1))
    ax.set_title(title)
    fig.colorbar(im, ax=ax)
fig.savefig(OUT / "tensor_2d.png", dpi=120, bbox_inches="tight")
