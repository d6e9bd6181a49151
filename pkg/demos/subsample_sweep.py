"""
Prediction accuracy against subsample size
==========================================

Simulate the 100 x 100 grid with a 25 x 40 missing block, fit the subset
model at a few subsample sizes and watch the RMSE fall while the fit time
grows. Short chains keep this under a few minutes; the acceptance suite
runs the full-length version.
"""
import sys
from pathlib import Path

import matplotlib
matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

from sdsm.experiments import sweep
from sdsm.sampler import ModelConfig
from sdsm.simulator import SimConfig, synthesize

out = Path(sys.argv[1] if len(sys.argv) > 1 else "demo_out")
out.mkdir(parents=True, exist_ok=True)

# The field: exponential covariance with phi = 3, SNR 3, 3000 missing cells
data, truth = synthesize(SimConfig(seed=1))
targets = data.missing_index()
print(f"{data.N} cells, {targets.size} missing, realized SNR {truth.snr:.2f}")

sizes = [20, 60, 120, 240]
base = ModelConfig(n=sizes[0], G=1500, burn_in=500, seed=1)
results, gaps = sweep(data, targets, base, sizes, designs=("srs", "stratified"),
                     y_heldout=truth.y_full[targets], w_true=truth.w[targets],
                     progress=lambda pt: print(f"  {pt.design:10s} n={pt.n:3d} rmse={pt.scores.rmse:.3f} "
                                               f"fit={pt.fit_seconds:.1f}s"))

fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(9, 3.5))
for design, points in results.items():
    ax1.plot(sizes, [p.scores.rmse for p in points], "o-", label=design)
    ax2.plot(sizes, [p.fit_seconds for p in points], "o-", label=design)
ax1.set(xlabel="n", ylabel="RMSE")
ax2.set(xlabel="n", ylabel="fit seconds")
ax1.legend()
fig.tight_layout()
fig.savefig(out / "sweep.png", dpi=120)

# Gaps between consecutive prediction surfaces shrink as n grows
for design, g in gaps.items():
    print(design, "gaps", np.round(g, 2).tolist())

# Prediction surface at the largest n next to the truth, for the block only
best = results["srs"][-1].latent_mean
surface = np.full(data.N, np.nan)
surface[targets] = best
truth_map = np.where(truth.missing, truth.w, np.nan)
fig, axes = plt.subplots(1, 2, figsize=(8, 4))
for ax, img, title in zip(axes, (truth_map, surface), ("true process", f"prediction, n={sizes[-1]}")):
    ax.imshow(img.reshape(100, 100), origin="lower", cmap="viridis")
    ax.set_title(title)
fig.savefig(out / "block.png", dpi=120)
print("figures in", out)
