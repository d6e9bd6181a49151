"""
Is one Gibbs scan per subsample enough?
=======================================

The composite sampler redraws the subsample every iteration. With K = 1
it runs a single Gibbs scan per subsample; larger K lets the chain settle
on each subsample first. When n is large the subsample posterior hardly
depends on which cells were drawn, so the marginals for K = 1 and K = 5
should coincide. At very small n the regression coefficients become
uncertain enough that their intervals cover zero.
"""
import numpy as np

from sdsm.diagnostics import straddles_zero
from sdsm.experiments import k_diagnostic
from sdsm.sampler import ModelConfig, run_composite
from sdsm.simulator import SimConfig, synthesize

data, _ = synthesize(SimConfig(seed=7))

for r, rows, _, _ in k_diagnostic(data, ModelConfig(n=280, G=2000, burn_in=500, seed=70), [1, 5]):
    for row in rows:
        if row.K == 5:
            verdict = "ok" if row.below else "differs"
            print(f"{row.parameter:7s} KS={row.ks:.3f} critical={row.critical:.3f} {verdict}")

small = run_composite(ModelConfig(n=10, G=3000, burn_in=500, seed=71, keep_draws=False), data, [0])
beta = small.kept("beta")
print("n=10 95% intervals:", np.round(np.quantile(beta, [0.025, 0.975], axis=0).T, 2).tolist())
print("straddle zero:", [straddles_zero(beta[:, j]) for j in range(beta.shape[1])])
