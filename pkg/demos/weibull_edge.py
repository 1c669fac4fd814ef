"""
Largest eigenvalue in the Weibull regime
========================================

A small Monte Carlo run at lambda=2: the largest eigenvalue tracks the
largest potential value, and both rescaled gaps are compared with the
Weibull law G_3.  N is kept small so this runs in well under a minute; the
agreement with the limit law is correspondingly rough.
"""
import numpy as np

from spectral_lab import ExperimentConfig, edge_constants, run_experiment
from spectral_lab.experiments import edge_samples, weibull_cdf

cfg = ExperimentConfig(a=2, b=2, lam=2.0, n=300, trials=60, mode="weibull", master_seed=31)
records, summary = run_experiment(cfg)
ec = edge_constants(cfg.measure(), cfg.lam)

mu_side, v_side = edge_samples(records, ec, cfg.n)
print("first trials (mu side, v side):")
for a, b in list(zip(mu_side, v_side))[:5]:
    print(f"  {a:8.4f} {b:8.4f}")

print("KS(mu side, G_3) =", round(summary.ks_weibull, 3))
print("KS(v side, G_3)  =", round(summary.ks_weibull_v, 3))
print("KS(mu side, v side) =", round(summary.ks_coupling, 3))

# empirical vs limiting quartiles of the v side
qs = np.quantile(v_side, [0.25, 0.5, 0.75])
grid = np.linspace(0, 3, 3001)
limit = [grid[np.searchsorted(weibull_cdf(grid, 2.0, ec.c_mu), p)] for p in (0.25, 0.5, 0.75)]
print("v-side quartiles", np.round(qs, 3), "limit", np.round(limit, 3))
