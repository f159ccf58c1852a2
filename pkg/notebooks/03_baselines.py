"""
Baselines on a small benchmark
==============================

Spectral thresholding and constant-block least squares against Borda count
on a non-symmetric signal, plus the exhaustive estimator on a tiny matrix.
"""

# %%
import numpy as np
import permsmooth as ps

cfg = ps.ExperimentConfig(
    model_id=1, symmetric=False, dims=(30, 40, 50),
    methods=("borda", "blocklse", "spectral"),
    k_grid=(1, 2, 3), l_grid=(2,), per_mode_grid=True,
    lse_k_grid=(2, 4, 6, 8), spectral_modes=(1, 2, 3),
    replicates=2, master_seed=1,
)
report = ps.run_simulation(cfg)
for row in report.summary:
    print(f"{row['method']:9s} mse={row['mse']:.2e}  best cell {row['params']}")

# %% the exhaustive search is exact but only feasible for tiny d
Y = ps.DenseTensor(np.random.default_rng(0).normal(size=(6, 6)))
exact = ps.exhaustive_lse(Y, 2, 0)
fast = ps.borda_denoise(Y, 2, 0)
print("exhaustive objective", exact.objective, "Borda objective", fast.objective)
