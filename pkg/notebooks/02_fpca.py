"""
Functional principal components
===============================

Fit principal components to directly observed curves and to noisy discrete
observations of the same curves, then pick a bandwidth by cross-validation.
"""

import numpy as np

from commonfpc.fpca import cv_select_bandwidth, fpca_dual, fpca_exact, variance_explained
from commonfpc.simulation import SimulationConfig, generate_two_samples

# %%
# Sample 1 of the setup (a) design: X = b1 sqrt2 sin(2 pi t) + b2 sqrt2 cos(2 pi t)
# with Var b1 = 10, Var b2 = 5.
exact = generate_two_samples(SimulationConfig(n=100, T=100, seed=3))
noisy = generate_two_samples(SimulationConfig(n=100, T=100, noise_sd=0.5, seed=3))

fit = fpca_exact(exact.grid1, 3)
print("exact eigenvalues:", np.round(fit.eigenvalues, 3))
print("variance explained:", np.round(variance_explained(fit, 3), 3))

# %%
# The dual-matrix estimator from noisy discrete data. The eigenvalues come
# from the step-function Gram matrix (with the lagged diagonal), the
# eigenfunctions from the smoothed curves.
dual = fpca_dual(noisy.discrete1, 0.05, 3, smoother="nw", grid=(0, 1, 500))
print("dual eigenvalues: ", np.round(dual.eigenvalues, 3))
print("eigenvalues of the loadings:", np.round(np.linalg.eigvalsh(np.cov(noisy.loadings1.T, bias=True))[::-1], 3))

# %%
# Angle between estimated and true first eigenfunction.
t = dual.eigenfunction(1).nodes
g1 = np.sqrt(2) * np.sin(2 * np.pi * t)
w = dual.eigenfunction(1).weights
print("|<gamma1_hat, gamma1>| =", round(abs(np.dot(w, dual.eigenfunction(1).values * g1)), 4))

# %%
# Leave-one-curve-out cross-validation over a few bandwidths.
b, crit = cv_select_bandwidth(noisy.discrete1[:40], 2, [0.05, 0.1, 0.2], smoother="local_linear",
                              grid=(0, 1, 200))
print("cv choice:", b, {k: round(v, 4) for k, v in zip([0.05, 0.1, 0.2], crit)})
