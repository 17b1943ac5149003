"""
Large-sample behaviour
======================

For Gaussian random functions the eigenvalue estimate fluctuates like
N(0, 2 lambda^2) / sqrt(n), the eigenfunction error shrinks like 1 / sqrt(n),
and the dual-matrix eigenvalues from discrete observations approach the
exact ones as the number of design points grows.
"""

from commonfpc.simulation import run_theorem_diagnostics

d = run_theorem_diagnostics(lambdas=(10.0, 5.0), n_list=(100, 400), T_list=(25, 50, 100), trials=100,
                            seed=0, n_fixed=30, grid_size=1001)

# %%
print("Gaussian limit of Var sqrt(n)(lhat - l):", d.gaussian_limit)
for n in d.n_list:
    print(f"n = {n:4d}: variance {[round(v, 1) for v in d.eigenvalue_variance[n]]}, "
          f"mean eigenfunction error {[round(v, 4) for v in d.eigenfunction_error[n]]}")

# %%
for T in d.T_list:
    print(f"T = {T:4d}: mean |exact - dual| eigenvalue gap {[round(v, 5) for v in d.discretization_error[T]]}")
