"""
Monte-Carlo power study
=======================

Rejection rates of the eigenfunction test as the shift grows. The packaged
study file holds the three rows used for the acceptance runs; here a reduced
version runs in well under a minute. For the real thing use::

    commonfpc simulate --study studies/tables12.json --profile full --output-prefix out
"""

from pathlib import Path

from commonfpc.simulation import load_study, run_power_study

study = load_study(Path(__file__).resolve().parents[1] / "studies" / "tables12.json")

# %%
# First row only, 40 trials with 100 bootstrap replicates each.
table = run_power_study(study.rows[:1], study.deltas, trials=40, B=100, alpha=study.alpha, seed=study.seed,
                        n=study.n, T=study.T)
print(table)
