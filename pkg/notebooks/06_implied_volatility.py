"""
Implied volatility common factors
=================================

From option quotes to a common factor model for two maturity groups:
implied volatilities by bisection, smoothing across moneyness, total
variance interpolation to fixed maturities, daily log changes, and the
eigenspace test that decides whether the groups share their factor
functions. The quotes here are synthetic (a simple smile with random daily
shocks), not market data.
"""

import numpy as np

from commonfpc.iv import OptionQuote, bs_call, generate_synthetic_quotes, implied_vol, run_iv_pipeline

# %%
# Pricing and inversion.
price = bs_call(100, 100, 1.0, 0.0, 0.2)
print("ATM call:", round(price, 4), "-> implied vol", round(implied_vol(OptionQuote(0, 100, 100, 1.0, 0.0, "call", price)), 8))

# %%
# Sixty days of quotes on four maturities, groups at 0.12 and 0.36 years.
quotes = generate_synthetic_quotes(n_days=60, seed=1)
out = run_iv_pipeline(quotes, {"1M": 0.12, "3M": 0.36}, L=2, B=250, alpha=0.05, seed=1, grid_size=200)
report = out["report"]
for label, ratios in zip(report.labels, report.variance_explained):
    print(f"{label}: {out['samples'][label].n} return curves, variance explained {np.round(ratios, 3)}")
for t in report.tests:
    print(f"{t.kind.label:>16}: D = {t.statistic:.4f}, p = {t.p_value:.3f}")
if report.pooled is not None:
    print("common model eigenvalues:", report.pooled.eigenvalues)
