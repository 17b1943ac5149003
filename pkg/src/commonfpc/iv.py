"""Implied-volatility curves and a common factor model for their daily changes.

Quotes are inverted to Black-Scholes implied volatilities (zero dividends),
smoothed over futures moneyness ``kappa = K / (S exp(r tau))`` on [0.8, 1.1],
interpolated to fixed maturities linearly in total variance, and differenced
in logs from one day to the next. The resulting samples of return curves are
compared with the two-sample tests and, when their eigenspaces agree, fitted
jointly.
"""

from __future__ import annotations

import csv
import datetime as _dt
import math
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np
import scipy.optimize

from .core import GridFunction, norm_cdf
from .exceptions import (
    BracketExceededError,
    InsufficientDataError,
    NoSolutionError,
    OutOfRangeError,
    ValidationError,
)
from .fpca import FpcaFit, fpca_exact, prepare_exact, variance_explained
from .rng import stream
from .smoothing import DiscreteCurve, nadaraya_watson, smallest_covering_bandwidth
from .twosample import TestKind, TestReport, _bootstrap

MONEYNESS = (0.8, 1.1)
GRID_SIZE = 500
MIN_TAU = 10 / 365  # ACT/365
SIGMA_BRACKET = (1e-4, 5.0)
SIGMA_XTOL = 1e-8
GROUP_TAUS = {"1M": 0.12, "3M": 0.36}


def _date_key(date):
    if isinstance(date, (int, np.integer)):
        return int(date)
    return _dt.date.fromisoformat(str(date)).toordinal()


def parse_date(text: str):
    """Integer day index or ISO-8601 date string, validated."""
    text = str(text).strip()
    try:
        return int(text)
    except ValueError:
        pass
    try:
        _dt.date.fromisoformat(text)
    except ValueError:
        raise ValidationError(f"cannot parse date {text!r}") from None
    return text


def _check_positive(**kw):
    for name, v in kw.items():
        if not (math.isfinite(v) and v > 0):
            raise ValidationError(f"{name} must be positive and finite, got {v}")


def call_bounds(S, K, tau, r) -> tuple[float, float]:
    return max(S - K * math.exp(-r * tau), 0.0), S


def put_bounds(S, K, tau, r) -> tuple[float, float]:
    disc = K * math.exp(-r * tau)
    return max(disc - S, 0.0), disc


@dataclass(frozen=True)
class OptionQuote:
    """A European option premium observed on ``date``.

    Prices outside the static no-arbitrage bounds of their kind are rejected.
    """

    date: object
    spot: float
    strike: float
    tau: float
    rate: float
    kind: str
    price: float

    def __post_init__(self):
        _check_positive(spot=self.spot, strike=self.strike, tau=self.tau, price=self.price)
        if not math.isfinite(self.rate):
            raise ValidationError("rate must be finite")
        if self.kind not in ("call", "put"):
            raise ValidationError(f"kind must be 'call' or 'put', got {self.kind!r}")
        lo, hi = (call_bounds if self.kind == "call" else put_bounds)(self.spot, self.strike, self.tau, self.rate)
        if not lo <= self.price <= hi:
            raise OutOfRangeError(
                f"{self.kind} price {self.price} outside no-arbitrage bounds [{lo:.6g}, {hi:.6g}]"
            )

    @property
    def forward(self) -> float:
        return self.spot * math.exp(self.rate * self.tau)

    @property
    def moneyness(self) -> float:
        return self.strike / self.forward


def _bs_prices(S, K, tau, r, sigma) -> tuple[float, float]:
    _check_positive(S=S, K=K, tau=tau, sigma=sigma)
    if not math.isfinite(r):
        raise ValidationError("rate must be finite")
    disc = K * math.exp(-r * tau)
    if sigma <= 1e-12:
        return max(S - disc, 0.0), max(disc - S, 0.0)
    sd = sigma * math.sqrt(tau)
    d1 = (math.log(S / K) + (r + 0.5 * sigma * sigma) * tau) / sd
    # the out-of-the-money premium from the normal tails, the other by parity;
    # the direct in-the-money formula cancels and can dip below intrinsic
    if S < disc:
        call = float(S * norm_cdf(d1) - disc * norm_cdf(d1 - sd))
        return call, call - S + disc
    put = float(disc * norm_cdf(sd - d1) - S * norm_cdf(-d1))
    return put + S - disc, put


def bs_call(S: float, K: float, tau: float, r: float, sigma: float) -> float:
    """Black-Scholes call premium without dividends.

    Volatilities at or below ``1e-12`` return the discounted intrinsic value.
    """
    return _bs_prices(S, K, tau, r, sigma)[0]


def bs_put(S: float, K: float, tau: float, r: float, sigma: float) -> float:
    """Put premium, tied to :func:`bs_call` by put-call parity."""
    return _bs_prices(S, K, tau, r, sigma)[1]


def implied_vol(q: OptionQuote) -> float:
    """Volatility that reproduces the quoted premium, by bisection on [1e-4, 5].

    Puts are matched against :func:`bs_put`: the parity-converted call
    equation, same root, without the cancellation of adding ``S - K e^{-r tau}``
    to a small premium.

    Raises
    ------
    NoSolutionError
        Premium at or beyond the no-arbitrage bounds.
    BracketExceededError
        The solution lies outside the search interval.
    """
    S, K, tau, r, price = q.spot, q.strike, q.tau, q.rate, q.price
    pricer, bounds = (bs_call, call_bounds) if q.kind == "call" else (bs_put, put_bounds)
    lo, hi = bounds(S, K, tau, r)
    if not lo < price < hi:
        raise NoSolutionError(f"premium {q.price} is not strictly inside the no-arbitrage bounds")
    f = lambda s: pricer(S, K, tau, r, s) - price
    a, b = SIGMA_BRACKET
    fa, fb = f(a), f(b)
    if fa > 0:
        raise BracketExceededError(f"implied volatility below {a} (premium too close to intrinsic value)")
    if fb < 0:
        raise BracketExceededError(f"implied volatility above {b}")
    if fa == 0:
        return a
    if fb == 0:
        return b
    return float(scipy.optimize.bisect(f, a, b, xtol=SIGMA_XTOL, maxiter=200))


@dataclass(frozen=True, eq=False)
class IvCurve:
    """Implied volatility over moneyness for one date and maturity.

    ``sources`` lists the observed maturities the curve was built from and
    ``warnings`` carries non-fatal diagnostics such as calendar arbitrage.
    """

    date: object
    tau: float
    curve: GridFunction
    sources: tuple = ()
    warnings: tuple = ()

    def __post_init__(self):
        _check_positive(tau=self.tau)
        if self.curve.domain != MONEYNESS:
            raise ValidationError(f"IV curves live on moneyness {MONEYNESS}, got {self.curve.domain}")
        if not np.all(self.curve.values > 0):
            raise ValidationError("implied volatilities must be positive")
        if not self.sources:
            object.__setattr__(self, "sources", (float(self.tau),))


def interpolate_total_variance(curves: Sequence[IvCurve], target_tau: float, atol: float = 1e-12) -> IvCurve:
    """IV curve at ``target_tau`` from linear interpolation of ``sigma^2 tau``.

    The bracketing maturities are the nearest observed ones on each side. A
    curve observed at the target is returned unchanged. Where total variance
    decreases with maturity the result carries a calendar-arbitrage warning.
    """
    if not curves:
        raise InsufficientDataError("no curves to interpolate")
    date = curves[0].date
    if any(c.date != date for c in curves):
        raise ValidationError("curves must share the same date")
    for c in curves:
        if abs(c.tau - target_tau) <= atol:
            return c
    below = [c for c in curves if c.tau < target_tau]
    above = [c for c in curves if c.tau > target_tau]
    if not below or not above:
        taus = sorted(c.tau for c in curves)
        raise OutOfRangeError(f"maturity {target_tau} outside observed range [{taus[0]}, {taus[-1]}]")
    lo = max(below, key=lambda c: c.tau)
    hi = min(above, key=lambda c: c.tau)
    if not lo.curve.same_grid(hi.curve):
        raise ValidationError("curves must share the moneyness grid")
    v_lo = lo.curve.values**2 * lo.tau
    v_hi = hi.curve.values**2 * hi.tau
    w = (hi.tau - target_tau) / (hi.tau - lo.tau)
    v = w * v_lo + (1 - w) * v_hi
    warnings = []
    bad = np.flatnonzero(v_hi < v_lo)
    if bad.size:
        warnings.append(
            f"calendar arbitrage between tau={lo.tau:g} and tau={hi.tau:g} at {bad.size} moneyness node(s)"
        )
    return IvCurve(date, float(target_tau), lo.curve.with_values(np.sqrt(v / target_tau)),
                   (float(lo.tau), float(hi.tau)), tuple(warnings))


def read_quotes_csv(path, min_tau: float = MIN_TAU) -> tuple[list[OptionQuote], int]:
    """Read ``date,spot,strike,tau,rate,kind,price`` rows.

    Returns the quotes with ``tau >= min_tau`` and the number dropped by that
    filter. Malformed rows or arbitrage violations raise
    :class:`ValidationError` with the line number.
    """
    quotes, dropped = [], 0
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        need = {"date", "spot", "strike", "tau", "rate", "kind", "price"}
        missing = need - set(reader.fieldnames or ())
        if missing:
            raise ValidationError(f"{path}: missing column(s) {sorted(missing)}")
        for lineno, row in enumerate(reader, start=2):
            try:
                q = OptionQuote(parse_date(row["date"]), float(row["spot"]), float(row["strike"]),
                                float(row["tau"]), float(row["rate"]), row["kind"].strip().lower(),
                                float(row["price"]))
            except (TypeError, ValueError) as exc:
                raise ValidationError(f"{path}:{lineno}: {exc}") from None
            if q.tau < min_tau:
                dropped += 1
                continue
            quotes.append(q)
    if len({type(q.date) for q in quotes}) > 1:
        raise ValidationError(f"{path}: mixed integer and ISO dates")
    return quotes, dropped


def write_quotes_csv(path, quotes: Sequence[OptionQuote]) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["date", "spot", "strike", "tau", "rate", "kind", "price"])
        for q in quotes:
            writer.writerow([q.date, repr(q.spot), repr(q.strike), repr(q.tau), repr(q.rate), q.kind, repr(q.price)])


def quotes_to_iv_curves(quotes: Sequence[OptionQuote], grid_size: int = GRID_SIZE
                        ) -> tuple[dict, list[str]]:
    """Smoothed IV curves per date and maturity.

    Implied volatilities at observed moneyness inside [0.8, 1.1] are smoothed
    by Nadaraya-Watson with the smallest bandwidth that leaves no grid node
    with an empty window. Quotes without an implied volatility and
    (date, maturity) slices with fewer than two usable points are skipped.

    Returns
    -------
    surfaces : dict
        ``date -> list[IvCurve]`` sorted by maturity, dates in order.
    skipped : list of str
        One message per skipped quote or slice.
    """
    slices: dict = {}
    skipped = []
    for q in quotes:
        k = q.moneyness
        if not MONEYNESS[0] <= k <= MONEYNESS[1]:
            continue
        try:
            sigma = implied_vol(q)
        except (NoSolutionError, BracketExceededError) as exc:
            skipped.append(f"date {q.date} tau {q.tau:g} strike {q.strike:g}: {exc}")
            continue
        slices.setdefault((q.date, q.tau), []).append((k, sigma))
    grid = (MONEYNESS[0], MONEYNESS[1], grid_size)
    surfaces: dict = {}
    for (date, tau), pts in sorted(slices.items(), key=lambda kv: (_date_key(kv[0][0]), kv[0][1])):
        if len({k for k, _ in pts}) < 2:
            skipped.append(f"date {date} tau {tau:g}: fewer than 2 distinct moneyness points")
            continue
        arr = np.array(pts)
        dc = DiscreteCurve(arr[:, 0], arr[:, 1], *MONEYNESS)
        smooth = nadaraya_watson(dc, smallest_covering_bandwidth(dc, grid), grid=grid)
        surfaces.setdefault(date, []).append(IvCurve(date, float(tau), smooth))
    return surfaces, skipped


@dataclass(frozen=True, eq=False)
class LogReturnSample:
    """Daily log-IV changes at one fixed maturity.

    ``dates[i]`` is the pair of consecutive dates behind ``curves[i]``.
    """

    label: str
    tau: float
    curves: list
    dates: list = field(default_factory=list)
    skipped: list = field(default_factory=list)
    warnings: list = field(default_factory=list)

    def __post_init__(self):
        if not self.curves:
            raise InsufficientDataError(f"group {self.label}: no return curves")

    @property
    def n(self) -> int:
        return len(self.curves)


def build_log_return_samples(surfaces, group_taus: Mapping[str, float] | None = None
                             ) -> dict[str, LogReturnSample]:
    """Per-group samples of ``log sigma_{i+1}(kappa) - log sigma_i(kappa)``.

    ``surfaces`` maps dates to IV curves (or is a sequence of ``(date,
    curves)`` pairs). Each group's curve on a date is interpolated to its
    maturity; a date where any group cannot be interpolated is skipped along
    with both pairs that touch it.

    Raises
    ------
    ValidationError
        Two groups draw on the same observed maturity on some date.
    InsufficientDataError
        Fewer than two usable dates or no consecutive usable pair.
    """
    group_taus = dict(GROUP_TAUS if group_taus is None else group_taus)
    items = sorted((surfaces.items() if isinstance(surfaces, Mapping) else surfaces), key=lambda kv: _date_key(kv[0]))
    per_date, skipped, warnings = [], [], []
    for date, curves in items:
        try:
            interp = {g: interpolate_total_variance(curves, tau) for g, tau in group_taus.items()}
        except (OutOfRangeError, InsufficientDataError) as exc:
            skipped.append(f"date {date}: {exc}")
            per_date.append((date, None))
            continue
        labels = list(interp)
        for a in range(len(labels)):
            for b in range(a + 1, len(labels)):
                shared = set(interp[labels[a]].sources) & set(interp[labels[b]].sources)
                if shared:
                    raise ValidationError(
                        f"date {date}: groups {labels[a]} and {labels[b]} both use maturity {sorted(shared)}"
                    )
        warnings += [f"date {date} group {g}: {w}" for g, c in interp.items() for w in c.warnings]
        per_date.append((date, interp))
    usable = sum(1 for _, v in per_date if v is not None)
    if usable < 2:
        raise InsufficientDataError(f"need at least 2 usable dates, got {usable}")
    out = {g: ([], []) for g in group_taus}
    for (d0, s0), (d1, s1) in zip(per_date[:-1], per_date[1:]):
        if s0 is None or s1 is None:
            continue
        for g in group_taus:
            c0, c1 = s0[g].curve, s1[g].curve
            out[g][0].append(c0.with_values(np.log(c1.values) - np.log(c0.values)))
            out[g][1].append((d0, d1))
    if not out[next(iter(group_taus))][0]:
        raise InsufficientDataError("no pair of consecutive usable dates")
    return {g: LogReturnSample(g, float(group_taus[g]), curves, dates, list(skipped), list(warnings))
            for g, (curves, dates) in out.items()}


@dataclass(frozen=True, eq=False)
class CommonFactorReport:
    """Per-group fits, their comparison, and the pooled fit when it is warranted.

    ``pooled`` is ``None`` when the eigenspace test rejects. Otherwise it is
    the fit to the group-centered curves of both samples and
    ``pooled_scores`` holds each group's loadings on the common functions.
    """

    labels: tuple
    L: int
    fits: tuple
    variance_explained: tuple
    tests: list
    pooled: FpcaFit | None
    pooled_scores: tuple | None

    @property
    def eigenspace_test(self) -> TestReport:
        return next(t for t in self.tests if t.kind == TestKind.eigenspace(self.L))

    def to_dict(self, include_functions: bool = False) -> dict:
        out = {
            "groups": {
                lab: {"n": fit.n, "eigenvalues": fit.eigenvalues.tolist(), "variance_explained": ve,
                      **({"eigenfunctions": fit.to_dict(True)["eigenfunctions"]} if include_functions else {})}
                for lab, fit, ve in zip(self.labels, self.fits, self.variance_explained)
            },
            "L": self.L,
            "tests": [t.to_dict() for t in self.tests],
            "common_model": None,
        }
        if self.pooled is not None:
            out["common_model"] = {
                "eigenvalues": self.pooled.eigenvalues.tolist(),
                "variance_explained": variance_explained(self.pooled, self.L),
                "loading_variances": {lab: np.var(s, axis=0).tolist()
                                      for lab, s in zip(self.labels, self.pooled_scores)},
            }
            if include_functions:
                out["common_model"]["eigenfunctions"] = self.pooled.to_dict(True)["eigenfunctions"]
        return out


def fit_common_factor_model(sample_a: LogReturnSample, sample_b: LogReturnSample, L: int = 2, B: int = 500,
                            alpha: float = 0.05, seed: int = 0) -> CommonFactorReport:
    """Compare two groups of return curves and fit a common model if they agree.

    Tests eigenfunction(r) and eigenspace(l) for ``r, l <= L`` with shared
    bootstrap resamples. If eigenspace(L) is not rejected, the curves of each
    group are centered at their own mean, pooled, and decomposed once more.
    """
    if L < 1:
        raise ValidationError("L must be >= 1")
    prep_a, prep_b = prepare_exact(sample_a.curves), prepare_exact(sample_b.curves)
    fits = (prep_a.fit(L), prep_b.fit(L))
    ratios = tuple(variance_explained(f, L) for f in fits)
    kinds = [TestKind.eigenfunction(r) for r in range(1, L + 1)] + [TestKind.eigenspace(l) for l in range(1, L + 1)]
    tests = _bootstrap(prep_a, prep_b, kinds, B, alpha, seed, L, True)
    pooled = scores = None
    if not next(t for t in tests if t.kind == TestKind.eigenspace(L)).reject:
        centered = [c - f.mean_fn for s, f in ((sample_a, fits[0]), (sample_b, fits[1])) for c in s.curves]
        pooled = fpca_exact(centered, L)
        scores = (pooled.scores[: sample_a.n], pooled.scores[sample_a.n:])
    return CommonFactorReport((sample_a.label, sample_b.label), L, fits, ratios, tests, pooled, scores)


# -- synthetic data (demonstration plumbing, not a market model) -------------

def moneyness_basis(k: int, nodes: np.ndarray) -> np.ndarray:
    """Orthonormal Fourier function ``k`` on the moneyness interval."""
    lo, hi = MONEYNESS
    width = hi - lo
    u = (np.asarray(nodes) - lo) / width
    trig = np.sin if k % 2 == 0 else np.cos
    return math.sqrt(2 / width) * trig(2 * math.pi * (k // 2 + 1) * u)


def synthetic_log_return_samples(n: int = 100, lambdas_a: Sequence[float] = (10.0, 5.0),
                                 lambdas_b: Sequence[float] = (8.0, 4.0), seed: int = 0, scale: float = 1e-4,
                                 tail: Sequence[float] = (1.0, 0.5), grid_size: int = GRID_SIZE
                                 ) -> tuple[LogReturnSample, LogReturnSample]:
    """Two groups of return curves sharing the same eigenfunctions.

    Loadings are Gaussian with variances ``scale * lambdas``, followed in both
    groups by weaker components with variances ``scale * tail`` (without them
    a rank-L sample would make the eigenspace comparison trivially exact).
    The common functions are :func:`moneyness_basis` ``0, 1, ...``.
    """
    nodes = np.linspace(*MONEYNESS, grid_size)
    out = []
    for g, (label, lam) in enumerate((("1M", lambdas_a), ("3M", lambdas_b))):
        lam = np.concatenate([np.asarray(lam, dtype=float), np.asarray(tail, dtype=float)]) * scale
        basis = np.vstack([moneyness_basis(k, nodes) for k in range(lam.size)])
        beta = stream(seed, 2, g).standard_normal((n, lam.size)) * np.sqrt(lam)
        curves = [GridFunction(*MONEYNESS, v) for v in beta @ basis]
        out.append(LogReturnSample(label, GROUP_TAUS[label], curves))
    return out[0], out[1]


def generate_synthetic_quotes(n_days: int = 60, maturities: Sequence[float] = (0.08, 0.16, 0.30, 0.45),
                              n_strikes: int = 13, spot: float = 100.0, rate: float = 0.02,
                              lambdas: Sequence[float] = (4e-4, 1e-4), seed: int = 0) -> list[OptionQuote]:
    """Quotes priced from a simple synthetic IV surface.

    The surface is a mild smile ``0.2 + 0.3 (kappa - 1)^2`` with a term slope;
    each day its log is shifted by random combinations of two moneyness
    functions, and the spot follows a log-normal walk. Out-of-the-money
    options are quoted: puts below the forward, calls above.
    """
    if n_days < 2:
        raise ValidationError("need at least 2 days")
    rng = stream(seed, 3)
    kappas = np.linspace(*MONEYNESS, n_strikes)
    lam = np.asarray(lambdas, dtype=float)
    basis = np.vstack([moneyness_basis(k, kappas) for k in range(lam.size)]) * math.sqrt(MONEYNESS[1] - MONEYNESS[0])
    shift = np.zeros((len(maturities), n_strikes))
    S = spot
    quotes = []
    for day in range(n_days):
        for j, tau in enumerate(maturities):
            base = (0.2 + 0.3 * (kappas - 1) ** 2) * (1 - 0.1 * tau)
            sig = base * np.exp(shift[j])
            F = S * math.exp(rate * tau)
            for kap, s in zip(kappas, sig):
                K = float(kap * F)
                kind = "put" if kap < 1 else "call"
                price = (bs_put if kind == "put" else bs_call)(S, K, tau, rate, float(s))
                quotes.append(OptionQuote(day, S, K, float(tau), rate, kind, price))
        loadings = rng.standard_normal((len(maturities), lam.size)) * np.sqrt(lam)
        shift = shift + loadings @ basis
        S = S * math.exp(0.01 * rng.standard_normal())
    return quotes


def run_iv_pipeline(quotes: Sequence[OptionQuote], group_taus: Mapping[str, float] | None = None, L: int = 2,
                    B: int = 500, alpha: float = 0.05, seed: int = 0, grid_size: int = GRID_SIZE) -> dict:
    """Quotes to report: IV curves, return samples, and the common factor fit."""
    surfaces, skipped = quotes_to_iv_curves(quotes, grid_size)
    samples = build_log_return_samples(surfaces, group_taus)
    labels = list(samples)
    if len(labels) != 2:
        raise ValidationError("exactly two maturity groups are required")
    report = fit_common_factor_model(samples[labels[0]], samples[labels[1]], L, B, alpha, seed)
    return {
        "report": report,
        "samples": samples,
        "skipped": skipped + samples[labels[0]].skipped,
        "n_dates": len(surfaces),
        "warnings": samples[labels[0]].warnings,
    }


__all__ = [
    "OptionQuote", "IvCurve", "LogReturnSample", "CommonFactorReport", "bs_call", "bs_put", "implied_vol",
    "interpolate_total_variance", "read_quotes_csv", "write_quotes_csv", "quotes_to_iv_curves",
    "build_log_return_samples", "fit_common_factor_model", "synthetic_log_return_samples",
    "generate_synthetic_quotes", "run_iv_pipeline",
]
