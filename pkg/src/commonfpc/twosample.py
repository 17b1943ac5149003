"""Bootstrap tests for equality of two functional samples.

Four hypotheses are covered: equal mean functions, equal ``r``-th
eigenfunctions, equal ``r``-th eigenvalues and equal ``L``-dimensional
leading eigenspaces. Each test compares the observed distance ``D`` between
the two samples' estimates with the bootstrap distribution of the centered
distance ``Delta*``, obtained by resampling each sample independently with
replacement and measuring how far the resampled estimates move away from
the full-sample ones.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .core import check_combinable, l2_inner
from .exceptions import UnstableSpectrumError, ValidationError
from .fpca import FpcaFit, PreparedSample, prepare_sample
from .rng import stream
from .smoothing import EPANECHNIKOV, KernelSpec

KINDS = ("mean", "eigenfunction", "eigenvalue", "eigenspace")

# statistics below this multiple of their natural scale are rounding noise
ZERO_RTOL = 1e-12
MAX_REDRAW_FRACTION = 0.1
_CHUNK = 64


@dataclass(frozen=True)
class TestKind:
    """Which hypothesis to test; ``index`` is ``r`` or ``L`` (unused for the mean)."""

    __test__ = False  # not a pytest class

    name: str
    index: int = 1

    def __post_init__(self):
        if self.name not in KINDS:
            raise ValidationError(f"unknown test kind {self.name!r}; choose from {KINDS}")
        if self.index < 1:
            raise ValidationError("component index must be >= 1")

    @classmethod
    def mean(cls):
        return cls("mean", 1)

    @classmethod
    def eigenfunction(cls, r: int):
        return cls("eigenfunction", r)

    @classmethod
    def eigenvalue(cls, r: int):
        return cls("eigenvalue", r)

    @classmethod
    def eigenspace(cls, L: int):
        return cls("eigenspace", L)

    @classmethod
    def parse(cls, text: str) -> "TestKind":
        """Parse ``"mean"``, ``"eigenfunction(2)"`` or ``"eigenspace:3"``."""
        m = re.fullmatch(r"\s*([a-z]+)\s*(?:[(:]\s*(\d+)\s*\)?)?\s*", text)
        if not m:
            raise ValidationError(f"cannot parse test kind {text!r}")
        name, idx = m.group(1), m.group(2)
        return cls(name, int(idx) if idx else 1)

    @property
    def components(self) -> int:
        """Number of leading components the statistic uses."""
        return 0 if self.name == "mean" else self.index

    @property
    def label(self) -> str:
        return "mean" if self.name == "mean" else f"{self.name}({self.index})"

    def __str__(self):
        return self.label


@dataclass(frozen=True, eq=False)
class TestReport:
    """Outcome of one bootstrap test.

    The decision rule rejects when the statistic is at least the
    ``1 - alpha`` empirical quantile of the replicates (and is not zero);
    ``p_value = (1 + #{replicate >= statistic}) / (B + 1)``.
    """

    __test__ = False

    kind: TestKind
    statistic: float
    replicates: np.ndarray = field(repr=False)
    critical_value: float
    p_value: float
    alpha: float
    reject: bool
    seed: int
    n1: int
    n2: int
    redraws: int = 0

    @property
    def B(self) -> int:
        return self.replicates.size

    def to_dict(self, include_replicates: bool = False) -> dict:
        out = {
            "kind": self.kind.label,
            "statistic": self.statistic,
            "critical_value": self.critical_value,
            "p_value": self.p_value,
            "alpha": self.alpha,
            "reject": self.reject,
            "B": self.B,
            "seed": self.seed,
            "n1": self.n1,
            "n2": self.n2,
            "redraws": self.redraws,
        }
        if include_replicates:
            out["replicates"] = self.replicates.tolist()
        return out


def _snap(value: float, scale: float) -> float:
    value = max(float(value), 0.0)
    return 0.0 if value <= ZERO_RTOL * max(scale, 1.0) else value


def compute_statistic(kind: TestKind, fit1: FpcaFit, fit2: FpcaFit) -> float:
    """Observed distance between two fits for the given hypothesis.

    Eigenfunction signs are aligned (nonnegative inner product) before
    differencing. The eigenspace distance is the squared Hilbert-Schmidt norm
    of the difference of the two projection kernels, computed as
    ``2L - 2 sum_{r,s} <g1_r, g2_s>^2``.
    """
    check_combinable(fit1.mean_fn, fit2.mean_fn)
    if kind.name == "mean":
        diff = fit1.mean_fn - fit2.mean_fn
        scale = max(l2_inner(fit1.mean_fn, fit1.mean_fn), l2_inner(fit2.mean_fn, fit2.mean_fn))
        return _snap(l2_inner(diff, diff), scale)
    r = kind.index
    if kind.name == "eigenvalue":
        fit1.eigenfunction(r), fit2.eigenfunction(r)  # degeneracy check
        l1, l2 = fit1.eigenvalues[r - 1], fit2.eigenvalues[r - 1]
        return _snap((l1 - l2) ** 2, max(l1, l2) ** 2)
    if kind.name == "eigenfunction":
        g1, g2 = fit1.eigenfunction(r), fit2.eigenfunction(r)
        if l2_inner(g1, g2) < 0:
            g2 = -g2
        diff = g1 - g2
        return _snap(l2_inner(diff, diff), 1.0)
    a = np.vstack([fit1.eigenfunction(k).values for k in range(1, r + 1)])
    b = np.vstack([fit2.eigenfunction(k).values for k in range(1, r + 1)])
    cross = (a * fit1.mean_fn.weights) @ b.T
    return _snap(2 * r - 2 * np.sum(cross**2), 1.0)


def eigenspace_distance_quadrature(basis1: np.ndarray, basis2: np.ndarray, weights: np.ndarray) -> float:
    """Direct double trapezoid quadrature of the squared projection-kernel difference.

    ``basis1`` and ``basis2`` are ``(L, G)`` arrays of node values. Builds the
    full ``G x G`` kernels; meant as a cross-check, not for bulk use.
    """
    k = basis1.T @ basis1 - basis2.T @ basis2
    return float(weights @ (k * k) @ weights)


def _kernel_norm(funcs: np.ndarray, coefs: np.ndarray, weights: np.ndarray) -> np.ndarray:
    """``||sum_k c_k u_k(t) u_k(s)||^2`` for a batch ``funcs`` of shape ``(B, K, G)``."""
    gram = np.einsum("bkg,blg->bkl", funcs * weights, funcs)
    return np.einsum("k,l,bkl->b", coefs, coefs, gram * gram)


def _align(gam: np.ndarray, ref: np.ndarray, weights: np.ndarray) -> np.ndarray:
    """Flip each ``gam[b, r]`` so that its inner product with ``ref[r]`` is >= 0."""
    inner = np.einsum("brg,rg->br", gam * weights, ref)
    sign = np.where(inner < 0, -1.0, 1.0)
    return gam * sign[:, :, None]


def _resample_indices(seed: int, b: int, group: int, attempt: int, n: int) -> np.ndarray:
    return stream(seed, b, group, attempt).integers(0, n, size=n)


def _full_fit(prep: PreparedSample, r: int, r0: int | None, orthogonalize: bool) -> FpcaFit:
    r0 = max(r, 1) if r0 is None else max(r0, r, 1)
    return prep.fit(min(r0, prep.n - 1), orthogonalize)


def _bootstrap(prep1: PreparedSample, prep2: PreparedSample, kinds: Sequence[TestKind], B: int,
               alpha: float, seed: int, r0: int | None, orthogonalize: bool) -> list[TestReport]:
    if B < 1:
        raise ValidationError("B must be >= 1")
    if not 0 < alpha < 1:
        raise ValidationError("alpha must lie in (0, 1)")
    if prep1.n < 2 or prep2.n < 2:
        raise ValidationError("both samples need at least 2 curves")
    if (prep1.domain_lo, prep1.domain_hi, prep1.grid_size) != (prep2.domain_lo, prep2.domain_hi, prep2.grid_size):
        raise ValidationError("the two samples live on different grids")
    r = max((k.components for k in kinds), default=0)
    fit1 = _full_fit(prep1, r, r0, orthogonalize)
    fit2 = _full_fit(prep2, r, r0, orthogonalize)
    stats = [compute_statistic(k, fit1, fit2) for k in kinds]

    w = prep1.weights
    r_fit = max(r, 1)
    ref1 = np.vstack([fit1.eigenfunction(k).values for k in range(1, r + 1)]) if r else None
    ref2 = np.vstack([fit2.eigenfunction(k).values for k in range(1, r + 1)]) if r else None
    if r:
        # the two full-sample estimates are compared with nonnegative inner products
        ref2 = ref2 * np.where(np.sum(ref1 * ref2 * w, axis=1) < 0, -1.0, 1.0)[:, None]
    lam1 = fit1.eigenvalues[:r]
    lam2 = fit2.eigenvalues[:r]

    reps = np.zeros((len(kinds), B))
    redraws = 0
    max_redraws = int(np.floor(MAX_REDRAW_FRACTION * B))
    for start in range(0, B, _CHUNK):
        block = np.arange(start, min(start + _CHUNK, B))
        attempt = np.zeros(block.size, dtype=int)
        todo = np.ones(block.size, dtype=bool)
        out = [None, None]
        while todo.any():
            ids = np.flatnonzero(todo)
            results = []
            for g, prep in enumerate((prep1, prep2)):
                idx = np.vstack([_resample_indices(seed, block[i], g, attempt[i], prep.n) for i in ids])
                results.append(prep.resample_fits(idx, r_fit, orthogonalize))
            bad = (results[0][3] | results[1][3]) if r else np.zeros(ids.size, dtype=bool)
            for g in range(2):
                if out[g] is None:
                    out[g] = [np.zeros((block.size,) + a.shape[1:]) for a in results[g][:3]]
                for slot, arr in zip(out[g], results[g][:3]):
                    slot[ids[~bad]] = arr[~bad]
            if bad.any():
                redraws += int(bad.sum())
                if redraws > max_redraws:
                    raise UnstableSpectrumError(
                        f"{redraws} of {B} bootstrap replicates had a degenerate spectrum"
                    )
                attempt[ids[bad]] += 1
            todo[:] = False
            todo[ids[bad]] = True
        (l1s, g1s, m1s), (l2s, g2s, m2s) = out
        if r:
            g1s = _align(g1s[:, :r], ref1, w)
            g2s = _align(g2s[:, :r], ref2, w)
        for j, kind in enumerate(kinds):
            if kind.name == "mean":
                d = (m1s - fit1.mean_fn.values) - (m2s - fit2.mean_fn.values)
                vals = (d * d) @ w
            elif kind.name == "eigenvalue":
                k = kind.index - 1
                vals = ((l1s[:, k] - lam1[k]) - (l2s[:, k] - lam2[k])) ** 2
            elif kind.name == "eigenfunction":
                k = kind.index - 1
                d = (g1s[:, k] - ref1[k]) - (g2s[:, k] - ref2[k])
                vals = (d * d) @ w
            else:
                L = kind.index
                funcs = np.concatenate([
                    g1s[:, :L], np.broadcast_to(ref1[:L], g1s[:, :L].shape),
                    g2s[:, :L], np.broadcast_to(ref2[:L], g2s[:, :L].shape),
                ], axis=1)
                coefs = np.concatenate([np.ones(L), -np.ones(L), -np.ones(L), np.ones(L)])
                vals = _kernel_norm(funcs, coefs, w)
            reps[j, block] = np.maximum(vals, 0.0)

    reports = []
    for j, kind in enumerate(kinds):
        d = stats[j]
        rep = reps[j]
        crit = float(np.quantile(rep, 1 - alpha, method="inverted_cdf"))
        p = (1 + int(np.sum(rep >= d))) / (B + 1)
        reports.append(TestReport(kind, d, rep, crit, p, alpha, bool(d > 0 and d >= crit), seed,
                                  prep1.n, prep2.n, redraws))
    return reports


def bootstrap_two_sample_test(sample1, sample2, kind: TestKind | str, B: int = 500, alpha: float = 0.1,
                              seed: int = 0, r0: int | None = None, bandwidth: float | None = None,
                              bandwidth2: float | None = None, smoother: str = "local_linear",
                              kernel: KernelSpec = EPANECHNIKOV, grid=None,
                              orthogonalize: bool = True) -> TestReport:
    """Bootstrap test of one hypothesis about two functional samples.

    Parameters
    ----------
    sample1, sample2
        Sequences of :class:`~commonfpc.core.GridFunction` (observed
        directly), of :class:`~commonfpc.smoothing.DiscreteCurve` (then
        ``bandwidth`` is required; ``bandwidth2`` defaults to it), or
        :class:`~commonfpc.fpca.PreparedSample`.
    kind : TestKind or str
        Hypothesis, e.g. ``TestKind.eigenfunction(1)`` or ``"eigenspace(2)"``.
    B : int
        Bootstrap replications.
    alpha : float
        Level of the test.
    seed : int
        Master seed; replicate ``b`` of sample ``g`` draws its indices from
        the stream ``(seed, b, g, attempt)``.
    r0 : int, optional
        Components retained in the full-sample fits (at least what the
        statistic needs).

    Curves are never re-smoothed inside the bootstrap: a resample reuses the
    smoothed curves and the Gram matrix entries of the curves it picks.
    """
    if isinstance(kind, str):
        kind = TestKind.parse(kind)
    prep1 = prepare_sample(sample1, bandwidth, smoother, kernel, grid)
    prep2 = prepare_sample(sample2, bandwidth2 if bandwidth2 is not None else bandwidth, smoother, kernel, grid)
    return _bootstrap(prep1, prep2, [kind], B, alpha, seed, r0, orthogonalize)[0]


def battery_kinds(r_max: int, L_max: int) -> list[TestKind]:
    kinds = [TestKind.mean()]
    for r in range(1, r_max + 1):
        kinds += [TestKind.eigenvalue(r), TestKind.eigenfunction(r)]
    kinds += [TestKind.eigenspace(L) for L in range(1, L_max + 1)]
    return kinds


def run_full_battery(sample1, sample2, r_max: int = 1, L_max: int = 1, B: int = 500, alpha: float = 0.1,
                     seed: int = 0, bandwidth: float | None = None, bandwidth2: float | None = None,
                     smoother: str = "local_linear", kernel: KernelSpec = EPANECHNIKOV, grid=None,
                     orthogonalize: bool = True, r0: int | None = None) -> list[TestReport]:
    """Mean, eigenvalue(r), eigenfunction(r) for ``r <= r_max`` and eigenspace(L) for ``L <= L_max``.

    All kinds share the same bootstrap resamples.
    """
    prep1 = prepare_sample(sample1, bandwidth, smoother, kernel, grid)
    prep2 = prepare_sample(sample2, bandwidth2 if bandwidth2 is not None else bandwidth, smoother, kernel, grid)
    return _bootstrap(prep1, prep2, battery_kinds(r_max, L_max), B, alpha, seed, r0, orthogonalize)


def format_reports(reports: Sequence[TestReport]) -> str:
    """Plain-text summary table (kind, D, critical value, p, decision)."""
    lines = [f"{'kind':<18}{'D':>14}{'critical':>14}{'p':>9}  decision"]
    for rep in reports:
        lines.append(
            f"{rep.kind.label:<18}{rep.statistic:>14.6g}{rep.critical_value:>14.6g}{rep.p_value:>9.4f}  "
            f"{'reject' if rep.reject else 'accept'}"
        )
    return "\n".join(lines)
