"""Functional principal components through the dual scalar-product matrix.

For a sample of ``n`` curves the ``n x n`` matrix of centered L2 inner
products shares its nonzero eigenvalues (times ``n``) with the empirical
covariance operator. Its eigenvectors give the scores directly, and the
eigenfunctions are weighted averages of the (smoothed) sample curves.

When the curves are only observed at discrete, noisy design points, the
inner products are estimated from step interpolants of the raw observations;
the diagonal uses a one-step-lagged interpolant so that the noise variance
does not enter squared.

All estimators go through :class:`PreparedSample`, which stores the
uncentered Gram matrix together with the curves used for the eigenfunctions.
Centering is applied afterwards (``M = H G H``), so a bootstrap resample only
needs ``G[idx][:, idx]``.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
import scipy.linalg

from .core import (
    DEFAULT_GRID_SIZE,
    GridFunction,
    SymMatrix,
    batch_gram_schmidt,
    fix_signs,
    gram_schmidt_values,
    stack_values,
    sym_eigen,
    trapezoid_weights,
)
from .exceptions import (
    DegenerateComponentError,
    DegenerateWindowError,
    InsufficientSampleError,
    InvalidBasisError,
    NoFeasibleBandwidthError,
    TooManyComponentsError,
    UndefinedRatioError,
    UndefinedWindowError,
    ValidationError,
)
from .smoothing import EPANECHNIKOV, DiscreteCurve, KernelSpec, smooth_matrix, step_matrix

# eigenvalues of the dual matrix at or below this fraction of ||G||_F count as zero
DEGENERACY_RTOL = 1e-10
CV_RIDGE = 1e-10


@dataclass(frozen=True, eq=False)
class FpcaFit:
    """Result of a functional principal component fit.

    Attributes
    ----------
    n : int
        Sample size.
    mean_fn : GridFunction
        Mean of the (smoothed) sample curves.
    eigenvalues : ndarray, shape (r0,)
        Leading eigenvalues, descending, negatives clamped to zero.
    eigenfunctions : tuple
        One :class:`GridFunction` per component, ``None`` where degenerate.
    scores : ndarray, shape (n, r0)
        Principal component scores; zero columns for degenerate components.
    bandwidth_used : float or None
        Smoothing bandwidth, ``None`` for directly observed curves.
    r0 : int
        Number of retained components.
    spectrum : ndarray, shape (n,)
        All eigenvalues of the dual matrix divided by ``n``, clamped.
    n_clamped : int
        Number of negative eigenvalues set to zero.
    degenerate : ndarray of bool, shape (r0,)
        Components whose eigenvalue is (numerically) not positive.
    """

    n: int
    mean_fn: GridFunction
    eigenvalues: np.ndarray
    eigenfunctions: tuple
    scores: np.ndarray
    bandwidth_used: float | None
    r0: int
    spectrum: np.ndarray = field(repr=False)
    n_clamped: int = 0
    degenerate: np.ndarray = field(default=None, repr=False)

    def eigenfunction(self, r: int) -> GridFunction:
        """The ``r``-th eigenfunction (1-based)."""
        if not 1 <= r <= self.r0:
            raise ValidationError(f"component {r} not retained (r0 = {self.r0})")
        gamma = self.eigenfunctions[r - 1]
        if gamma is None:
            raise DegenerateComponentError(f"component {r} is degenerate (zero eigenvalue)")
        return gamma

    def to_dict(self, include_functions: bool = True) -> dict:
        """JSON-ready summary: eigenvalues, ratios, bandwidth and grid-sampled functions."""
        out = {
            "n": self.n,
            "r0": self.r0,
            "bandwidth_used": self.bandwidth_used,
            "eigenvalues": self.eigenvalues.tolist(),
            "variance_explained": _safe_ratios(self.spectrum)[: self.r0],
            "n_clamped": self.n_clamped,
            "degenerate": self.degenerate.tolist(),
            "grid": {"lo": self.mean_fn.domain_lo, "hi": self.mean_fn.domain_hi, "size": self.mean_fn.size},
        }
        if include_functions:
            out["mean"] = self.mean_fn.values.tolist()
            out["eigenfunctions"] = [None if g is None else g.values.tolist() for g in self.eigenfunctions]
        return out


def _safe_ratios(spectrum) -> list:
    total = float(np.sum(spectrum))
    if total <= 0:
        return [0.0] * len(spectrum)
    return (np.asarray(spectrum) / total).tolist()


def double_center(gram: np.ndarray) -> np.ndarray:
    """``H G H`` with ``H = I - 11'/n``."""
    row = gram.mean(axis=1, keepdims=True)
    col = gram.mean(axis=0, keepdims=True)
    m = gram - row - col + gram.mean()
    return 0.5 * (m + m.T)


@dataclass(frozen=True, eq=False)
class PreparedSample:
    """Everything a fit needs: the uncentered Gram matrix and the curves.

    ``curves`` holds the node values of the sample functions entering the
    mean and the eigenfunction averages (the raw functions for directly
    observed data, the smoothed reconstructions otherwise).
    """

    gram: np.ndarray = field(repr=False)
    curves: np.ndarray = field(repr=False)
    domain_lo: float
    domain_hi: float
    bandwidth: float | None = None

    @property
    def n(self) -> int:
        return self.gram.shape[0]

    @property
    def grid_size(self) -> int:
        return self.curves.shape[1]

    @property
    def weights(self) -> np.ndarray:
        return trapezoid_weights(self.domain_lo, self.domain_hi, self.grid_size)

    def template(self) -> GridFunction:
        return GridFunction(self.domain_lo, self.domain_hi, np.zeros(self.grid_size))

    def subset(self, idx) -> "PreparedSample":
        idx = np.asarray(idx)
        return PreparedSample(self.gram[np.ix_(idx, idx)], self.curves[idx], self.domain_lo,
                              self.domain_hi, self.bandwidth)

    def fit(self, r0: int, orthogonalize: bool = True) -> FpcaFit:
        return _fit_prepared(self, r0, orthogonalize)

    def resample_fits(self, idx: np.ndarray, r: int, orthogonalize: bool = True):
        """Fit every row of ``idx`` (a ``(B, n)`` array of resample indices).

        Returns
        -------
        eigenvalues : ndarray, shape (B, r)
        eigenfunctions : ndarray, shape (B, r, G)
            Unit-norm but with arbitrary signs.
        means : ndarray, shape (B, G)
        degenerate : ndarray of bool, shape (B,)
            Replicates in which one of the ``r`` leading eigenvalues is not
            positive.
        """
        idx = np.atleast_2d(np.asarray(idx))
        b_count, m = idx.shape
        n_src = self.n
        lam = np.zeros((b_count, r))
        vecs = np.zeros((b_count, m, r))
        degenerate = np.zeros(b_count, dtype=bool)
        for b in range(b_count):
            sub = self.gram[np.ix_(idx[b], idx[b])]
            w, v = scipy.linalg.eigh(double_center(sub), subset_by_index=[m - r, m - 1])
            w, v = w[::-1], v[:, ::-1]
            tol = DEGENERACY_RTOL * max(np.linalg.norm(sub), np.finfo(float).tiny)
            if np.any(w <= tol):
                degenerate[b] = True
                w = np.where(w > tol, w, 1.0)
            lam[b] = w
            vecs[b] = v
        # scatter resampled eigenvector entries back onto the source curves
        weights = np.zeros((b_count, r, n_src))
        bb = np.arange(b_count)[:, None, None]
        rr = np.arange(r)[None, :, None]
        np.add.at(weights, (bb, rr, idx[:, None, :]), vecs.transpose(0, 2, 1))
        counts = np.zeros((b_count, n_src))
        np.add.at(counts, (np.arange(b_count)[:, None], idx), 1.0)
        means = (counts / m) @ self.curves
        psum = vecs.sum(axis=1)  # (B, r), zero up to rounding
        gam = weights @ self.curves - psum[:, :, None] * means[:, None, :]
        gam /= np.sqrt(lam)[:, :, None]
        if orthogonalize:
            gam = batch_gram_schmidt(gam, self.weights)
        return lam / m, gam, means, degenerate


def _fit_prepared(prep: PreparedSample, r0: int, orthogonalize: bool) -> FpcaFit:
    n = prep.n
    if n < 2:
        raise InsufficientSampleError("at least 2 curves are required")
    if not 1 <= r0 <= n - 1:
        raise TooManyComponentsError(f"r0 must lie in [1, {n - 1}] for n = {n}, got {r0}")
    eig = sym_eigen(SymMatrix(double_center(prep.gram)))
    l = eig.eigenvalues
    tol = DEGENERACY_RTOL * max(np.linalg.norm(prep.gram), np.finfo(float).tiny)
    positive = l > tol
    spectrum = np.where(positive, l, 0.0) / n
    n_clamped = int(np.sum(l[: n - 1] < -tol))
    degenerate = ~positive[:r0]

    mean = prep.curves.mean(axis=0)
    centered = prep.curves - mean
    weights = prep.weights
    p = eig.eigenvectors[:, :r0].copy()
    good = np.flatnonzero(~degenerate)
    funcs = np.zeros((r0, prep.grid_size))
    if good.size:
        raw = (p[:, good].T @ centered) / np.sqrt(l[good])[:, None]
        # a positive eigenvalue can come from the lagged diagonal alone (identical
        # curves); its averaged function then vanishes and the component is void
        scale = np.sqrt(np.max((centered * centered) @ weights)) / np.sqrt(l[good])
        void = np.sqrt((raw * raw) @ weights) <= 1e-10 * scale + np.finfo(float).tiny
        if np.any(void):
            degenerate[good[void]] = True
            spectrum[good[void]] = 0.0
            raw, good = raw[~void], good[~void]
    if good.size:
        if orthogonalize:
            raw = gram_schmidt_values(raw, weights)
        signed = fix_signs(raw.T).T
        flip = np.sign(np.sum(signed * raw, axis=1))
        p[:, good] *= flip
        funcs[good] = signed
    scores = np.zeros((n, r0))
    scores[:, good] = p[:, good] * np.sqrt(l[good])
    template = prep.template()
    eigenfunctions = tuple(template.with_values(funcs[k]) if not degenerate[k] else None for k in range(r0))
    return FpcaFit(
        n=n,
        mean_fn=template.with_values(mean),
        eigenvalues=spectrum[:r0].copy(),
        eigenfunctions=eigenfunctions,
        scores=scores,
        bandwidth_used=prep.bandwidth,
        r0=r0,
        spectrum=spectrum,
        n_clamped=n_clamped,
        degenerate=degenerate,
    )


def _default_grid(curves: Sequence[DiscreteCurve], grid):
    if grid is not None:
        return grid
    lo, hi = curves[0].domain
    return (lo, hi, DEFAULT_GRID_SIZE)


def _grid_bounds(grid) -> tuple[float, float]:
    if isinstance(grid, GridFunction):
        return grid.domain_lo, grid.domain_hi
    return float(grid[0]), float(grid[1])


def _check_discrete_sample(sample: Sequence[DiscreteCurve]) -> None:
    if len(sample) < 2:
        raise InsufficientSampleError("at least 2 curves are required")
    dom = sample[0].domain
    if any(c.domain != dom for c in sample):
        raise ValidationError("all curves must share the same domain")


def dual_gram(sample: Sequence[DiscreteCurve], grid=None, diagonal: str = "lagged") -> np.ndarray:
    """Uncentered Gram matrix of the step interpolants.

    Off-diagonal entries are inner products of the plain step functions. The
    diagonal pairs each curve's step function with its lagged version
    (``diagonal="lagged"``) or with itself (``diagonal="naive"``, which is
    biased upwards by the noise variance).
    """
    _check_discrete_sample(sample)
    grid = _default_grid(sample, grid)
    lo, hi = _grid_bounds(grid)
    chi = step_matrix(sample, False, grid)
    w = trapezoid_weights(lo, hi, chi.shape[1])
    gram = (chi * w) @ chi.T
    if diagonal == "lagged":
        chi_lag = step_matrix(sample, True, grid)
        np.fill_diagonal(gram, np.sum(chi * chi_lag * w, axis=1))
    elif diagonal != "naive":
        raise ValidationError(f"diagonal must be 'lagged' or 'naive', got {diagonal!r}")
    return 0.5 * (gram + gram.T)


def build_dual_matrix(sample: Sequence[DiscreteCurve], grid=None, diagonal: str = "lagged") -> SymMatrix:
    """Estimated dual matrix of centered inner products, ``H G H``."""
    return SymMatrix(double_center(dual_gram(sample, grid, diagonal)))


def prepare_exact(sample: Sequence[GridFunction]) -> PreparedSample:
    """Prepared sample for directly observed grid functions."""
    if len(sample) < 2:
        raise InsufficientSampleError("at least 2 curves are required")
    x = stack_values(sample)
    w = sample[0].weights
    gram = (x * w) @ x.T
    return PreparedSample(0.5 * (gram + gram.T), x, sample[0].domain_lo, sample[0].domain_hi, None)


def prepare_dual(sample: Sequence[DiscreteCurve], bandwidth: float, smoother: str = "local_linear",
                 kernel: KernelSpec = EPANECHNIKOV, grid=None) -> PreparedSample:
    """Prepared sample for discrete noisy curves (step-function Gram + smoothed curves)."""
    _check_discrete_sample(sample)
    grid = _default_grid(sample, grid)
    lo, hi = _grid_bounds(grid)
    gram = dual_gram(sample, grid)
    curves = smooth_matrix(sample, bandwidth, smoother, kernel, grid)
    return PreparedSample(gram, curves, lo, hi, float(bandwidth))


def prepare_sample(sample, bandwidth: float | None = None, smoother: str = "local_linear",
                   kernel: KernelSpec = EPANECHNIKOV, grid=None) -> PreparedSample:
    """Dispatch on the sample type: grid functions, discrete curves, or already prepared."""
    if isinstance(sample, PreparedSample):
        return sample
    sample = list(sample)
    if not sample:
        raise InsufficientSampleError("empty sample")
    if isinstance(sample[0], GridFunction):
        return prepare_exact(sample)
    if isinstance(sample[0], DiscreteCurve):
        if bandwidth is None:
            raise ValidationError("a bandwidth is required for discretely observed curves")
        return prepare_dual(sample, bandwidth, smoother, kernel, grid)
    raise ValidationError(f"unsupported sample element type {type(sample[0]).__name__}")


def fpca_exact(sample: Sequence[GridFunction], r0: int, orthogonalize: bool = True) -> FpcaFit:
    """FPCA of directly observed grid functions via exact grid inner products."""
    return prepare_exact(sample).fit(r0, orthogonalize)


def fpca_dual(sample: Sequence[DiscreteCurve], bandwidth: float, r0: int, smoother: str = "local_linear",
              orthogonalize: bool = True, kernel: KernelSpec = EPANECHNIKOV, grid=None) -> FpcaFit:
    """FPCA of discretely observed noisy curves.

    Eigenvalues and scores come from the estimated dual matrix; eigenfunctions
    and the mean are weighted averages of the smoothed curves (bandwidth
    ``bandwidth``), optionally re-orthonormalized.
    """
    return prepare_dual(sample, bandwidth, smoother, kernel, grid).fit(r0, orthogonalize)


def cv_select_bandwidth(sample: Sequence[DiscreteCurve], r0: int, candidates: Sequence[float],
                        smoother: str = "local_linear", kernel: KernelSpec = EPANECHNIKOV, grid=None,
                        orthogonalize: bool = True) -> tuple[float, list[float]]:
    """Leave-one-curve-out cross-validation of the smoothing bandwidth.

    For each candidate, every curve is predicted from the mean and the
    ``r0`` eigenfunctions fitted without it, with least-squares loadings;
    the criterion is the total squared prediction error at the design points.
    Candidates for which smoothing fails are infeasible and get ``inf``.

    Returns
    -------
    bandwidth : float
        Minimizer of the criterion (ties go to the smaller bandwidth).
    criterion : list of float
        Criterion values in the order of ``candidates``.
    """
    candidates = [float(b) for b in candidates]
    if not candidates:
        raise ValidationError("no candidate bandwidths")
    _check_discrete_sample(sample)
    n = len(sample)
    if not 1 <= r0 <= n - 2:
        raise TooManyComponentsError(f"cross-validation needs 1 <= r0 <= n - 2 = {n - 2}, got {r0}")
    grid = _default_grid(sample, grid)
    lo, hi = _grid_bounds(grid)
    gram = dual_gram(sample, grid)

    # the dual matrix does not depend on the bandwidth: decompose each fold once
    folds = []
    for i in range(n):
        keep = np.delete(np.arange(n), i)
        sub = gram[np.ix_(keep, keep)]
        w, v = scipy.linalg.eigh(double_center(sub), subset_by_index=[n - 1 - r0, n - 2])
        tol = DEGENERACY_RTOL * max(np.linalg.norm(sub), np.finfo(float).tiny)
        good = w[::-1] > tol
        folds.append((keep, w[::-1][good], v[:, ::-1][:, good]))

    nodes = np.linspace(lo, hi, step_matrix(sample[:1], False, grid).shape[1])
    weights = trapezoid_weights(lo, hi, nodes.size)
    values = []
    for b in candidates:
        try:
            xhat = smooth_matrix(sample, b, smoother, kernel, grid)
        except (UndefinedWindowError, DegenerateWindowError):
            values.append(math.inf)
            continue
        total = 0.0
        for i, (keep, lam, vec) in enumerate(folds):
            others = xhat[keep]
            mu = others.mean(axis=0)
            gam = (vec.T @ (others - mu)) / np.sqrt(lam)[:, None]
            if orthogonalize and gam.shape[0]:
                gam = gram_schmidt_values(gam, weights)
            c = sample[i]
            resid = c.obs - np.interp(c.design, nodes, mu)
            if gam.shape[0]:
                phi = np.column_stack([np.interp(c.design, nodes, g) for g in gam])
                a = phi.T @ phi + CV_RIDGE * np.eye(phi.shape[1])
                theta = np.linalg.solve(a, phi.T @ resid)
                resid = resid - phi @ theta
            total += float(resid @ resid)
        values.append(total)
    best = min(range(len(candidates)), key=lambda k: (values[k], candidates[k]))
    if math.isinf(values[best]):
        raise NoFeasibleBandwidthError(f"no feasible bandwidth among {candidates}")
    return candidates[best], values


def approximation_error_rho(sample: Sequence[GridFunction], mean_fn: GridFunction,
                            basis: Sequence[GridFunction]) -> float:
    """Average squared L2 residual of the centered sample after projecting on ``basis``.

    Raises
    ------
    InvalidBasisError
        If ``basis`` is not orthonormal within 1e-6.
    """
    x = stack_values(list(sample) + [mean_fn])
    centered = x[:-1] - x[-1]
    w = mean_fn.weights
    if basis:
        v = stack_values(list(basis) + [mean_fn])[:-1]
        gram = (v * w) @ v.T
        if np.abs(gram - np.eye(len(basis))).max() > 1e-6:
            raise InvalidBasisError("basis functions are not orthonormal")
        coef = (centered * w) @ v.T
        centered = centered - coef @ v
    return float(np.mean((centered * centered) @ w))


def variance_explained(fit, n_components: int | None = None) -> list[float]:
    """Share of the total variance carried by each component.

    ``fit`` is an :class:`FpcaFit` (ratios relative to its full spectrum) or a
    sequence of eigenvalues. Without ``n_components`` all ratios are returned
    and sum to one.
    """
    spectrum = np.asarray(fit.spectrum if isinstance(fit, FpcaFit) else fit, dtype=float)
    if spectrum.ndim != 1 or spectrum.size == 0:
        raise ValidationError("need a non-empty sequence of eigenvalues")
    if np.any(spectrum < 0):
        raise ValidationError("eigenvalues must be nonnegative")
    total = spectrum.sum()
    if not total > 0:
        raise UndefinedRatioError("all eigenvalues are zero")
    ratios = spectrum / total
    if n_components is not None:
        ratios = ratios[:n_components]
    return ratios.tolist()


def write_scores_csv(path, fit: FpcaFit, curve_ids: Sequence[str] | None = None) -> None:
    """Scores as ``curve_id,r,score`` rows (components 1-based)."""
    ids = list(curve_ids) if curve_ids is not None else [str(i) for i in range(fit.n)]
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["curve_id", "r", "score"])
        for i, cid in enumerate(ids):
            for r in range(fit.r0):
                writer.writerow([cid, r + 1, repr(float(fit.scores[i, r]))])


def write_eigenfunctions_csv(path, fit: FpcaFit) -> None:
    """Grid dump ``t,mean,gamma_1,...,gamma_r0``; degenerate components are written as empty cells."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["t", "mean"] + [f"gamma_{r + 1}" for r in range(fit.r0)])
        for k, t in enumerate(fit.mean_fn.nodes):
            row = [repr(float(t)), repr(float(fit.mean_fn.values[k]))]
            row += ["" if g is None else repr(float(g.values[k])) for g in fit.eigenfunctions]
            writer.writerow(row)
