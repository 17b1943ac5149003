"""Numerical substrate: functions on equidistant grids, L2 quadrature,
symmetric eigendecomposition, Gram-Schmidt and the normal CDF.

Every curve in the package is eventually represented as a
:class:`GridFunction`, i.e. its values on ``G`` equidistant nodes of a closed
interval. Inner products use the composite trapezoid rule, which is exact for
the piecewise-linear interpolant of the node values.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy.special import ndtr

from .exceptions import IncompatibleGridsError, InvalidMatrixError, RankDeficiencyError, ValidationError

DEFAULT_GRID_SIZE = 500

_SYMMETRY_RTOL = 1e-10


def trapezoid_weights(lo: float, hi: float, size: int) -> np.ndarray:
    """Composite trapezoid weights for ``size`` equidistant nodes on [lo, hi]."""
    h = (hi - lo) / (size - 1)
    w = np.full(size, h)
    w[0] = w[-1] = 0.5 * h
    return w


@dataclass(frozen=True, eq=False)
class GridFunction:
    """A real function sampled at equidistant nodes ``lo + k (hi - lo) / (G - 1)``.

    Parameters
    ----------
    domain_lo, domain_hi : float
        Interval endpoints, ``domain_lo < domain_hi``.
    values : array_like
        The ``G >= 2`` finite node values.
    """

    domain_lo: float
    domain_hi: float
    values: np.ndarray = field(repr=False)

    def __post_init__(self):
        values = np.array(self.values, dtype=float)
        if values.ndim != 1 or values.size < 2:
            raise ValidationError("a GridFunction needs a 1-d array of at least 2 values")
        if not (np.isfinite(self.domain_lo) and np.isfinite(self.domain_hi)) or not self.domain_lo < self.domain_hi:
            raise ValidationError(f"invalid domain [{self.domain_lo}, {self.domain_hi}]")
        if not np.all(np.isfinite(values)):
            raise ValidationError("GridFunction values must be finite")
        values.setflags(write=False)
        object.__setattr__(self, "domain_lo", float(self.domain_lo))
        object.__setattr__(self, "domain_hi", float(self.domain_hi))
        object.__setattr__(self, "values", values)

    @classmethod
    def from_callable(cls, func: Callable[[np.ndarray], np.ndarray], size: int = DEFAULT_GRID_SIZE,
                      domain: tuple[float, float] = (0.0, 1.0)) -> "GridFunction":
        """Sample a vectorized ``func`` on the grid."""
        nodes = np.linspace(domain[0], domain[1], size)
        return cls(domain[0], domain[1], np.broadcast_to(np.asarray(func(nodes), dtype=float), nodes.shape))

    @classmethod
    def constant(cls, c: float, size: int = DEFAULT_GRID_SIZE,
                 domain: tuple[float, float] = (0.0, 1.0)) -> "GridFunction":
        return cls(domain[0], domain[1], np.full(size, float(c)))

    @property
    def size(self) -> int:
        return self.values.size

    @property
    def domain(self) -> tuple[float, float]:
        return self.domain_lo, self.domain_hi

    @property
    def nodes(self) -> np.ndarray:
        return np.linspace(self.domain_lo, self.domain_hi, self.size)

    @property
    def weights(self) -> np.ndarray:
        return trapezoid_weights(self.domain_lo, self.domain_hi, self.size)

    def same_grid(self, other: "GridFunction") -> bool:
        return (self.size == other.size and self.domain_lo == other.domain_lo
                and self.domain_hi == other.domain_hi)

    def with_values(self, values) -> "GridFunction":
        return GridFunction(self.domain_lo, self.domain_hi, values)

    def __call__(self, t):
        """Piecewise-linear evaluation; constant extrapolation outside the domain."""
        return np.interp(t, self.nodes, self.values)

    def norm(self) -> float:
        return float(np.sqrt(max(l2_inner(self, self), 0.0)))

    def _coerce(self, other):
        if isinstance(other, GridFunction):
            check_combinable(self, other)
            return other.values
        return other

    def __add__(self, other):
        return self.with_values(self.values + self._coerce(other))

    __radd__ = __add__

    def __sub__(self, other):
        return self.with_values(self.values - self._coerce(other))

    def __rsub__(self, other):
        return self.with_values(self._coerce(other) - self.values)

    def __mul__(self, other):
        return self.with_values(self.values * self._coerce(other))

    __rmul__ = __mul__

    def __truediv__(self, other):
        return self.with_values(self.values / self._coerce(other))

    def __neg__(self):
        return self.with_values(-self.values)


def check_combinable(*fs: GridFunction) -> None:
    """Raise :class:`IncompatibleGridsError` unless all grids coincide exactly."""
    first = fs[0]
    for f in fs[1:]:
        if not first.same_grid(f):
            raise IncompatibleGridsError(
                f"grid mismatch: [{first.domain_lo}, {first.domain_hi}] x {first.size} vs "
                f"[{f.domain_lo}, {f.domain_hi}] x {f.size}"
            )


def stack_values(fs: Sequence[GridFunction]) -> np.ndarray:
    """Node values of combinable grid functions as an ``(n, G)`` array."""
    if len(fs) == 0:
        raise ValidationError("empty sequence of grid functions")
    check_combinable(*fs)
    return np.vstack([f.values for f in fs])


def l2_inner(f: GridFunction, g: GridFunction) -> float:
    """Trapezoid approximation of the L2 inner product of ``f`` and ``g``."""
    check_combinable(f, g)
    return float(np.dot(f.weights, f.values * g.values))


@dataclass(frozen=True, eq=False)
class SymMatrix:
    """A finite, symmetric real matrix.

    Input that is symmetric up to a relative ``1e-10`` is accepted and
    symmetrized by averaging with its transpose.
    """

    entries: np.ndarray = field(repr=False)

    def __post_init__(self):
        a = np.array(self.entries, dtype=float)
        if a.ndim != 2 or a.shape[0] != a.shape[1] or a.shape[0] < 1:
            raise InvalidMatrixError(f"expected a non-empty square matrix, got shape {a.shape}")
        if not np.all(np.isfinite(a)):
            raise InvalidMatrixError("matrix has non-finite entries")
        scale = max(np.abs(a).max(), np.finfo(float).tiny)
        if np.abs(a - a.T).max() > _SYMMETRY_RTOL * scale:
            raise InvalidMatrixError("matrix is not symmetric")
        a = 0.5 * (a + a.T)
        a.setflags(write=False)
        object.__setattr__(self, "entries", a)

    @property
    def n(self) -> int:
        return self.entries.shape[0]


@dataclass(frozen=True, eq=False)
class EigenDecomposition:
    eigenvalues: np.ndarray
    eigenvectors: np.ndarray  # columns, aligned with eigenvalues


def fix_signs(vectors: np.ndarray) -> np.ndarray:
    """Flip columns so that each one's largest-magnitude entry is positive.

    Ties go to the lowest index (``argmax`` returns the first maximum).
    """
    vectors = np.array(vectors, dtype=float)
    if vectors.size == 0:
        return vectors
    pivot = np.argmax(np.abs(vectors), axis=0)
    signs = np.sign(vectors[pivot, np.arange(vectors.shape[1])])
    signs[signs == 0] = 1.0
    return vectors * signs


def sym_eigen(a) -> EigenDecomposition:
    """Full eigendecomposition of a symmetric matrix, eigenvalues descending.

    Backed by LAPACK's symmetric solver (``numpy.linalg.eigh``), which is
    deterministic for identical input. Eigenvector signs follow
    :func:`fix_signs`.
    """
    if not isinstance(a, SymMatrix):
        a = SymMatrix(a)
    w, v = np.linalg.eigh(a.entries)
    order = np.argsort(w, kind="stable")[::-1]
    return EigenDecomposition(w[order], fix_signs(v[:, order]))


def gram_schmidt(fs: Sequence[GridFunction]) -> list[GridFunction]:
    """Orthonormalize grid functions in order (modified Gram-Schmidt, two passes).

    Raises
    ------
    RankDeficiencyError
        If a function's residual norm drops below ``1e-10`` (relative to its
        own norm when that exceeds one).
    """
    values = stack_values(fs)
    ortho = gram_schmidt_values(values, fs[0].weights)
    return [fs[0].with_values(v) for v in ortho]


def gram_schmidt_values(values: np.ndarray, weights: np.ndarray) -> np.ndarray:
    """Array form of :func:`gram_schmidt` for rows of ``values``."""
    out = np.array(values, dtype=float)
    for k in range(out.shape[0]):
        v = out[k]
        scale = max(1.0, np.sqrt(np.dot(weights, v * v)))
        for _ in range(2):
            for j in range(k):
                v = v - np.dot(weights, v * out[j]) * out[j]
        nrm = np.sqrt(max(np.dot(weights, v * v), 0.0))
        if nrm < 1e-10 * scale:
            raise RankDeficiencyError(f"function {k} is numerically dependent on its predecessors")
        out[k] = v / nrm
    return out


def batch_gram_schmidt(values: np.ndarray, weights: np.ndarray) -> np.ndarray:
    """Gram-Schmidt over the middle axis of a ``(B, r, G)`` stack.

    Rows whose residual vanishes are left at zero instead of raising; callers
    treat those replicates as degenerate.
    """
    out = np.array(values, dtype=float)
    for k in range(out.shape[1]):
        v = out[:, k, :]
        for _ in range(2):
            for j in range(k):
                proj = (v * out[:, j, :]) @ weights
                v = v - proj[:, None] * out[:, j, :]
        nrm = np.sqrt(np.maximum((v * v) @ weights, 0.0))
        safe = np.where(nrm > 0, nrm, 1.0)
        out[:, k, :] = np.where(nrm[:, None] > 0, v / safe[:, None], 0.0)
    return out


def norm_cdf(x):
    """Standard normal CDF (``scipy.special.ndtr``, accurate to ~1e-16)."""
    x = np.asarray(x, dtype=float)
    out = ndtr(x)
    return float(out) if out.ndim == 0 else out
