"""Reconstruction of individual curves from noisy discrete observations.

Two kernel smoothers (Nadaraya-Watson and local linear) evaluate a curve on a
common grid, and :func:`step_chi` builds the piecewise-constant interpolants
used by the dual-matrix estimator in :mod:`commonfpc.fpca`.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .core import DEFAULT_GRID_SIZE, GridFunction
from .exceptions import (
    DegenerateWindowError,
    InsufficientPointsError,
    UndefinedWindowError,
    ValidationError,
)


@dataclass(frozen=True, eq=False)
class DiscreteCurve:
    """Noisy observations ``obs[k]`` of one curve at design points ``design[k]``."""

    design: np.ndarray = field(repr=False)
    obs: np.ndarray = field(repr=False)
    domain_lo: float = 0.0
    domain_hi: float = 1.0
    curve_id: str | None = None

    def __post_init__(self):
        t = np.array(self.design, dtype=float).ravel()
        y = np.array(self.obs, dtype=float).ravel()
        if t.size != y.size:
            raise ValidationError(f"design has {t.size} points but obs has {y.size}")
        if t.size < 2:
            raise InsufficientPointsError("a discrete curve needs at least 2 observations")
        if not (np.all(np.isfinite(t)) and np.all(np.isfinite(y))):
            raise ValidationError("design points and observations must be finite")
        if not self.domain_lo < self.domain_hi:
            raise ValidationError(f"invalid domain [{self.domain_lo}, {self.domain_hi}]")
        if t.min() < self.domain_lo or t.max() > self.domain_hi:
            raise ValidationError(
                f"design points outside the domain [{self.domain_lo}, {self.domain_hi}]"
            )
        order = np.argsort(t, kind="stable")
        t, y = t[order], y[order]
        t.setflags(write=False)
        y.setflags(write=False)
        object.__setattr__(self, "design", t)
        object.__setattr__(self, "obs", y)

    @property
    def size(self) -> int:
        return self.design.size

    @property
    def domain(self) -> tuple[float, float]:
        return self.domain_lo, self.domain_hi


@dataclass(frozen=True)
class KernelSpec:
    """A symmetric kernel density supported on [-1, 1]."""

    kind: str = "epanechnikov"

    def __post_init__(self):
        if self.kind not in _KERNELS:
            raise ValidationError(f"unknown kernel {self.kind!r}; available: {sorted(_KERNELS)}")

    def __call__(self, u):
        return _KERNELS[self.kind](u)


def epanechnikov(u):
    """``0.75 (1 - u^2)`` on ``|u| <= 1``, zero elsewhere."""
    u = np.asarray(u, dtype=float)
    out = np.where(np.abs(u) <= 1.0, 0.75 * (1.0 - u * u), 0.0)
    return float(out) if out.ndim == 0 else out


_KERNELS: dict[str, Callable] = {"epanechnikov": epanechnikov}

EPANECHNIKOV = KernelSpec("epanechnikov")


def _grid_nodes(curve: DiscreteCurve, grid) -> tuple[float, float, np.ndarray]:
    if grid is None:
        return curve.domain_lo, curve.domain_hi, np.linspace(curve.domain_lo, curve.domain_hi, DEFAULT_GRID_SIZE)
    if isinstance(grid, GridFunction):
        return grid.domain_lo, grid.domain_hi, grid.nodes
    lo, hi, size = grid
    return float(lo), float(hi), np.linspace(lo, hi, int(size))


def _kernel_weights(curve, bandwidth, kernel, nodes):
    if not bandwidth > 0:
        raise ValidationError(f"bandwidth must be positive, got {bandwidth}")
    u = (nodes[:, None] - curve.design[None, :]) / bandwidth
    return kernel(u), nodes[:, None] - curve.design[None, :]


def nadaraya_watson(curve: DiscreteCurve, bandwidth: float, kernel: KernelSpec = EPANECHNIKOV,
                    grid=None) -> GridFunction:
    """Kernel-weighted local average of ``curve.obs`` at each grid node.

    ``grid`` is a template :class:`GridFunction`, a ``(lo, hi, size)`` tuple, or
    ``None`` for the default 500-node grid on the curve's domain.

    Raises
    ------
    UndefinedWindowError
        If some node has no design point strictly inside its kernel window.
    """
    lo, hi, nodes = _grid_nodes(curve, grid)
    w, _ = _kernel_weights(curve, bandwidth, kernel, nodes)
    s0 = w.sum(axis=1)
    empty = np.flatnonzero(s0 <= 0)
    if empty.size:
        raise UndefinedWindowError(nodes[empty[0]], bandwidth)
    return GridFunction(lo, hi, (w @ curve.obs) / s0)


def local_linear(curve: DiscreteCurve, bandwidth: float, kernel: KernelSpec = EPANECHNIKOV,
                 grid=None) -> GridFunction:
    """Local weighted least-squares line, evaluated at each grid node.

    Raises
    ------
    UndefinedWindowError
        Empty kernel window at some node.
    DegenerateWindowError
        All design points of some window coincide, so the local line is not
        identified.
    """
    lo, hi, nodes = _grid_nodes(curve, grid)
    w, d = _kernel_weights(curve, bandwidth, kernel, nodes)
    s0 = w.sum(axis=1)
    empty = np.flatnonzero(s0 <= 0)
    if empty.size:
        raise UndefinedWindowError(nodes[empty[0]], bandwidth)
    # centre offsets at the window mean for a well-conditioned 2x2 solve
    dbar = (w * d).sum(axis=1) / s0
    dc = d - dbar[:, None]
    s2 = (w * dc * dc).sum(axis=1)
    spread = (w * d * d).sum(axis=1) / s0
    bad = np.flatnonzero(s2 <= 1e-12 * s0 * np.maximum(spread, np.finfo(float).tiny))
    if bad.size:
        raise DegenerateWindowError(nodes[bad[0]], bandwidth)
    ybar = (w @ curve.obs) / s0
    slope = ((w * dc) @ curve.obs) / s2
    # the fitted line at offset 0 from the node
    return GridFunction(lo, hi, ybar - slope * dbar)


SMOOTHERS: dict[str, Callable] = {"nw": nadaraya_watson, "local_linear": local_linear}


def get_smoother(name: str) -> Callable:
    try:
        return SMOOTHERS[name]
    except KeyError:
        raise ValidationError(f"unknown smoother {name!r}; choose from {sorted(SMOOTHERS)}") from None


def smallest_covering_bandwidth(curve: DiscreteCurve, grid=None, factor: float = 1.05, points: int = 1) -> float:
    """Smallest bandwidth (times ``factor``) for which every grid node sees ``points`` design points.

    With a kernel vanishing at ``|u| = 1`` the window must reach strictly past
    the nearest design point, hence ``factor > 1``. ``points = 2`` counts
    distinct locations, which is what the local linear smoother needs.
    """
    _, _, nodes = _grid_nodes(curve, grid)
    if points == 1:
        idx = np.searchsorted(curve.design, nodes).clip(1, curve.size - 1)
        gap = np.minimum(np.abs(nodes - curve.design[idx - 1]), np.abs(nodes - curve.design[idx]))
    else:
        t = np.unique(curve.design)
        if t.size < points:
            raise InsufficientPointsError(f"need {points} distinct design points, got {t.size}")
        gap = np.partition(np.abs(nodes[:, None] - t[None, :]), points - 1, axis=1)[:, points - 1]
    return float(factor * max(gap.max(), np.finfo(float).eps))


def default_bandwidth(curves: Sequence[DiscreteCurve], smoother: str = "local_linear", grid=None) -> float:
    """Smallest bandwidth that lets ``smoother`` evaluate every curve on the grid."""
    points = 2 if smoother == "local_linear" else 1
    return max(smallest_covering_bandwidth(c, grid, points=points) for c in curves)


def step_cells(curve: DiscreteCurve, lagged: bool = False) -> tuple[np.ndarray, np.ndarray]:
    """Cell boundaries and cell values of the step interpolant.

    Cell ``j`` of the plain interpolant spans the midpoints around the ``j``-th
    ordered design point and carries its observation; the outermost
    boundaries come from reflecting the first and last design points at the
    domain ends. The lagged variant redefines the first design point as the
    reflection of the second, which merges the first two cells, and assigns
    each cell the observation of the preceding design point.

    Returns
    -------
    edges : ndarray, shape (m + 1,)
    values : ndarray, shape (m,)
    """
    t, y = curve.design, curve.obs
    lo, hi = curve.domain
    mids = 0.5 * (t[:-1] + t[1:])
    if not lagged:
        left = 0.5 * ((2 * lo - t[0]) + t[0])
        right = 0.5 * (t[-1] + (2 * hi - t[-1]))
        return np.concatenate([[left], mids, [right]]), y.copy()
    if curve.size < 2:
        raise InsufficientPointsError("the lagged step function needs at least 2 design points")
    left = 0.5 * ((2 * lo - t[1]) + t[1])
    right = 0.5 * (t[-1] + (2 * hi - t[-1]))
    return np.concatenate([[left], mids[1:], [right]]), y[:-1].copy()


def step_chi(curve: DiscreteCurve, lagged: bool = False, grid=None) -> GridFunction:
    """Step interpolant of the observations, rasterized onto the grid.

    Each node takes the value of the half-open cell that covers it; the right
    domain end belongs to the last cell.
    """
    lo, hi, nodes = _grid_nodes(curve, grid)
    return GridFunction(lo, hi, _rasterize(curve, lagged, nodes))


def _rasterize(curve: DiscreteCurve, lagged: bool, nodes: np.ndarray) -> np.ndarray:
    edges, values = step_cells(curve, lagged)
    idx = np.searchsorted(edges[1:-1], nodes, side="right")
    return values[idx]


def step_matrix(curves: Sequence[DiscreteCurve], lagged: bool, grid) -> np.ndarray:
    """Rasterized step interpolants of several curves as an ``(n, G)`` array."""
    _, _, nodes = _grid_nodes(curves[0], grid)
    return np.vstack([_rasterize(c, lagged, nodes) for c in curves])


def smooth_matrix(curves: Sequence[DiscreteCurve], bandwidth: float, smoother: str = "local_linear",
                  kernel: KernelSpec = EPANECHNIKOV, grid=None) -> np.ndarray:
    """Smoothed curves on a common grid as an ``(n, G)`` array."""
    func = get_smoother(smoother)
    return np.vstack([func(c, bandwidth, kernel, grid).values for c in curves])


def read_curves_csv(path, domain: tuple[float, float] = (0.0, 1.0)) -> list[DiscreteCurve]:
    """Read curves from a ``curve_id,t,y`` CSV file.

    Rows may be grouped or interleaved by id; curves come back in order of
    first appearance, each sorted by ``t``.
    """
    groups: dict[str, list[tuple[float, float]]] = {}
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        missing = {"curve_id", "t", "y"} - set(reader.fieldnames or ())
        if missing:
            raise ValidationError(f"{path}: missing column(s) {sorted(missing)}")
        for lineno, row in enumerate(reader, start=2):
            try:
                groups.setdefault(row["curve_id"], []).append((float(row["t"]), float(row["y"])))
            except (TypeError, ValueError):
                raise ValidationError(f"{path}:{lineno}: cannot parse row {row}") from None
    if not groups:
        raise ValidationError(f"{path}: no data rows")
    curves = []
    for cid, rows in groups.items():
        arr = np.array(rows)
        curves.append(DiscreteCurve(arr[:, 0], arr[:, 1], domain[0], domain[1], curve_id=cid))
    return curves


def write_curves_csv(path, curves: Sequence[DiscreteCurve]) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["curve_id", "t", "y"])
        for i, c in enumerate(curves):
            cid = c.curve_id if c.curve_id is not None else str(i)
            for t, y in zip(c.design, c.obs):
                writer.writerow([cid, repr(float(t)), repr(float(y))])
