"""Synthetic two-sample experiments: data generation, power studies and
empirical checks of the large-sample behaviour of the estimators.

Setup ``a`` draws both samples from random combinations of
``sqrt(2) sin(2 pi t)`` and ``sqrt(2) cos(2 pi t)``; the second sample's
functions are shifted by ``delta``. In setup ``b`` the second sample's second
factor is ``sqrt(2) sin(4 pi (t + delta))`` instead. Loadings are independent
centered Gaussians with the configured variances.
"""

from __future__ import annotations

import csv
import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Callable, Sequence

import numpy as np

from .core import GridFunction
from .exceptions import UnstableSpectrumError, ValidationError
from .fpca import build_dual_matrix, fpca_exact, prepare_dual, prepare_exact
from .core import sym_eigen
from .rng import derive_seed, stream
from .smoothing import DiscreteCurve
from .twosample import TestKind, _bootstrap

DELTAS = (0.0, 0.05, 0.1, 0.15, 0.2, 0.25)
PROFILES = {"desk": {"trials": 100, "B": 250}, "full": {"trials": 250, "B": 500}}


def fourier_basis(k: int) -> Callable[[np.ndarray], np.ndarray]:
    """``k``-th orthonormal Fourier function on [0, 1]: sin 2pi t, cos 2pi t, sin 4pi t, ..."""
    freq = 2 * math.pi * (k // 2 + 1)
    trig = np.sin if k % 2 == 0 else np.cos
    return lambda t: math.sqrt(2) * trig(freq * np.asarray(t, dtype=float))


def population_eigenfunctions(setup: str, group: int, delta: float) -> list[Callable]:
    """The two factor functions of sample ``group`` (1 or 2)."""
    s2 = math.sqrt(2)
    if group == 1:
        return [fourier_basis(0), fourier_basis(1)]
    first = lambda t: s2 * np.sin(2 * math.pi * (np.asarray(t) + delta))
    if setup == "a":
        second = lambda t: s2 * np.cos(2 * math.pi * (np.asarray(t) + delta))
    elif setup == "b":
        second = lambda t: s2 * np.sin(4 * math.pi * (np.asarray(t) + delta))
    else:
        raise ValidationError(f"unknown setup {setup!r}")
    return [first, second]


@dataclass(frozen=True)
class SimulationConfig:
    """One synthetic two-sample data set.

    ``lambdas`` are ``(l1 of sample 1, l2 of sample 1, l1 of sample 2,
    l2 of sample 2)``. ``noise_sd = 0`` means the functions are observed
    directly; ``noise_sd = 0.5`` gives observation errors of variance 0.25.
    """

    setup: str = "a"
    lambdas: tuple = (10.0, 5.0, 8.0, 4.0)
    delta: float = 0.0
    n: int = 70
    T: int = 100
    noise_sd: float = 0.0
    seed: int = 0

    def __post_init__(self):
        lam = tuple(float(x) for x in self.lambdas)
        object.__setattr__(self, "lambdas", lam)
        if self.setup not in ("a", "b"):
            raise ValidationError(f"setup must be 'a' or 'b', got {self.setup!r}")
        if len(lam) != 4:
            raise ValidationError("lambdas must have four entries")
        for p in (0, 2):
            if not lam[p] > lam[p + 1] > 0:
                raise ValidationError(f"need l1 > l2 > 0 within each sample, got {lam}")
        if not 0.0 <= self.delta <= 0.25:
            raise ValidationError("delta must lie in [0, 0.25]")
        if self.n < 4 or self.T < 10:
            raise ValidationError("need n >= 4 and T >= 10")
        if self.noise_sd < 0:
            raise ValidationError("noise_sd must be >= 0")


@dataclass(frozen=True, eq=False)
class TwoSamples:
    discrete1: list
    discrete2: list
    grid1: list | None
    grid2: list | None
    loadings1: np.ndarray = field(repr=False)
    loadings2: np.ndarray = field(repr=False)


def generate_two_samples(cfg: SimulationConfig) -> TwoSamples:
    """Draw both samples of ``cfg``.

    Discrete curves are observed at ``t_k = k / T``, ``k = 1..T``. When there
    is no noise the exact functions are also returned on the ``T + 1`` node
    grid ``k / T``, ``k = 0..T`` (for these periodic functions the trapezoid
    rule on that grid equals the plain average over the design points).
    """
    design = np.arange(1, cfg.T + 1) / cfg.T
    nodes = np.linspace(0.0, 1.0, cfg.T + 1)
    out = []
    for g in (1, 2):
        lam = np.array(cfg.lambdas[2 * (g - 1): 2 * g])
        loadings = stream(cfg.seed, 0, g).standard_normal((cfg.n, 2)) * np.sqrt(lam)
        funcs = population_eigenfunctions(cfg.setup, g, cfg.delta)
        at_design = loadings @ np.vstack([f(design) for f in funcs])
        if cfg.noise_sd > 0:
            at_design = at_design + cfg.noise_sd * stream(cfg.seed, 1, g).standard_normal(at_design.shape)
        discrete = [DiscreteCurve(design, y) for y in at_design]
        grid = None
        if cfg.noise_sd == 0:
            vals = loadings @ np.vstack([f(nodes) for f in funcs])
            grid = [GridFunction(0.0, 1.0, v) for v in vals]
        out.append((discrete, grid, loadings))
    return TwoSamples(out[0][0], out[1][0], out[0][1], out[1][1], out[0][2], out[1][2])


@dataclass(frozen=True)
class StudyRow:
    """One table row: a data-generating setup and the test applied to it."""

    setup: str
    lambdas: tuple
    kind: TestKind
    noise_sd: float = 0.0

    @property
    def label(self) -> str:
        lam = ", ".join(f"{x:g}" for x in self.lambdas)
        noisy = " noisy" if self.noise_sd > 0 else ""
        return f"({self.setup}) {lam} {self.kind.label}{noisy}"


@dataclass(frozen=True, eq=False)
class PowerTable:
    """Rejection rates, one row per :class:`StudyRow`, one column per shift."""

    rows: list
    deltas: tuple
    rejections: np.ndarray
    failures: np.ndarray
    trials: int
    B: int
    alpha: float
    n: int
    T: int
    seed: int
    bandwidth: float

    @property
    def rates(self) -> np.ndarray:
        return self.rejections / self.trials

    def rate(self, row: int, delta: float) -> float:
        return float(self.rates[row, self.deltas.index(delta)])

    def to_dict(self) -> dict:
        return {
            "metadata": {"trials": self.trials, "B": self.B, "alpha": self.alpha, "n": self.n, "T": self.T,
                         "seed": self.seed, "bandwidth": self.bandwidth},
            "deltas": list(self.deltas),
            "rows": [
                {"label": row.label, "setup": row.setup, "lambdas": list(row.lambdas), "kind": row.kind.label,
                 "noise_sd": row.noise_sd, "rates": self.rates[i].tolist(),
                 "rejections": self.rejections[i].tolist(), "unstable_trials": self.failures[i].tolist()}
                for i, row in enumerate(self.rows)
            ],
        }

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["setup", "lambdas", "kind", "noise_sd"] + [f"{d:g}" for d in self.deltas])
            for i, row in enumerate(self.rows):
                writer.writerow([row.setup, " ".join(f"{x:g}" for x in row.lambdas), row.kind.label,
                                 f"{row.noise_sd:g}"] + [f"{x:.4f}" for x in self.rates[i]])

    def to_json(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh, indent=2)

    def __str__(self):
        head = f"{'row':<36}" + "".join(f"{d:>8g}" for d in self.deltas)
        lines = [head] + [
            f"{row.label:<36}" + "".join(f"{x:>8.3f}" for x in self.rates[i]) for i, row in enumerate(self.rows)
        ]
        return "\n".join(lines)


def run_trial(row: StudyRow, delta: float, n: int, T: int, B: int, alpha: float, trial_seed: int,
              bandwidth: float = 0.05, grid_size: int = 500) -> bool:
    """One data set plus one bootstrap test; returns the decision.

    Noise-free data are analysed through exact grid inner products; noisy
    data through the dual-matrix estimator with Nadaraya-Watson smoothing
    (Epanechnikov kernel).
    """
    cfg = SimulationConfig(row.setup, row.lambdas, delta, n, T, row.noise_sd, derive_seed(trial_seed, 0))
    data = generate_two_samples(cfg)
    if row.noise_sd == 0:
        p1, p2 = prepare_exact(data.grid1), prepare_exact(data.grid2)
    else:
        grid = (0.0, 1.0, grid_size)
        p1 = prepare_dual(data.discrete1, bandwidth, "nw", grid=grid)
        p2 = prepare_dual(data.discrete2, bandwidth, "nw", grid=grid)
    rep = _bootstrap(p1, p2, [row.kind], B, alpha, derive_seed(trial_seed, 1), None, True)[0]
    return rep.reject


def _trial_task(args):
    try:
        return int(run_trial(*args)), 0
    except UnstableSpectrumError:
        return 0, 1


def run_power_study(rows: Sequence[StudyRow], deltas: Sequence[float] = DELTAS, trials: int = 100,
                    B: int = 250, alpha: float = 0.1, seed: int = 0, n: int = 70, T: int = 100,
                    bandwidth: float = 0.05, grid_size: int = 500, workers: int = 1,
                    progress: Callable[[str], None] | None = None) -> PowerTable:
    """Monte-Carlo rejection rates for every (row, shift) cell.

    Trial ``k`` of row ``i`` uses the seed ``derive_seed(seed, i, k)`` in every
    column, so columns differ only through the shift. Trials whose bootstrap
    hits the redraw cap count as non-rejections and are tallied separately.
    Results do not depend on ``workers``.
    """
    if trials < 1:
        raise ValidationError("trials must be >= 1")
    deltas = tuple(float(d) for d in deltas)
    rejections = np.zeros((len(rows), len(deltas)), dtype=int)
    failures = np.zeros_like(rejections)
    pool = ProcessPoolExecutor(max_workers=workers) if workers > 1 else None
    try:
        for i, row in enumerate(rows):
            for j, delta in enumerate(deltas):
                tasks = [(row, delta, n, T, B, alpha, derive_seed(seed, i, k), bandwidth, grid_size)
                         for k in range(trials)]
                results = pool.map(_trial_task, tasks, chunksize=max(1, trials // (4 * workers))) if pool \
                    else map(_trial_task, tasks)
                for rej, fail in results:
                    rejections[i, j] += rej
                    failures[i, j] += fail
                if progress:
                    progress(f"{row.label} delta={delta:g}: {rejections[i, j] / trials:.3f}")
    finally:
        if pool:
            pool.shutdown()
    return PowerTable(list(rows), deltas, rejections, failures, trials, B, alpha, n, T, seed, bandwidth)


@dataclass(frozen=True)
class StudySpec:
    rows: list
    deltas: tuple = DELTAS
    trials: int = 100
    B: int = 250
    alpha: float = 0.1
    n: int = 70
    T: int = 100
    seed: int = 1
    profile: str = "desk"
    bandwidth: float = 0.05
    grid_size: int = 500


def parse_study(spec: dict, profile: str | None = None, seed: int | None = None) -> StudySpec:
    """Build a :class:`StudySpec` from its JSON form.

    ``profile`` ("desk" or "full") supplies ``trials`` and ``B``; explicit
    values in ``spec`` win unless a profile is forced by the caller.
    """
    prof = profile or spec.get("profile", "desk")
    if prof not in PROFILES:
        raise ValidationError(f"unknown profile {prof!r}")
    base = dict(PROFILES[prof])
    if profile is None:
        base.update({k: spec[k] for k in ("trials", "B") if k in spec})
    try:
        rows = [
            StudyRow(r.get("setup", "a"), tuple(float(x) for x in r["lambdas"]), TestKind.parse(r["kind"]),
                     float(r.get("noise_sd", 0.0)))
            for r in spec["rows"]
        ]
    except (KeyError, TypeError) as exc:
        raise ValidationError(f"malformed study row: {exc}") from None
    return StudySpec(
        rows=rows,
        deltas=tuple(float(d) for d in spec.get("deltas", DELTAS)),
        trials=int(base["trials"]),
        B=int(base["B"]),
        alpha=float(spec.get("alpha", 0.1)),
        n=int(spec.get("n", 70)),
        T=int(spec.get("T", 100)),
        seed=int(seed if seed is not None else spec.get("seed", 1)),
        profile=prof,
        bandwidth=float(spec.get("bandwidth", 0.05)),
        grid_size=int(spec.get("grid_size", 500)),
    )


def load_study(path, profile: str | None = None, seed: int | None = None) -> StudySpec:
    with open(path) as fh:
        try:
            spec = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ValidationError(f"{path}: invalid JSON ({exc})") from None
    return parse_study(spec, profile, seed)


def run_study(study: StudySpec, workers: int = 1, progress=None) -> PowerTable:
    return run_power_study(study.rows, study.deltas, study.trials, study.B, study.alpha, study.seed, study.n,
                           study.T, study.bandwidth, study.grid_size, workers, progress)


@dataclass(frozen=True, eq=False)
class DiagnosticSummary:
    """Empirical large-sample behaviour of the estimators.

    Attributes
    ----------
    eigenvalue_variance : dict
        ``n -> [variance of sqrt(n) (lhat_r - l_r) for each r]``.
    gaussian_limit : list
        The Gaussian-loading limits ``2 l_r^2``.
    eigenfunction_error : dict
        ``n -> [mean ||ghat_r - g_r|| for each r]``.
    discretization_error : dict
        ``T -> [mean |lhat_r - (dual eigenvalue)_r| for each r]`` at fixed ``n``.
    """

    lambdas: tuple
    n_list: tuple
    T_list: tuple
    trials: int
    eigenvalue_variance: dict
    gaussian_limit: list
    eigenfunction_error: dict
    discretization_error: dict
    n_fixed: int

    def to_dict(self) -> dict:
        d = asdict(self)
        for key in ("eigenvalue_variance", "eigenfunction_error", "discretization_error"):
            d[key] = {str(k): v for k, v in d[key].items()}
        return d


def run_theorem_diagnostics(lambdas: Sequence[float] = (10.0, 5.0), n_list: Sequence[int] = (100, 400),
                            T_list: Sequence[int] = (50, 100, 200), trials: int = 200, seed: int = 0,
                            grid_T: int = 100, n_fixed: int = 50, grid_size: int = 2001) -> DiagnosticSummary:
    """Monte-Carlo checks on Gaussian random functions ``sum_r b_r phi_r``.

    ``phi_r`` are the Fourier functions of :func:`fourier_basis`. Sections:

    * eigenvalue fluctuations ``sqrt(n) (lhat_r - l_r)`` against ``2 l_r^2``;
    * mean eigenfunction error ``||ghat_r - phi_r||`` per sample size;
    * gap between the exact empirical eigenvalues (from the loadings) and the
      dual-matrix estimates from noise-free discrete observations at ``T``
      design points, at sample size ``n_fixed``.

    Directly observed functions live on ``grid_T + 1`` nodes; the step
    interpolants of the discretization check are rasterized on ``grid_size``
    nodes.
    """
    lam = np.array(lambdas, dtype=float)
    if lam.ndim != 1 or lam.size < 1 or np.any(np.diff(lam) >= 0) or lam[-1] <= 0:
        raise ValidationError("lambdas must be positive and strictly decreasing")
    if not n_list or not T_list:
        raise ValidationError("n_list and T_list must be nonempty")
    R = lam.size
    nodes = np.linspace(0.0, 1.0, grid_T + 1)
    basis = np.vstack([fourier_basis(k)(nodes) for k in range(R)])
    w = GridFunction(0.0, 1.0, nodes).weights

    eig_var, eig_err = {}, {}
    for a, n in enumerate(n_list):
        if n <= R:
            raise ValidationError(f"sample size {n} too small for {R} components")
        dev = np.zeros((trials, R))
        err = np.zeros((trials, R))
        for k in range(trials):
            beta = stream(seed, 0, a, k).standard_normal((n, R)) * np.sqrt(lam)
            fit = fpca_exact([GridFunction(0.0, 1.0, v) for v in beta @ basis], R)
            dev[k] = np.sqrt(n) * (fit.eigenvalues - lam)
            for r in range(R):
                g = fit.eigenfunctions[r].values
                g = g if np.dot(w, g * basis[r]) >= 0 else -g
                err[k, r] = np.sqrt(np.dot(w, (g - basis[r]) ** 2))
        eig_var[int(n)] = dev.var(axis=0, ddof=1).tolist()
        eig_err[int(n)] = err.mean(axis=0).tolist()

    disc = {}
    for a, T in enumerate(T_list):
        design = np.arange(1, T + 1) / T
        phi = np.vstack([fourier_basis(r)(design) for r in range(R)])
        gap = np.zeros((trials, R))
        for k in range(trials):
            beta = stream(seed, 1, a, k).standard_normal((n_fixed, R)) * np.sqrt(lam)
            centered = beta - beta.mean(axis=0)
            exact = np.sort(np.linalg.eigvalsh(centered.T @ centered / n_fixed))[::-1]
            curves = [DiscreteCurve(design, y) for y in beta @ phi]
            dual = sym_eigen(build_dual_matrix(curves, grid=(0.0, 1.0, grid_size))).eigenvalues[:R] / n_fixed
            gap[k] = np.abs(exact - dual)
        disc[int(T)] = gap.mean(axis=0).tolist()

    return DiagnosticSummary(tuple(lam.tolist()), tuple(int(n) for n in n_list), tuple(int(t) for t in T_list),
                             trials, eig_var, (2 * lam**2).tolist(), eig_err, disc, n_fixed)
