"""Imputation of grid data from irregular samples, wavelet coefficient
estimation, and hard-thresholded reconstruction.

Samples live on a grid of edge xi.  Each grid cell [k*xi, (k+1)*xi) is filled
with the most recent observation at or before its left edge, giving a step
path Z; coefficients are exact integrals of Z against the piecewise-linear
interpolant of the wavelet tabulation, accumulated cell by cell.  Z is zero
outside the covered cells, so coefficients near the data boundary integrate
against the zero extension.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .wavelet import WaveletTable


class NoAntecedentSampleError(ValueError):
    """A grid cell precedes every sampling time."""

    def __init__(self, cell: int):
        super().__init__(f"no sample at or before grid cell {cell}")
        self.cell = cell


class IncompleteCoefficientError(LookupError):
    """Reconstruction requires a coefficient outside the stored window."""


class InsufficientCalibrationError(ValueError):
    """Too few observations to estimate the noise level."""


@dataclass(frozen=True)
class SampleStream:
    """Ordered (T_i, Y_i) pairs on a grid of edge xi."""

    times: np.ndarray
    values: np.ndarray
    xi: float

    def __post_init__(self):
        t = np.asarray(self.times, dtype=float)
        y = np.asarray(self.values, dtype=float)
        if t.shape != y.shape or t.ndim != 1:
            raise ValueError("times and values must be 1-d arrays of equal length")
        if t.size == 0:
            raise ValueError("sample stream is empty")
        if np.any(np.diff(t) <= 0):
            raise ValueError("sampling times must be strictly increasing")
        mult = t / self.xi
        if np.any(np.abs(mult - np.round(mult)) > 1e-12 * np.maximum(1.0, np.abs(mult))):
            raise ValueError("sampling times must be integer multiples of xi")
        object.__setattr__(self, "times", t)
        object.__setattr__(self, "values", y)

    @property
    def cells(self) -> np.ndarray:
        return np.round(self.times / self.xi).astype(np.int64)

    def __len__(self):
        return self.times.size


@dataclass(frozen=True)
class ImputedPath:
    """Step values Z_k on grid cells [k*xi, (k+1)*xi) up to the horizon."""

    xi: float
    horizon: float
    z: np.ndarray = field(repr=False)

    @property
    def n_cells(self) -> int:
        return self.z.size

    def value(self, s):
        """Z^t(s): the step value, zero at or beyond the horizon."""
        s = np.asarray(s, dtype=float)
        k = np.floor(s / self.xi).astype(np.int64)
        inside = (s >= 0.0) & (s < self.horizon) & (k < self.n_cells)
        return np.where(inside, self.z[np.clip(k, 0, self.n_cells - 1)], 0.0)


def impute(stream: SampleStream, horizon: float) -> ImputedPath:
    """Fill every grid cell below the horizon with its antecedent observation."""
    n = int(math.ceil(horizon / stream.xi - 1e-9))
    cells = stream.cells
    idx = np.searchsorted(cells, np.arange(n), side="right") - 1
    if n > 0 and idx[0] < 0:
        raise NoAntecedentSampleError(0)
    z = stream.values[idx] if n > 0 else np.empty(0)
    return ImputedPath(xi=stream.xi, horizon=float(horizon), z=z)


def _cell_weights(table: WaveletTable, level_p: float, j: int, xi: float,
                  k_lo: int, k_hi: int, mother: bool) -> np.ndarray:
    """Integral of the basis function over each cell k_lo..k_hi-1."""
    k = np.arange(k_lo, k_hi + 1)
    u = level_p * k * xi - j - table.a
    anti = table.psi_integral_to(u) if mother else table.phi_integral_to(u)
    return np.diff(anti) / math.sqrt(level_p)


def coefficient(path: ImputedPath, table: WaveletTable, p: float, j: int,
                i: int | None = None) -> float:
    """Integral of the step path against phi_j (i None) or psi_ij."""
    level_p = p if i is None else 2 ** i * p
    lo = (table.a + j) / level_p
    hi = (table.b + j) / level_p
    k_lo = int(math.floor(lo / path.xi))
    k_hi = int(math.ceil(hi / path.xi))
    k_lo_c = max(k_lo, 0)
    k_hi_c = min(k_hi, path.n_cells)
    if k_hi_c <= k_lo_c:
        return 0.0
    w = _cell_weights(table, level_p, j, path.xi, k_lo_c, k_hi_c, mother=i is not None)
    return float(np.dot(path.z[k_lo_c:k_hi_c], w))


@dataclass(frozen=True)
class LevelCoefficients:
    """Contiguous run of coefficients at one level, starting at translate j0."""

    j0: int
    values: np.ndarray

    def has(self, j: int) -> bool:
        return self.j0 <= j < self.j0 + self.values.size

    def get(self, j: int) -> float:
        if not self.has(j):
            raise IncompleteCoefficientError(
                f"translate {j} outside stored range [{self.j0}, "
                f"{self.j0 + self.values.size})")
        return float(self.values[j - self.j0])


@dataclass(frozen=True)
class CoefficientSet:
    """Estimated father and detail coefficients over a time window."""

    p: float
    horizon: float
    father: LevelCoefficients
    details: tuple

    def father_coeff(self, j: int) -> float:
        return self.father.get(j)

    def detail_coeff(self, i: int, j: int) -> float:
        if not 0 <= i < len(self.details):
            raise IncompleteCoefficientError(f"detail level {i} not stored")
        return self.details[i].get(j)

    @property
    def n_levels(self) -> int:
        return len(self.details)


class CoefficientEngine:
    """Precomputed gather/scatter tables for batch coefficient estimation and
    reconstruction on a fixed grid.

    All arrays are read-only after construction; one engine is shared by every
    replication of a study.
    """

    def __init__(self, table: WaveletTable, p: float, xi: float, n_cells: int,
                 n_levels: int, t_lo: float = 0.0, t_hi: float | None = None):
        if n_levels > 1 and table.offset != int(table.offset):
            raise ValueError(
                "multiscale analysis needs an integer support offset; "
                f"table has offset {table.offset}")
        self.table = table
        self.p = p
        self.xi = xi
        self.n_cells = n_cells
        self.n_grid = n_cells + 1
        self.n_levels = n_levels
        if t_hi is None:
            t_hi = n_cells * xi
        self.t_lo, self.t_hi = t_lo, t_hi

        # index -1 = father level, 0..n_levels-1 = detail levels
        self._j0 = {}
        self._gather_idx = {}
        self._gather_w = {}
        self._grid_idx = {}
        self._grid_val = {}
        for lev in range(-1, n_levels):
            self._build_level(lev)

    def level_p(self, lev: int) -> float:
        return self.p if lev < 0 else 2 ** lev * self.p

    def _build_level(self, lev: int):
        tab = self.table
        lp = self.level_p(lev)
        width = tab.width
        j_min = int(math.ceil(lp * self.t_lo - tab.b))
        j_max = int(math.floor(lp * self.t_hi - tab.a))
        js = np.arange(j_min, j_max + 1)
        self._j0[lev] = j_min

        # cell integrals: rows are translates, columns cells of the support
        m_cells = int(math.ceil(width / (lp * self.xi))) + 1
        k_lo = np.floor((tab.a + js) / (lp * self.xi)).astype(np.int64)
        k = k_lo[:, None] + np.arange(m_cells + 1)[None, :]
        u = lp * k * self.xi - js[:, None] - tab.a
        anti = (tab.psi_integral_to(u) if lev >= 0 else tab.phi_integral_to(u))
        w = np.diff(anti, axis=1) / math.sqrt(lp)
        kc = k[:, :-1]
        valid = (kc >= 0) & (kc < self.n_cells)
        self._gather_idx[lev] = np.where(valid, kc, 0)
        self._gather_w[lev] = np.where(valid, w, 0.0)

        # basis values at the grid points of the support, for synthesis
        m_pts = int(math.floor(width / (lp * self.xi))) + 2
        g_lo = np.ceil((tab.a + js) / (lp * self.xi)).astype(np.int64)
        gk = g_lo[:, None] + np.arange(m_pts)[None, :]
        ug = lp * gk * self.xi - js[:, None] - tab.a
        vals = (tab.psi_at(ug) if lev >= 0 else tab.phi_at(ug)) * math.sqrt(lp)
        gvalid = (gk >= 0) & (gk < self.n_grid)
        self._grid_idx[lev] = np.where(gvalid, gk, 0)
        self._grid_val[lev] = np.where(gvalid, vals, 0.0)

        for arr in (self._gather_idx[lev], self._gather_w[lev],
                    self._grid_idx[lev], self._grid_val[lev]):
            arr.setflags(write=False)

    def j_range(self, lev: int):
        j0 = self._j0[lev]
        return j0, j0 + self._gather_idx[lev].shape[0]

    def coefficients_level(self, z: np.ndarray, lev: int) -> np.ndarray:
        """All coefficients of one level from the step values z (full grid)."""
        return np.einsum("ij,ij->i", z[self._gather_idx[lev]], self._gather_w[lev])

    def coefficient_single(self, z: np.ndarray, lev: int, j: int) -> float:
        row = j - self._j0[lev]
        idx = self._gather_idx[lev][row]
        return float(np.dot(z[idx], self._gather_w[lev][row]))

    def all_coefficients(self, z: np.ndarray, horizon: float | None = None) -> CoefficientSet:
        if horizon is None:
            horizon = self.n_cells * self.xi
        father = LevelCoefficients(self._j0[-1], self.coefficients_level(z, -1))
        details = tuple(
            LevelCoefficients(self._j0[i], self.coefficients_level(z, i))
            for i in range(self.n_levels))
        return CoefficientSet(p=self.p, horizon=horizon, father=father, details=details)

    def synthesize_level(self, coeff: np.ndarray, lev: int,
                         keep: np.ndarray | None = None) -> np.ndarray:
        """Sum of coeff[j] * basis_j over the grid; ``keep`` masks translates."""
        rows = np.nonzero(keep)[0] if keep is not None else slice(None)
        gi = self._grid_idx[lev][rows]
        gv = self._grid_val[lev][rows]
        c = coeff[rows]
        if gi.size == 0:
            return np.zeros(self.n_grid)
        return np.bincount(gi.ravel(), weights=(c[:, None] * gv).ravel(),
                           minlength=self.n_grid)

    def reconstruct_grid(self, coeffs: CoefficientSet, q: int, delta: float) -> np.ndarray:
        """Hard-thresholded estimate on the full grid with fixed (q, delta)."""
        out = self.synthesize_level(coeffs.father.values, -1)
        for i in range(min(q, self.n_levels)):
            vals = coeffs.details[i].values
            keep = np.abs(vals) >= delta
            if keep.any():
                out += self.synthesize_level(vals, i, keep)
        return out


def reconstruct(coeffs: CoefficientSet, q: int, delta: float, s: float,
                table: WaveletTable, p: float) -> float:
    """Pointwise hard-thresholded estimate: father series plus detail terms
    with |b| >= delta on levels 0..q-1."""
    if delta < 0:
        raise ValueError(f"threshold must be >= 0, got {delta}")
    if q < 1:
        raise ValueError(f"depth must be >= 1, got {q}")
    total = 0.0
    for j in range(int(math.ceil(p * s - table.b)), int(math.floor(p * s - table.a)) + 1):
        val = coeffs.father_coeff(j)
        total += val * math.sqrt(p) * float(table.phi_at(p * s - j - table.a))
    for i in range(q):
        lp = 2 ** i * p
        for j in range(int(math.ceil(lp * s - table.b)),
                       int(math.floor(lp * s - table.a)) + 1):
            val = coeffs.detail_coeff(i, j)
            if abs(val) >= delta:
                total += val * math.sqrt(lp) * float(table.psi_at(lp * s - j - table.a))
    return total


def estimate_sigma(stream: SampleStream) -> float:
    """First-difference noise estimate over a densely sampled prefix."""
    n = len(stream)
    if n < 50:
        raise InsufficientCalibrationError(
            f"need at least 50 calibration observations, got {n}")
    d = np.diff(stream.values)
    return float(math.sqrt(np.sum(d * d) / (2.0 * (n - 1))))


def optimal_primary_level(rho: float, sigma: float, gamma_sq: float,
                          kappa: float, r: int) -> float:
    """Rate-optimal primary level p = (kappa sigma^2/gamma^2)^(-1/(2r+1)) rho^(1/(2r+1))."""
    for name, v in (("rho", rho), ("sigma", sigma), ("gamma_sq", gamma_sq),
                    ("kappa", kappa), ("r", r)):
        if v <= 0:
            raise ValueError(f"{name} must be positive, got {v}")
    e = 1.0 / (2 * r + 1)
    return (kappa * sigma ** 2 / gamma_sq) ** (-e) * rho ** e
