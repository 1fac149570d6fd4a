"""Compactly supported orthonormal wavelet bases tabulated by the cascade algorithm.

The father function phi and mother function psi are built from a refinement
filter h (normalised so that sum(h) = sqrt(2)) by iterating

    phi(t) = sqrt(2) * sum_k h[k] * phi(2t - k)

on a dyadic grid until the tabulation stops changing.  Translates and dilates
are evaluated by linear interpolation of the tabulation; everything outside
the compact support is exactly zero.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

SQRT2 = math.sqrt(2.0)


class FilterValidationError(ValueError):
    """Refinement filter violates a structural invariant."""


class CascadeConvergenceError(RuntimeError):
    """Cascade iteration failed to reach the target residual."""

    def __init__(self, message: str, residual: float, iterations: int):
        super().__init__(message)
        self.residual = residual
        self.iterations = iterations


# Scaling (refinement) coefficients for the Daubechies extremal-phase family,
# normalised so the sum is sqrt(2).  Order r uses 2r taps and the support of
# phi/psi has width 2r - 1.
_DAUBECHIES_H = {
    1: (0.7071067811865476, 0.7071067811865476),
    2: (0.4829629131445341, 0.8365163037378079,
        0.2241438680420134, -0.1294095225512604),
    3: (0.3326705529509569, 0.8068915093133388, 0.4598775021193313,
        -0.13501102001039084, -0.08544127388224149, 0.035226291882100656),
    4: (0.23037781330885523, 0.7148465705525415, 0.6308807679295904,
        -0.02798376941698385, -0.18703481171888114, 0.030841381835986965,
        0.032883011666982945, -0.010597401784997278),
    5: (0.160102397974125, 0.6038292697974729, 0.7243085284385744,
        0.13842814590110342, -0.24229488706619015, -0.03224486958502952,
        0.07757149384006515, -0.006241490213011705, -0.012580751999015526,
        0.003335725285001549),
}


@dataclass(frozen=True)
class WaveletFilter:
    """Refinement coefficients plus the order (vanishing moments) they encode."""

    h: tuple
    order: int
    family: str = "daubechies-extremal-phase"

    def __post_init__(self):
        h = np.asarray(self.h, dtype=float)
        if abs(h.sum() - SQRT2) > 1e-12:
            raise FilterValidationError(
                f"filter taps sum to {h.sum():.15f}, expected sqrt(2)")
        if self.family.startswith("daub") or self.family == "haar":
            if len(h) != 2 * self.order:
                raise FilterValidationError(
                    f"expected {2 * self.order} taps for order {self.order}, got {len(h)}")
        for m in range(1, len(h) // 2 + 1):
            dot = float(np.dot(h[: len(h) - 2 * m], h[2 * m:]))
            if abs(dot) > 1e-10:
                raise FilterValidationError(
                    f"quadrature-mirror orthogonality fails at shift {2 * m}: {dot:.3e}")

    @property
    def support_width(self) -> int:
        return len(self.h) - 1

    def mirror(self) -> np.ndarray:
        """High-pass taps g[k] = (-1)^k h[L-1-k] generating the mother function."""
        h = np.asarray(self.h, dtype=float)
        g = h[::-1].copy()
        g[1::2] *= -1.0
        return g

    @staticmethod
    def daubechies(order: int) -> "WaveletFilter":
        if order not in _DAUBECHIES_H:
            raise FilterValidationError(
                f"no tabulated Daubechies filter of order {order}; "
                f"available orders: {sorted(_DAUBECHIES_H)}")
        return WaveletFilter(_DAUBECHIES_H[order], order)

    @staticmethod
    def haar() -> "WaveletFilter":
        return WaveletFilter(_DAUBECHIES_H[1], 1, family="haar")


@dataclass(frozen=True)
class WaveletTable:
    """Dyadic tabulation of phi and psi on the canonical grid [0, 2r-1].

    The stored support is [a, b] = [offset, offset + 2r - 1]; evaluation maps
    an argument x to the canonical coordinate x - a.  ``phi_int``/``psi_int``
    hold the running integral of the piecewise-linear interpolant at the grid
    nodes, so cell integrals of any translate/dilate are exact for the
    interpolant.
    """

    filter: WaveletFilter
    depth: int
    offset: float
    phi: np.ndarray = field(repr=False)
    psi: np.ndarray = field(repr=False)
    phi_int: np.ndarray = field(repr=False)
    psi_int: np.ndarray = field(repr=False)
    psi_energy: np.ndarray = field(repr=False)
    psi_t_int: np.ndarray = field(repr=False)
    iterations: int
    residual: float

    @property
    def order(self) -> int:
        return self.filter.order

    @property
    def width(self) -> int:
        return self.filter.support_width

    @property
    def a(self) -> float:
        return self.offset

    @property
    def b(self) -> float:
        return self.offset + self.width

    @property
    def step(self) -> float:
        return 2.0 ** (-self.depth)

    def _interp(self, tab: np.ndarray, u):
        """Piecewise-linear value of a tabulation at canonical coordinate u."""
        u = np.asarray(u, dtype=float)
        inside = (u >= 0.0) & (u <= self.width)
        pos = np.clip(u, 0.0, self.width) / self.step
        idx = np.minimum(pos.astype(np.int64), tab.size - 2)
        frac = pos - idx
        out = tab[idx] * (1.0 - frac) + tab[idx + 1] * frac
        return np.where(inside, out, 0.0)

    def _antiderivative(self, tab: np.ndarray, tab_int: np.ndarray, u):
        """Exact integral of the interpolant from 0 to u (clamped to support)."""
        u = np.clip(np.asarray(u, dtype=float), 0.0, self.width)
        pos = u / self.step
        idx = np.minimum(pos.astype(np.int64), tab.size - 2)
        du = u - idx * self.step
        v0 = tab[idx]
        v1 = tab[idx + 1]
        frac = du / self.step
        return tab_int[idx] + du * (v0 + (v0 * (1.0 - frac) + v1 * frac)) / 2.0

    def phi_at(self, u):
        return self._interp(self.phi, u)

    def psi_at(self, u):
        return self._interp(self.psi, u)

    def phi_integral_to(self, u):
        return self._antiderivative(self.phi, self.phi_int, u)

    def psi_integral_to(self, u):
        return self._antiderivative(self.psi, self.psi_int, u)

    def psi_energy_fraction(self, u):
        """Fraction of the squared-psi mass lying at or below u."""
        u = np.clip(np.asarray(u, dtype=float), 0.0, self.width)
        pos = u / self.step
        idx = np.minimum(pos.astype(np.int64), self.psi_energy.size - 2)
        frac = pos - idx
        total = self.psi_energy[-1]
        return (self.psi_energy[idx] * (1 - frac) + self.psi_energy[idx + 1] * frac) / total

    def psi_first_moment_to(self, u):
        """Integral of v * psi(v) from 0 to u (clamped to the support)."""
        u = np.clip(np.asarray(u, dtype=float), 0.0, self.width)
        pos = u / self.step
        idx = np.minimum(pos.astype(np.int64), self.psi_t_int.size - 2)
        frac = pos - idx
        return self.psi_t_int[idx] * (1 - frac) + self.psi_t_int[idx + 1] * frac


def _refine(values: np.ndarray, h: np.ndarray, depth: int) -> np.ndarray:
    """One application of the refinement map on the fixed dyadic grid."""
    n = values.size
    out = np.zeros_like(values)
    scale = 2 ** depth
    idx = 2 * np.arange(n)
    for k, hk in enumerate(h):
        src = idx - k * scale
        valid = (src >= 0) & (src < n)
        out[valid] += SQRT2 * hk * values[src[valid]]
    return out


def cascade_tabulate(filt: WaveletFilter, depth: int, offset: float | None = None,
                     tol: float = 1e-10, max_iter: int = 60) -> WaveletTable:
    """Tabulate phi and psi at resolution 2**-depth via the cascade algorithm.

    Starts from the unit box and iterates the refinement map until the
    sup-norm change drops below ``tol``.  The grid values of the true phi are
    a fixed point of the map, so the iteration converges to them.  ``offset``
    places the stored support at [offset, offset + 2r - 1]; the default
    centres it so that a < 0 < b (for width 1 no such integer offset exists
    and the canonical [0, 1] is kept).  Only integer offsets keep translate
    lattices aligned across dyadic scales, which multiscale analysis needs.
    """
    if depth < 8:
        raise ValueError(f"tabulation depth must be >= 8, got {depth}")
    width = filt.support_width
    if offset is None:
        offset = -(width // 2)
    h = np.asarray(filt.h, dtype=float)
    n = width * 2 ** depth + 1

    phi = np.zeros(n)
    phi[: 2 ** depth] = 1.0  # box start, unit integral

    residual = math.inf
    iterations = 0
    for iterations in range(1, max_iter + 1):
        new = _refine(phi, h, depth)
        residual = float(np.max(np.abs(new - phi)))
        phi = new
        if residual < tol:
            break
    else:
        raise CascadeConvergenceError(
            f"cascade did not converge below {tol:.1e} in {max_iter} iterations "
            f"(last residual {residual:.3e})", residual, max_iter)

    psi = _refine(phi, filt.mirror(), depth)

    step = 2.0 ** (-depth)
    phi_int = np.concatenate(([0.0], np.cumsum((phi[:-1] + phi[1:]) * step / 2.0)))
    psi_int = np.concatenate(([0.0], np.cumsum((psi[:-1] + psi[1:]) * step / 2.0)))
    sq = psi * psi
    psi_energy = np.concatenate(([0.0], np.cumsum((sq[:-1] + sq[1:]) * step / 2.0)))
    tp = np.arange(psi.size) * step * psi
    psi_t_int = np.concatenate(([0.0], np.cumsum((tp[:-1] + tp[1:]) * step / 2.0)))

    for arr in (phi, psi, phi_int, psi_int, psi_energy, psi_t_int):
        arr.setflags(write=False)

    return WaveletTable(filter=filt, depth=depth, offset=float(offset),
                        phi=phi, psi=psi, phi_int=phi_int, psi_int=psi_int,
                        psi_energy=psi_energy, psi_t_int=psi_t_int,
                        iterations=iterations, residual=residual)


def eval_father(table: WaveletTable, p: float, j: int, t):
    """phi_j(t) = p^(1/2) phi(p t - j), zero outside its support."""
    if p <= 0:
        raise ValueError(f"resolution level must be positive, got {p}")
    return math.sqrt(p) * table.phi_at(np.asarray(t, dtype=float) * p - j - table.a)


def eval_mother(table: WaveletTable, p: float, i: int, j: int, t):
    """psi_ij(t) = p_i^(1/2) psi(p_i t - j) with p_i = 2^i p."""
    if p <= 0:
        raise ValueError(f"primary level must be positive, got {p}")
    if i < 0:
        raise ValueError(f"dyadic level must be >= 0, got {i}")
    pi = 2 ** i * p
    return math.sqrt(pi) * table.psi_at(np.asarray(t, dtype=float) * pi - j - table.a)


def support_bounds(table: WaveletTable, p: float, i: int | None, j: int):
    """Closed support interval of psi_ij, or of phi_j when i is None."""
    pi = p if i is None else 2 ** i * p
    return ((table.a + j) / pi, (table.b + j) / pi)
