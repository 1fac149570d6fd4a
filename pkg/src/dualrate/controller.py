"""Online dual-rate acquisition: the state machine that decides when to sample
and when to switch between the low rate rho1 = 1/(ell*xi) and the high rate
rho2 = 1/xi.

Decisions act on fully formed coefficients: a coefficient enters the scan as
soon as the data covering its support is complete, i.e. with a delay of one
support width after the signal feature it measures.  An upswitch fires when a
fresh coefficient in the (pi1, q1) band exceeds delta1; a downswitch fires
when the recent scan history in the (pi2, q2) band is clear of delta2
exceedances and the minimum high-rate dwell has elapsed.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field, replace

import numpy as np

from .estimator import CoefficientEngine, CoefficientSet
from .wavelet import WaveletTable, support_bounds


class SequencingError(RuntimeError):
    """Controller stepped with an out-of-order or off-grid time."""


class Regime(enum.Enum):
    LOW = "low"
    HIGH_WARMUP = "high-warmup"
    HIGH = "high"

    @property
    def samples_fast(self) -> bool:
        return self is not Regime.LOW


def threshold(C: float, sigma: float, rho: float) -> float:
    """Hard threshold C * sigma * sqrt(log(rho)/rho), natural log."""
    if C <= 0:
        raise ValueError(f"threshold constant must be positive, got {C}")
    if sigma < 0:
        raise ValueError(f"noise sd must be >= 0, got {sigma}")
    if rho <= 1:
        raise ValueError(f"rate must exceed 1 for a positive log, got {rho}")
    return C * sigma * math.sqrt(math.log(rho) / rho)


def compute_tau0(width: float, p: float, ell: int, xi: float) -> float:
    """Least integer multiple of ell*xi that is >= width/p."""
    if min(width, p, ell, xi) <= 0:
        raise ValueError("all arguments must be positive")
    unit = ell * xi
    m = math.ceil(width / (p * unit) - 1e-9)
    return m * unit


@dataclass(frozen=True)
class RateConfig:
    """Static tuning of the dual-rate machinery.

    ``dwell_steps`` is the minimum high-rate residence before a downswitch is
    considered, in steps of xi; ``warmup`` is the high-rate residence after
    which the refined pair (q2, delta2) takes effect; ``down_window`` is the
    lookback over which the downswitch scan must be clear of exceedances
    (used by ``down_scan='window'``; ``'instant'`` checks only the newest
    coefficient per level).  All three default to the same classic value
    (support width in low-rate steps, plus one grid step).
    """

    xi: float = 0.01
    ell: int = 6
    C: float = 2.0
    p: float = 1.0
    q1: int = 4
    q2: int = 5
    pi1: float = 2.0
    pi2: float = 3.0
    width: float = 9.0
    dwell_steps: int | None = None
    warmup: float | None = None
    down_window: float | None = None
    down_scan: str = "window"
    straddle_pi_min: float | None = 8.0
    zone_gap_steps: int | None = None
    max_high_fraction: float | None = None

    def __post_init__(self):
        if self.ell < 2:
            raise ValueError(f"decimation factor ell must be >= 2, got {self.ell}")
        if self.xi <= 0:
            raise ValueError(f"grid edge xi must be positive, got {self.xi}")
        if self.q1 < 1 or self.q2 < 1:
            raise ValueError("depths q1, q2 must be >= 1")
        if self.down_scan not in ("window", "instant"):
            raise ValueError(f"down_scan must be 'window' or 'instant', got {self.down_scan!r}")
        if self.dwell_steps is None:
            object.__setattr__(self, "dwell_steps", self.default_dwell_steps())
        if self.warmup is None:
            object.__setattr__(self, "warmup", self.dwell_steps * self.xi)
        if self.down_window is None:
            object.__setattr__(self, "down_window", self.dwell_steps * self.xi)
        if self.zone_gap_steps is None:
            object.__setattr__(self, "zone_gap_steps", 2 * self.ell)

    def default_dwell_steps(self) -> int:
        # support width expressed in low-rate steps, plus one grid step
        return int(round(self.width / (self.p * self.ell * self.xi))) + 1

    @property
    def rho1(self) -> float:
        return 1.0 / (self.ell * self.xi)

    @property
    def rho2(self) -> float:
        return 1.0 / self.xi

    @property
    def tau0(self) -> float:
        return compute_tau0(self.width, self.p, self.ell, self.xi)

    @property
    def dwell(self) -> float:
        return self.dwell_steps * self.xi

    def level_p(self, i: int) -> float:
        return 2 ** i * self.p

    def _band(self, pi_bound: float, q: int):
        return tuple(i for i in range(q + 1)
                     if pi_bound <= self.level_p(i) <= self.level_p(q))

    @property
    def upswitch_levels(self):
        return self._band(self.pi1, self.q1)

    @property
    def downswitch_levels(self):
        return self._band(self.pi2, self.q2)

    @property
    def straddle_levels(self):
        """Upswitch-band levels scanned while their support still straddles the
        current time (fine scales, where the hold-extension bias is far below
        delta1); coarser levels wait for completion."""
        if self.straddle_pi_min is None:
            return ()
        return tuple(i for i in self.upswitch_levels
                     if self.level_p(i) >= self.straddle_pi_min)

    def thresholds(self, sigma: float):
        """(delta1, delta2) for the two rates; delta1 > delta2 when rho2 > rho1 > e."""
        return threshold(self.C, sigma, self.rho1), threshold(self.C, sigma, self.rho2)


@dataclass(frozen=True)
class Witness:
    """Coefficient that triggered an upswitch."""

    level: int
    translate: int
    value: float
    time: float


@dataclass(frozen=True)
class TraceEntry:
    time: float
    regime: Regime
    witness: Witness | None = None


@dataclass(frozen=True)
class RateTrace:
    """Regime as a step function of time, with transition witnesses."""

    t0: float
    t1: float
    xi: float
    ell: int
    entries: tuple
    n_samples: int | None = None

    def __post_init__(self):
        if not self.entries:
            raise ValueError("rate trace is empty")

    def spans(self):
        """(start, end, regime) pieces covering [t0, t1]."""
        out = []
        for k, e in enumerate(self.entries):
            end = self.entries[k + 1].time if k + 1 < len(self.entries) else self.t1
            if end > e.time:
                out.append((e.time, end, e.regime))
        return out

    def high_fraction(self) -> float:
        total = self.t1 - self.t0
        high = sum(e - s for s, e, r in self.spans() if r.samples_fast)
        return high / total

    def sample_count(self) -> int:
        if self.n_samples is not None:
            return self.n_samples
        n = 0
        for s, e, r in self.spans():
            step = self.xi if r.samples_fast else self.ell * self.xi
            first = math.ceil(s / step - 1e-9)
            last = math.ceil(e / step - 1e-9) - 1
            n += max(0, last - first + 1)
        return n

    def regime_cells(self, n_cells: int) -> np.ndarray:
        """1 where the cell's left edge lies in a fast-sampling span."""
        out = np.zeros(n_cells, dtype=np.int8)
        for s, e, r in self.spans():
            if r.samples_fast:
                k0 = max(0, int(math.ceil(s / self.xi - 1e-9)))
                k1 = min(n_cells, int(math.ceil(e / self.xi - 1e-9)))
                out[k0:k1] = 1
        return out


def long_run_rate(trace: RateTrace, rho1: float, rho2: float):
    """Budget identity nu = rho1*(1 - Pi) + rho2*Pi plus the realized count."""
    pi = trace.high_fraction()
    nu = rho1 * (1.0 - pi) + rho2 * pi
    return nu, pi, trace.sample_count()


def upswitch_decision(coeffs: CoefficientSet, cfg: RateConfig, delta1: float,
                      t: float | None = None, table: WaveletTable | None = None) -> bool:
    """True iff some detail coefficient in the (pi1, q1) band exceeds delta1.

    With ``t`` given, only coefficients whose support contains t are scanned;
    the online controller instead passes the batch of freshly completed
    coefficients and omits t.
    """
    for i in cfg.upswitch_levels:
        if i >= coeffs.n_levels:
            continue
        lev = coeffs.details[i]
        vals = lev.values
        if t is not None:
            lp = cfg.level_p(i)
            js = np.arange(lev.j0, lev.j0 + vals.size)
            lo = (table.a + js) / lp
            hi = (table.b + js) / lp
            vals = vals[(lo <= t) & (t <= hi)]
        if vals.size and np.max(np.abs(vals)) > delta1:
            return True
    return False


def downswitch_decision(coeffs: CoefficientSet, cfg: RateConfig, delta2: float,
                        window: tuple, table: WaveletTable) -> bool:
    """True iff every stored coefficient in the (pi2, q2) band whose support
    meets [window[0], window[1]] satisfies |b| <= delta2."""
    w_lo, w_hi = window
    for i in cfg.downswitch_levels:
        if i >= coeffs.n_levels:
            continue
        lev = coeffs.details[i]
        lp = cfg.level_p(i)
        js = np.arange(lev.j0, lev.j0 + lev.values.size)
        lo = (table.a + js) / lp
        hi = (table.b + js) / lp
        meets = (hi >= w_lo) & (lo <= w_hi)
        if meets.any() and np.max(np.abs(lev.values[meets])) > delta2:
            return False
    return True


class OnlineController:
    """Sequential dual-rate state machine over one replication.

    Fed with freshly completed band coefficients at each candidate time, it
    decides whether to sample and tracks regime transitions.  Strictly
    sequential in t; one instance per replication.
    """

    def __init__(self, cfg: RateConfig, delta1: float, delta2: float,
                 t_start: float, regime: Regime = Regime.LOW,
                 entered: float | None = None, t_end: float | None = None):
        self.cfg = cfg
        self.delta1 = delta1
        self.delta2 = delta2
        self.regime = regime
        self.entered = t_start if entered is None else entered
        self.t_start = t_start
        self.t_end = t_end
        self.last_time = -math.inf
        self.last_block_end = -math.inf     # newest support end among delta2 exceedances
        self.newest = {}                    # level -> newest completed coefficient value
        self.high_time = 0.0
        self.entries = [TraceEntry(t_start, regime)]
        self._up_levels = set(cfg.upswitch_levels)
        self._down_levels = set(cfg.downswitch_levels)

    def absorb(self, records) -> Witness | None:
        """Update scan bookkeeping with freshly completed coefficients; return
        an upswitch witness if one lies in the (pi1, q1) band above delta1."""
        witness = None
        for lev, j, value, sup_end in records:
            if lev in self._down_levels:
                self.newest[lev] = value
                if abs(value) > self.delta2 and sup_end > self.last_block_end:
                    self.last_block_end = sup_end
            if lev in self._up_levels and abs(value) > self.delta1:
                if witness is None or abs(value) > abs(witness.value):
                    witness = Witness(lev, j, value, sup_end)
        return witness

    def _scan_clear(self, t: float) -> bool:
        if self.cfg.down_scan == "instant":
            return all(abs(v) <= self.delta2 for v in self.newest.values())
        return self.last_block_end < t - self.cfg.down_window

    def step(self, t: float, records, straddle_witness: Witness | None = None) -> bool:
        """Advance to candidate time t with its fresh coefficients; return
        True when a regime transition occurred."""
        if t <= self.last_time:
            raise SequencingError(f"time {t} does not advance past {self.last_time}")
        self.last_time = t
        witness = self.absorb(records)

        if self.regime is Regime.LOW:
            if witness is None:
                witness = straddle_witness
            if witness is not None:
                self.regime = Regime.HIGH_WARMUP
                self.entered = t
                self.entries.append(TraceEntry(t, self.regime, witness))
                return True
            return False

        dwelt = t - self.entered
        if self.regime is Regime.HIGH_WARMUP and dwelt >= self.cfg.warmup - 1e-12:
            self.regime = Regime.HIGH
            self.entries.append(TraceEntry(t, self.regime))

        force = False
        if self.cfg.max_high_fraction is not None and self.t_end is not None:
            budget = self.cfg.max_high_fraction * (self.t_end - self.t_start)
            force = self.high_time + dwelt >= budget

        if dwelt >= self.cfg.dwell - 1e-12 and (force or self._scan_clear(t)):
            self.high_time += dwelt
            self.regime = Regime.LOW
            self.entries.append(TraceEntry(t, self.regime))
            return True
        return False

    def trace(self, t_end: float) -> RateTrace:
        return RateTrace(self.t_start, t_end, self.cfg.xi, self.cfg.ell,
                         tuple(self.entries))


def step(state: OnlineController, t: float, provider):
    """One candidate time: pull fresh coefficients from ``provider(prev_t, t)``,
    apply the switching rules, and report (sample_now, state).

    ``provider`` yields (level, translate, value, support_end) tuples for
    coefficients completing in (prev_t, t].  Sampling happens at every
    prescribed candidate time, so the first element is always True.
    """
    prev = state.last_time if state.last_time > -math.inf else state.t_start
    state.step(t, provider(prev, t))
    return True, state


class StraddlerScanner:
    """Evaluates upswitch-band coefficients whose support still contains the
    current time, against the hold-extended imputed path (future cells imputed
    with the most recent observation, which is how the imputation rule reads
    forward).  The full integral of the mother function vanishes, so the
    extension reduces to one closed tail term.

    A partial coefficient carries less noise than a complete one, so it is
    compared against the threshold scaled by the square root of the observed
    fraction of the squared-basis mass: the same signal-to-noise standard the
    full-support rule applies, reached as soon as the data supports it.
    Supports less than ``min_energy_fraction`` observed wait for later scans.

    A truncated integral of a locally linear signal does not vanish the way
    the full-support one does, so the statistic subtracts the local slope
    (fitted over the trailing support span) times the first-moment integral of
    the observed basis portion; for a complete support that correction is zero
    by the vanishing moments."""

    min_energy_fraction = 0.4

    def __init__(self, engine: CoefficientEngine, levels, delta1: float,
                 z: np.ndarray):
        self.engine = engine
        self.levels = tuple(levels)
        self.delta1 = delta1
        self.z = z
        w_cells = int(math.ceil(engine.table.width
                                / (engine.level_p(min(levels)) * engine.xi)))
        x = (np.arange(w_cells) - (w_cells - 1) / 2.0) * engine.xi
        self._slope_win = w_cells
        self._slope_x = x
        self._slope_sxx = float(np.dot(x, x))

    def scan(self, k: int, y_k: float) -> Witness | None:
        eng = self.engine
        tab = eng.table
        t = k * eng.xi
        c0 = k - self._slope_win
        beta = 0.0
        if c0 >= 0:
            beta = float(np.dot(self._slope_x, self.z[c0:k])) / self._slope_sxx
        best = None
        for lev in self.levels:
            lp = eng.level_p(lev)
            j_lo = int(math.floor(lp * t - tab.b)) + 1
            j_hi = int(math.ceil(lp * t - tab.a)) - 1
            e0, e1 = eng.j_range(lev)
            j_lo, j_hi = max(j_lo, e0), min(j_hi, e1 - 1)
            if j_hi < j_lo:
                continue
            rows = slice(j_lo - e0, j_hi - e0 + 1)
            idx = eng._gather_idx[lev][rows]
            w = eng._gather_w[lev][rows] * (idx < k)
            js = np.arange(j_lo, j_hi + 1)
            u_k = lp * t - js - tab.a
            tail = -tab.psi_integral_to(u_k) / math.sqrt(lp)
            slope_term = (tab.psi_first_moment_to(u_k)
                          - u_k * tab.psi_integral_to(u_k)) / lp ** 1.5
            vals = (np.einsum("ij,ij->i", self.z[idx], w) + y_k * tail
                    - beta * slope_term)
            frac = tab.psi_energy_fraction(u_k)
            scaled = self.delta1 * np.sqrt(np.maximum(frac, 1e-12))
            hit = (np.abs(vals) > scaled) & (frac >= self.min_energy_fraction)
            if hit.any():
                excess = np.where(hit, np.abs(vals) / scaled, 0.0)
                r = int(np.argmax(excess))
                if best is None or excess[r] > best[0]:
                    best = (float(excess[r]), Witness(lev, int(js[r]), float(vals[r]), t))
        return best[1] if best else None


class CompletionFeed:
    """Streams (level, j, value, support_end) for coefficients whose support
    ends at or before the current grid cell, in completion order per level."""

    def __init__(self, engine: CoefficientEngine, levels, z: np.ndarray):
        self.engine = engine
        self.z = z
        self.levels = tuple(levels)
        tab = engine.table
        self._next = {}
        self._done_cell = {}
        self._j0 = {}
        self._sup_end = {}
        for lev in self.levels:
            j0, j1 = engine.j_range(lev)
            lp = engine.level_p(lev)
            js = np.arange(j0, j1)
            sup_end = (tab.b + js) / lp
            self._next[lev] = 0
            self._done_cell[lev] = np.ceil(sup_end / engine.xi - 1e-9).astype(np.int64)
            self._j0[lev] = j0
            self._sup_end[lev] = sup_end

    def advance(self, cell: int):
        """Yield every coefficient completing at or before grid cell ``cell``."""
        for lev in self.levels:
            done = self._done_cell[lev]
            n = self._next[lev]
            while n < done.size and done[n] <= cell:
                j = self._j0[lev] + n
                value = self.engine.coefficient_single(self.z, lev, j)
                yield lev, j, value, self._sup_end[lev][n]
                n += 1
            self._next[lev] = n


def run_acquisition(engine: CoefficientEngine, cfg: RateConfig, delta1: float,
                    delta2: float, sample_fn, z: np.ndarray, k_start: int,
                    k_end: int, last_sample_cell: int, last_sample_value: float,
                    regime: Regime, entered: float, t_end: float | None = None):
    """Drive the controller over grid cells [k_start, k_end).

    ``z`` must already hold the imputed path up to ``last_sample_cell`` (the
    calibration prefix); ``sample_fn(cell)`` returns the observation when the
    controller samples.  Returns (controller, sample_cells, z) with z filled
    through k_end.
    """
    xi = cfg.xi
    ctrl = OnlineController(cfg, delta1, delta2, t_start=k_start * xi,
                            regime=regime, entered=entered, t_end=t_end)
    feed = CompletionFeed(engine, sorted(set(cfg.upswitch_levels)
                                         | set(cfg.downswitch_levels)), z)
    straddle = None
    if cfg.straddle_levels:
        straddle = StraddlerScanner(engine, cfg.straddle_levels, delta1, z)
    sample_cells = []
    k = k_start
    last_c, last_y = last_sample_cell, last_sample_value
    while k < k_end:
        fast = ctrl.regime.samples_fast
        if fast or k % cfg.ell == 0:
            z[last_c:k] = last_y
            last_y = sample_fn(k)
            last_c = k
            z[k] = last_y
            sample_cells.append(k)
            sw = None
            if straddle is not None and not fast:
                sw = straddle.scan(k, last_y)
            ctrl.step(k * xi, feed.advance(k), sw)
            k += 1 if ctrl.regime.samples_fast else (cfg.ell - k % cfg.ell) % cfg.ell or cfg.ell
        else:
            k += cfg.ell - k % cfg.ell
    z[last_c:] = last_y
    return ctrl, np.asarray(sample_cells, dtype=np.int64), z
