"""Monte Carlo study: dual-rate acquisition versus budget-matched constant-rate
sampling, scored by integrated squared error.

Each replication draws one noise variate per grid cell up front, so the
realized noise field does not depend on the sampling decisions; the constant
rate companion of a replication redraws noise from an independent substream
and spends exactly the sample budget the dual-rate run used.
"""

from __future__ import annotations

import concurrent.futures
import math
from dataclasses import dataclass, field, replace

import numpy as np

from . import signals as sigmod
from .controller import (OnlineController, RateConfig, RateTrace, Regime,
                         TraceEntry, long_run_rate, run_acquisition, threshold)
from .estimator import (CoefficientEngine, SampleStream, estimate_sigma, impute)
from .signals import NoiseModel, SignalSpec
from .wavelet import WaveletFilter, cascade_tabulate


@dataclass(frozen=True)
class ExperimentConfig:
    signal: str = "g1"
    interval: tuple = (0.0, 100.0)
    rate: RateConfig = field(default_factory=RateConfig)
    noise: NoiseModel = field(default_factory=lambda: NoiseModel(0.15))
    B: int = 500
    seed: int = 0
    calib_fraction: float = 0.05
    windows: tuple | None = None
    depth: int = 12
    order: int = 5
    family: str = "daub"
    threshold_sigma: float | None = None
    const_q: int | str = "auto"
    exclude_calibration: bool = False
    budget_counts_calibration: bool = False
    keep_estimates: bool = False

    def __post_init__(self):
        if self.B < 1:
            raise ValueError(f"replication count must be >= 1, got {self.B}")
        if not 0.0 < self.calib_fraction < 0.5:
            raise ValueError(
                f"calibration fraction must lie in (0, 0.5), got {self.calib_fraction}")
        spec = sigmod.by_name(self.signal)
        windows = self.windows
        if windows is None:
            windows = tuple(spec.aberration_windows)
        lo, hi = self.interval
        for w in windows:
            if w[0] < lo or w[1] > hi:
                raise ValueError(f"window {w} outside interval {self.interval}")
        object.__setattr__(self, "windows", tuple(tuple(w) for w in windows))

    @property
    def signal_spec(self) -> SignalSpec:
        return sigmod.by_name(self.signal)

    @property
    def n_cells(self) -> int:
        lo, hi = self.interval
        return int(round((hi - lo) / self.rate.xi))

    @property
    def span(self) -> float:
        return self.interval[1] - self.interval[0]


@dataclass
class ReplicationResult:
    mode: str
    ise_full: float
    ise_windows: np.ndarray
    ise_windows_pooled: float
    n_samples: int
    sigma_hat: float
    trace: RateTrace | None
    pi: float
    nu: float
    ghat: np.ndarray | None = None
    sup_windows: np.ndarray | None = None


@dataclass
class StudySummary:
    config: ExperimentConfig
    mise_full: dict
    mise_windows: dict
    mise_stderr: dict
    window_stderr: dict
    median_index: int
    mean_samples: float
    mean_pi: float
    mean_nu: float
    ise_full_dual: np.ndarray
    ise_full_const: np.ndarray
    ise_windows_dual: np.ndarray
    ise_windows_const: np.ndarray


_ENGINE_CACHE = {}


def make_engine(cfg: ExperimentConfig) -> CoefficientEngine:
    key = (cfg.family, cfg.order, cfg.depth, cfg.rate.p, cfg.rate.xi,
           cfg.n_cells, cfg.rate.q2 + 1, cfg.interval)
    eng = _ENGINE_CACHE.get(key)
    if eng is None:
        if cfg.family in ("daub", "daubechies", "daubechies-extremal-phase"):
            filt = WaveletFilter.daubechies(cfg.order)
        elif cfg.family == "haar":
            filt = WaveletFilter.haar()
        else:
            raise ValueError(f"unknown wavelet family {cfg.family!r}")
        table = cascade_tabulate(filt, cfg.depth)
        eng = CoefficientEngine(table, cfg.rate.p, cfg.rate.xi, cfg.n_cells,
                                n_levels=cfg.rate.q2 + 1,
                                t_lo=cfg.interval[0], t_hi=cfg.interval[1])
        _ENGINE_CACHE[key] = eng
    return eng


def ise(ghat: np.ndarray, g: np.ndarray, xi: float, region: tuple,
        t0: float = 0.0) -> float:
    """Trapezoid-rule integral of (ghat - g)^2 over region (grid-aligned)."""
    lo, hi = region
    n = ghat.size
    i0 = (lo - t0) / xi
    i1 = (hi - t0) / xi
    if abs(i0 - round(i0)) > 1e-6 or abs(i1 - round(i1)) > 1e-6:
        raise ValueError(f"region {region} is not aligned to the grid")
    i0, i1 = int(round(i0)), int(round(i1))
    if i0 < 0 or i1 >= n or i0 >= i1:
        raise ValueError(f"region {region} outside the estimation grid")
    d = ghat[i0:i1 + 1] - g[i0:i1 + 1]
    return float(np.trapezoid(d * d, dx=xi))


def _rng_for(seed: int, rep: int, stream: int) -> np.random.Generator:
    ss = np.random.SeedSequence(entropy=seed, spawn_key=(rep, stream))
    return np.random.Generator(np.random.Philox(ss))


def _grid_signal(cfg: ExperimentConfig) -> np.ndarray:
    t = cfg.interval[0] + np.arange(cfg.n_cells + 1) * cfg.rate.xi
    return cfg.signal_spec(t)


def _refined_mask(fast_cells: np.ndarray, warmup_cells: int,
                  gap_tol_cells: int = 0) -> np.ndarray:
    """True at the grid points of every fast episode at least ``warmup_cells``
    long.  Slow interruptions of at most ``gap_tol_cells`` (a bounce that
    re-triggers at the next candidate time) do not split an episode."""
    n = fast_cells.size
    fast = fast_cells.astype(bool).copy()
    if gap_tol_cells > 0:
        edges = np.flatnonzero(np.diff(np.concatenate(([1], fast.view(np.int8), [1]))))
        for lo, hi in zip(edges[::2], edges[1::2]):
            if hi - lo <= gap_tol_cells and lo > 0 and hi < n:
                fast[lo:hi] = True
    mask = np.zeros(n + 1, dtype=bool)
    edges = np.flatnonzero(np.diff(np.concatenate(([0], fast.view(np.int8), [0]))))
    for lo, hi in zip(edges[::2], edges[1::2]):
        if hi - lo >= warmup_cells:
            mask[lo:hi + 1] = True
    return mask


def _score(cfg, ghat, g, n_samples, sigma_hat, trace, pi, nu, mode):
    xi = cfg.rate.xi
    t0 = cfg.interval[0]
    full_lo = t0 + cfg.span * cfg.calib_fraction if cfg.exclude_calibration else t0
    ise_full = ise(ghat, g, xi, (full_lo, cfg.interval[1]), t0)
    per_win = np.array([ise(ghat, g, xi, w, t0) for w in cfg.windows])
    sup = None
    if cfg.keep_estimates:
        sup = np.array([np.max(np.abs((ghat - g)[int(round((w[0] - t0) / xi)):
                                                  int(round((w[1] - t0) / xi)) + 1]))
                        for w in cfg.windows])
    return ReplicationResult(
        mode=mode, ise_full=ise_full, ise_windows=per_win,
        ise_windows_pooled=float(per_win.sum()), n_samples=n_samples,
        sigma_hat=sigma_hat, trace=trace, pi=pi, nu=nu,
        ghat=ghat if cfg.keep_estimates else None, sup_windows=sup)


def _dual_replication(cfg: ExperimentConfig, rep: int,
                      engine: CoefficientEngine) -> ReplicationResult:
    rc = cfg.rate
    xi = rc.xi
    n_cells = cfg.n_cells
    rng = _rng_for(cfg.seed, rep, 0)
    eps = rng.normal(0.0, cfg.noise.sigma, n_cells)
    t0 = cfg.interval[0]
    tgrid = t0 + np.arange(n_cells) * xi
    gcells = cfg.signal_spec(tgrid)
    y = gcells + eps

    k_cal = int(round(cfg.calib_fraction * n_cells))
    z = np.zeros(n_cells)
    z[:k_cal] = y[:k_cal]
    calib = SampleStream(tgrid[:k_cal], y[:k_cal], xi)
    sigma_hat = estimate_sigma(calib)
    sig_thr = cfg.threshold_sigma if cfg.threshold_sigma is not None else sigma_hat
    delta1, delta2 = rc.thresholds(sig_thr)

    ctrl, samples, z = run_acquisition(
        engine, rc, delta1, delta2, lambda k: y[k], z,
        k_start=k_cal, k_end=n_cells,
        last_sample_cell=k_cal - 1, last_sample_value=y[k_cal - 1],
        regime=Regime.HIGH_WARMUP, entered=t0, t_end=cfg.interval[1])

    n_samples = k_cal + samples.size
    entries = (TraceEntry(t0, Regime.HIGH_WARMUP),) + tuple(ctrl.entries)
    trace = RateTrace(t0, cfg.interval[1], xi, rc.ell, entries, n_samples=n_samples)
    nu, pi, _ = long_run_rate(trace, rc.rho1, rc.rho2)

    coeffs = engine.all_coefficients(z)
    ghat1 = engine.reconstruct_grid(coeffs, rc.q1, delta1)
    ghat2 = engine.reconstruct_grid(coeffs, rc.q2, delta2)
    fast = trace.regime_cells(n_cells)
    refined = _refined_mask(fast, int(round(rc.warmup / xi)), rc.zone_gap_steps)
    ghat = np.where(refined, ghat2, ghat1)

    g = _grid_signal(cfg)
    return _score(cfg, ghat, g, n_samples, sigma_hat, trace, pi, nu, "dual")


def constant_q(cfg: ExperimentConfig, nu: float) -> int:
    """Depth used by the constant-rate estimator at rate nu."""
    rule = cfg.const_q
    if isinstance(rule, int):
        return rule
    if rule == "q2":
        return cfg.rate.q2
    if rule == "auto":
        # deepest level the rate can still resolve, capped at the dual depths
        q = int(math.floor(math.log2(max(nu / cfg.rate.p, 2.0))))
        return max(cfg.rate.q1, min(q, cfg.rate.q2))
    raise ValueError(f"unknown const_q rule {rule!r}")


def _constant_replication(cfg: ExperimentConfig, rep: int, count: int,
                          engine: CoefficientEngine) -> ReplicationResult:
    rc = cfg.rate
    xi = rc.xi
    n_cells = cfg.n_cells
    rng = _rng_for(cfg.seed, rep, 1)
    eps = rng.normal(0.0, cfg.noise.sigma, n_cells)
    t0 = cfg.interval[0]

    cells = np.unique(np.round(np.linspace(0, n_cells - 1, count)).astype(np.int64))
    times = t0 + cells * xi
    g_at = cfg.signal_spec(times)
    yv = g_at + eps[cells]
    stream = SampleStream(times, yv, xi)

    k_cal = int(round(cfg.calib_fraction * n_cells))
    prefix = cells < k_cal
    calib = SampleStream(times[prefix], yv[prefix], xi)
    sigma_hat = estimate_sigma(calib)
    sig_thr = cfg.threshold_sigma if cfg.threshold_sigma is not None else sigma_hat

    nu = count / cfg.span
    delta = threshold(rc.C, sig_thr, nu)
    q = constant_q(cfg, nu)

    z = impute(stream, cfg.span).z
    coeffs = engine.all_coefficients(z)
    ghat = engine.reconstruct_grid(coeffs, q, delta)

    g = _grid_signal(cfg)
    return _score(cfg, ghat, g, cells.size, sigma_hat, None, 0.0, nu, "constant")


def run_replication(cfg: ExperimentConfig, rep: int, mode: str = "dual",
                    count: int | None = None,
                    engine: CoefficientEngine | None = None) -> ReplicationResult:
    """One replication; in constant mode ``count`` fixes the sample budget."""
    if engine is None:
        engine = make_engine(cfg)
    if mode == "dual":
        return _dual_replication(cfg, rep, engine)
    if mode == "constant":
        if count is None:
            raise ValueError("constant mode requires a sample count")
        return _constant_replication(cfg, rep, count, engine)
    raise ValueError(f"unknown mode {mode!r}")


def companion_budget(cfg: ExperimentConfig, dual: ReplicationResult) -> int:
    """Sample count granted to the constant-rate companion.  By default only
    the estimate-producing samples count; the high-rate calibration prefix is
    overhead the companion does not replicate (it calibrates on its own
    regular samples)."""
    if cfg.budget_counts_calibration:
        return dual.n_samples
    return dual.n_samples - int(round(cfg.calib_fraction * cfg.n_cells))


def _replication_pair(cfg: ExperimentConfig, rep: int, engine: CoefficientEngine):
    dual = _dual_replication(cfg, rep, engine)
    const = _constant_replication(cfg, rep, companion_budget(cfg, dual), engine)
    return dual, const


_WORKER_STATE = {}


def _worker_init(cfg: ExperimentConfig):
    _WORKER_STATE["cfg"] = cfg
    _WORKER_STATE["engine"] = make_engine(cfg)


def _worker_pair(rep: int):
    cfg = _WORKER_STATE["cfg"]
    eng = _WORKER_STATE["engine"]
    d, c = _replication_pair(cfg, rep, eng)
    d.ghat = None
    c.ghat = None
    return rep, d, c


def run_study(cfg: ExperimentConfig, jobs: int = 1) -> StudySummary:
    """B dual-rate replications, each with a budget-matched constant-rate
    companion on an independent noise substream; aggregation is ordered by
    replication index regardless of worker count."""
    pairs = [None] * cfg.B
    if jobs > 1:
        with concurrent.futures.ProcessPoolExecutor(
                max_workers=jobs, initializer=_worker_init,
                initargs=(replace(cfg, keep_estimates=False),)) as ex:
            for rep, d, c in ex.map(_worker_pair, range(cfg.B),
                                    chunksize=max(1, cfg.B // (4 * jobs))):
                pairs[rep] = (d, c)
    else:
        engine = make_engine(cfg)
        for rep in range(cfg.B):
            pairs[rep] = _replication_pair(cfg, rep, engine)

    duals = [p[0] for p in pairs]
    consts = [p[1] for p in pairs]
    ise_d = np.array([r.ise_full for r in duals])
    ise_c = np.array([r.ise_full for r in consts])
    win_d = np.array([r.ise_windows_pooled for r in duals])
    win_c = np.array([r.ise_windows_pooled for r in consts])

    order = np.argsort(ise_d, kind="stable")
    median_index = int(order[(cfg.B - 1) // 2])

    def mean_se(x):
        return float(np.mean(x)), float(np.std(x, ddof=1) / math.sqrt(len(x))) if len(x) > 1 else 0.0

    mise_full, se_full, mise_win, se_win = {}, {}, {}, {}
    for tag, arr_f, arr_w in (("dual", ise_d, win_d), ("constant", ise_c, win_c)):
        mise_full[tag], se_full[tag] = mean_se(arr_f)
        mise_win[tag], se_win[tag] = mean_se(arr_w)

    return StudySummary(
        config=cfg,
        mise_full=mise_full, mise_windows=mise_win,
        mise_stderr=se_full, window_stderr=se_win,
        median_index=median_index,
        mean_samples=float(np.mean([r.n_samples for r in duals])),
        mean_pi=float(np.mean([r.pi for r in duals])),
        mean_nu=float(np.mean([r.nu for r in duals])),
        ise_full_dual=ise_d, ise_full_const=ise_c,
        ise_windows_dual=win_d, ise_windows_const=win_c)
