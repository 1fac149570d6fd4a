"""Wavelet-based signal estimation with a dual sampling-rate controller."""

__version__ = "0.1.0"

from .controller import (RateConfig, RateTrace, Regime, compute_tau0,
                         downswitch_decision, long_run_rate, threshold,
                         upswitch_decision)
from .estimator import (CoefficientEngine, CoefficientSet, ImputedPath,
                        SampleStream, coefficient, estimate_sigma, impute,
                        optimal_primary_level, reconstruct)
from .harness import (ExperimentConfig, ReplicationResult, StudySummary, ise,
                      run_replication, run_study)
from .signals import (Aberration, NoiseModel, SignalSpec, by_name, draw_sample,
                      eval_signal, signal_names)
from .wavelet import (WaveletFilter, WaveletTable, cascade_tabulate,
                      eval_father, eval_mother, support_bounds)
