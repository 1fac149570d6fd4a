"""Test signals: a slow sinusoid carrying windowed high-frequency aberrations,
plus two discontinuous variants, with Gaussian sampling noise.

Signal g4 is defined with a sine in its first aberration term; the source
formula prints a sigma there, read as a typographical slip since every
sibling term is a sine.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

OBSERVATION_INTERVAL = (0.0, 100.0)


def _window_mask(t, lo, hi, closure):
    left = t > lo if closure[0] == "(" else t >= lo
    right = t < hi if closure[1] == ")" else t <= hi
    return left & right


@dataclass(frozen=True)
class Term:
    """One windowed closed-form component of a signal."""

    kind: str                      # 'sin' | 'log' | 'exp' | 'const'
    window: tuple
    amplitude: float = 1.0
    rate: float = 0.0              # angular frequency for 'sin', growth rate otherwise
    center: float = 0.0
    shift: float = 0.0             # additive constant inside the window
    closure: str = "[]"

    def __call__(self, t):
        t = np.asarray(t, dtype=float)
        mask = _window_mask(t, self.window[0], self.window[1], self.closure)
        if self.kind == "sin":
            val = self.amplitude * np.sin(self.rate * (t - self.center))
        elif self.kind == "log":
            val = self.amplitude * np.log1p(np.maximum(self.rate * (t - self.center), -0.999999))
        elif self.kind == "exp":
            val = self.amplitude * np.exp(self.rate * (t - self.center))
        elif self.kind == "const":
            val = np.full_like(t, self.amplitude)
        else:
            raise ValueError(f"unknown term kind {self.kind!r}")
        return np.where(mask, val + self.shift, 0.0)


@dataclass(frozen=True)
class Aberration:
    """Windowed sinusoid amplitude*sin(omega*(t-center)) on [w_lo, w_hi]."""

    amplitude: float
    omega: float
    center: float
    window: tuple
    closure: str = "[]"

    def __post_init__(self):
        if not self.window[0] < self.window[1]:
            raise ValueError(f"aberration window {self.window} is empty")

    def term(self) -> Term:
        return Term("sin", self.window, self.amplitude, self.omega,
                    self.center, closure=self.closure)

    def __call__(self, t):
        return self.term()(t)


@dataclass(frozen=True)
class SignalSpec:
    """Base component plus aberration records; evaluation is their sum."""

    name: str
    base_terms: tuple
    aberrations: tuple
    interval: tuple = OBSERVATION_INTERVAL

    def __post_init__(self):
        lo, hi = self.interval
        for ab in self.aberrations:
            if ab.window[0] < lo or ab.window[1] > hi:
                raise ValueError(
                    f"{self.name}: aberration window {ab.window} outside {self.interval}")
        spans = sorted(ab.window for ab in self.aberrations)
        for (a_lo, a_hi), (b_lo, b_hi) in zip(spans, spans[1:]):
            if b_lo < a_hi:
                raise ValueError(
                    f"{self.name}: aberration windows ({a_lo},{a_hi}) and "
                    f"({b_lo},{b_hi}) overlap")

    @property
    def aberration_windows(self):
        return [ab.window for ab in self.aberrations]

    def base(self, t):
        t = np.asarray(t, dtype=float)
        out = np.zeros_like(t)
        for term in self.base_terms:
            out = out + term(t)
        return out

    def __call__(self, t):
        out = self.base(t)
        for ab in self.aberrations:
            out = out + ab(t)
        return out


@dataclass(frozen=True)
class NoiseModel:
    sigma: float
    distribution: str = "gaussian"

    def __post_init__(self):
        if self.sigma < 0:
            raise ValueError(f"noise sd must be >= 0, got {self.sigma}")
        if self.distribution != "gaussian":
            raise ValueError(f"unsupported noise distribution {self.distribution!r}")


def eval_signal(spec: SignalSpec, t):
    """Exact closed-form value of the signal at t (scalar or array)."""
    out = spec(t)
    return float(out) if np.ndim(t) == 0 else out


def draw_sample(spec: SignalSpec, noise: NoiseModel, t, rng) -> float:
    """One noisy observation Y = g(t) + eps, consuming one normal variate."""
    return float(eval_signal(spec, t)) + float(rng.normal(0.0, noise.sigma))


_BASE = (Term("sin", (0.0, 100.0), 2.4, 0.06 * math.pi),)
_EIGHT_PI = 8 * math.pi


def _bursts(entries, closure="[]"):
    return tuple(Aberration(amp, om, c, (c - 2, c + 2) if window is None else window,
                            closure)
                 for amp, om, c, window in entries)


_SIGNALS = {}


def _register(spec: SignalSpec):
    _SIGNALS[spec.name] = spec
    return spec


_register(SignalSpec("g1", _BASE, _bursts([
    (0.2525, _EIGHT_PI, 24.0, None),
    (0.5050, _EIGHT_PI, 42.0, None),
    (0.7575, _EIGHT_PI, 58.0, None),
    (1.1, _EIGHT_PI, 75.0, None),
])))

_register(SignalSpec("g2", _BASE, _bursts([
    (0.35, 2 * math.pi, 24.0, None),
    (0.35, 4 * math.pi, 42.0, None),
    (0.35, 6 * math.pi, 58.0, None),
    (0.35, _EIGHT_PI, 75.0, None),
])))

_register(SignalSpec("g3", _BASE, _bursts([
    (0.2525, _EIGHT_PI, 32.0, None),
    (0.5050, _EIGHT_PI, 51.0, None),
    (0.7575, _EIGHT_PI, 67.0, None),
    (1.1, _EIGHT_PI, 84.0, None),
])))

_register(SignalSpec("g4", _BASE, _bursts([
    (0.35, 2 * math.pi, 32.0, None),
    (0.35, 4 * math.pi, 51.0, None),
    (0.35, 6 * math.pi, 67.0, None),
    (0.35, _EIGHT_PI, 84.0, None),
])))

_register(SignalSpec(
    "g5",
    (
        Term("log", (0.0, 20.0), 1.0, 0.1, 0.0, closure="[]"),
        Term("exp", (20.0, 40.0), 1.0, 0.1, 20.0, shift=-1.0, closure="(]"),
        Term("log", (40.0, 60.0), 1.0, 0.1, 40.0, closure="(]"),
        Term("exp", (60.0, 80.0), 1.0, -0.2, 60.0, closure="(]"),
        Term("log", (80.0, 100.0), 0.5, 0.05, 80.0, closure="()"),
    ),
    _bursts([
        (1.0, 9.0, 16.0, (15.0, 17.0)),
        (1.0, 8.0, 38.0, (37.0, 39.0)),
        (1.0, 7.3, 41.0, (40.0, 42.0)),
        (1.0, 9.0, 61.0, (60.0, 62.0)),
        (1.0, 9.0, 81.0, (80.0, 82.0)),
    ], closure="(]"),
))

_register(SignalSpec(
    "g6",
    (
        Term("const", (20.0, 40.0), 1.0, closure="(]"),
        Term("const", (40.0, 60.0), 4.0, closure="(]"),
        Term("const", (60.0, 80.0), 6.0, closure="(]"),
        Term("const", (80.0, 90.0), 5.0, closure="(]"),
    ),
    _bursts([
        (1.0, 9.0, 16.0, (15.0, 17.0)),
        (1.0, 9.0, 42.0, (41.0, 43.0)),
        (1.0, 9.0, 61.0, (60.0, 63.0)),
        (1.0, 9.0, 89.0, (88.0, 90.0)),
    ], closure="(]"),
))


def signal_names():
    return sorted(_SIGNALS)


def by_name(name: str) -> SignalSpec:
    try:
        return _SIGNALS[name]
    except KeyError:
        raise KeyError(
            f"unknown signal {name!r}; available: {', '.join(signal_names())}") from None
