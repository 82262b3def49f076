"""Virtual-battery metrics over paired (event, baseline) traces.

The deviation of fan power from its no-event baseline is the battery's power
trajectory: consumption above baseline charges it, below discharges it. Over
the settling window [t_start, t_settle]:

    energy_in  = integral of max(p_diff, 0)
    energy_out = integral of -min(p_diff, 0)
    rte        = energy_out / energy_in

An event is energy neutral when the *net* deviation over the event window
[t_start, t_end] stays below a fraction of the total shifted energy. Room
disruption is measured as the RMS room-temperature deviation over the
settling window. All integrals are trapezoidal on the shared trace grid,
exact for the piecewise-linear synthetic traces used as oracles.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError
from .trace import Trace, aligned

__all__ = [
    "EventWindow",
    "EventMetrics",
    "energy_in_out",
    "rte",
    "neutrality",
    "temp_rmse",
    "normalize",
    "linear_baseline",
    "evaluate_event",
]


@dataclass(frozen=True)
class EventWindow:
    """Event timing: start, end of commanded change, and assumed settling."""

    t_start: float
    t_end: float
    t_settle: float

    def __post_init__(self):
        if not self.t_start < self.t_end <= self.t_settle:
            raise ConfigurationError(
                f"need t_start < t_end <= t_settle, got "
                f"({self.t_start}, {self.t_end}, {self.t_settle})")

    def with_settle(self, t_settle: float) -> "EventWindow":
        return EventWindow(self.t_start, self.t_end, t_settle)


@dataclass(frozen=True)
class EventMetrics:
    """Flat metrics record for one (event, baseline) pair.

    ``rte`` is None when no charging energy was observed (undefined ratio,
    distinct from zero). Zero-energy events are neutral by convention.
    """

    energy_in: float            # J
    energy_out: float           # J
    rte: float | None
    neutrality_residual: float  # J, |net deviation| over the event window
    neutral: bool
    rmse_temp: float            # K over the settling window


def _window_indices(trace: Trace, t0: float, t1: float) -> tuple[int, int]:
    i0 = trace.index_at(t0)
    i1 = trace.index_at(t1)
    if i1 < i0:
        raise ConfigurationError("window end precedes window start")
    return i0, i1


def _trapz(y: np.ndarray, dt: float) -> float:
    if y.shape[0] < 2:
        return 0.0
    return float(np.trapezoid(y, dx=dt))


def energy_in_out(event: Trace, baseline: Trace,
                  window: EventWindow) -> tuple[float, float]:
    """Charging and discharging energy (J) over [t_start, t_settle]."""
    aligned(event, baseline)
    i0, i1 = _window_indices(event, window.t_start, window.t_settle)
    diff = event.p_fan[i0:i1 + 1] - baseline.p_fan[i0:i1 + 1]
    e_in = _trapz(np.maximum(diff, 0.0), event.dt)
    e_out = _trapz(np.maximum(-diff, 0.0), event.dt)
    return e_in, e_out


def rte(energy_in: float, energy_out: float) -> float | None:
    """Round-trip efficiency; None when energy_in is zero (undefined)."""
    if energy_in < 0 or energy_out < 0:
        raise ConfigurationError("energies must be non-negative")
    if energy_in == 0.0:
        return None
    return energy_out / energy_in


def neutrality(event: Trace, baseline: Trace, window: EventWindow,
               alpha_frac: float = 0.05) -> tuple[float, bool]:
    """Net-deviation residual (J) over [t_start, t_end] and the verdict.

    Neutral when residual < alpha_frac * (energy_in + energy_out), the
    energies taken over the full settling window. A pair with no shifted
    energy at all is classified neutral.
    """
    aligned(event, baseline)
    i0, i1 = _window_indices(event, window.t_start, window.t_end)
    diff = event.p_fan[i0:i1 + 1] - baseline.p_fan[i0:i1 + 1]
    residual = abs(_trapz(diff, event.dt))
    e_in, e_out = energy_in_out(event, baseline, window)
    total = e_in + e_out
    if total == 0.0:
        return residual, True
    return residual, residual < alpha_frac * total


def temp_rmse(event: Trace, baseline: Trace, window: EventWindow) -> float:
    """RMS room-temperature deviation (K) over [t_start, t_settle]."""
    aligned(event, baseline)
    i0, i1 = _window_indices(event, window.t_start, window.t_settle)
    if i1 == i0:
        return abs(float(event.t_room[i0] - baseline.t_room[i0]))
    dev = event.t_room[i0:i1 + 1] - baseline.t_room[i0:i1 + 1]
    duration = float(event.t[i1] - event.t[i0])
    return math.sqrt(_trapz(dev * dev, event.dt) / duration)


def normalize(trace: Trace, window: EventWindow) -> Trace:
    """Scale fan power so its mean over [t_start, t_settle] is unity."""
    i0, i1 = _window_indices(trace, window.t_start, window.t_settle)
    if i1 == i0:
        mean = float(trace.p_fan[i0])
    else:
        mean = _trapz(trace.p_fan[i0:i1 + 1], trace.dt) / float(trace.t[i1] - trace.t[i0])
    if mean <= 0.0:
        raise ConfigurationError("cannot normalize a trace with non-positive mean power")
    return trace.with_p_fan(trace.p_fan / mean)


def linear_baseline(measured: Trace, window: EventWindow,
                    averaging: float = 1800.0) -> Trace:
    """Straight-line no-event baseline for measured fan power.

    Anchored at the mean power over the ``averaging`` seconds before t_start
    and after t_settle, interpolated linearly between the anchors and held
    flat outside them. Only the fan-power series is replaced; the measured
    room temperature is carried through unchanged.
    """
    t0 = float(measured.t[0])
    t1 = float(measured.t[-1])
    if window.t_start - averaging < t0 - 1e-9 or window.t_settle + averaging > t1 + 1e-9:
        raise ConfigurationError(
            f"measured trace must extend {averaging:.0f} s beyond the window "
            f"on both sides (have [{t0}, {t1}])")
    ia0, ia1 = _window_indices(measured, window.t_start - averaging, window.t_start)
    ib0, ib1 = _window_indices(measured, window.t_settle, window.t_settle + averaging)
    pre = float(np.mean(measured.p_fan[ia0:ia1 + 1]))
    post = float(np.mean(measured.p_fan[ib0:ib1 + 1]))
    frac = np.clip((measured.t - window.t_start)
                   / (window.t_settle - window.t_start), 0.0, 1.0)
    p_base = pre + (post - pre) * frac
    return measured.with_p_fan(p_base, source="linear_baseline")


def evaluate_event(event: Trace, baseline: Trace, window: EventWindow,
                   alpha_frac: float = 0.05) -> EventMetrics:
    """All metrics for one pair in a single record."""
    e_in, e_out = energy_in_out(event, baseline, window)
    residual, neutral = neutrality(event, baseline, window, alpha_frac)
    return EventMetrics(
        energy_in=e_in,
        energy_out=e_out,
        rte=rte(e_in, e_out),
        neutrality_residual=residual,
        neutral=neutral,
        rmse_temp=temp_rmse(event, baseline, window),
    )
