"""Uniformly sampled simulation/measurement traces."""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .errors import TraceAlignmentError

__all__ = ["Trace", "SERIES_FIELDS", "aligned"]

# every per-sample series carried by a trace, in canonical column order
SERIES_FIELDS = (
    "t", "t_mix", "t_room", "t_wall", "t_set_eff",
    "mdot_desired", "mdot_actual", "p_fan", "t_outdoor", "p_event_ref",
)


@dataclass(frozen=True)
class Trace:
    """Time series of every signal in a run, sampled every ``dt`` seconds.

    ``t`` need not start at zero (measured data keeps its own clock); it must
    be uniform. Series unavailable in measured data are NaN-filled.
    """

    t: np.ndarray
    t_mix: np.ndarray
    t_room: np.ndarray
    t_wall: np.ndarray
    t_set_eff: np.ndarray
    mdot_desired: np.ndarray
    mdot_actual: np.ndarray
    p_fan: np.ndarray
    t_outdoor: np.ndarray
    p_event_ref: np.ndarray
    mode: str = "unknown"
    scenario_id: str = ""
    scenario_hash: str = ""
    source: str = "simulation"

    def __post_init__(self):
        n = self.t.shape[0]
        if n < 1:
            raise TraceAlignmentError("trace needs at least one sample")
        for name in SERIES_FIELDS:
            arr = getattr(self, name)
            if arr.shape != (n,):
                raise TraceAlignmentError(
                    f"series {name!r} has shape {arr.shape}, expected ({n},)")
        if n > 1:
            steps = np.diff(self.t)
            if not np.allclose(steps, steps[0], rtol=0.0, atol=1e-9):
                raise TraceAlignmentError("trace sampling is not uniform")

    @property
    def dt(self) -> float:
        if self.t.shape[0] < 2:
            return 0.0
        return float(self.t[1] - self.t[0])

    @property
    def n_samples(self) -> int:
        return int(self.t.shape[0])

    def index_at(self, time: float) -> int:
        """Index of the sample at ``time``; the time must sit on the grid."""
        if self.n_samples == 1:
            if abs(time - float(self.t[0])) > 1e-6:
                raise TraceAlignmentError(f"time {time} outside single-sample trace")
            return 0
        pos = (time - float(self.t[0])) / self.dt
        idx = int(round(pos))
        if idx < 0 or idx >= self.n_samples or abs(pos - idx) > 1e-6:
            raise TraceAlignmentError(
                f"time {time} not on trace grid (t0={self.t[0]}, dt={self.dt})")
        return idx

    def with_p_fan(self, p_fan: np.ndarray, **meta) -> "Trace":
        return replace(self, p_fan=np.asarray(p_fan, dtype=float), **meta)

    def sliced(self, start: int, stop: int) -> "Trace":
        """Sub-trace over sample indices [start, stop] inclusive."""
        kw = {name: getattr(self, name)[start:stop + 1] for name in SERIES_FIELDS}
        return replace(self, **kw)


def aligned(a: Trace, b: Trace) -> None:
    """Raise unless two traces share the same time grid."""
    if a.n_samples != b.n_samples or not np.array_equal(a.t, b.t):
        raise TraceAlignmentError("traces are not on the same time grid")
