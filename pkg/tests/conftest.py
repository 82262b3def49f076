import numpy as np
import pytest

from fanshift import BuildingParams, ControllerGains, EventSchedule, Scenario
from fanshift.trace import SERIES_FIELDS, Trace


@pytest.fixture
def params():
    return BuildingParams()


@pytest.fixture
def mixing_params():
    return BuildingParams().with_mixing(0.3, 0.1)


@pytest.fixture
def gains():
    return ControllerGains()


def make_trace(t, p_fan, t_room=None, **meta) -> Trace:
    """Synthetic trace with every other series zero-filled."""
    t = np.asarray(t, dtype=float)
    kw = {name: np.zeros_like(t) for name in SERIES_FIELDS}
    kw["t"] = t
    kw["p_fan"] = np.asarray(p_fan, dtype=float)
    if t_room is not None:
        kw["t_room"] = np.asarray(t_room, dtype=float)
    return Trace(**kw, **meta)


def quick_scenario(**overrides) -> Scenario:
    """Short-horizon scenario for fast engine tests."""
    kw = dict(
        params=BuildingParams().with_mixing(0.3, 0.1),
        event=EventSchedule(kind="DOWN_UP", setpoint_deltas=(0.5, -0.5)),
        mode="open_loop",
        warmup=600.0,
        settle_duration=7200.0,
    )
    kw.update(overrides)
    return Scenario(**kw)
