"""Measured-data ingestion, scenario config files, and results serialization.

On-disk units are SI with explicit header suffixes. Fahrenheit exists only at
the boundaries: measured columns declared as ``F`` are converted on load, and
config files may give any temperature field with an ``_f`` suffix instead of
``_c`` (and setpoint deltas as ``setpoint_deltas_f``).
"""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path

import numpy as np
import yaml

from .control import ControllerGains
from .engine import EventSchedule, OutdoorProfile, Scenario
from .errors import ConfigurationError, DataFormatError
from .metrics import EventMetrics
from .thermal import BuildingParams, delta_f_to_k, fahrenheit_to_celsius
from .trace import SERIES_FIELDS, Trace

__all__ = [
    "MeasuredSeries",
    "ResultRecord",
    "RESULTS_HEADER",
    "parse_column_map",
    "load_measured_csv",
    "resample",
    "write_results",
    "read_results",
    "write_trace",
    "read_trace",
    "load_scenario_config",
]

log = logging.getLogger(__name__)

RESULTS_HEADER = ["scenario_id", "mode", "kind", "r", "c", "window_hr",
                  "E_in_J", "E_out_J", "RTE", "neutral", "residual_J", "rmse_K"]

TRACE_HEADER = ["t_s", "T_mix_C", "T_room_C", "T_wall_C", "T_set_eff_C",
                "mdot_desired_kg_s", "mdot_actual_kg_s", "P_fan_W",
                "T_outdoor_C", "P_event_ref_W"]


def _fmt(x: float | None) -> str:
    """Render a float at 17 significant digits (lossless round trip)."""
    if x is None:
        return ""
    return f"{x:.17g}"


@dataclass(frozen=True)
class ResultRecord:
    """One flat metrics row as written to the results CSV."""

    scenario_id: str
    mode: str
    kind: str
    r: float
    c: float
    window_hr: float
    e_in_j: float
    e_out_j: float
    rte: float | None
    neutral: bool
    residual_j: float
    rmse_k: float

    @classmethod
    def from_metrics(cls, m: EventMetrics, *, scenario_id: str, mode: str,
                     kind: str, r: float, c: float, window_hr: float
                     ) -> "ResultRecord":
        return cls(scenario_id=scenario_id, mode=mode, kind=kind, r=r, c=c,
                   window_hr=window_hr, e_in_j=m.energy_in, e_out_j=m.energy_out,
                   rte=m.rte, neutral=m.neutral,
                   residual_j=m.neutrality_residual, rmse_k=m.rmse_temp)


def write_results(records: list[ResultRecord], path: str | Path) -> None:
    """Write metrics rows; deterministic order and formatting.

    An undefined RTE is rendered as an empty field, never as 0.
    """
    path = Path(path)
    try:
        with path.open("w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(RESULTS_HEADER)
            for rec in records:
                writer.writerow([
                    rec.scenario_id, rec.mode, rec.kind,
                    _fmt(rec.r), _fmt(rec.c), _fmt(rec.window_hr),
                    _fmt(rec.e_in_j), _fmt(rec.e_out_j), _fmt(rec.rte),
                    "true" if rec.neutral else "false",
                    _fmt(rec.residual_j), _fmt(rec.rmse_k),
                ])
    except OSError as exc:
        raise DataFormatError(f"cannot write results to {path}: {exc}") from exc


def read_results(path: str | Path) -> list[ResultRecord]:
    path = Path(path)
    try:
        with path.open(newline="") as fh:
            reader = csv.reader(fh)
            header = next(reader, None)
            if header != RESULTS_HEADER:
                raise DataFormatError(f"{path}: unexpected results header {header}")
            out = []
            for row in reader:
                out.append(ResultRecord(
                    scenario_id=row[0], mode=row[1], kind=row[2],
                    r=float(row[3]), c=float(row[4]), window_hr=float(row[5]),
                    e_in_j=float(row[6]), e_out_j=float(row[7]),
                    rte=float(row[8]) if row[8] else None,
                    neutral=row[9] == "true",
                    residual_j=float(row[10]), rmse_k=float(row[11])))
            return out
    except OSError as exc:
        raise DataFormatError(f"cannot read results from {path}: {exc}") from exc


def write_trace(trace: Trace, path: str | Path) -> None:
    path = Path(path)
    try:
        with path.open("w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(TRACE_HEADER)
            columns = [getattr(trace, name) for name in SERIES_FIELDS]
            for row in zip(*columns):
                writer.writerow([_fmt(float(v)) for v in row])
    except OSError as exc:
        raise DataFormatError(f"cannot write trace to {path}: {exc}") from exc


def read_trace(path: str | Path, **meta) -> Trace:
    path = Path(path)
    try:
        with path.open(newline="") as fh:
            reader = csv.reader(fh)
            header = next(reader, None)
            if header != TRACE_HEADER:
                raise DataFormatError(f"{path}: unexpected trace header {header}")
            rows = [[float(v) for v in row] for row in reader]
    except OSError as exc:
        raise DataFormatError(f"cannot read trace from {path}: {exc}") from exc
    if not rows:
        raise DataFormatError(f"{path}: empty trace")
    arr = np.asarray(rows, dtype=float)
    kw = {name: arr[:, i] for i, name in enumerate(SERIES_FIELDS)}
    return Trace(**kw, **meta)


# ---------------------------------------------------------------------------
# measured building time series
# ---------------------------------------------------------------------------

@dataclass
class MeasuredSeries:
    """Validated measured time series on the original (irregular) clock."""

    t: np.ndarray                    # seconds, strictly increasing
    power: np.ndarray                # W
    temp: np.ndarray | None = None   # degC
    setpoint: np.ndarray | None = None
    label: str = ""
    rejects: list[tuple[int, str]] = field(default_factory=list)


_TEMP_UNITS = {"C": lambda v: v, "F": fahrenheit_to_celsius}
_POWER_UNITS = {"W": lambda v: v, "KW": lambda v: v * 1000.0}


def parse_column_map(spec: str) -> dict[str, tuple[str, str | None]]:
    """Parse ``"time=ts,power=fan:kW,temp=zone:F"`` into a column map.

    Keys: time (required), power (required), temp, setpoint. Units follow a
    colon: power W|kW, temperatures C|F; time is auto-detected (numeric
    seconds or ISO-8601).
    """
    out: dict[str, tuple[str, str | None]] = {}
    for part in spec.split(","):
        part = part.strip()
        if not part:
            continue
        if "=" not in part:
            raise ConfigurationError(f"bad column-map entry {part!r} (need key=column)")
        key, rest = part.split("=", 1)
        key = key.strip()
        if key not in ("time", "power", "temp", "setpoint"):
            raise ConfigurationError(f"unknown column-map key {key!r}")
        column, _, unit = rest.partition(":")
        out[key] = (column.strip(), unit.strip() or None)
    for required in ("time", "power"):
        if required not in out:
            raise ConfigurationError(f"column map must declare {required!r}")
    return out


def _parse_time(text: str) -> float:
    try:
        return float(text)
    except ValueError:
        pass
    stamp = datetime.fromisoformat(text.strip().replace("Z", "+00:00"))
    if stamp.tzinfo is None:
        stamp = stamp.replace(tzinfo=timezone.utc)
    return stamp.timestamp()


def load_measured_csv(path: str | Path,
                      column_map: dict[str, tuple[str, str | None]] | str,
                      reject_threshold: float = 0.01) -> MeasuredSeries:
    """Load and validate a measured fan-power CSV.

    Rows with unparsable values or non-increasing timestamps are rejected
    individually (logged); the file is rejected outright when the reject
    fraction exceeds ``reject_threshold`` or declared columns are missing.
    """
    if isinstance(column_map, str):
        column_map = parse_column_map(column_map)
    path = Path(path)
    if not path.exists():
        raise DataFormatError(f"no such file: {path}")

    def conv(kind: str, unit: str | None):
        if kind == "power":
            table, default = _POWER_UNITS, "W"
        else:
            table, default = _TEMP_UNITS, "C"
        key = (unit or default).upper()
        if key not in table:
            raise ConfigurationError(f"unknown unit {unit!r} for {kind}")
        return table[key]

    power_conv = conv("power", column_map["power"][1])
    temp_conv = conv("temp", column_map.get("temp", ("", None))[1])
    set_conv = conv("setpoint", column_map.get("setpoint", ("", None))[1])

    with path.open(newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None:
            raise DataFormatError(f"{path}: empty file")
        for key in column_map:
            col = column_map[key][0]
            if col not in reader.fieldnames:
                raise DataFormatError(f"{path}: missing column {col!r}")

        t, power, temp, setp = [], [], [], []
        rejects: list[tuple[int, str]] = []
        n_rows = 0
        last_t = -math.inf
        for i, row in enumerate(reader):
            n_rows += 1
            try:
                stamp = _parse_time(row[column_map["time"][0]])
                p = power_conv(float(row[column_map["power"][0]]))
                tz = (temp_conv(float(row[column_map["temp"][0]]))
                      if "temp" in column_map else None)
                sz = (set_conv(float(row[column_map["setpoint"][0]]))
                      if "setpoint" in column_map else None)
            except (ValueError, KeyError) as exc:
                rejects.append((i, f"unparseable: {exc}"))
                continue
            if stamp <= last_t:
                rejects.append((i, f"non-increasing timestamp {stamp}"))
                continue
            if p < 0:
                rejects.append((i, f"negative power {p}"))
                continue
            last_t = stamp
            t.append(stamp)
            power.append(p)
            if "temp" in column_map:
                temp.append(tz)
            if "setpoint" in column_map:
                setp.append(sz)

    if n_rows == 0:
        raise DataFormatError(f"{path}: no data rows")
    if len(rejects) > reject_threshold * n_rows:
        raise DataFormatError(
            f"{path}: {len(rejects)}/{n_rows} rows rejected "
            f"(threshold {reject_threshold:.0%}); first: {rejects[0]}")
    for idx, reason in rejects:
        log.warning("%s: rejected row %d (%s)", path, idx, reason)

    return MeasuredSeries(
        t=np.asarray(t), power=np.asarray(power),
        temp=np.asarray(temp) if temp else None,
        setpoint=np.asarray(setp) if setp else None,
        label=path.stem, rejects=rejects)


def resample(series: MeasuredSeries, dt: float,
             t_start: float | None = None, t_end: float | None = None) -> Trace:
    """Linearly interpolate a measured series onto a uniform grid.

    The grid defaults to the series' own span; an explicit request outside
    the span is an error. Series the measurement lacks are NaN-filled.
    """
    if dt <= 0:
        raise ConfigurationError("dt must be positive")
    t0 = float(series.t[0]) if t_start is None else float(t_start)
    t1 = float(series.t[-1]) if t_end is None else float(t_end)
    if t0 < series.t[0] - 1e-9 or t1 > series.t[-1] + 1e-9:
        raise ConfigurationError(
            f"requested grid [{t0}, {t1}] outside measured span "
            f"[{series.t[0]}, {series.t[-1]}]")
    if t1 < t0:
        raise ConfigurationError("grid end precedes grid start")
    n = int(math.floor((t1 - t0) / dt + 1e-9))
    grid = t0 + np.arange(n + 1, dtype=float) * dt
    nan = np.full(n + 1, math.nan)
    p_fan = np.interp(grid, series.t, series.power)
    t_room = (np.interp(grid, series.t, series.temp)
              if series.temp is not None else nan.copy())
    t_set = (np.interp(grid, series.t, series.setpoint)
             if series.setpoint is not None else nan.copy())
    return Trace(
        t=grid, t_mix=nan.copy(), t_room=t_room, t_wall=nan.copy(),
        t_set_eff=t_set, mdot_desired=nan.copy(), mdot_actual=nan.copy(),
        p_fan=p_fan, t_outdoor=nan.copy(), p_event_ref=np.zeros(n + 1),
        mode="measured", scenario_id=series.label, source="measured")


# ---------------------------------------------------------------------------
# scenario config files
# ---------------------------------------------------------------------------

def _temperature(section: dict, stem: str, default_c: float) -> float:
    """Read `<stem>_c` or `<stem>_f` from a config section."""
    has_c, has_f = f"{stem}_c" in section, f"{stem}_f" in section
    if has_c and has_f:
        raise ConfigurationError(f"give either {stem}_c or {stem}_f, not both")
    if has_f:
        return fahrenheit_to_celsius(float(section[f"{stem}_f"]))
    if has_c:
        return float(section[f"{stem}_c"])
    return default_c


def _check_keys(section: dict, allowed: set[str], where: str) -> None:
    unknown = set(section) - allowed
    if unknown:
        raise ConfigurationError(f"unknown keys in {where}: {sorted(unknown)}")


def _profile_from_config(spec, nominal: float) -> OutdoorProfile:
    if spec is None:
        return OutdoorProfile.constant(nominal)
    if isinstance(spec, dict):
        _check_keys(spec, {"step_at_s", "step_c", "step_f"}, "outdoor profile")
        if "step_at_s" in spec:
            delta = (delta_f_to_k(float(spec["step_f"])) if "step_f" in spec
                     else float(spec.get("step_c", 0.0)))
            return OutdoorProfile.step_at(nominal, float(spec["step_at_s"]), delta)
        raise ConfigurationError(f"bad outdoor profile spec: {spec}")
    pairs = [(float(t), float(v)) for t, v in spec]
    return OutdoorProfile(times=tuple(t for t, _ in pairs),
                          values=tuple(v for _, v in pairs))


def load_scenario_config(path: str | Path) -> Scenario:
    """Build a Scenario from a YAML config file.

    Every field is optional except ``mode`` and the event fields that mode
    requires; omissions fall back to the calibrated defaults.
    """
    path = Path(path)
    if not path.exists():
        raise ConfigurationError(f"no such config file: {path}")
    try:
        raw = yaml.safe_load(path.read_text())
    except yaml.YAMLError as exc:
        raise ConfigurationError(f"{path}: invalid YAML: {exc}") from exc
    if not isinstance(raw, dict):
        raise ConfigurationError(f"{path}: config must be a mapping")
    _check_keys(raw, {"scenario_id", "mode", "dt_s", "warmup_s",
                      "settle_duration_s", "building", "control", "event",
                      "outdoor"}, "config root")

    b = raw.get("building", {}) or {}
    _check_keys(b, {"c_room_j_per_k", "c_wall_j_per_k", "r_wall_k_per_w",
                    "q_internal_w", "t_outdoor_nominal_c", "t_outdoor_nominal_f",
                    "t_supply_c", "t_supply_f", "c_p_air_j_per_kg_k",
                    "mix_r", "mix_c"}, "building")
    defaults = BuildingParams()
    params = BuildingParams(
        c_room=float(b.get("c_room_j_per_k", defaults.c_room)),
        c_wall=float(b.get("c_wall_j_per_k", defaults.c_wall)),
        r_wall=float(b.get("r_wall_k_per_w", defaults.r_wall)),
        q_internal=float(b.get("q_internal_w", defaults.q_internal)),
        t_outdoor_nominal=_temperature(b, "t_outdoor_nominal", defaults.t_outdoor_nominal),
        t_supply=_temperature(b, "t_supply", defaults.t_supply),
        c_p_air=float(b.get("c_p_air_j_per_kg_k", defaults.c_p_air)),
        mix_r=float(b.get("mix_r", defaults.mix_r)),
        mix_c=float(b.get("mix_c", defaults.mix_c)),
    )

    g = raw.get("control", {}) or {}
    _check_keys(g, {"kp_temp", "ki_temp", "kp_power", "ki_power",
                    "tau_airflow_s", "tau_fan_s", "fan_coeff_w_per_kg_s",
                    "t_set_nominal_c", "t_set_nominal_f"}, "control")
    gdef = ControllerGains()
    gains = ControllerGains(
        kp_temp=float(g.get("kp_temp", gdef.kp_temp)),
        ki_temp=float(g.get("ki_temp", gdef.ki_temp)),
        kp_power=float(g.get("kp_power", gdef.kp_power)),
        ki_power=float(g.get("ki_power", gdef.ki_power)),
        tau_airflow=float(g.get("tau_airflow_s", gdef.tau_airflow)),
        tau_fan=float(g.get("tau_fan_s", gdef.tau_fan)),
        fan_coeff=float(g.get("fan_coeff_w_per_kg_s", gdef.fan_coeff)),
        t_set_nominal=_temperature(g, "t_set_nominal", gdef.t_set_nominal),
    )

    e = raw.get("event", {}) or {}
    _check_keys(e, {"kind", "half_duration_s", "setpoint_deltas_k",
                    "setpoint_deltas_f", "power_deltas_w", "power_delta_frac",
                    "forced_settle_s"}, "event")
    if "setpoint_deltas_k" in e and "setpoint_deltas_f" in e:
        raise ConfigurationError("give setpoint deltas in K or F, not both")
    setpoint_deltas = None
    if "setpoint_deltas_k" in e:
        setpoint_deltas = tuple(float(x) for x in e["setpoint_deltas_k"])
    elif "setpoint_deltas_f" in e:
        setpoint_deltas = tuple(delta_f_to_k(float(x)) for x in e["setpoint_deltas_f"])
    power_deltas = (tuple(float(x) for x in e["power_deltas_w"])
                    if "power_deltas_w" in e else None)
    event = EventSchedule(
        kind=str(e.get("kind", "UP_DOWN")),
        half_duration=float(e.get("half_duration_s", 1800.0)),
        setpoint_deltas=setpoint_deltas,
        power_deltas=power_deltas,
        power_delta_frac=(float(e["power_delta_frac"])
                          if "power_delta_frac" in e else None),
        forced_settle_duration=float(e.get("forced_settle_s", 3600.0)),
    )

    o = raw.get("outdoor", {}) or {}
    _check_keys(o, {"actual", "predicted"}, "outdoor")

    return Scenario(
        params=params,
        gains=gains,
        event=event,
        mode=str(raw.get("mode", "open_loop")),
        dt=float(raw.get("dt_s", 1.0)),
        warmup=float(raw.get("warmup_s", 7200.0)),
        settle_duration=float(raw.get("settle_duration_s", 35_000.0)),
        oa_actual=_profile_from_config(o.get("actual"), params.t_outdoor_nominal),
        oa_predicted=_profile_from_config(o.get("predicted"), params.t_outdoor_nominal),
        scenario_id=str(raw.get("scenario_id", path.stem)),
    )
