"""Command-line experiment runner.

Four subcommands compose the library into reproducible studies:

* ``simulate``        -- run one scenario from a YAML config
* ``sweep-mixing``    -- efficiency vs mixing parameters (r, c) grid
* ``forced-settling`` -- forced vs unforced settling plus baseline-error cases
* ``compare-models``  -- two-state vs mixing-air model under setpoint events

Everything is emitted as CSV (traces and flat metrics rows); plotting is left
to external tools. Exit codes: 0 success, 1 configuration error, 2 numerical
failure, 3 self-check failure. ``FANSHIFT_WORKERS`` sets the sweep's process
pool size (default 1, serial and deterministic either way).
"""

from __future__ import annotations

import argparse
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import data_io, metrics
from .engine import (KIND_DOWN_UP, KIND_UP_DOWN, KINDS, MODE_CLOSED_LOOP,
                     MODE_FORCED_SETTLING, MODE_OPEN_LOOP, EventSchedule,
                     OutdoorProfile, Scenario, run_baseline, run_closed_loop,
                     run_open_loop, tune_open_loop_event)
from .errors import (ConfigurationError, DataFormatError, FanshiftError,
                     NumericalError)
from .thermal import BuildingParams, delta_f_to_k
from .trace import Trace

__all__ = ["main", "cmd_simulate", "cmd_sweep_mixing", "cmd_forced_settling",
           "cmd_compare_models", "SelfCheckError"]

FULL_WINDOW_HR = 35_000.0 / 3600.0
SHORT_WINDOW_HR = 2.0


class SelfCheckError(FanshiftError):
    """A command's built-in result verification failed."""


def _worker_count() -> int:
    try:
        return max(1, int(os.environ.get("FANSHIFT_WORKERS", "1")))
    except ValueError:
        return 1


def run_event_pair(scenario: Scenario) -> tuple[Trace, Trace, Trace]:
    """Run one event with its two baselines.

    Returns (event, control_baseline, counterfactual). The control baseline
    is the no-event run under the *predicted* outdoor profile that the power
    controller subtracts; the counterfactual is the no-event run under the
    *actual* profile that metrics compare against. They are one and the same
    run whenever the profiles agree.
    """
    control_base = run_baseline(scenario)
    if scenario.mode == MODE_OPEN_LOOP:
        event = run_open_loop(scenario)
    else:
        event = run_closed_loop(scenario, control_base)
    if scenario.oa_actual == scenario.oa_predicted:
        counterfactual = control_base
    else:
        counterfactual = run_baseline(replace(scenario, oa_predicted=scenario.oa_actual))
    return event, control_base, counterfactual


def _metrics_record(scenario: Scenario, event: Trace, counterfactual: Trace,
                    window_hr: float) -> data_io.ResultRecord:
    window = scenario.window()
    if window_hr != FULL_WINDOW_HR:
        window = window.with_settle(scenario.t_start + window_hr * 3600.0)
    m = metrics.evaluate_event(event, counterfactual, window)
    return data_io.ResultRecord.from_metrics(
        m, scenario_id=scenario.scenario_id, mode=scenario.mode,
        kind=scenario.event.kind, r=scenario.params.mix_r,
        c=scenario.params.mix_c, window_hr=window_hr)


def _check_neutrality(records: list[data_io.ResultRecord]) -> None:
    bad = [r for r in records
           if r.window_hr == FULL_WINDOW_HR and not r.neutral]
    if bad:
        ids = ", ".join(f"{r.scenario_id}/{r.kind}" for r in bad)
        raise SelfCheckError(f"events violate the energy-neutrality criterion: {ids}")


# ---------------------------------------------------------------------------
# simulate
# ---------------------------------------------------------------------------

def cmd_simulate(config_path: str | Path, out_dir: str | Path,
                 dt: float | None = None, window: str = "full",
                 tune_neutral: bool = False) -> int:
    """Run the scenario described by a config file; write traces + metrics."""
    scenario = data_io.load_scenario_config(config_path)
    if dt is not None:
        scenario = replace(scenario, dt=dt)
    if tune_neutral:
        if scenario.mode != MODE_OPEN_LOOP:
            raise ConfigurationError("--tune-neutral applies to open-loop scenarios")
        scenario = replace(scenario, event=tune_open_loop_event(scenario))

    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    event, control_base, counterfactual = run_event_pair(scenario)

    records = []
    if window in ("full", "both"):
        records.append(_metrics_record(scenario, event, counterfactual, FULL_WINDOW_HR))
    if window in ("2h", "both"):
        records.append(_metrics_record(scenario, event, counterfactual, SHORT_WINDOW_HR))

    sid = scenario.scenario_id
    data_io.write_trace(event, out / f"{sid}_event.csv")
    data_io.write_trace(control_base, out / f"{sid}_baseline.csv")
    if counterfactual is not control_base:
        data_io.write_trace(counterfactual, out / f"{sid}_counterfactual.csv")
    data_io.write_results(records, out / f"{sid}_metrics.csv")
    return 0


# ---------------------------------------------------------------------------
# sweep-mixing
# ---------------------------------------------------------------------------

def parse_grid(spec: str) -> list[float]:
    """Parse ``"0.1:1.0:0.1"`` (start:stop:step, inclusive) or ``"0.1,0.3"``."""
    spec = spec.strip()
    if ":" in spec:
        parts = spec.split(":")
        if len(parts) != 3:
            raise ConfigurationError(f"grid spec {spec!r} needs start:stop:step")
        start, stop, step_sz = (float(p) for p in parts)
        if step_sz <= 0 or stop < start:
            raise ConfigurationError(f"bad grid range {spec!r}")
        n = int(round((stop - start) / step_sz))
        return [round(start + k * step_sz, 10) for k in range(n + 1)]
    values = [float(p) for p in spec.split(",") if p.strip()]
    if not values:
        raise ConfigurationError(f"empty grid spec {spec!r}")
    return values


def _sweep_point(args) -> list[data_io.ResultRecord]:
    r, c, kind, power_frac, dt, windows = args
    scenario = Scenario(
        params=BuildingParams().with_mixing(r, c),
        event=EventSchedule(kind=kind, power_delta_frac=power_frac),
        mode=MODE_CLOSED_LOOP, dt=dt,
        scenario_id=f"mixing_r{r:g}_c{c:g}")
    event, _, counterfactual = run_event_pair(scenario)
    return [_metrics_record(scenario, event, counterfactual, hr) for hr in windows]


def cmd_sweep_mixing(r_grid: list[float], c_grid: list[float],
                     kind: str = KIND_UP_DOWN, out_dir: str | Path = ".",
                     dt: float = 1.0, window: str = "both",
                     power_frac: float = 0.10) -> int:
    """Closed-loop events across a mixing-parameter grid; one row per window."""
    if not r_grid or not c_grid:
        raise ConfigurationError("grids must be non-empty")
    if kind not in KINDS:
        raise ConfigurationError(f"unknown kind {kind!r}")
    windows = {"full": (FULL_WINDOW_HR,), "2h": (SHORT_WINDOW_HR,),
               "both": (FULL_WINDOW_HR, SHORT_WINDOW_HR)}.get(window)
    if windows is None:
        raise ConfigurationError(f"unknown window {window!r}")

    points = [(r, c, kind, power_frac, dt, windows)
              for r in r_grid for c in c_grid]
    workers = _worker_count()
    failures: list[str] = []
    results: list[data_io.ResultRecord] = []
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            for point, recs in zip(points, pool.map(_sweep_point, points)):
                results.extend(recs)
    else:
        for point in points:
            try:
                results.extend(_sweep_point(point))
            except FanshiftError as exc:
                failures.append(f"r={point[0]} c={point[1]}: {exc}")

    results.sort(key=lambda rec: (rec.r, rec.c, -rec.window_hr))
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    data_io.write_results(results, out / "mixing_sweep.csv")
    if failures:
        print("sweep points failed:", *failures, sep="\n  ", file=sys.stderr)
    _check_neutrality(results)
    return 0


# ---------------------------------------------------------------------------
# forced-settling
# ---------------------------------------------------------------------------

STUDY_CASES = ("unforced", "forced", "oa_step_predicted",
               "oa_step_unpredicted", "oa_step_prediction_only")


def _study_scenario(case: str, kind: str, dt: float, step_offset: float,
                    step_f: float, mix_r: float, mix_c: float) -> Scenario:
    params = BuildingParams().with_mixing(mix_r, mix_c)
    nominal = params.t_outdoor_nominal
    flat = OutdoorProfile.constant(nominal)
    warmup = 7200.0
    stepped = OutdoorProfile.step_at(nominal, warmup + step_offset,
                                     delta_f_to_k(step_f))
    actual, predicted = {
        "unforced": (flat, flat),
        "forced": (flat, flat),
        "oa_step_predicted": (stepped, stepped),
        "oa_step_unpredicted": (stepped, flat),
        "oa_step_prediction_only": (flat, stepped),
    }[case]
    mode = MODE_CLOSED_LOOP if case == "unforced" else MODE_FORCED_SETTLING
    return Scenario(
        params=params,
        event=EventSchedule(kind=kind, power_delta_frac=0.10),
        mode=mode, dt=dt, warmup=warmup,
        oa_actual=actual, oa_predicted=predicted,
        scenario_id=f"{case}_{kind}")


def cmd_forced_settling(out_dir: str | Path, dt: float = 1.0,
                        step_offset: float = 0.0, step_f: float = 3.0,
                        mix_r: float = 0.5, mix_c: float = 0.3,
                        window: str = "full") -> int:
    """Forced vs unforced settling and the three baseline-error cases.

    The outdoor step of the error cases lands ``step_offset`` seconds after
    event start (default: at event start).
    """
    windows = {"full": (FULL_WINDOW_HR,),
               "both": (FULL_WINDOW_HR, SHORT_WINDOW_HR)}.get(window)
    if windows is None:
        raise ConfigurationError(f"unknown window {window!r} (use full or both)")
    out = Path(out_dir)
    traces_dir = out / "traces"
    traces_dir.mkdir(parents=True, exist_ok=True)

    records = []
    for case in STUDY_CASES:
        for kind in (KIND_UP_DOWN, KIND_DOWN_UP):
            scenario = _study_scenario(case, kind, dt, step_offset, step_f,
                                       mix_r, mix_c)
            event, control_base, counterfactual = run_event_pair(scenario)
            for hr in windows:
                records.append(_metrics_record(scenario, event, counterfactual, hr))
            sid = scenario.scenario_id
            data_io.write_trace(event, traces_dir / f"{sid}.csv")
            data_io.write_trace(control_base, traces_dir / f"{sid}_baseline.csv")
            if counterfactual is not control_base:
                data_io.write_trace(counterfactual,
                                    traces_dir / f"{sid}_counterfactual.csv")
    data_io.write_results(records, out / "settling_study.csv")
    _check_neutrality(records)
    return 0


# ---------------------------------------------------------------------------
# compare-models
# ---------------------------------------------------------------------------

def _drift_slope(event: Trace, baseline: Trace, t_start: float) -> tuple[float, float]:
    """Initial power step (2 min in) and mean drift slope 5-25 min in, W/s."""
    diff = event.p_fan - baseline.p_fan
    i0 = event.index_at(t_start)
    per_step = int(round(1.0 / event.dt))
    step0 = float(diff[i0 + 120 * per_step])
    a, z = i0 + 300 * per_step, i0 + 1500 * per_step
    slope = float(np.polyfit(event.t[a:z], diff[a:z], 1)[0])
    return step0, slope


def cmd_compare_models(out_dir: str | Path, dt: float = 1.0,
                       mix_r: float = 0.3, mix_c: float = 0.1,
                       setpoint_delta_f: float = 1.0,
                       measured: str | Path | None = None,
                       column_map: str | None = None,
                       measured_window: tuple[float, float, float] | None = None
                       ) -> int:
    """Open-loop setpoint events on both plant models, emitted normalized.

    Traces are trimmed to 30 min before through 3 h after event start and
    scaled so the mean fan power over that span is one. Self-checks the
    two-part response: drift away from the step for the two-state model,
    with the step for the mixing model.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    delta = delta_f_to_k(setpoint_delta_f)
    plants = {"original": BuildingParams(),
              "mixing": BuildingParams().with_mixing(mix_r, mix_c)}
    deltas = {KIND_DOWN_UP: (delta, -delta), KIND_UP_DOWN: (-delta, delta)}

    for model_name, params in plants.items():
        for kind, (d1, d2) in deltas.items():
            scenario = Scenario(
                params=params, mode=MODE_OPEN_LOOP, dt=dt,
                event=EventSchedule(kind=kind, setpoint_deltas=(d1, d2)),
                scenario_id=f"{model_name}_{kind}")
            baseline = run_baseline(scenario)
            event = run_open_loop(scenario)

            step0, slope = _drift_slope(event, baseline, scenario.t_start)
            same_direction = slope * step0 > 0
            if model_name == "mixing" and not same_direction:
                raise SelfCheckError(
                    f"mixing model {kind}: drift opposes the initial step")
            if model_name == "original" and same_direction:
                raise SelfCheckError(
                    f"two-state model {kind}: drift follows the initial step")

            lo = event.index_at(scenario.t_start - 1800.0)
            hi = event.index_at(scenario.t_start + 10800.0)
            clipped = event.sliced(lo, hi)
            span = metrics.EventWindow(float(clipped.t[0]), float(clipped.t[1]),
                                       float(clipped.t[-1]))
            normalized = metrics.normalize(clipped, span)
            data_io.write_trace(normalized, out / f"{model_name}_{kind}.csv")

    if measured is not None:
        if column_map is None:
            raise ConfigurationError("--measured needs --column-map")
        series = data_io.load_measured_csv(measured, column_map)
        trace = data_io.resample(series, dt)
        if measured_window is not None:
            w = metrics.EventWindow(*measured_window)
            baseline = metrics.linear_baseline(trace, w)
            record = data_io.ResultRecord.from_metrics(
                metrics.evaluate_event(trace, baseline, w),
                scenario_id=series.label or "measured", mode="measured",
                kind="MEASURED", r=float("nan"), c=float("nan"),
                window_hr=(w.t_settle - w.t_start) / 3600.0)
            data_io.write_results([record], out / "measured_metrics.csv")
            norm_span = metrics.EventWindow(
                max(float(trace.t[0]), w.t_start - 1800.0), w.t_end,
                min(float(trace.t[-1]), w.t_start + 10800.0))
            trace = metrics.normalize(trace, norm_span)
        else:
            full = metrics.EventWindow(float(trace.t[0]), float(trace.t[1]),
                                       float(trace.t[-1]))
            trace = metrics.normalize(trace, full)
        data_io.write_trace(trace, out / "measured.csv")
    return 0


# ---------------------------------------------------------------------------
# argument parsing
# ---------------------------------------------------------------------------

def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="fanshift",
        description="HVAC fan load-shifting simulation experiments")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="run one scenario from a config file")
    p.add_argument("--config", required=True, help="scenario YAML path")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--dt", type=float, default=None, help="override timestep, s")
    p.add_argument("--window", choices=["full", "2h", "both"], default="full")
    p.add_argument("--tune-neutral", action="store_true",
                   help="adjust the second setpoint delta until energy neutral")

    p = sub.add_parser("sweep-mixing", help="efficiency across (r, c) grid")
    p.add_argument("--r-grid", default="0.1:1.0:0.1",
                   help="start:stop:step or comma list (default 0.1:1.0:0.1)")
    p.add_argument("--c-grid", default="0.1", help="same syntax (default 0.1)")
    p.add_argument("--kind", choices=list(KINDS), default=KIND_UP_DOWN)
    p.add_argument("--power-frac", type=float, default=0.10,
                   help="event size as fraction of baseline fan power")
    p.add_argument("--out", required=True)
    p.add_argument("--dt", type=float, default=1.0)
    p.add_argument("--window", choices=["full", "2h", "both"], default="both")

    p = sub.add_parser("forced-settling",
                       help="forced vs unforced settling and baseline-error cases")
    p.add_argument("--out", required=True)
    p.add_argument("--dt", type=float, default=1.0)
    p.add_argument("--step-offset", type=float, default=0.0,
                   help="outdoor step delay after event start, s")
    p.add_argument("--step-f", type=float, default=3.0,
                   help="outdoor step size, degF")
    p.add_argument("--mix-r", type=float, default=0.5)
    p.add_argument("--mix-c", type=float, default=0.3)
    p.add_argument("--window", choices=["full", "both"], default="full")

    p = sub.add_parser("compare-models",
                       help="two-state vs mixing-air model under setpoint events")
    p.add_argument("--out", required=True)
    p.add_argument("--dt", type=float, default=1.0)
    p.add_argument("--mix-r", type=float, default=0.3)
    p.add_argument("--mix-c", type=float, default=0.1)
    p.add_argument("--setpoint-delta-f", type=float, default=1.0)
    p.add_argument("--measured", default=None, help="measured fan-power CSV")
    p.add_argument("--column-map", default=None,
                   help='e.g. "time=ts,power=fan_kw:kW,temp=zone:F"')
    p.add_argument("--measured-window", default=None,
                   help="t_start,t_end,t_settle in the measured file's clock, s")
    return parser


def main(argv: list[str] | None = None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        if args.command == "simulate":
            return cmd_simulate(args.config, args.out, dt=args.dt,
                                window=args.window,
                                tune_neutral=args.tune_neutral)
        if args.command == "sweep-mixing":
            return cmd_sweep_mixing(parse_grid(args.r_grid),
                                    parse_grid(args.c_grid),
                                    kind=args.kind, out_dir=args.out,
                                    dt=args.dt, window=args.window,
                                    power_frac=args.power_frac)
        if args.command == "forced-settling":
            return cmd_forced_settling(args.out, dt=args.dt,
                                       step_offset=args.step_offset,
                                       step_f=args.step_f, mix_r=args.mix_r,
                                       mix_c=args.mix_c, window=args.window)
        if args.command == "compare-models":
            window = None
            if args.measured_window:
                window = tuple(float(x) for x in args.measured_window.split(","))
                if len(window) != 3:
                    raise ConfigurationError(
                        "--measured-window needs t_start,t_end,t_settle")
            return cmd_compare_models(args.out, dt=args.dt, mix_r=args.mix_r,
                                      mix_c=args.mix_c,
                                      setpoint_delta_f=args.setpoint_delta_f,
                                      measured=args.measured,
                                      column_map=args.column_map,
                                      measured_window=window)
        raise ConfigurationError(f"unknown command {args.command!r}")
    except (ConfigurationError, DataFormatError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        if exc.sample:
            print(f"  state: {exc.sample}", file=sys.stderr)
        return 2
    except SelfCheckError as exc:
        print(f"self-check failed: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
