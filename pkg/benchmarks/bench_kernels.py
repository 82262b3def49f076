#!/usr/bin/env python3
"""Time the simulation hot loop: numba-compiled vs pure-Python fallback.

Run directly for the path selected by the environment; pass ``--compare`` to
spawn a ``FANSHIFT_NO_NUMBA=1`` subprocess and print both timings plus the
speedup. The workload is one baseline plus one closed-loop event at 1 s
resolution (two 42,200-step marches), repeated ``--repeat`` times.
"""

import argparse
import json
import os
import statistics
import subprocess
import sys
import time


def workload() -> float:
    import fanshift as fs

    scenario = fs.Scenario(
        params=fs.BuildingParams().with_mixing(0.5, 0.3),
        event=fs.EventSchedule(kind="UP_DOWN", power_delta_frac=0.10),
        mode="closed_loop_forced_settling")
    baseline = fs.run_baseline(scenario)
    event = fs.run_closed_loop(scenario, baseline)
    m = fs.evaluate_event(event, baseline, scenario.window())
    return m.rte


def run_timings(repeat: int) -> dict:
    from fanshift import kernels

    rte = workload()  # first call includes any compilation
    times = []
    for _ in range(repeat):
        start = time.perf_counter()
        rte = workload()
        times.append(time.perf_counter() - start)
    return {
        "jit": kernels.JIT_ENABLED,
        "best_s": min(times),
        "median_s": statistics.median(times),
        "rte": rte,
    }


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--repeat", type=int, default=5)
    parser.add_argument("--compare", action="store_true",
                        help="also time the pure-Python path in a subprocess")
    parser.add_argument("--json", action="store_true",
                        help="emit a single JSON line (used by --compare)")
    args = parser.parse_args()

    stats = run_timings(args.repeat)
    if args.json:
        print(json.dumps(stats))
        return 0

    label = "numba" if stats["jit"] else "pure python"
    print(f"{label:12s}: best {stats['best_s'] * 1e3:8.1f} ms, "
          f"median {stats['median_s'] * 1e3:8.1f} ms   (RTE={stats['rte']:.6f})")

    if args.compare:
        if not stats["jit"]:
            print("already running without numba; nothing to compare")
            return 0
        env = dict(os.environ, FANSHIFT_NO_NUMBA="1")
        out = subprocess.run(
            [sys.executable, __file__, "--repeat", str(max(1, args.repeat // 2)),
             "--json"],
            env=env, capture_output=True, text=True, check=True)
        other = json.loads(out.stdout.strip().splitlines()[-1])
        print(f"{'pure python':12s}: best {other['best_s'] * 1e3:8.1f} ms, "
              f"median {other['median_s'] * 1e3:8.1f} ms   (RTE={other['rte']:.6f})")
        print(f"speedup     : {other['best_s'] / stats['best_s']:.1f}x")
        drift = abs(other["rte"] - stats["rte"])
        print(f"path agreement: |dRTE| = {drift:.2e}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
