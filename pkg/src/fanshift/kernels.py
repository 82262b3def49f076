"""Scalar numeric kernels for the thermal plant and its controllers.

Everything in this module is written against plain floats and 1-D float64
arrays so it can be compiled with numba's ``@njit``. The same source doubles
as the pure-NumPy fallback: set ``FANSHIFT_NO_NUMBA=1`` in the environment
before import to skip compilation (useful for debugging and for the
``benchmarks/bench_kernels.py`` comparison).

Plant models
------------
Original two-state model (supply air mixed straight into the room):

    C_room  dT_room/dt = (T_wall - T_room)/R_wall + Q
                         + mdot * c_p_air * (T_supply - T_room)
    C_wall  dT_wall/dt = (T_room - T_wall)/R_wall + (T_out - T_wall)/R_wall

Mixing-air three-state model (supply air lands in a mixing pocket that
exchanges heat with the room through its own resistance):

    C_mix   dT_mix/dt  = (T_room - T_mix)/R_mix + Q
                         + mdot * c_p_air * (T_supply - T_mix)
    C_room' dT_room/dt = (T_mix - T_room)/R_mix + (T_wall - T_room)/R_wall
    C_wall  dT_wall/dt = (T_room - T_wall)/R_wall + (T_out - T_wall)/R_wall

with C_mix = mix_c * C_room, C_room' = (1 - mix_c) * C_room (total room-air
capacitance is preserved) and R_mix = mix_r * R_wall.

Controllers
-----------
Temperature PI (room temperature -> desired airflow, cooling sign), power PI
(fan-power deviation -> setpoint adjustment, negative feedback), first-order
lags for the VAV actuator and the fan power response. PI integrals use
forward-rectangle accumulation with conditional anti-windup; lags use the
exact exponential update, unconditionally stable for any dt.
"""

import math
import os

import numpy as np

MODEL_ORIGINAL = 0
MODEL_MIXING = 1

_STATUS_OK = -1


def _jit_requested() -> bool:
    flag = os.environ.get("FANSHIFT_NO_NUMBA", "").strip().lower()
    return flag not in ("1", "true", "yes", "on")


if _jit_requested():
    try:
        from numba import njit as _njit

        def _compile(fn):
            return _njit(cache=True)(fn)

        JIT_ENABLED = True
    except ImportError:  # pragma: no cover - numba is a declared dependency
        def _compile(fn):
            return fn

        JIT_ENABLED = False
else:
    def _compile(fn):
        return fn

    JIT_ENABLED = False


def supply_heat(mdot: float, t_zone: float, t_supply: float, c_p_air: float) -> float:
    """Heat added to a zone by supply air, W. Negative while cooling."""
    return mdot * c_p_air * (t_supply - t_zone)


def derivs_original(t_room, t_wall, mdot, t_out,
                    c_room, c_wall, r_wall, q_internal, t_supply, c_p_air):
    """Temperature rates (K/s) of the two-state model."""
    d_room = ((t_wall - t_room) / r_wall + q_internal
              + mdot * c_p_air * (t_supply - t_room)) / c_room
    d_wall = ((t_room - t_wall) / r_wall + (t_out - t_wall) / r_wall) / c_wall
    return d_room, d_wall


def derivs_mixing(t_mix, t_room, t_wall, mdot, t_out,
                  c_mix, c_room_rest, c_wall, r_wall, r_mix,
                  q_internal, t_supply, c_p_air):
    """Temperature rates (K/s) of the three-state mixing-air model."""
    d_mix = ((t_room - t_mix) / r_mix + q_internal
             + mdot * c_p_air * (t_supply - t_mix)) / c_mix
    d_room = ((t_mix - t_room) / r_mix + (t_wall - t_room) / r_wall) / c_room_rest
    d_wall = ((t_room - t_wall) / r_wall + (t_out - t_wall) / r_wall) / c_wall
    return d_mix, d_room, d_wall


def plant_derivs(model, t_mix, t_room, t_wall, mdot, t_out,
                 c_mix, c_room_rest, c_wall, r_wall, r_mix,
                 q_internal, t_supply, c_p_air):
    """Rates for either model; the two-state model aliases T_mix to T_room."""
    if model == MODEL_ORIGINAL:
        d_room, d_wall = derivs_original(
            t_room, t_wall, mdot, t_out,
            c_room_rest, c_wall, r_wall, q_internal, t_supply, c_p_air)
        return d_room, d_room, d_wall
    return derivs_mixing(
        t_mix, t_room, t_wall, mdot, t_out,
        c_mix, c_room_rest, c_wall, r_wall, r_mix,
        q_internal, t_supply, c_p_air)


def rk4_plant_step(model, t_mix, t_room, t_wall, mdot, t_out, dt,
                   c_mix, c_room_rest, c_wall, r_wall, r_mix,
                   q_internal, t_supply, c_p_air):
    """One classical 4th-order Runge-Kutta step, inputs held over the step."""
    a1, r1, w1 = plant_derivs(model, t_mix, t_room, t_wall, mdot, t_out,
                              c_mix, c_room_rest, c_wall, r_wall, r_mix,
                              q_internal, t_supply, c_p_air)
    h2 = 0.5 * dt
    a2, r2, w2 = plant_derivs(model, t_mix + h2 * a1, t_room + h2 * r1,
                              t_wall + h2 * w1, mdot, t_out,
                              c_mix, c_room_rest, c_wall, r_wall, r_mix,
                              q_internal, t_supply, c_p_air)
    a3, r3, w3 = plant_derivs(model, t_mix + h2 * a2, t_room + h2 * r2,
                              t_wall + h2 * w2, mdot, t_out,
                              c_mix, c_room_rest, c_wall, r_wall, r_mix,
                              q_internal, t_supply, c_p_air)
    a4, r4, w4 = plant_derivs(model, t_mix + dt * a3, t_room + dt * r3,
                              t_wall + dt * w3, mdot, t_out,
                              c_mix, c_room_rest, c_wall, r_wall, r_mix,
                              q_internal, t_supply, c_p_air)
    sixth = dt / 6.0
    return (t_mix + sixth * (a1 + 2.0 * a2 + 2.0 * a3 + a4),
            t_room + sixth * (r1 + 2.0 * r2 + 2.0 * r3 + r4),
            t_wall + sixth * (w1 + 2.0 * w2 + 2.0 * w3 + w4))


def temp_pi(t_room, t_set, integ, kp, ki, dt, mdot_max):
    """Temperature PI step. Returns (desired airflow kg/s, new integral).

    Error is room minus setpoint (warmer room -> more airflow). The integral
    is held whenever the unsaturated command sits on a limit that the current
    error would push it past (conditional anti-windup).
    """
    err = t_room - t_set
    cand = integ + err * dt
    u = kp * err + ki * cand
    if (u >= mdot_max and err > 0.0) or (u <= 0.0 and err < 0.0):
        pass  # saturated in the error's direction: freeze the integral
    else:
        integ = cand
    u = kp * err + ki * integ
    if u < 0.0:
        u = 0.0
    elif u > mdot_max:
        u = mdot_max
    return u, integ


def power_pi(p_ref, p_diff, integ, kp, ki, dt, adj_max):
    """Power PI step. Returns (setpoint adjustment K, new integral).

    Error is reference minus measured power deviation; the adjustment is the
    negated PI sum (raising fan power requires lowering the cooling setpoint)
    and is clamped to +-adj_max with conditional anti-windup.
    """
    err = p_ref - p_diff
    cand = integ + err * dt
    adj = -(kp * err + ki * cand)
    if (adj >= adj_max and err < 0.0) or (adj <= -adj_max and err > 0.0):
        pass
    else:
        integ = cand
    adj = -(kp * err + ki * integ)
    if adj > adj_max:
        adj = adj_max
    elif adj < -adj_max:
        adj = -adj_max
    return adj, integ


def lag_step(state, target, decay):
    """Exact first-order lag update; decay = exp(-dt/tau)."""
    return target + (state - target) * decay


def simulate_loop(model, n_steps, dt,
                  c_mix, c_room_rest, c_wall, r_wall, r_mix,
                  q_internal, t_supply, c_p_air,
                  kp_temp, ki_temp, kp_power, ki_power,
                  fan_coeff, mdot_max, adj_max, decay_airflow, decay_fan,
                  t_low, t_high, bumpless,
                  t_out, t_set_sched, p_ref, engaged, p_base,
                  t_mix0, t_room0, t_wall0, i_temp0, i_power0, mdot0, p_fan0,
                  out_t_mix, out_t_room, out_t_wall, out_t_set,
                  out_mdot_des, out_mdot_act, out_p_fan):
    """March the closed loop over n_steps of size dt.

    Input arrays have n_steps + 1 samples; the value at index i applies over
    [t_i, t_i + dt). Sample i of each output array holds the state at t_i and
    the commands computed at t_i. The final sample's commands are evaluated
    without advancing any integrator.

    Returns -1 on success, else the index of the first sample at which a
    state became non-finite or left [t_low, t_high].
    """
    t_mix = t_mix0
    t_room = t_room0
    t_wall = t_wall0
    i_temp = i_temp0
    i_power = i_power0
    mdot_act = mdot0
    p_fan = p_fan0
    was_engaged = False
    last_cmd = mdot0

    for i in range(n_steps + 1):
        final = i == n_steps
        eng = engaged[i] != 0

        if eng:
            if not was_engaged:
                i_power = 0.0  # fresh integral at engagement
            p_diff = p_fan - p_base[i]
            if final:
                adj = -(kp_power * (p_ref[i] - p_diff) + ki_power * i_power)
                if adj > adj_max:
                    adj = adj_max
                elif adj < -adj_max:
                    adj = -adj_max
            else:
                adj, i_power = power_pi(p_ref[i], p_diff, i_power,
                                        kp_power, ki_power, dt, adj_max)
        else:
            if bumpless and was_engaged and ki_temp != 0.0 and not final:
                # bumpless handback: seed the temperature integral so this
                # step's command equals the last engaged command
                err0 = t_room - t_set_sched[i]
                i_temp = (last_cmd - kp_temp * err0) / ki_temp - err0 * dt
            adj = 0.0
        t_set = t_set_sched[i] + adj

        if final:
            err = t_room - t_set
            mdot_des = kp_temp * err + ki_temp * i_temp
            if mdot_des < 0.0:
                mdot_des = 0.0
            elif mdot_des > mdot_max:
                mdot_des = mdot_max
        else:
            mdot_des, i_temp = temp_pi(t_room, t_set, i_temp,
                                       kp_temp, ki_temp, dt, mdot_max)

        out_t_mix[i] = t_mix
        out_t_room[i] = t_room
        out_t_wall[i] = t_wall
        out_t_set[i] = t_set
        out_mdot_des[i] = mdot_des
        out_mdot_act[i] = mdot_act
        out_p_fan[i] = p_fan

        if final:
            break

        mdot_act = lag_step(mdot_act, mdot_des, decay_airflow)
        p_fan = lag_step(p_fan, fan_coeff * mdot_act, decay_fan)

        t_mix, t_room, t_wall = rk4_plant_step(
            model, t_mix, t_room, t_wall, mdot_act, t_out[i], dt,
            c_mix, c_room_rest, c_wall, r_wall, r_mix,
            q_internal, t_supply, c_p_air)

        ok = (math.isfinite(t_mix) and math.isfinite(t_room)
              and math.isfinite(t_wall) and math.isfinite(p_fan)
              and t_low <= t_mix <= t_high
              and t_low <= t_room <= t_high
              and t_low <= t_wall <= t_high)
        if not ok:
            out_t_mix[i + 1] = t_mix
            out_t_room[i + 1] = t_room
            out_t_wall[i + 1] = t_wall
            out_t_set[i + 1] = t_set
            out_mdot_des[i + 1] = mdot_des
            out_mdot_act[i + 1] = mdot_act
            out_p_fan[i + 1] = p_fan
            return i + 1

        was_engaged = eng
        last_cmd = mdot_des

    return _STATUS_OK


if JIT_ENABLED:
    supply_heat = _compile(supply_heat)
    derivs_original = _compile(derivs_original)
    derivs_mixing = _compile(derivs_mixing)
    plant_derivs = _compile(plant_derivs)
    rk4_plant_step = _compile(rk4_plant_step)
    temp_pi = _compile(temp_pi)
    power_pi = _compile(power_pi)
    lag_step = _compile(lag_step)
    simulate_loop = _compile(simulate_loop)


def warmup_jit() -> None:
    """Trigger compilation of the hot loop so timings exclude it."""
    n = 4
    zeros = np.zeros(n + 1)
    eng = np.zeros(n + 1, dtype=np.uint8)
    outs = [np.empty(n + 1) for _ in range(7)]
    simulate_loop(MODEL_MIXING, n, 1.0,
                  3.4e6, 3.06e7, 5.1e7, 0.0013, 3.9e-4,
                  25000.0, 15.6, 1000.0,
                  2.0, 0.001, 3.33e-3, 2.083e-5,
                  220.8, 20.0, 3.0, math.exp(-1 / 30.0), math.exp(-1 / 150.0),
                  -50.0, 80.0, 1,
                  zeros + 29.4, zeros + 21.7, zeros, eng, zeros,
                  20.5, 21.7, 25.6, 0.0, 0.0, 5.0, 1100.0,
                  *outs)
