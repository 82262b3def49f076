import math

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fanshift import (BuildingParams, PlantInput, ThermalState,
                      derivatives_mixing, derivatives_original, equilibrium,
                      supply_heat_gain)
from fanshift.errors import ConfigurationError, EquilibriumInfeasibleError
from fanshift.thermal import celsius_to_fahrenheit, fahrenheit_to_celsius

# steady-state heat load at the calibrated parameters and nominal setpoint:
# (T_wall - T_room)/R + Q with T_wall = (21.7 + 29.4)/2
LOAD_NOMINAL_W = (25.55 - 21.7) / 0.0013 + 25_000.0


class TestSupplyHeatGain:
    def test_no_flow_no_heat(self):
        assert supply_heat_gain(0.0, 33.0, 15.6, 1000.0) == 0.0

    def test_zero_temperature_difference(self):
        assert supply_heat_gain(4.0, 18.0, 18.0, 1000.0) == 0.0

    def test_cooling_magnitude(self):
        # 4.585 kg/s of 15.6 C air into a 21.7 C zone
        assert supply_heat_gain(4.585, 21.7, 15.6, 1000.0) == pytest.approx(-27_968.5)

    def test_balances_steady_load_at_equilibrium_flow(self, params):
        _, _, mdot = equilibrium(params, 21.7)
        q = supply_heat_gain(mdot, 21.7, params.t_supply, params.c_p_air)
        assert q == pytest.approx(-LOAD_NOMINAL_W, rel=1e-12)

    def test_rejects_negative_flow(self):
        with pytest.raises(ConfigurationError):
            supply_heat_gain(-1.0, 20.0, 15.6, 1000.0)


class TestDerivativesOriginal:
    def test_isothermal_unforced_is_still(self, params):
        state = ThermalState(29.4, 29.4, 29.4)
        inp = PlantInput(mdot_supply=0.0, t_outdoor=29.4, q_internal=0.0)
        d = derivatives_original(state, inp, params)
        assert d.t_room == 0.0 and d.t_wall == 0.0

    def test_equilibrium_is_fixed_point(self, params):
        t_mix, t_wall, mdot = equilibrium(params, 21.7)
        state = ThermalState(t_mix, 21.7, t_wall)
        inp = PlantInput(mdot, params.t_outdoor_nominal, params.q_internal)
        d = derivatives_original(state, inp, params)
        assert abs(d.t_room) < 1e-9 and abs(d.t_wall) < 1e-9

    def test_no_flow_heating_rate(self, params):
        # without supply air the room warms at (wall conduction + Q)/C_room
        state = ThermalState(21.7, 21.7, 25.55)
        inp = PlantInput(0.0, params.t_outdoor_nominal, 25_000.0)
        d = derivatives_original(state, inp, params)
        assert d.t_room == pytest.approx(LOAD_NOMINAL_W / 3.4e7, rel=1e-12)
        assert d.t_room == pytest.approx(8.224e-4, rel=1e-3)

    def test_mix_rate_aliases_room_rate(self, params):
        state = ThermalState(20.0, 20.0, 24.0)
        inp = PlantInput(3.0, 30.0, 20_000.0)
        d = derivatives_original(state, inp, params)
        assert d.t_mix == d.t_room


class TestDerivativesMixing:
    def test_isothermal_unforced_is_still(self, mixing_params):
        state = ThermalState(29.4, 29.4, 29.4)
        inp = PlantInput(0.0, 29.4, 0.0)
        d = derivatives_mixing(state, inp, mixing_params)
        assert d.t_mix == 0.0 and d.t_room == 0.0 and d.t_wall == 0.0

    def test_equilibrium_is_fixed_point(self, mixing_params):
        t_mix, t_wall, mdot = equilibrium(mixing_params, 21.7)
        state = ThermalState(t_mix, 21.7, t_wall)
        inp = PlantInput(mdot, 29.4, mixing_params.q_internal)
        d = derivatives_mixing(state, inp, mixing_params)
        assert max(abs(d.t_mix), abs(d.t_room), abs(d.t_wall)) < 1e-9

    def test_no_flow_pocket_dynamics(self, mixing_params):
        # with mdot = 0 the pocket rate reduces to conduction from the room
        # plus the internal gain, over the pocket capacitance
        state = ThermalState(20.0, 21.7, 25.55)
        inp = PlantInput(0.0, 29.4, 25_000.0)
        d = derivatives_mixing(state, inp, mixing_params)
        expected = ((21.7 - 20.0) / mixing_params.r_mix + 25_000.0) / mixing_params.c_mix
        assert d.t_mix == pytest.approx(expected, rel=1e-12)

    def test_rejects_well_mixed_params(self, params):
        state = ThermalState(21.7, 21.7, 25.55)
        inp = PlantInput(1.0, 29.4, 0.0)
        with pytest.raises(ConfigurationError):
            derivatives_mixing(state, inp, params)


class TestParamsValidation:
    def test_capacitance_split_preserves_total(self):
        p = BuildingParams().with_mixing(0.4, 0.25)
        assert p.c_mix + p.c_room_rest == p.c_room

    @given(c=st.floats(min_value=1e-6, max_value=0.999))
    @settings(max_examples=50, deadline=None)
    def test_capacitance_split_property(self, c):
        p = BuildingParams().with_mixing(0.5, c)
        assert p.c_mix + p.c_room_rest == pytest.approx(p.c_room, rel=1e-15)

    def test_resistance_scaling(self):
        p = BuildingParams().with_mixing(0.3, 0.1)
        assert p.r_mix == pytest.approx(0.3 * 0.0013)

    @pytest.mark.parametrize("r,c", [(0.0, 0.1), (0.3, 0.0), (-0.1, 0.1),
                                     (0.3, 1.0), (0.3, -0.2)])
    def test_rejects_degenerate_mixing(self, r, c):
        with pytest.raises(ConfigurationError):
            BuildingParams(mix_r=r, mix_c=c)

    def test_rejects_heating_mode(self):
        with pytest.raises(ConfigurationError):
            BuildingParams(t_supply=35.0)


class TestEquilibrium:
    def test_well_mixed_values(self, params):
        t_mix, t_wall, mdot = equilibrium(params, 21.7)
        assert t_mix == pytest.approx(21.7)
        assert t_wall == pytest.approx(25.55)
        assert mdot == pytest.approx(4.583858764186633, rel=1e-12)

    def test_mixing_values(self, mixing_params):
        t_mix, t_wall, mdot = equilibrium(mixing_params, 21.7)
        assert t_mix == pytest.approx(21.7 - 0.3 * 3.85, rel=1e-12)
        assert t_wall == pytest.approx(25.55)
        assert mdot == pytest.approx(5.654507272303023, rel=1e-12)

    def test_no_load_no_flow(self):
        p = BuildingParams(q_internal=0.0, t_outdoor_nominal=21.7, t_supply=15.6,
                           mix_r=0.3, mix_c=0.1)
        t_mix, t_wall, mdot = equilibrium(p, 21.7)
        assert t_mix == pytest.approx(21.7)
        assert t_wall == pytest.approx(21.7)
        assert mdot == pytest.approx(0.0, abs=1e-15)

    def test_independent_of_capacitance_split(self):
        flows = [equilibrium(BuildingParams().with_mixing(0.4, c), 21.7)[2]
                 for c in (0.05, 0.2, 0.45)]
        assert flows[0] == flows[1] == flows[2]

    def test_flow_nondecreasing_in_r(self):
        flows = [equilibrium(BuildingParams().with_mixing(r, 0.1), 21.7)[2]
                 for r in [0.1 * k for k in range(1, 11)]]
        assert all(b >= a for a, b in zip(flows, flows[1:]))

    def test_infeasible_when_pocket_reaches_supply_temperature(self):
        # large r pushes the pocket below the supply temperature
        p = BuildingParams().with_mixing(2.0, 0.1)
        with pytest.raises(EquilibriumInfeasibleError):
            equilibrium(p, 21.7)

    def test_infeasible_under_net_heating_demand(self):
        p = BuildingParams(q_internal=0.0, t_outdoor_nominal=20.0, t_supply=10.0)
        with pytest.raises(EquilibriumInfeasibleError):
            equilibrium(p, 25.0)

    @given(r=st.floats(min_value=0.05, max_value=1.2),
           c=st.floats(min_value=0.01, max_value=0.9))
    @settings(max_examples=80, deadline=None)
    def test_residual_property(self, r, c):
        p = BuildingParams().with_mixing(r, c)
        try:
            t_mix, t_wall, mdot = equilibrium(p, 21.7)
        except EquilibriumInfeasibleError:
            return
        d = derivatives_mixing(ThermalState(t_mix, 21.7, t_wall),
                               PlantInput(mdot, 29.4, p.q_internal), p)
        assert max(abs(d.t_mix), abs(d.t_room), abs(d.t_wall)) < 1e-9


class TestUnitConversions:
    def test_reference_points(self):
        assert fahrenheit_to_celsius(71.0) == pytest.approx(21.6667, abs=1e-4)
        assert fahrenheit_to_celsius(32.0) == 0.0
        assert celsius_to_fahrenheit(fahrenheit_to_celsius(85.0)) == pytest.approx(85.0)

    def test_delta_round_trip(self):
        from fanshift.thermal import delta_f_to_k, delta_k_to_f
        assert delta_f_to_k(1.0) == pytest.approx(5.0 / 9.0)
        assert delta_k_to_f(delta_f_to_k(3.0)) == pytest.approx(3.0)
        assert not math.isclose(delta_f_to_k(1.0), fahrenheit_to_celsius(1.0))
