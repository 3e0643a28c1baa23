import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import chain_text, two_bus_text, unloaded
from dvirank.network import NetworkError, parse_network
from dvirank.oracle import solve_load_flow
from dvirank.sensitivity import sensitivity_coefficients, stacked_coefficients, voltage_change

FD_STEP = 1e3  # 1 kW / 1 kvar: 0.1 % of the 1 MVA base


def finite_difference(net, o, phase, a, base_loads=None, step=FD_STEP):
    """Central-difference dV/dS of the load flow for each of the actor's six coordinates."""
    out = np.zeros(6, dtype=complex)
    for k in range(6):
        i = k // 2
        if net.bus(a).phases.find("abc"[i]) < 0:
            continue
        loads = {b: s.copy() for b, s in (base_loads or {}).items()}
        base = loads.get(a, np.zeros(3, complex))
        ds = np.zeros(3, complex)
        ds[i] = step if k % 2 == 0 else 1j * step
        v = []
        for sign in (1, -1):
            loads[a] = base + sign * ds
            v.append(solve_load_flow(net, loads, tolerance=1e-9).voltage(o, phase))
        out[k] = (v[0] - v[1]) / (2 * step)
    return out


@pytest.fixture(scope="module")
def bare37(ieee37):
    return unloaded(ieee37)


class TestHandCases:
    def test_source_actor_is_zero(self, ieee37):
        c = sensitivity_coefficients(ieee37, "7", "c", ieee37.source)
        assert not c.c_real.any() and not c.c_imag.any()

    def test_angle_zero_direct_read(self):
        r, x = 0.3, 0.4
        net = parse_network(two_bus_text(r, x, kv=0.1 * np.sqrt(3), phases="a"))
        mag = net.bus("2").base_magnitude[0]
        assert mag == pytest.approx(100.0)
        c = sensitivity_coefficients(net, "2", "a", "2")
        assert c.c_real[0] == pytest.approx(-r / mag, rel=1e-12)
        assert c.c_real[1] == pytest.approx(-x / mag, rel=1e-12)
        assert c.c_imag[0] == pytest.approx(-x / mag, rel=1e-12)
        assert c.c_imag[1] == pytest.approx(r / mag, rel=1e-12)
        assert not c.c_real[2:].any() and not c.c_imag[2:].any()

    def test_angle_minus_120(self):
        # R=0.3, X=0.4, |V|=100 V at -120 deg:
        # dV/dP = -Z e^{-j120}/100 = -0.001964102 + 0.004598076j
        # dV/dQ = j Z e^{-j120}/100 = 0.004598076 + 0.001964102j
        net = parse_network(two_bus_text(0.3, 0.4, kv=0.1 * np.sqrt(3), phases="b"))
        assert net.bus("2").base_angle[1] == pytest.approx(-120.0)
        c = sensitivity_coefficients(net, "2", "b", "2")
        assert c.c_real[2] == pytest.approx(-0.001964102, abs=1e-9)
        assert c.c_imag[2] == pytest.approx(0.004598076, abs=1e-9)
        assert c.c_real[3] == pytest.approx(0.004598076, abs=1e-9)
        assert c.c_imag[3] == pytest.approx(0.001964102, abs=1e-9)

    def test_absent_actor_phases_are_zero(self):
        net = parse_network(chain_text(3, phases="ac"))
        c = sensitivity_coefficients(net, "3", "a", "2")
        assert c.c_real[2] == c.c_real[3] == c.c_imag[2] == c.c_imag[3] == 0.0

    def test_observation_phase_absent(self):
        net = parse_network(chain_text(3, phases="a"))
        with pytest.raises(NetworkError, match="absent"):
            sensitivity_coefficients(net, "3", "b", "2")

    def test_unknown_bus(self, ieee37):
        with pytest.raises(NetworkError, match="unknown bus"):
            sensitivity_coefficients(ieee37, "7", "c", "nope")

    def test_coefficients_finite_on_ieee37(self, ieee37):
        cr, ci = stacked_coefficients(ieee37, "16", "a", ieee37.bus_ids)
        assert np.all(np.isfinite(cr)) and np.all(np.isfinite(ci))


class TestVoltageChange:
    def test_zero_deltas(self, ieee37):
        assert voltage_change(ieee37, "7", "c", {"7": np.zeros(6), "14": np.zeros(6)}) == 0j
        assert voltage_change(ieee37, "7", "c", {}) == 0j

    def test_two_actors_sum_exactly(self, ieee37, rng):
        d1, d2 = rng.normal(size=6) * 1e3, rng.normal(size=6) * 1e3
        both = voltage_change(ieee37, "7", "c", {"9": d1, "26": d2})
        assert both == voltage_change(ieee37, "7", "c", {"9": d1}) + voltage_change(ieee37, "7", "c", {"26": d2})

    @settings(max_examples=50, deadline=None)
    @given(
        d=st.lists(st.floats(-1e4, 1e4, allow_nan=False), min_size=6, max_size=6),
        k=st.integers(-8, 8),
    )
    def test_homogeneous(self, ieee37, d, k):
        d = np.array(d)
        s = 2.0**k
        assert voltage_change(ieee37, "16", "b", {"14": s * d}) == s * voltage_change(ieee37, "16", "b", {"14": d})

    def test_injection_raises_voltage_on_resistive_path(self):
        net = parse_network(two_bus_text(r=0.5, x=0.0, phases="a"))
        dv = voltage_change(net, "2", "a", {"2": np.array([-1e3, 0, 0, 0, 0, 0])})
        v0 = net.bus("2").base_voltage[0]
        assert abs(v0 + dv) > abs(v0)
        # Oracle agrees on the sign.
        sol = solve_load_flow(net, {"2": np.array([-1e3, 0, 0])})
        assert abs(sol.voltage("2", "a")) > abs(v0)

    def test_delta_on_absent_phase_rejected(self):
        net = parse_network(chain_text(3, phases="a"))
        with pytest.raises(NetworkError):
            voltage_change(net, "3", "a", {"2": np.array([0, 0, 1.0, 0, 0, 0])})

    def test_small_change_matches_load_flow_unloaded(self, bare37):
        ds = np.array([0, 0, 0, 0, 1e3, 300.0])
        dv = voltage_change(bare37, "7", "c", {"26": ds})
        sol = solve_load_flow(bare37, {"26": np.array([0, 0, 1e3 + 300j])}, tolerance=1e-9)
        exact = sol.voltage("7", "c") - bare37.bus("7").base_voltage[2]
        assert abs(dv - exact) <= 1e-3 * abs(exact)


PAIRS = [("7", "c", "7"), ("16", "c", "14"), ("7", "c", "26"), ("37", "a", "30"), ("22", "b", "5"), ("2", "a", "36")]


@pytest.mark.parametrize("o,phase,a", PAIRS)
def test_finite_difference_unloaded(bare37, o, phase, a):
    """Each coefficient within 1 % of central differences of the load flow (0.1 % base power steps)."""
    c = sensitivity_coefficients(bare37, o, phase, a)
    fd = finite_difference(bare37, o, phase, a)
    for got, ref in zip(np.r_[c.c_real, c.c_imag], np.r_[fd.real, fd.imag]):
        assert abs(got - ref) <= 0.01 * abs(ref)


@pytest.mark.parametrize("o,phase,a", PAIRS[:3])
def test_finite_difference_at_base_load(ieee37, o, phase, a):
    """Around the loaded base point the other constant-power loads respond to
    the voltage change too, which the first-order model leaves out; the gap
    stays within 10 % of the coefficient vector norm on the bundled feeder."""
    loads = {b: ieee37.bus(b).load for b in ieee37.bus_ids}
    c = sensitivity_coefficients(ieee37, o, phase, a)
    fd = finite_difference(ieee37, o, phase, a, base_loads=loads)
    analytic = c.c_real + 1j * c.c_imag
    assert np.linalg.norm(analytic - fd) <= 0.10 * np.linalg.norm(fd)
