"""Shared fixtures: small hand-built feeders, the bundled IEEE 37 case and a cached MC study."""

import json

import numpy as np
import pytest

from dvirank import bundled_network, bundled_scenario, parse_network
from dvirank.distributions import ActorSpec, ScenarioSpec
from dvirank.network import network_to_dict
from dvirank.oracle import MCConfig, run_study

def network_doc(buses, lines, units=None):
    doc = {"units": units or {"voltage": "kV", "power": "kW"}, "buses": buses, "lines": lines}
    return json.dumps(doc)


def two_bus_text(r=0.1, x=0.2, kv=4.8, phases="abc", load=None):
    bus2 = {"id": "2", "phases": phases, "kv": kv}
    if load:
        bus2["load"] = load
    rm = np.zeros((3, 3))
    xm = np.zeros((3, 3))
    for p in phases:
        i = "abc".index(p)
        rm[i, i], xm[i, i] = r, x
    return network_doc(
        [{"id": "1", "phases": phases, "kv": kv, "source": True}, bus2],
        [{"from": "1", "to": "2", "r": rm.tolist(), "x": xm.tolist()}],
    )


def coupled(r_self, x_self, r_mut, x_mut):
    r = np.full((3, 3), r_mut)
    x = np.full((3, 3), x_mut)
    np.fill_diagonal(r, r_self)
    np.fill_diagonal(x, x_self)
    return r.tolist(), x.tolist()


# Y-shaped feeder: 1 (source) - 2 trunk, then laterals 2-3 and 2-4.
Y_IMPEDANCE = {
    ("1", "2"): coupled(0.30, 0.60, 0.10, 0.20),
    ("2", "3"): coupled(0.50, 0.40, 0.05, 0.15),
    ("2", "4"): coupled(0.20, 0.90, 0.02, 0.30),
}


def y_text():
    buses = [{"id": "1", "kv": 4.8, "source": True}] + [{"id": b, "kv": 4.8} for b in "234"]
    lines = [{"from": a, "to": b, "r": r, "x": x} for (a, b), (r, x) in Y_IMPEDANCE.items()]
    return network_doc(buses, lines)


def chain_text(n=6, r=0.2, x=0.4, phases="a"):
    """Uniform single-phase feeder 1-2-...-n with identical segments."""
    buses = [{"id": "1", "phases": phases, "kv": 4.8, "source": True}]
    buses += [{"id": str(k), "phases": phases, "kv": 4.8} for k in range(2, n + 1)]
    lines = []
    for k in range(1, n):
        rm, xm = np.zeros((3, 3)), np.zeros((3, 3))
        for p in phases:
            i = "abc".index(p)
            rm[i, i], xm[i, i] = r, x
        lines.append({"from": str(k), "to": str(k + 1), "r": rm.tolist(), "x": xm.tolist()})
    return network_doc(buses, lines)


def block(var_p, var_q, cov_pq=0.0, mean=(0.0, 0.0)):
    return (np.array(mean, float), np.array([[var_p, cov_pq], [cov_pq, var_q]], float))


def unloaded(net):
    """Copy of ``net`` without loads and with nominal base phasors."""
    doc = network_to_dict(net)
    for b in doc["buses"]:
        b.pop("load", None)
        b.pop("base_voltage", None)
    doc["units"] = {"voltage": "kV", "power": "W"}
    return parse_network(json.dumps(doc))


@pytest.fixture
def y_net():
    return parse_network(y_text())


@pytest.fixture(scope="session")
def ieee37():
    return bundled_network()


@pytest.fixture(scope="session")
def pv():
    return bundled_scenario()


@pytest.fixture(scope="session")
def mc_study(ieee37, pv):
    """10^4-sample study with every leave-one-out configuration (common random numbers)."""
    return run_study(ieee37, pv, MCConfig(samples=10_000, seed=pv.seed))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def single_actor(bus, phase="a", var_p=1e6, var_q=2.5e5, cov_pq=0.0):
    return ScenarioSpec([ActorSpec(bus, {phase: block(var_p, var_q, cov_pq)})])


# -- acceptance report ---------------------------------------------------------

ACCEPTANCE: dict[int, str] = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(ACCEPTANCE):
        terminalreporter.write_line(ACCEPTANCE[k])
