"""IEEE 37-node test feeder tables and the builder for the bundled network file.

Data follow the IEEE PES Distribution System Analysis Subcommittee feeder
description (4.8 kV, three-wire delta, underground cables).  Modelling
choices applied here:

* the substation regulator is replaced by an ideal connection, so the
  segment 799-701 hangs directly off the source;
* the 709-775 in-line transformer (500 kVA, R=0.09 %, X=1.81 %) becomes a
  series impedance referred to the 4.8 kV side;
* delta spot loads become constant-power wye loads using the split that is
  exact at nominal balanced voltage, ``S_a = S_ab V_a / V_ab`` and
  ``S_b = -S_ab V_b / V_ab``.  All load models (PQ, I, Z) are treated as
  constant power.

Buses are renumbered 1..37 (see :data:`NUMBERING`); the IEEE names are
kept as labels.
"""

from __future__ import annotations

import json
import math

import numpy as np

FEET_PER_MILE = 5280.0
KV_LL = 4.8

# Series impedance (ohm/mile) as (R, X) upper triangles: aa, ab, ac, bb, bc, cc.
CONFIGS = {
    "721": [(0.2926, 0.1973), (0.0673, -0.0368), (0.0337, -0.0417), (0.2646, 0.1900), (0.0673, -0.0368), (0.2926, 0.1973)],
    "722": [(0.4751, 0.2973), (0.1629, -0.0326), (0.1234, -0.0607), (0.4488, 0.2678), (0.1629, -0.0326), (0.4751, 0.2973)],
    "723": [(0.7982, 0.4463), (0.3192, 0.0328), (0.2849, -0.0143), (0.7891, 0.4041), (0.3192, 0.0328), (0.7982, 0.4463)],
    "724": [(1.2936, 0.6713), (0.4871, 0.2111), (0.4585, 0.1521), (1.3022, 0.6326), (0.4871, 0.2111), (1.2936, 0.6713)],
}

# (node A, node B, length ft, configuration)
SEGMENTS = [
    ("799", "701", 1850, "721"),
    ("701", "702", 960, "722"),
    ("702", "705", 400, "724"),
    ("702", "713", 360, "723"),
    ("702", "703", 1320, "722"),
    ("703", "727", 240, "724"),
    ("703", "730", 600, "723"),
    ("704", "714", 80, "724"),
    ("704", "720", 800, "723"),
    ("705", "742", 320, "724"),
    ("705", "712", 240, "724"),
    ("706", "725", 280, "724"),
    ("707", "724", 760, "724"),
    ("707", "722", 120, "724"),
    ("708", "733", 320, "723"),
    ("708", "732", 320, "724"),
    ("709", "731", 600, "723"),
    ("709", "708", 320, "723"),
    ("710", "735", 200, "724"),
    ("710", "736", 1280, "724"),
    ("711", "741", 400, "723"),
    ("711", "740", 200, "724"),
    ("713", "704", 520, "723"),
    ("714", "718", 520, "724"),
    ("720", "707", 920, "724"),
    ("720", "706", 600, "723"),
    ("727", "744", 280, "723"),
    ("730", "709", 200, "723"),
    ("733", "734", 560, "723"),
    ("734", "737", 640, "723"),
    ("734", "710", 520, "724"),
    ("737", "738", 400, "723"),
    ("738", "711", 400, "723"),
    ("744", "728", 200, "724"),
    ("744", "729", 280, "724"),
]

TRANSFORMER = ("709", "775", 500.0, 0.09, 1.81)  # from, to, kVA, %R, %X

# Delta spot loads: node -> ((kW, kvar) on AB, BC, CA).
SPOT_LOADS = {
    "701": ((140, 70), (140, 70), (350, 175)),
    "712": ((0, 0), (0, 0), (85, 40)),
    "713": ((0, 0), (0, 0), (85, 40)),
    "714": ((17, 8), (21, 10), (0, 0)),
    "718": ((85, 40), (0, 0), (0, 0)),
    "720": ((0, 0), (0, 0), (85, 40)),
    "722": ((0, 0), (140, 70), (21, 10)),
    "724": ((0, 0), (42, 21), (0, 0)),
    "725": ((0, 0), (42, 21), (0, 0)),
    "727": ((0, 0), (0, 0), (42, 21)),
    "728": ((42, 21), (42, 21), (42, 21)),
    "729": ((42, 21), (0, 0), (0, 0)),
    "730": ((0, 0), (0, 0), (85, 40)),
    "731": ((0, 0), (85, 40), (0, 0)),
    "732": ((0, 0), (0, 0), (42, 21)),
    "733": ((85, 40), (0, 0), (0, 0)),
    "734": ((0, 0), (0, 0), (42, 21)),
    "735": ((0, 0), (0, 0), (85, 40)),
    "736": ((0, 0), (42, 21), (0, 0)),
    "737": ((140, 70), (0, 0), (0, 0)),
    "738": ((126, 62), (0, 0), (0, 0)),
    "740": ((0, 0), (0, 0), (85, 40)),
    "741": ((0, 0), (0, 0), (42, 21)),
    "742": ((8, 4), (85, 40), (0, 0)),
    "744": ((42, 21), (0, 0), (0, 0)),
}


def _children() -> dict[str, list[str]]:
    kids: dict[str, list[str]] = {}
    for a, b, *_ in SEGMENTS:
        kids.setdefault(a, []).append(b)
    kids.setdefault(TRANSFORMER[0], []).append(TRANSFORMER[1])
    return kids


def _sorted_names() -> list[str]:
    names = {"799", TRANSFORMER[1]}
    for a, b, *_ in SEGMENTS:
        names.update((a, b))
    return ["799"] + sorted(names - {"799"})


def _dfs_names() -> list[str]:
    kids = _children()
    out: list[str] = []
    stack = ["799"]
    while stack:
        n = stack.pop()
        out.append(n)
        stack.extend(reversed(sorted(kids.get(n, []))))
    return out


def _bfs_names() -> list[str]:
    kids = _children()
    out = ["799"]
    for n in out:
        out.extend(sorted(kids.get(n, [])))
    return out


NUMBERINGS = {"sorted": _sorted_names, "dfs": _dfs_names, "bfs": _bfs_names}

# Renumbering used by the bundled file: IEEE name -> 1-based id.
NUMBERING = "sorted"


def bus_names(numbering: str = NUMBERING) -> dict[str, str]:
    """Map IEEE bus name to the 1..37 id used by ``numbering``."""
    return {name: str(i + 1) for i, name in enumerate(NUMBERINGS[numbering]())}


def config_impedance(config: str, length_ft: float) -> np.ndarray:
    """Whole-segment 3x3 complex impedance in ohms."""
    aa, ab, ac, bb, bc, cc = (complex(r, x) for r, x in CONFIGS[config])
    z = np.array([[aa, ab, ac], [ab, bb, bc], [ac, bc, cc]])
    return z * (length_ft / FEET_PER_MILE)


def transformer_impedance() -> np.ndarray:
    _, _, kva, pr, px = TRANSFORMER
    zbase = KV_LL**2 * 1e3 / kva
    return np.eye(3) * complex(pr, px) / 100.0 * zbase


def wye_equivalent(delta: tuple) -> np.ndarray:
    """Per-phase complex power (kVA) of a delta load at nominal balanced voltage."""
    v = np.exp(1j * np.deg2rad([0.0, -120.0, 120.0]))
    s = np.zeros(3, dtype=complex)
    for k, (p, q) in enumerate(delta):
        i, j = k, (k + 1) % 3
        sd = complex(p, q)
        vij = v[i] - v[j]
        s[i] += sd * v[i] / vij
        s[j] -= sd * v[j] / vij
    return s


def network_document(numbering: str = NUMBERING, solved_base: bool = True) -> dict:
    """Feeder as a network-file document.

    With ``solved_base`` the bus base phasors are the load-flow solution at
    base load with a nominal source, rather than nominal phasors.
    """
    ids = bus_names(numbering)
    buses = []
    for name, bid in sorted(ids.items(), key=lambda kv: int(kv[1])):
        entry = {"id": bid, "label": name, "phases": "abc", "kv": KV_LL}
        if name == "799":
            entry["source"] = True
        if name in SPOT_LOADS:
            s = wye_equivalent(SPOT_LOADS[name])
            entry["load"] = {p: [round(s[i].real, 9), round(s[i].imag, 9)] for i, p in enumerate("abc")}
        buses.append(entry)
    lines = []
    for a, b, length, config in SEGMENTS:
        z = config_impedance(config, length)
        lines.append(
            {"from": ids[a], "to": ids[b], "label": f"{a}-{b}", "r": z.real.round(12).tolist(), "x": z.imag.round(12).tolist()}
        )
    z = transformer_impedance()
    lines.append(
        {"from": ids[TRANSFORMER[0]], "to": ids[TRANSFORMER[1]], "label": "XFM-1",
         "r": z.real.round(12).tolist(), "x": z.imag.round(12).tolist()}
    )
    doc = {
        "name": f"IEEE 37-node test feeder ({numbering} numbering, regulator bypassed)",
        "units": {"voltage": "kV", "power": "kW"},
        "buses": buses,
        "lines": lines,
    }
    if solved_base:
        from .network import parse_network
        from .oracle import solve_load_flow

        solution = solve_load_flow(parse_network(json.dumps(doc)), tolerance=1e-9)
        for entry in buses:
            v = solution.voltages[entry["id"]]
            entry["base_voltage"] = {
                p: f"{abs(v[i]) / 1e3:.12g}@{math.degrees(np.angle(v[i])):.12g}" for i, p in enumerate("abc")
            }
    return doc


def write_network(path, numbering: str = NUMBERING, solved_base: bool = True) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(network_document(numbering, solved_base), fh, indent=1)
        fh.write("\n")


if __name__ == "__main__":
    import sys

    write_network(sys.argv[1] if len(sys.argv) > 1 else "ieee37.json")


