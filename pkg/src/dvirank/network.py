"""Radial unbalanced network model.

A network is a tree of buses joined by three-phase line segments.  Every
segment carries a full 3x3 series impedance matrix (ohms, whole segment);
phases a segment does not carry are structural zeros, so all downstream
algebra works on fixed 3x3 / 3-vector shapes.

Networks are read from and written to a JSON document::

    {
      "name": "...",
      "units": {"voltage": "kV", "power": "kW"},
      "buses": [
        {"id": "1", "phases": "abc", "kv": 4.8, "source": true,
         "base_voltage": {"a": "2.771@0", "b": "2.771@-120", "c": "2.771@120"},
         "load": {"a": [140.0, 70.0]}}
      ],
      "lines": [
        {"from": "1", "to": "2", "r": [[...], [...], [...]], "x": [[...], ...]}
      ]
    }

``kv`` is the nominal line-to-line voltage.  ``base_voltage`` phasors are
line-to-neutral ``magnitude@angle_degrees`` in the file voltage unit and are
optional; nominal balanced phasors are used when absent.  ``load`` holds the
wye-equivalent constant-power base load per phase as ``[P, Q]`` in the file
power unit (positive = consumption).
"""

from __future__ import annotations

import json
import math
from collections import deque
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

PHASES = "abc"
PHASE_INDEX = {p: i for i, p in enumerate(PHASES)}

_VOLTAGE_UNITS = {"V": 1.0, "kV": 1e3}
_POWER_UNITS = {"W": 1.0, "kW": 1e3, "MW": 1e6}


class NetworkError(ValueError):
    """Invalid network data or an invalid query against a network."""


def bus_sort_key(bus_id: str):
    """Order bus ids numerically when they are integers, lexically otherwise."""
    try:
        return (0, int(bus_id), "")
    except ValueError:
        return (1, 0, bus_id)


def _phase_mask(phases: str) -> np.ndarray:
    return np.array([p in phases for p in PHASES])


@dataclass(frozen=True, eq=False)
class Bus:
    """A network node.

    ``base_magnitude`` (volts) and ``base_angle`` (degrees) describe the
    line-to-neutral base operating phasor per phase; entries for absent
    phases are zero.  ``load`` is the complex base load in VA per phase.
    """

    id: str
    phases: str
    kv: float
    base_magnitude: np.ndarray
    base_angle: np.ndarray
    is_source: bool = False
    load: np.ndarray = field(default_factory=lambda: np.zeros(3, dtype=complex))
    label: str | None = None

    @property
    def mask(self) -> np.ndarray:
        return _phase_mask(self.phases)

    @property
    def base_voltage(self) -> np.ndarray:
        """Complex base phasors (volts, line-to-neutral), zero on absent phases."""
        v = self.base_magnitude * np.exp(1j * np.deg2rad(self.base_angle))
        return np.where(self.mask, v, 0.0)

    @property
    def nominal_voltage(self) -> float:
        """Nominal line-to-neutral magnitude in volts."""
        return self.kv * 1e3 / math.sqrt(3.0)


@dataclass(frozen=True, eq=False)
class LineSegment:
    from_bus: str
    to_bus: str
    z: np.ndarray
    label: str | None = None

    @property
    def r(self) -> np.ndarray:
        return self.z.real

    @property
    def x(self) -> np.ndarray:
        return self.z.imag


def nominal_phasors(kv: float, phases: str = PHASES) -> tuple[np.ndarray, np.ndarray]:
    """Balanced nominal magnitudes (V) and angles (deg) for a bus of ``kv`` line-to-line."""
    mask = _phase_mask(phases)
    mag = np.where(mask, kv * 1e3 / math.sqrt(3.0), 0.0)
    ang = np.where(mask, np.array([0.0, -120.0, 120.0]), 0.0)
    return mag, ang


class NetworkModel:
    """Immutable radial network.

    Construction validates the topology (one source, connected tree) and the
    per-element invariants, then orients every segment source-outward.
    """

    def __init__(self, buses, lines, name: str = ""):
        self.name = name
        self._buses: dict[str, Bus] = {}
        for bus in buses:
            if bus.id in self._buses:
                raise NetworkError(f"duplicate bus id {bus.id!r}")
            self._buses[bus.id] = bus
        self._lines: tuple[LineSegment, ...] = tuple(lines)

        sources = [b.id for b in self._buses.values() if b.is_source]
        if not sources:
            raise NetworkError("missing source: no bus is flagged as source")
        if len(sources) > 1:
            raise NetworkError(f"multiple source buses: {sources}")
        self.source = sources[0]

        for bus in self._buses.values():
            self._check_bus(bus)
        for k, line in enumerate(self._lines):
            self._check_line(k, line)
        self._orient()

    @staticmethod
    def _check_bus(bus: Bus) -> None:
        if not bus.phases or any(p not in PHASES for p in bus.phases):
            raise NetworkError(f"bus {bus.id!r}: invalid phases {bus.phases!r}")
        if bus.kv <= 0:
            raise NetworkError(f"bus {bus.id!r}: nominal kV must be positive")
        mask = bus.mask
        if np.any(bus.base_magnitude[mask] <= 0):
            raise NetworkError(f"bus {bus.id!r}: base voltage magnitude must be > 0")
        if np.any(bus.load[~mask] != 0):
            raise NetworkError(f"bus {bus.id!r}: load on a phase the bus lacks")

    def _check_line(self, k: int, line: LineSegment) -> None:
        where = f"line {k} ({line.from_bus}->{line.to_bus})"
        for end in (line.from_bus, line.to_bus):
            if end not in self._buses:
                raise NetworkError(f"{where}: unknown bus {end!r}")
        if line.from_bus == line.to_bus:
            raise NetworkError(f"{where}: cycle detected (self loop)")
        z = line.z
        if z.shape != (3, 3):
            raise NetworkError(f"{where}: impedance must be 3x3")
        if not np.all(np.isfinite(z)):
            raise NetworkError(f"{where}: non-finite impedance")
        if not np.array_equal(z, z.T):
            raise NetworkError(f"{where}: impedance matrix is not symmetric")
        if np.any(np.diag(z).real < 0):
            raise NetworkError(f"{where}: negative self resistance")
        present = self._buses[line.from_bus].mask & self._buses[line.to_bus].mask
        used = np.any(z != 0, axis=0) | np.any(z != 0, axis=1)
        missing = used & ~present
        if np.any(missing):
            phases = "".join(p for p, m in zip(PHASES, missing) if m)
            raise NetworkError(f"{where}: phase(s) {phases} referenced on a bus that lacks it")

    def _orient(self) -> None:
        n = len(self._buses)
        if len(self._lines) > n - 1:
            raise NetworkError(
                f"cycle detected: {len(self._lines)} segments for {n} buses (a tree needs {n - 1})"
            )
        adjacency: dict[str, list[int]] = {b: [] for b in self._buses}
        for k, line in enumerate(self._lines):
            adjacency[line.from_bus].append(k)
            adjacency[line.to_bus].append(k)

        parent_line: dict[str, int | None] = {self.source: None}
        order = [self.source]
        queue = deque([self.source])
        while queue:
            bus = queue.popleft()
            for k in adjacency[bus]:
                line = self._lines[k]
                other = line.to_bus if line.from_bus == bus else line.from_bus
                if k == parent_line[bus]:
                    continue
                if other in parent_line:
                    raise NetworkError(f"cycle detected at segment {k} ({line.from_bus}-{line.to_bus})")
                parent_line[other] = k
                order.append(other)
                queue.append(other)
        unreached = [b for b in self._buses if b not in parent_line]
        if unreached:
            raise NetworkError(f"disconnected bus(es): {sorted(unreached, key=bus_sort_key)}")

        self._parent_line = parent_line
        self._order = tuple(order)
        self._parent = {
            b: (None if k is None else self._other_end(k, b)) for b, k in parent_line.items()
        }
        depth = {self.source: 0}
        for b in order[1:]:
            depth[b] = depth[self._parent[b]] + 1
        self._depth = depth

        zcum = {self.source: np.zeros((3, 3), dtype=complex)}
        paths: dict[str, tuple[int, ...]] = {self.source: ()}
        for b in order[1:]:
            k = parent_line[b]
            zcum[b] = zcum[self._parent[b]] + self._lines[k].z
            paths[b] = paths[self._parent[b]] + (k,)
        self._zcum = zcum
        self._paths = paths

    def _other_end(self, k: int, bus: str) -> str:
        line = self._lines[k]
        return line.to_bus if line.from_bus == bus else line.from_bus

    # -- accessors -----------------------------------------------------
    @property
    def buses(self) -> dict[str, Bus]:
        return dict(self._buses)

    @property
    def lines(self) -> tuple[LineSegment, ...]:
        return self._lines

    def bus(self, bus_id: str) -> Bus:
        try:
            return self._buses[bus_id]
        except KeyError:
            raise NetworkError(f"unknown bus id {bus_id!r}") from None

    def __contains__(self, bus_id) -> bool:
        return bus_id in self._buses

    def __len__(self) -> int:
        return len(self._buses)

    @property
    def bus_ids(self) -> list[str]:
        """Bus ids in ascending (numeric-aware) order."""
        return sorted(self._buses, key=bus_sort_key)

    @property
    def topological_order(self) -> tuple[str, ...]:
        """Bus ids in breadth-first order from the source."""
        return self._order

    def parent(self, bus_id: str) -> str | None:
        self.bus(bus_id)
        return self._parent[bus_id]

    def depth(self, bus_id: str) -> int:
        self.bus(bus_id)
        return self._depth[bus_id]

    def path(self, bus_id: str) -> list[LineSegment]:
        """Segments from the source to ``bus_id``, source-outward."""
        self.bus(bus_id)
        return [self._lines[k] for k in self._paths[bus_id]]

    def path_indices(self, bus_id: str) -> tuple[int, ...]:
        self.bus(bus_id)
        return self._paths[bus_id]

    def common_ancestor(self, o: str, a: str) -> str:
        """Deepest bus lying on both source paths."""
        self.bus(o)
        self.bus(a)
        while self._depth[o] > self._depth[a]:
            o = self._parent[o]
        while self._depth[a] > self._depth[o]:
            a = self._parent[a]
        while o != a:
            o, a = self._parent[o], self._parent[a]
        return o

    def path_impedance(self, bus_id: str) -> np.ndarray:
        """Summed impedance of the full source path of ``bus_id``."""
        self.bus(bus_id)
        return self._zcum[bus_id].copy()

    @cached_property
    def path_matrix(self) -> np.ndarray:
        """Bus-by-segment incidence: entry (i, k) is 1 when segment k feeds bus i.

        Rows follow :attr:`topological_order`; columns follow :attr:`lines`.
        """
        index = {b: i for i, b in enumerate(self._order)}
        m = np.zeros((len(self._order), len(self._lines)))
        for b, ks in self._paths.items():
            m[index[b], list(ks)] = 1.0
        return m


def shared_path(net: NetworkModel, o: str, a: str) -> list[LineSegment]:
    """Segments common to the source paths of ``o`` and ``a``, source-outward."""
    return net.path(net.common_ancestor(o, a))


def shared_path_impedance(net: NetworkModel, o: str, a: str) -> np.ndarray:
    """3x3 complex impedance (ohms) of the path shared by ``o`` and ``a``."""
    return net.path_impedance(net.common_ancestor(o, a))


# -- file format -------------------------------------------------------------


def _parse_phasor(text, scale: float, where: str) -> tuple[float, float]:
    if isinstance(text, (list, tuple)) and len(text) == 2:
        mag, ang = text
    elif isinstance(text, str) and "@" in text:
        mag, ang = text.split("@", 1)
    else:
        raise NetworkError(f"{where}: expected 'magnitude@angle' phasor, got {text!r}")
    try:
        return float(mag) * scale, float(ang)
    except ValueError:
        raise NetworkError(f"{where}: malformed phasor {text!r}") from None


def _matrix(value, where: str) -> np.ndarray:
    try:
        m = np.asarray(value, dtype=float)
    except (TypeError, ValueError):
        raise NetworkError(f"{where}: expected a 3x3 numeric matrix") from None
    if m.shape != (3, 3):
        raise NetworkError(f"{where}: expected a 3x3 matrix, got shape {m.shape}")
    return m


def _require(obj: dict, key: str, where: str):
    if key not in obj:
        raise NetworkError(f"{where}: missing field {key!r}")
    return obj[key]


def parse_network(text: str) -> NetworkModel:
    """Parse a network JSON document into a validated :class:`NetworkModel`."""
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise NetworkError(f"parse error at line {exc.lineno}, column {exc.colno}: {exc.msg}") from None
    if not isinstance(doc, dict):
        raise NetworkError("parse error: top level must be an object")

    units = doc.get("units", {})
    try:
        vscale = _VOLTAGE_UNITS[units.get("voltage", "kV")]
        pscale = _POWER_UNITS[units.get("power", "kW")]
    except KeyError as exc:
        raise NetworkError(f"units: unsupported unit tag {exc.args[0]!r}") from None

    buses = []
    for i, raw in enumerate(_require(doc, "buses", "document")):
        where = f"buses[{i}]"
        bus_id = str(_require(raw, "id", where))
        phases = str(raw.get("phases", PHASES))
        if any(p not in PHASES for p in phases):
            raise NetworkError(f"{where}.phases: invalid phase in {phases!r}")
        try:
            kv = float(_require(raw, "kv", where))
        except (TypeError, ValueError):
            raise NetworkError(f"{where}.kv: not a number") from None
        mag, ang = nominal_phasors(kv, phases)
        for p, val in (raw.get("base_voltage") or {}).items():
            if p not in phases:
                raise NetworkError(f"{where}.base_voltage: phase {p!r} not present at bus {bus_id!r}")
            m, a = _parse_phasor(val, vscale, f"{where}.base_voltage.{p}")
            mag[PHASE_INDEX[p]] = m
            ang[PHASE_INDEX[p]] = a
        load = np.zeros(3, dtype=complex)
        for p, val in (raw.get("load") or {}).items():
            if p not in phases:
                raise NetworkError(f"{where}.load: phase {p!r} not present at bus {bus_id!r}")
            try:
                pw, qv = (float(v) for v in val)
            except (TypeError, ValueError):
                raise NetworkError(f"{where}.load.{p}: expected [P, Q]") from None
            load[PHASE_INDEX[p]] = complex(pw * pscale, qv * pscale)
        buses.append(
            Bus(
                id=bus_id,
                phases="".join(p for p in PHASES if p in phases),
                kv=kv,
                base_magnitude=mag,
                base_angle=ang,
                is_source=bool(raw.get("source", False)),
                load=load,
                label=raw.get("label"),
            )
        )

    lines = []
    for k, raw in enumerate(_require(doc, "lines", "document")):
        where = f"lines[{k}]"
        r = _matrix(_require(raw, "r", where), f"{where}.r")
        x = _matrix(_require(raw, "x", where), f"{where}.x")
        lines.append(
            LineSegment(
                from_bus=str(_require(raw, "from", where)),
                to_bus=str(_require(raw, "to", where)),
                z=r + 1j * x,
                label=raw.get("label"),
            )
        )
    return NetworkModel(buses, lines, name=str(doc.get("name", "")))


def network_to_dict(net: NetworkModel) -> dict:
    """Serializable form of ``net`` in SI units (V, W); exact under re-parsing."""
    buses = []
    for bus in net.buses.values():
        entry = {"id": bus.id, "phases": bus.phases, "kv": bus.kv}
        if bus.is_source:
            entry["source"] = True
        if bus.label is not None:
            entry["label"] = bus.label
        entry["base_voltage"] = {
            p: [float(bus.base_magnitude[i]), float(bus.base_angle[i])]
            for i, p in enumerate(PHASES)
            if p in bus.phases
        }
        loads = {
            p: [float(bus.load[i].real), float(bus.load[i].imag)]
            for i, p in enumerate(PHASES)
            if bus.load[i] != 0
        }
        if loads:
            entry["load"] = loads
        buses.append(entry)
    lines = []
    for line in net.lines:
        entry = {"from": line.from_bus, "to": line.to_bus}
        if line.label is not None:
            entry["label"] = line.label
        entry["r"] = line.z.real.tolist()
        entry["x"] = line.z.imag.tolist()
        lines.append(entry)
    return {"name": net.name, "units": {"voltage": "V", "power": "W"}, "buses": buses, "lines": lines}


def dumps_network(net: NetworkModel) -> str:
    return json.dumps(network_to_dict(net), indent=1)


def load_network(path) -> NetworkModel:
    with open(path, encoding="utf-8") as fh:
        return parse_network(fh.read())


def with_base_voltages(net: NetworkModel, voltages: dict[str, np.ndarray]) -> NetworkModel:
    """Copy of ``net`` whose bus base phasors are replaced by ``voltages`` (complex, volts)."""
    buses = []
    for bus in net.buses.values():
        v = voltages.get(bus.id)
        if v is None:
            buses.append(bus)
            continue
        v = np.asarray(v, dtype=complex)
        mag = np.where(bus.mask, np.abs(v), 0.0)
        ang = np.where(bus.mask, np.rad2deg(np.angle(v)), 0.0)
        buses.append(
            Bus(bus.id, bus.phases, bus.kv, mag, ang, bus.is_source, bus.load.copy(), bus.label)
        )
    return NetworkModel(buses, net.lines, name=net.name)
