"""Gaussian voltage-change distributions from stochastic power changes.

Every actor bus carries a zero-or-more-phase description of its power change:
per active phase a mean ``[dP, dQ]`` and a 2x2 covariance.  Stacking the
actors gives a long ``6L`` vector whose covariance is assembled from the
per-actor blocks plus one cross-actor correlation coefficient applied to
same-phase ``(dP, dP)`` and ``(dQ, dQ)`` pairs.  Voltage change at an
observation phase is a linear function of that vector, so its real and
imaginary parts are jointly Gaussian with moments given by congruence.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .network import PHASE_INDEX, PHASES, NetworkError, NetworkModel, bus_sort_key
from .sensitivity import sensitivity_coefficients

_POWER_UNITS = {"W": 1.0, "kW": 1e3, "MW": 1e6}


class ScenarioError(ValueError):
    """Invalid scenario data."""


class CovarianceError(ScenarioError):
    """An assembled covariance matrix is not positive semi-definite."""

    def __init__(self, min_eigenvalue: float):
        super().__init__(f"covariance is not PSD: most negative eigenvalue {min_eigenvalue:.6g}")
        self.min_eigenvalue = min_eigenvalue


def check_psd(cov: np.ndarray, rtol: float = 1e-9) -> None:
    """Raise :class:`CovarianceError` unless ``cov`` is symmetric PSD within ``rtol``."""
    cov = np.asarray(cov, dtype=float)
    if cov.size == 0:
        return
    if not np.allclose(cov, cov.T, rtol=0, atol=rtol * max(np.abs(cov).max(), 1e-300)):
        raise ScenarioError("covariance is not symmetric")
    eig = np.linalg.eigvalsh(cov)
    scale = max(np.abs(eig).max(), np.finfo(float).tiny)
    if eig.min() < -rtol * scale:
        raise CovarianceError(float(eig.min()))


@dataclass(frozen=True, eq=False)
class ActorSpec:
    """Power-change description of one actor bus, in W / var (SI).

    ``blocks`` maps phase letter to ``(mean, cov)`` with ``mean`` a 2-vector
    ``[dP, dQ]`` and ``cov`` its 2x2 covariance.
    """

    bus: str
    blocks: dict = field(default_factory=dict)

    def __post_init__(self):
        blocks = {}
        for p, (mean, cov) in self.blocks.items():
            if p not in PHASES:
                raise ScenarioError(f"actor {self.bus!r}: invalid phase {p!r}")
            mean = np.asarray(mean, dtype=float)
            cov = np.asarray(cov, dtype=float)
            if mean.shape != (2,) or cov.shape != (2, 2):
                raise ScenarioError(f"actor {self.bus!r} phase {p}: bad block shapes")
            try:
                check_psd(cov)
            except ScenarioError as exc:
                raise ScenarioError(f"actor {self.bus!r} phase {p}: {exc}") from None
            blocks[p] = (mean, cov)
        object.__setattr__(self, "blocks", blocks)

    @property
    def phases(self) -> str:
        return "".join(p for p in PHASES if p in self.blocks)

    @property
    def mean(self) -> np.ndarray:
        """6-vector mean ordered ``[Pa, Qa, Pb, Qb, Pc, Qc]``."""
        mu = np.zeros(6)
        for p, (m, _) in self.blocks.items():
            i = 2 * PHASE_INDEX[p]
            mu[i : i + 2] = m
        return mu

    @property
    def cov(self) -> np.ndarray:
        """6x6 covariance embedding; cross-phase terms are zero."""
        cov = np.zeros((6, 6))
        for p, (_, c) in self.blocks.items():
            i = 2 * PHASE_INDEX[p]
            cov[i : i + 2, i : i + 2] = c
        return cov

    def scaled(self, s: float) -> "ActorSpec":
        """Copy with every covariance block multiplied by ``s``."""
        return ActorSpec(self.bus, {p: (m.copy(), c * s) for p, (m, c) in self.blocks.items()})

    def at(self, bus: str) -> "ActorSpec":
        """The same power-change description placed at another bus."""
        return ActorSpec(bus, {p: (m.copy(), c.copy()) for p, (m, c) in self.blocks.items()})


@dataclass(frozen=True, eq=False)
class ScenarioSpec:
    actors: tuple
    correlation: float = 0.0
    seed: int = 0
    name: str = ""

    def __post_init__(self):
        object.__setattr__(self, "actors", tuple(self.actors))
        buses = [a.bus for a in self.actors]
        if len(set(buses)) != len(buses):
            raise ScenarioError("duplicate actor bus; merge phases into one ActorSpec")
        if not -1.0 <= self.correlation <= 1.0:
            raise ScenarioError(f"correlation {self.correlation} outside [-1, 1]")

    @property
    def actor_ids(self) -> list[str]:
        return [a.bus for a in self.actors]

    def actor(self, bus: str) -> ActorSpec:
        for a in self.actors:
            if a.bus == bus:
                return a
        raise ScenarioError(f"bus {bus!r} is not an actor in this scenario")

    def validate(self, net: NetworkModel) -> None:
        for a in self.actors:
            bus = net.bus(a.bus)
            for p in a.phases:
                if p not in bus.phases:
                    raise NetworkError(f"actor {a.bus!r}: phase {p!r} absent at bus")


def assemble_covariance(scenario: ScenarioSpec) -> tuple[np.ndarray, np.ndarray]:
    """Stacked ``6L`` mean and ``6L x 6L`` covariance for all actors."""
    actors = scenario.actors
    n = 6 * len(actors)
    mean = np.zeros(n)
    cov = np.zeros((n, n))
    for k, a in enumerate(actors):
        mean[6 * k : 6 * k + 6] = a.mean
        cov[6 * k : 6 * k + 6, 6 * k : 6 * k + 6] = a.cov
    rho = scenario.correlation
    if rho != 0.0:
        sd = np.sqrt(np.diag(cov))
        for i, ai in enumerate(actors):
            for j, aj in enumerate(actors):
                if i == j:
                    continue
                for p in ai.phases:
                    if p not in aj.phases:
                        continue
                    for off in (0, 1):  # P-P then Q-Q
                        r = 6 * i + 2 * PHASE_INDEX[p] + off
                        c = 6 * j + 2 * PHASE_INDEX[p] + off
                        cov[r, c] = rho * sd[r] * sd[c]
    check_psd(cov)
    return mean, cov


@dataclass(frozen=True, eq=False)
class BivariateGaussian:
    """Joint distribution of ``(dV^r, dV^i)`` in volts."""

    mean: np.ndarray
    cov: np.ndarray

    def __post_init__(self):
        mean = np.asarray(self.mean, dtype=float).reshape(2)
        cov = np.asarray(self.cov, dtype=float).reshape(2, 2)
        cov = 0.5 * (cov + cov.T)
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "cov", cov)

    @property
    def is_degenerate(self) -> bool:
        return not np.any(self.cov)

    def to_dict(self) -> dict:
        return {"mean": self.mean.tolist(), "cov": self.cov.tolist()}


def _congruence(coeffs: np.ndarray, cov: np.ndarray) -> np.ndarray:
    """``coeffs @ cov @ coeffs.T`` with the off-diagonal mirrored, so it is exactly symmetric."""
    m = coeffs @ cov @ coeffs.T
    m[1, 0] = m[0, 1]
    return m


def propagate(coeffs: np.ndarray, mean: np.ndarray, cov: np.ndarray) -> BivariateGaussian:
    """Distribution of ``coeffs @ x`` for ``x`` with the given mean and covariance."""
    return BivariateGaussian(coeffs @ mean, _congruence(coeffs, cov))


def combine_actors(blocks: list[np.ndarray], mean: np.ndarray, cov: np.ndarray) -> BivariateGaussian:
    """Aggregate distribution from per-actor 2x6 coefficient blocks and the assembled moments.

    Own-actor terms are accumulated in actor order, so with uncorrelated
    actors the aggregate mean and covariance are exactly the sums of the
    single-actor ones; cross-actor covariance is added afterwards.
    """
    mu = np.zeros(2)
    sigma = np.zeros((2, 2))
    off = cov.copy()
    for k, c in enumerate(blocks):
        sl = slice(6 * k, 6 * k + 6)
        mu = mu + c @ mean[sl]
        sigma = sigma + _congruence(c, cov[sl, sl])
        off[sl, sl] = 0.0
    if np.any(off):
        sigma = sigma + _congruence(np.hstack(blocks), off)
    return BivariateGaussian(mu, sigma)


def actor_coefficients(net: NetworkModel, o: str, phase: str, bus: str) -> np.ndarray:
    """2x6 matrix whose rows are the real and imaginary coefficient vectors."""
    sv = sensitivity_coefficients(net, o, phase, bus)
    return np.vstack([sv.c_real, sv.c_imag])


def single_actor_distribution(net: NetworkModel, o: str, phase: str, actor: ActorSpec) -> BivariateGaussian:
    """Voltage-change distribution at ``(o, phase)`` with ``actor`` acting alone."""
    return propagate(actor_coefficients(net, o, phase, actor.bus), actor.mean, actor.cov)


def aggregate_distribution(
    net: NetworkModel, o: str, phase: str, scenario: ScenarioSpec, assembled=None
) -> BivariateGaussian:
    """Voltage-change distribution at ``(o, phase)`` under all actors jointly.

    ``assembled`` may carry a precomputed ``assemble_covariance(scenario)``.
    """
    if not scenario.actors:
        raise ScenarioError("no actors defined")
    mean, cov = assembled if assembled is not None else assemble_covariance(scenario)
    return combine_actors([actor_coefficients(net, o, phase, a.bus) for a in scenario.actors], mean, cov)


# -- scenario file -----------------------------------------------------------


def parse_scenario(text: str) -> ScenarioSpec:
    """Parse a scenario JSON document.

    Each actor entry names a bus, one phase, a mean ``[dP, dQ]`` and a 2x2
    covariance in the document's power unit (``units.power``, default kW;
    covariances are in unit squared).  Entries for the same bus on different
    phases merge into one actor.
    """
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ScenarioError(f"parse error at line {exc.lineno}, column {exc.colno}: {exc.msg}") from None
    unit = doc.get("units", {}).get("power", "kW")
    if unit not in _POWER_UNITS:
        raise ScenarioError(f"units.power: unsupported unit tag {unit!r}")
    s = _POWER_UNITS[unit]
    blocks: dict[str, dict] = {}
    for i, raw in enumerate(doc.get("actors", [])):
        where = f"actors[{i}]"
        try:
            bus = str(raw["bus"])
            phase = str(raw["phase"])
            mean = np.asarray(raw.get("mean", [0.0, 0.0]), dtype=float) * s
            cov = np.asarray(raw["cov"], dtype=float) * s * s
        except KeyError as exc:
            raise ScenarioError(f"{where}: missing field {exc.args[0]!r}") from None
        except (TypeError, ValueError):
            raise ScenarioError(f"{where}: malformed numeric field") from None
        if phase not in PHASES:
            raise ScenarioError(f"{where}.phase: invalid phase {phase!r}")
        if phase in blocks.setdefault(bus, {}):
            raise ScenarioError(f"{where}: bus {bus!r} phase {phase} given twice")
        blocks[bus][phase] = (mean, cov)
    actors = [ActorSpec(bus, b) for bus, b in blocks.items()]
    return ScenarioSpec(
        actors=actors,
        correlation=float(doc.get("correlation", 0.0)),
        seed=int(doc.get("seed", 0)),
        name=str(doc.get("name", "")),
    )


def scenario_to_dict(scenario: ScenarioSpec) -> dict:
    actors = []
    for a in scenario.actors:
        for p in a.phases:
            m, c = a.blocks[p]
            actors.append({"bus": a.bus, "phase": p, "mean": m.tolist(), "cov": c.tolist()})
    return {
        "name": scenario.name,
        "units": {"power": "W"},
        "correlation": scenario.correlation,
        "seed": scenario.seed,
        "actors": actors,
    }


def load_scenario(path) -> ScenarioSpec:
    with open(path, encoding="utf-8") as fh:
        return parse_scenario(fh.read())


def sorted_actor_ids(scenario: ScenarioSpec) -> list[str]:
    return sorted(scenario.actor_ids, key=bus_sort_key)
