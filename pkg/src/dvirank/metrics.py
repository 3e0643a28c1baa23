"""Statistical distances, voltage influencing scores and rankings."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .distributions import (
    ActorSpec,
    BivariateGaussian,
    ScenarioError,
    ScenarioSpec,
    actor_coefficients,
    assemble_covariance,
    combine_actors,
    propagate,
)
from .network import NetworkModel, bus_sort_key

DISTANCE_FLOOR = 1e-12
CONDITION_CAP = 1e12

METRICS = ("kl", "bc")


class DistanceError(ValueError):
    """A distance is undefined for the given distributions."""


def _checked_inverse(cov: np.ndarray, what: str) -> np.ndarray:
    if not np.all(np.isfinite(cov)):
        raise DistanceError(f"{what}: non-finite covariance")
    eig = np.linalg.eigvalsh(cov)
    if eig[0] <= 0.0 or eig[-1] > CONDITION_CAP * eig[0]:
        raise DistanceError(f"{what}: covariance is singular or ill-conditioned")
    return np.linalg.inv(cov)


def _logdet(cov: np.ndarray) -> float:
    sign, value = np.linalg.slogdet(cov)
    if sign <= 0:
        raise DistanceError("covariance is not positive definite")
    return value


def kl_distance(d0: BivariateGaussian, d1: BivariateGaussian) -> float:
    """Kullback-Leibler divergence ``D(d0 || d1)`` between bivariate Gaussians."""
    _checked_inverse(d0.cov, "first distribution")
    inv1 = _checked_inverse(d1.cov, "second distribution")
    dmu = d1.mean - d0.mean
    k = d0.mean.size
    value = 0.5 * (np.trace(inv1 @ d0.cov) + dmu @ inv1 @ dmu - k + _logdet(d1.cov) - _logdet(d0.cov))
    if not math.isfinite(value):
        raise DistanceError("non-finite KL divergence")
    return max(float(value), 0.0)


def bc_distance(d0: BivariateGaussian, d1: BivariateGaussian) -> float:
    """Bhattacharyya distance between bivariate Gaussians (symmetric)."""
    _checked_inverse(d0.cov, "first distribution")
    _checked_inverse(d1.cov, "second distribution")
    mix = 0.5 * (d0.cov + d1.cov)
    inv = _checked_inverse(mix, "mixture")
    dmu = d1.mean - d0.mean
    value = 0.125 * (dmu @ inv @ dmu) + 0.5 * (
        _logdet(mix) - 0.5 * (_logdet(d0.cov) + _logdet(d1.cov))
    )
    if not math.isfinite(value):
        raise DistanceError("non-finite Bhattacharyya distance")
    return max(float(value), 0.0)


_DISTANCES = {"kl": kl_distance, "bc": bc_distance}


def distance(d0: BivariateGaussian, d1: BivariateGaussian, metric: str) -> float:
    try:
        fn = _DISTANCES[metric.lower()]
    except KeyError:
        raise ValueError(f"unknown metric {metric!r}; expected one of {METRICS}") from None
    return fn(d0, d1)


def inverse_distance(d0: BivariateGaussian, d1: BivariateGaussian, metric: str) -> float:
    """``1 / D(d0, d1)`` with the distance floored at :data:`DISTANCE_FLOOR`.

    A point mass ``d0`` (zero covariance, e.g. an actor at the source) is
    infinitely far from any non-degenerate ``d1`` under both metrics, so its
    inverse distance is exactly zero.
    """
    if d0.is_degenerate and not d1.is_degenerate:
        return 0.0
    return 1.0 / max(distance(d0, d1, metric), DISTANCE_FLOOR)


@dataclass
class RankEntry:
    actor: str
    distance: float
    vis: float
    rank: int


@dataclass
class RankingResult:
    observation: tuple[str, str]
    metric: str
    entries: list[RankEntry] = field(default_factory=list)

    @property
    def order(self) -> list[str]:
        return [e.actor for e in self.entries]

    def top(self, n: int) -> list[str]:
        return self.order[:n]

    def entry(self, actor: str) -> RankEntry:
        for e in self.entries:
            if e.actor == actor:
                return e
        raise KeyError(actor)

    def to_dict(self) -> dict:
        return {
            "observation": {"bus": self.observation[0], "phase": self.observation[1]},
            "metric": self.metric,
            "entries": [
                {"actor": e.actor, "distance": e.distance, "vis": e.vis, "rank": e.rank}
                for e in self.entries
            ],
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "RankingResult":
        obs = doc["observation"]
        return cls(
            observation=(str(obs["bus"]), str(obs["phase"])),
            metric=str(doc["metric"]),
            entries=[
                RankEntry(str(e["actor"]), float(e["distance"]), float(e["vis"]), int(e["rank"]))
                for e in doc["entries"]
            ],
        )


def order_entries(scores: dict[str, tuple[float, float]]) -> list[RankEntry]:
    """Sort ``{actor: (distance, vis)}`` by descending VIS, ties by ascending bus id."""
    keyed = sorted(scores.items(), key=lambda kv: (-kv[1][1], bus_sort_key(kv[0])))
    return [RankEntry(a, d, v, i + 1) for i, (a, (d, v)) in enumerate(keyed)]


def vis_from_inverse(inv_actor: float, inv_best: float, inv_source: float) -> float:
    """VIS from inverse distances: 0 at the source level, 1 at the normalizing actor."""
    denom = inv_best - inv_source
    if denom == 0.0:
        raise DistanceError("degenerate VIS normalization (best and source distances coincide)")
    return (inv_actor - inv_source) / denom


def vis_from_distances(d_actor: float, d_best: float, d_source: float = math.inf) -> float:
    """VIS from raw distances; ``d_source = inf`` models a point-mass source actor."""

    def inv(d):
        return 0.0 if math.isinf(d) else 1.0 / max(d, DISTANCE_FLOOR)

    return vis_from_inverse(inv(d_actor), inv(d_best), inv(d_source))


class ObservationAnalysis:
    """Distributions and distances for one observation phase.

    Holds the aggregate distribution and each actor's solo distribution so
    that every score for the observation reuses one set of coefficients.
    """

    def __init__(self, net: NetworkModel, o: str, phase: str, scenario: ScenarioSpec, assembled=None):
        if not scenario.actors:
            raise ScenarioError("no actors defined")
        self.net = net
        self.observation = (o, phase)
        self.scenario = scenario
        mean, cov = assembled if assembled is not None else assemble_covariance(scenario)
        blocks = [actor_coefficients(net, o, phase, a.bus) for a in scenario.actors]
        self.aggregate = combine_actors(blocks, mean, cov)
        self.solo = {a.bus: propagate(c, a.mean, a.cov) for a, c in zip(scenario.actors, blocks)}

    def distribution_at(self, actor: ActorSpec, bus: str) -> BivariateGaussian:
        """Solo distribution of ``actor``'s power change relocated to ``bus``."""
        c = actor_coefficients(self.net, self.observation[0], self.observation[1], bus)
        return propagate(c, actor.mean, actor.cov)

    def distances(self, metric: str) -> dict[str, float]:
        """Distance of each actor's solo distribution to the aggregate (``inf`` for a point mass)."""
        out = {}
        for a, d in self.solo.items():
            out[a] = math.inf if d.is_degenerate and not self.aggregate.is_degenerate else distance(d, self.aggregate, metric)
        return out

    def scores(self, metric: str, normalization: str = "min-actor") -> dict[str, tuple[float, float]]:
        """``{actor: (distance, VIS)}`` for every actor of the scenario."""
        dist = self.distances(metric)
        inv = {a: 0.0 if math.isinf(d) else 1.0 / max(d, DISTANCE_FLOOR) for a, d in dist.items()}
        source = self.net.source
        out = {}
        for spec in self.scenario.actors:
            a = spec.bus
            inv_src = inverse_distance(self.distribution_at(spec, source), self.aggregate, metric)
            if normalization == "min-actor":
                inv_best = max(inv.values())
            elif normalization == "colocated":
                ideal = self.distribution_at(spec, self.observation[0])
                inv_best = inverse_distance(ideal, self.aggregate, metric)
            else:
                raise ValueError(f"unknown normalization {normalization!r}")
            try:
                out[a] = (dist[a], vis_from_inverse(inv[a], inv_best, inv_src))
            except DistanceError as exc:
                raise DistanceError(f"actor {a!r}: {exc}") from None
        return out

    def rank(self, metric: str, normalization: str = "min-actor") -> RankingResult:
        return RankingResult(self.observation, metric.upper(), order_entries(self.scores(metric, normalization)))


def vis(net, o, phase, a, scenario, metric, normalization: str = "min-actor") -> float:
    """Voltage influencing score of actor ``a`` at observation ``(o, phase)``."""
    scenario.actor(a)
    return ObservationAnalysis(net, o, phase, scenario).scores(metric, normalization)[a][1]


def rank_actors(net, o, phase, scenario, metric, normalization: str = "min-actor") -> RankingResult:
    """Rank the scenario's actors at ``(o, phase)`` by descending VIS."""
    return ObservationAnalysis(net, o, phase, scenario).rank(metric, normalization)


def top_n_accuracy(predicted: RankingResult, truth: RankingResult, n: int) -> float:
    """Share of the true top-``n`` actors that the prediction also places in its top-``n``."""
    size = min(len(predicted.entries), len(truth.entries))
    if not 1 <= n <= size:
        raise ValueError(f"n={n} out of range 1..{size}")
    return len(set(predicted.top(n)) & set(truth.top(n))) / n


def observation_points(net: NetworkModel, include_source: bool = False) -> list[tuple[str, str]]:
    """Every (bus, phase) pair in ascending bus order, the source excluded by default."""
    pts = []
    for b in net.bus_ids:
        if b == net.source and not include_source:
            continue
        pts.extend((b, p) for p in net.bus(b).phases)
    return pts


def mean_vis(net, a, scenario, metric, observations=None, normalization: str = "min-actor") -> float:
    """Average VIS of actor ``a`` over ``observations`` (all non-source bus phases by default)."""
    scenario.actor(a)
    points = observations if observations is not None else observation_points(net)
    assembled = assemble_covariance(scenario)
    values = [
        ObservationAnalysis(net, o, p, scenario, assembled).scores(metric, normalization)[a][1] for o, p in points
    ]
    return float(np.mean(values))


def mean_vis_table(net, scenario, metric, observations=None, normalization: str = "min-actor") -> dict[str, float]:
    """Average VIS of every actor, computing each observation once."""
    points = observations if observations is not None else observation_points(net)
    assembled = assemble_covariance(scenario)
    totals = {a: 0.0 for a in scenario.actor_ids}
    for o, p in points:
        for a, (_, v) in ObservationAnalysis(net, o, p, scenario, assembled).scores(metric, normalization).items():
            totals[a] += v
    return {a: t / len(points) for a, t in totals.items()}
