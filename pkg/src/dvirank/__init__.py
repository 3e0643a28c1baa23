"""Rank voltage-influencing actor buses of unbalanced radial feeders.

Analytic path: linear voltage sensitivities -> bivariate Gaussian voltage
change per actor and in aggregate -> KL / Bhattacharyya distances -> VIS.
Baseline path: Monte-Carlo load flows with leave-one-actor-out variance
reduction.
"""

from importlib import resources

from .distributions import (
    ActorSpec,
    BivariateGaussian,
    ScenarioSpec,
    aggregate_distribution,
    assemble_covariance,
    load_scenario,
    parse_scenario,
    single_actor_distribution,
)
from .metrics import (
    RankingResult,
    bc_distance,
    kl_distance,
    mean_vis,
    rank_actors,
    top_n_accuracy,
    vis,
)
from .network import NetworkModel, load_network, parse_network, shared_path, shared_path_impedance
from .oracle import MCConfig, mc_rank_actors, mc_voltage_variance, solve_load_flow
from .sensitivity import sensitivity_coefficients, voltage_change

__version__ = "0.1.0"


def data_path(name: str):
    """Path of a bundled data file (``ieee37.json``, ``pv_scenario.json``)."""
    return resources.files(__name__).joinpath("data", name)


def bundled_network() -> NetworkModel:
    return parse_network(data_path("ieee37.json").read_text(encoding="utf-8"))


def bundled_scenario() -> ScenarioSpec:
    return parse_scenario(data_path("pv_scenario.json").read_text(encoding="utf-8"))
