"""Worked examples quoted from the reference study's tables.

Claims that reproduce on the bundled feeder are asserted; claims that do not
are kept as expected failures with the reason, so the gap stays visible.
"""

import pytest

from dvirank.metrics import mean_vis_table, rank_actors, top_n_accuracy

REFERENCE_KL_TOP10 = {
    "7": ["7", "9", "12", "14", "22", "26", "28", "8", "17", "18"],
    "16": ["14", "22", "12", "9", "7", "17", "26", "18", "28", "8"],
}
REFERENCE_MC_TOP10_OBS7 = ["7", "9", "12", "22", "14", "26", "28", "8", "17", "27"]


def test_obs7_top10_kl_vs_mc(ieee37, pv, mc_study):
    kl = rank_actors(ieee37, "7", "c", pv, "kl")
    assert top_n_accuracy(kl, mc_study.ranking("7", "c"), 10) == pytest.approx(0.9)


def test_obs7_top5_kl_vs_mc(ieee37, pv, mc_study):
    kl = rank_actors(ieee37, "7", "c", pv, "kl")
    assert top_n_accuracy(kl, mc_study.ranking("7", "c"), 5) == 1.0


@pytest.mark.xfail(reason="local MC agrees fully at obs 16 (Top-5 accuracy 1.0, reference 0.8)", strict=True)
def test_obs16_top5_kl_vs_mc(ieee37, pv, mc_study):
    kl = rank_actors(ieee37, "16", "c", pv, "kl")
    assert top_n_accuracy(kl, mc_study.ranking("16", "c"), 5) == pytest.approx(0.8)


@pytest.mark.parametrize("obs", ["7", "16"])
@pytest.mark.xfail(reason="reference order lists actor 17, which is not an actor of the scenario", strict=True)
def test_full_kl_order(ieee37, pv, obs):
    assert rank_actors(ieee37, obs, "c", pv, "kl").top(10) == REFERENCE_KL_TOP10[obs]


@pytest.mark.xfail(reason="reference order lists actor 17, which is not an actor of the scenario", strict=True)
def test_full_mc_order_obs7(mc_study):
    assert mc_study.ranking("7", "c").top(10) == REFERENCE_MC_TOP10_OBS7


@pytest.mark.xfail(reason="locally actor 30 has one of the highest mean VIS; the minimum is actor 8", strict=True)
def test_mean_vis_actor30_minimal(ieee37, pv):
    table = mean_vis_table(ieee37, pv, "kl")
    assert min(table, key=table.get) == "30"


@pytest.mark.skip(reason="actor 17 is not part of the scenario, so its mean VIS cannot be computed")
def test_mean_vis_actor17_maximal():
    pass
