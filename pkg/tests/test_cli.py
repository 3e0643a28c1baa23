import csv
import io
import json
from pathlib import Path

import pytest

from dvirank.cli import main
from dvirank.metrics import RankingResult

GOLDEN = Path(__file__).parent / "golden"


def run(capsys, *argv):
    code = main(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


def write_json(tmp_path, name, doc):
    path = tmp_path / name
    path.write_text(json.dumps(doc))
    return str(path)


class TestRank:
    def test_obs7_kl_top_row(self, capsys):
        code, out, _ = run(capsys, "rank", "--obs", "7", "--metric", "kl", "--format", "json")
        assert code == 0
        [table] = json.loads(out)
        assert table["entries"][0]["actor"] == "7" and table["entries"][0]["vis"] == 1.0

    def test_obs16_bc_top_row(self, capsys):
        code, out, _ = run(capsys, "rank", "--obs", "16", "--metric", "bc", "--format", "json")
        assert code == 0
        assert json.loads(out)[0]["entries"][0]["actor"] == "14"

    def test_pretty_three_decimals(self, capsys):
        code, out, _ = run(capsys, "rank", "--obs", "7")
        assert code == 0
        first = out.splitlines()[2].split()
        assert first[:2] == ["1", "7"] and first[-1] == "1.000"

    def test_golden_json_and_csv(self, capsys):
        for fmt in ("json", "csv"):
            code, out, _ = run(capsys, "rank", "--obs", "7,16", "--metric", "kl,bc", "--format", fmt)
            assert code == 0
            assert out == (GOLDEN / f"rank_7_16.{fmt}").read_text()

    def test_json_round_trip(self, capsys):
        _, out, _ = run(capsys, "rank", "--obs", "7,16", "--metric", "kl,bc", "--format", "json")
        tables = json.loads(out)
        for t in tables:
            assert RankingResult.from_dict(t).to_dict() == t
        assert len(tables) == 4

    def test_mc_byte_identical(self, capsys):
        argv = ("rank", "--obs", "7", "--metric", "mc", "--samples", "300", "--format", "csv", "--seed", "11")
        _, first, _ = run(capsys, *argv)
        _, second, _ = run(capsys, *argv)
        assert first == second
        rows = list(csv.DictReader(io.StringIO(first)))
        assert {r["metric"] for r in rows} == {"MC"}

    def test_all_observations(self, capsys):
        code, out, _ = run(capsys, "rank", "--obs", "all", "--format", "json")
        assert code == 0
        tables = json.loads(out)
        assert len(tables) == 36 * 3
        assert all(t["observation"]["bus"] != "1" for t in tables)

    def test_rho_override_keeps_rank1(self, capsys):
        _, out, _ = run(capsys, "rank", "--obs", "7", "--rho", "0.3", "--format", "json")
        assert json.loads(out)[0]["entries"][0]["actor"] == "7"


class TestErrors:
    def test_empty_scenario(self, capsys, tmp_path):
        path = write_json(tmp_path, "empty.json", {"actors": []})
        code, _, err = run(capsys, "rank", "--obs", "7", "--scenario", path)
        assert code == 1 and "no actors defined" in err

    def test_top_n_exceeds_actors(self, capsys):
        code, _, err = run(capsys, "validate", "--obs", "7", "--top-n", "15", "--samples", "10")
        assert code == 1 and "exceeds" in err

    def test_unknown_bus(self, capsys):
        code, _, err = run(capsys, "rank", "--obs", "99")
        assert code == 1 and "unknown bus" in err

    def test_missing_file(self, capsys, tmp_path):
        code, _, _ = run(capsys, "rank", "--network", str(tmp_path / "nope.json"))
        assert code == 1

    def test_bad_metric(self, capsys):
        code, _, err = run(capsys, "rank", "--metric", "js")
        assert code == 1 and "unknown metric" in err

    def test_numerical_failure_exit_2(self, capsys, tmp_path):
        # Zero-variance actors give a degenerate aggregate: distances are undefined.
        doc = {"actors": [{"bus": "14", "phase": "c", "mean": [1, 0], "cov": [[0, 0], [0, 0]]}]}
        code, _, err = run(capsys, "rank", "--obs", "7", "--scenario", write_json(tmp_path, "s.json", doc))
        assert code == 2 and "numerical" in err

    def test_argparse_usage_error(self, capsys):
        with pytest.raises(SystemExit) as exc:
            main(["rank", "--format", "xml"])
        assert exc.value.code == 2


class TestValidateBenchmarkMeanVis:
    def test_validate_obs7_top5(self, capsys):
        code, out, _ = run(capsys, "validate", "--obs", "7", "--top-n", "5", "--samples", "10000", "--format", "json")
        assert code == 0
        rows = json.loads(out)
        assert rows[0]["top5_kl"] == 1.0 and rows[0]["top5_bc"] == 1.0
        assert rows[-1]["observation"] == "mean"

    def test_benchmark_smoke_one_sample(self, capsys):
        code, out, _ = run(capsys, "benchmark", "--obs", "7", "--samples", "1", "--format", "json")
        assert code == 0
        row = json.loads(out)[0]
        assert {"kl_seconds", "bc_seconds", "mc_seconds", "speedup"} <= set(row)

    def test_benchmark_analytic_only(self, capsys):
        code, out, _ = run(capsys, "benchmark", "--obs", "7", "--analytic-only", "--format", "json")
        assert code == 0
        row = json.loads(out)[0]
        assert "mc_seconds" not in row and "speedup" not in row

    def test_mean_vis_golden(self, capsys):
        code, out, _ = run(capsys, "mean-vis", "--metric", "kl,bc", "--format", "csv")
        assert code == 0
        assert out == (GOLDEN / "mean_vis.csv").read_text()
        assert len(out.splitlines()) == 1 + 14

    def test_mean_vis_single_actor(self, capsys, tmp_path):
        doc = {"actors": [{"bus": "9", "phase": "c", "cov": [[4.5, -0.2], [-0.2, 0.75]]}]}
        code, out, _ = run(capsys, "mean-vis", "--scenario", write_json(tmp_path, "one.json", doc), "--format", "json")
        assert code == 0
        assert json.loads(out) == [{"actor": "9", "mean_vis_kl": 1.0}]
