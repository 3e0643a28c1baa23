"""Command-line front end.

    dvirank rank      --obs 7 --metric kl
    dvirank validate  --obs all --top-n 5 --samples 10000
    dvirank benchmark --obs 7 --samples 10000
    dvirank mean-vis  --metric kl

Network and scenario default to the bundled IEEE 37-node feeder and PV
scenario.  Exit codes: 0 success, 1 input error, 2 numerical failure.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import io
import json
import logging
import sys
import time

import numpy as np

from . import data_path
from .distributions import ScenarioError, assemble_covariance, load_scenario
from .metrics import METRICS, DistanceError, ObservationAnalysis, RankingResult, mean_vis_table, top_n_accuracy
from .network import PHASES, NetworkError, bus_sort_key, load_network
from .oracle import LoadFlowError, MCConfig, run_study

log = logging.getLogger("dvirank")


class InputError(Exception):
    pass


@dataclasses.dataclass
class RunConfig:
    network: str
    scenario: str
    observations: list[tuple[str, str]]
    metrics: list[str]
    top_n: int = 5
    output: str = "pretty"
    seed: int | None = None
    samples: int = 10_000
    correlation: float | None = None
    normalization: str = "min-actor"
    workers: int | None = None


# -- config ------------------------------------------------------------------


def _select_observations(net, obs: str, phase: str | None) -> list[tuple[str, str]]:
    if obs == "all":
        wanted = phase or PHASES
        buses = [b for b in net.bus_ids if b != net.source]
    else:
        wanted = phase or "c"
        buses = [b.strip() for b in obs.split(",") if b.strip()]
        if not buses:
            raise InputError("empty observation selector")
    phases = PHASES if wanted == "all" else wanted
    out = []
    for b in buses:
        bus = net.bus(b)
        present = [p for p in phases if p in bus.phases]
        if obs != "all" and len(present) < len(phases):
            missing = "".join(p for p in phases if p not in bus.phases)
            raise InputError(f"phase(s) {missing} absent at observation bus {b!r}")
        out.extend((b, p) for p in present)
    return out


def _metrics(value: str) -> list[str]:
    if value == "all":
        return [*METRICS, "mc"]
    out = [m.strip().lower() for m in value.split(",") if m.strip()]
    for m in out:
        if m not in (*METRICS, "mc"):
            raise InputError(f"unknown metric {m!r}")
    if not out:
        raise InputError("metric set is empty")
    return out


def _load(args):
    net = load_network(args.network)
    scenario = load_scenario(args.scenario)
    if args.rho is not None:
        scenario = dataclasses.replace(scenario, correlation=args.rho)
    if args.seed is not None:
        scenario = dataclasses.replace(scenario, seed=args.seed)
    if not scenario.actors:
        raise InputError("no actors defined")
    scenario.validate(net)
    if args.top_n < 1:
        raise InputError("--top-n must be >= 1")
    if args.command in ("validate", "benchmark") and args.top_n > len(scenario.actors):
        raise InputError(f"--top-n {args.top_n} exceeds the number of actors ({len(scenario.actors)})")
    return net, scenario


# -- rendering -----------------------------------------------------------------


def render_rankings(results: list[RankingResult], fmt: str) -> str:
    if fmt == "json":
        return json.dumps([r.to_dict() for r in results], indent=1) + "\n"
    if fmt == "csv":
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["observation", "phase", "metric", "rank", "actor", "distance", "vis"])
        for r in results:
            for e in r.entries:
                w.writerow([r.observation[0], r.observation[1], r.metric, e.rank, e.actor, repr(e.distance), repr(e.vis)])
        return buf.getvalue()
    lines = []
    for r in results:
        lines.append(f"observation {r.observation[0]}{r.observation[1]}  metric {r.metric}")
        dist_label = "var.reduction" if r.metric == "MC" else "distance"
        lines.append(f"  {'rank':>4}  {'actor':>6}  {dist_label:>14}  {'VIS':>6}")
        for e in r.entries:
            lines.append(f"  {e.rank:>4}  {e.actor:>6}  {e.distance:>14.6g}  {e.vis:>6.3f}")
        lines.append("")
    return "\n".join(lines)


def _table(header: list[str], rows: list[list], fmt: str) -> str:
    if fmt == "json":
        return json.dumps([dict(zip(header, r)) for r in rows], indent=1) + "\n"
    if fmt == "csv":
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(header)
        w.writerows([[repr(c) if isinstance(c, float) else c for c in r] for r in rows])
        return buf.getvalue()
    cells = [[f"{c:.3f}" if isinstance(c, float) else str(c) for c in r] for r in rows]
    widths = [max(len(h), *(len(r[i]) for r in cells)) if cells else len(h) for i, h in enumerate(header)]
    out = ["  ".join(h.rjust(w) for h, w in zip(header, widths))]
    out += ["  ".join(c.rjust(w) for c, w in zip(r, widths)) for r in cells]
    return "\n".join(out) + "\n"


# -- commands --------------------------------------------------------------------


def cmd_rank(cfg: RunConfig, net, scenario) -> str:
    assembled = assemble_covariance(scenario)
    study = None
    if "mc" in cfg.metrics:
        study = run_study(net, scenario, MCConfig(samples=cfg.samples, seed=scenario.seed, workers=cfg.workers))
    results = []
    for o, p in cfg.observations:
        analysis = None
        for m in cfg.metrics:
            if m == "mc":
                results.append(study.ranking(o, p))
                continue
            analysis = analysis or ObservationAnalysis(net, o, p, scenario, assembled)
            results.append(analysis.rank(m, cfg.normalization))
    return render_rankings(results, cfg.output)


def cmd_validate(cfg: RunConfig, net, scenario) -> str:
    analytic = [m for m in cfg.metrics if m != "mc"] or list(METRICS)
    study = run_study(net, scenario, MCConfig(samples=cfg.samples, seed=scenario.seed, workers=cfg.workers))
    assembled = assemble_covariance(scenario)
    rows = []
    acc: dict[str, list[float]] = {m: [] for m in analytic}
    for o, p in cfg.observations:
        truth = study.ranking(o, p)
        analysis = ObservationAnalysis(net, o, p, scenario, assembled)
        row = [o, p]
        for m in analytic:
            a = top_n_accuracy(analysis.rank(m, cfg.normalization), truth, cfg.top_n)
            acc[m].append(a)
            row.append(a)
        rows.append(row)
    rows.append(["mean", "-"] + [float(np.mean(acc[m])) for m in analytic])
    header = ["observation", "phase"] + [f"top{cfg.top_n}_{m}" for m in analytic]
    return _table(header, rows, cfg.output)


def cmd_benchmark(cfg: RunConfig, net, scenario, analytic_only: bool = False) -> str:
    analytic = [m for m in cfg.metrics if m != "mc"] or list(METRICS)
    rows = []
    for o, p in cfg.observations:
        row = [o, p]
        times = []
        for m in analytic:
            t0 = time.perf_counter()
            ObservationAnalysis(net, o, p, scenario).rank(m, cfg.normalization).top(cfg.top_n)
            times.append(time.perf_counter() - t0)
            row.append(times[-1])
        if not analytic_only:
            t0 = time.perf_counter()
            run_study(net, scenario, MCConfig(samples=cfg.samples, seed=scenario.seed, workers=cfg.workers)).ranking(o, p)
            t_mc = time.perf_counter() - t0
            row += [t_mc, t_mc / max(max(times), 1e-12)]
        rows.append(row)
    header = ["observation", "phase"] + [f"{m}_seconds" for m in analytic]
    if not analytic_only:
        header += ["mc_seconds", "speedup"]
    return _table(header, rows, cfg.output)


def cmd_mean_vis(cfg: RunConfig, net, scenario) -> str:
    analytic = [m for m in cfg.metrics if m != "mc"]
    if not analytic:
        raise InputError("mean-vis needs an analytic metric (kl or bc)")
    tables = {m: mean_vis_table(net, scenario, m, cfg.observations, cfg.normalization) for m in analytic}
    rows = [[a] + [tables[m][a] for m in analytic] for a in sorted(scenario.actor_ids, key=bus_sort_key)]
    return _table(["actor"] + [f"mean_vis_{m}" for m in analytic], rows, cfg.output)


# -- entry point -------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--network", default=None, help="network JSON file (default: bundled IEEE 37)")
    common.add_argument("--scenario", default=None, help="scenario JSON file (default: bundled PV scenario)")
    common.add_argument("--obs", default=None, help="comma-separated observation buses or 'all'")
    common.add_argument("--phase", default=None, help="phases to observe, e.g. 'c' or 'abc' (default: c, or every phase with --obs all)")
    common.add_argument("--metric", default=None, help="kl, bc, mc, a comma list, or all (default: kl; kl,bc for validate and benchmark)")
    common.add_argument("--top-n", type=int, default=5)
    common.add_argument("--format", dest="output", choices=["pretty", "csv", "json"], default="pretty")
    common.add_argument("--seed", type=int, default=None, help="override the scenario RNG seed")
    common.add_argument("--samples", type=int, default=10_000, help="Monte-Carlo samples")
    common.add_argument("--rho", type=float, default=None, help="override the cross-actor correlation")
    common.add_argument("--normalization", choices=["min-actor", "colocated"], default="min-actor")
    common.add_argument("--workers", type=int, default=None, help="MC worker threads (default: $DVIRANK_THREADS or 1)")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(prog="dvirank", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("rank", parents=[common], help="rank actors per observation phase")
    sub.add_parser("validate", parents=[common], help="Top-N accuracy of analytic rankings against Monte-Carlo")
    bench = sub.add_parser("benchmark", parents=[common], help="time analytic and Monte-Carlo ranking")
    bench.add_argument("--analytic-only", action="store_true")
    sub.add_parser("mean-vis", parents=[common], help="mean VIS of each actor over observation phases")
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING, format="%(name)s: %(message)s")
    args.network = args.network or str(data_path("ieee37.json"))
    args.scenario = args.scenario or str(data_path("pv_scenario.json"))
    default_obs = {"rank": "7", "benchmark": "7"}.get(args.command, "all")
    try:
        if args.samples < 1:
            raise InputError("--samples must be >= 1")
        net, scenario = _load(args)
        default_metric = "kl,bc" if args.command in ("validate", "benchmark") else "kl"
        metrics = _metrics(args.metric or default_metric)
        cfg = RunConfig(
            network=args.network,
            scenario=args.scenario,
            observations=_select_observations(net, args.obs or default_obs, args.phase),
            metrics=metrics,
            top_n=args.top_n,
            output=args.output,
            seed=scenario.seed,
            samples=args.samples,
            correlation=scenario.correlation,
            normalization=args.normalization,
            workers=args.workers,
        )
        if args.command == "rank":
            out = cmd_rank(cfg, net, scenario)
        elif args.command == "validate":
            out = cmd_validate(cfg, net, scenario)
        elif args.command == "benchmark":
            out = cmd_benchmark(cfg, net, scenario, analytic_only=args.analytic_only)
        else:
            out = cmd_mean_vis(cfg, net, scenario)
    except (InputError, NetworkError, ScenarioError, OSError) as exc:
        print(f"dvirank: error: {exc}", file=sys.stderr)
        return 1
    except (DistanceError, LoadFlowError, np.linalg.LinAlgError) as exc:
        print(f"dvirank: numerical failure: {exc}", file=sys.stderr)
        return 2
    sys.stdout.write(out)
    return 0


if __name__ == "__main__":
    sys.exit(main())
