"""Monte-Carlo load-flow baseline.

Ground truth comes from repeated unbalanced load flows: draw actor power
changes, solve the perturbed network, and measure the variance of the
voltage-magnitude change at each observation phase.  Leaving one actor out
at a time (its power change pinned to its mean) and measuring how much that
variance drops ranks the actors.

The load flow is a backward/forward sweep written with the bus-to-segment
path matrix ``K`` (``K[b, l] = 1`` when segment ``l`` feeds bus ``b``), so a
whole batch of samples is swept at once::

    I_line = K^T I_bus          (backward: accumulate downstream currents)
    V_bus  = V_src - K (Z I_line)   (forward: subtract path drops)

The two passes are linear in ``I_bus`` and are precomposed into one
``3B x 3B`` drop matrix, so an iteration is a single matrix product.
Loads are constant-power wye: ``I_bus = conj(S / V)``.
"""

from __future__ import annotations

import csv
import logging
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .distributions import ScenarioError, ScenarioSpec, assemble_covariance, check_psd
from .metrics import RankingResult, order_entries
from .network import PHASE_INDEX, PHASES, NetworkError, NetworkModel

log = logging.getLogger(__name__)

BASE_POWER = 1e6  # VA, per-unit base for mismatch tolerances
CHUNK = 1000  # samples per RNG stream; fixed so draws do not depend on worker count


class LoadFlowError(RuntimeError):
    def __init__(self, message: str, mismatch: float | None = None, sample: int | None = None):
        super().__init__(message)
        self.mismatch = mismatch
        self.sample = sample


@dataclass
class MCConfig:
    samples: int = 10_000
    seed: int = 0
    tolerance: float = 1e-6 * BASE_POWER
    max_iterations: int = 100
    workers: int | None = None

    def __post_init__(self):
        if self.samples < 1:
            raise ValueError("samples must be >= 1")
        if self.tolerance <= 0:
            raise ValueError("tolerance must be positive")
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be >= 1")


@dataclass
class LoadFlowSolution:
    voltages: dict[str, np.ndarray]
    iterations: int
    max_mismatch: float

    def voltage(self, bus: str, phase: str) -> complex:
        return complex(self.voltages[bus][PHASE_INDEX[phase]])


class SweepSolver:
    """Batched backward/forward sweep for one network."""

    def __init__(self, net: NetworkModel, tolerance: float = 1e-6 * BASE_POWER, max_iterations: int = 100):
        self.net = net
        self.tolerance = tolerance
        self.max_iterations = max_iterations
        self.order = list(net.topological_order)
        self.index = {b: i for i, b in enumerate(self.order)}
        self.K = net.path_matrix
        self.Z = np.stack([line.z for line in net.lines]) if net.lines else np.zeros((0, 3, 3), complex)
        self.mask = np.array([net.bus(b).mask for b in self.order])
        self.v_source = net.bus(net.source).base_voltage
        self.base_loads = np.array([net.bus(b).load for b in self.order])
        # Backward then forward sweep composed into one map from bus currents
        # to bus voltage drops: entry ((b, p), (c, q)) sums Z_l[p, q] over the
        # segments l feeding both b and c.
        nb = len(self.order)
        self.drop_matrix = np.einsum("bl,cl,lpq->bpcq", self.K, self.K, self.Z).reshape(3 * nb, 3 * nb)

    def loads_from(self, loads: dict[str, np.ndarray]) -> np.ndarray:
        out = np.zeros((len(self.order), 3), dtype=complex)
        for b, s in loads.items():
            s = np.asarray(s, dtype=complex)
            i = self.index[self.net.bus(b).id]
            if np.any(s[~self.mask[i]] != 0):
                raise NetworkError(f"load on a phase absent at bus {b!r}")
            out[i] = s
        return out

    def solve(self, loads: np.ndarray):
        """Solve a batch of load cases.

        ``loads`` has shape ``(n, buses, 3)`` (VA, consumption positive, rows
        in topological order).  Returns voltages of the same shape, the
        iteration count and the final max power mismatch in VA.
        """
        loads = np.asarray(loads, dtype=complex)
        single = loads.ndim == 2
        if single:
            loads = loads[None]
        n, nb = loads.shape[0], len(self.order)
        flat_mask = self.mask.reshape(-1)
        s = np.where(flat_mask, loads.reshape(n, -1), 0.0)
        v_src = np.tile(self.v_source, nb)
        v = np.broadcast_to(np.where(flat_mask, v_src, 0.0), s.shape).copy()
        mismatch = np.inf
        for it in range(1, self.max_iterations + 1):
            current = np.where(flat_mask, np.conj(s / np.where(flat_mask, v, 1.0)), 0.0)
            v_new = np.where(flat_mask, v_src - current @ self.drop_matrix.T, 0.0)
            residual = np.abs(v_new * np.conj(current) - s)
            mismatch = float(residual.max(initial=0.0))
            v = v_new
            if mismatch <= self.tolerance:
                break
        else:
            raise LoadFlowError(
                f"load flow did not converge in {self.max_iterations} iterations (mismatch {mismatch:.3g} VA)",
                mismatch=mismatch,
                sample=int(np.argmax(residual.max(axis=1))),
            )
        v = v.reshape(n, nb, 3)
        return (v[0] if single else v), it, mismatch


def solve_load_flow(
    net: NetworkModel, loads: dict[str, np.ndarray] | None = None, tolerance: float = 1e-6 * BASE_POWER,
    max_iterations: int = 100,
) -> LoadFlowSolution:
    """Solve one load case.

    ``loads`` maps bus id to complex power drawn per phase (VA, consumption
    positive); buses not listed draw nothing.  ``None`` uses the network's
    base loads.
    """
    solver = SweepSolver(net, tolerance, max_iterations)
    s = solver.base_loads if loads is None else solver.loads_from(loads)
    v, it, mismatch = solver.solve(s)
    return LoadFlowSolution({b: v[i].copy() for i, b in enumerate(solver.order)}, it, mismatch)


def power_balance_mismatch(net: NetworkModel, solution: LoadFlowSolution, loads: dict | None = None) -> dict[str, float]:
    """Per-bus power balance residual (VA) recomputed from branch voltage drops.

    Branch currents are recovered from each segment's drop via its impedance
    (restricted to carried phases), so the check is independent of the
    sweep's own current bookkeeping.
    """
    if loads is None:
        loads = {b: net.bus(b).load for b in net.bus_ids}
    inflow = {b: np.zeros(3, dtype=complex) for b in net.bus_ids}
    for line in net.lines:
        up, down = line.from_bus, line.to_bus
        if net.parent(down) != up:
            up, down = down, up
        used = np.any(line.z != 0, axis=0)
        drop = solution.voltages[up] - solution.voltages[down]
        i = np.zeros(3, dtype=complex)
        if np.any(used):
            sub = np.ix_(used, used)
            i[used] = np.linalg.solve(line.z[sub], drop[used])
        inflow[down] += i
        inflow[up] -= i
    out = {}
    for b in net.bus_ids:
        if b == net.source:
            continue
        s = solution.voltages[b] * np.conj(inflow[b])
        demand = np.asarray(loads.get(b, np.zeros(3)), dtype=complex)
        out[b] = float(np.max(np.abs(s - demand)))
    return out


# -- sampling ----------------------------------------------------------------


def covariance_factor(cov: np.ndarray) -> np.ndarray:
    """Matrix ``A`` with ``A A^T = cov`` for a PSD (possibly singular) covariance."""
    check_psd(cov)
    factor = np.zeros_like(cov, dtype=float)
    # Zero-variance coordinates (absent phases) have zero rows in a PSD
    # matrix; factor only the support so they stay exactly zero.
    support = np.flatnonzero(np.diag(cov) > 0)
    if support.size:
        w, u = np.linalg.eigh(cov[np.ix_(support, support)])
        factor[np.ix_(support, support)] = u * np.sqrt(np.clip(w, 0.0, None))
    return factor


def chunk_rng(seed: int, chunk: int) -> np.random.Generator:
    """Independent generator for sample chunk ``chunk`` under ``seed``."""
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(chunk,)))


def sample_power_changes(scenario: ScenarioSpec, rng: np.random.Generator, size: int | None = None):
    """Draw stacked ``6L`` power-change vectors (W / var) from the scenario.

    Returns ``(6L,)`` when ``size`` is None, else ``(size, 6L)``.
    """
    mean, cov = assemble_covariance(scenario)
    factor = covariance_factor(cov)
    n = 1 if size is None else size
    z = rng.standard_normal((n, factor.shape[1]))
    draws = mean + z @ factor.T
    return draws[0] if size is None else draws


def split_by_actor(scenario: ScenarioSpec, ds: np.ndarray) -> dict[str, np.ndarray]:
    return {a.bus: np.asarray(ds)[..., 6 * k : 6 * k + 6] for k, a in enumerate(scenario.actors)}


# -- Monte-Carlo study ---------------------------------------------------------


def _workers(cfg: MCConfig) -> int:
    if cfg.workers is not None:
        return max(1, cfg.workers)
    return max(1, int(os.environ.get("DVIRANK_THREADS", "1")))


@dataclass
class MCStudy:
    """Statistics of one Monte-Carlo run over every bus phase.

    ``variance[key]`` is the ``(buses, 3)`` variance of ``|V| - |V_base|``
    where ``key`` is ``"all"`` or an actor id (that actor held at its mean).
    ``complex_cov`` holds the 2x2 covariance of ``(dV^r, dV^i)`` per bus
    phase under all actors, shape ``(buses, 3, 2, 2)``.
    """

    net: NetworkModel
    scenario: ScenarioSpec
    config: MCConfig
    order: list[str]
    v_base: np.ndarray
    variance: dict[str, np.ndarray]
    complex_mean: np.ndarray
    complex_cov: np.ndarray
    max_iterations_used: int
    records: dict | None = field(default=None, repr=False)

    def _at(self, bus: str, phase: str) -> tuple[int, int]:
        b = self.net.bus(bus)
        if phase not in b.phases:
            raise NetworkError(f"phase {phase!r} absent at bus {bus!r}")
        return self.order.index(bus), PHASE_INDEX[phase]

    def magnitude_variance(self, bus: str, phase: str, key: str = "all") -> float:
        i, p = self._at(bus, phase)
        return float(self.variance[key][i, p])

    def reductions(self, bus: str, phase: str) -> dict[str, float]:
        total = self.magnitude_variance(bus, phase)
        return {a: total - self.magnitude_variance(bus, phase, a) for a in self.scenario.actor_ids}

    def ranking(self, bus: str, phase: str) -> RankingResult:
        red = self.reductions(bus, phase)
        top = max(red.values())
        scores = {a: (r, (max(r, 0.0) / top) if top > 0 else 0.0) for a, r in red.items()}
        return RankingResult((bus, phase), "MC", order_entries(scores))

    def voltage_statistics(self, bus: str) -> dict:
        i = self.order.index(self.net.bus(bus).id)
        out = {}
        for p in self.net.bus(bus).phases:
            k = PHASE_INDEX[p]
            out[p] = {
                "magnitude_variance": float(self.variance["all"][i, k]),
                "mean": self.complex_mean[i, k].copy(),
                "cov": self.complex_cov[i, k].copy(),
            }
        return out


def _run_chunk(solver, scenario, factor, mean, inject, base_v, seed, chunk, n, keys, keep):
    rng = chunk_rng(seed, chunk)
    z = rng.standard_normal((n, factor.shape[1]))
    ds = mean + z @ factor.T
    base_mag = np.abs(base_v)
    out = {}
    iters = 0
    for key in keys:
        d = ds.copy()
        if key != "all":
            k = scenario.actor_ids.index(key)
            d[:, 6 * k : 6 * k + 6] = mean[6 * k : 6 * k + 6]
        loads = solver.base_loads + np.einsum("nk,kbp->nbp", d, inject)
        try:
            v, it, _ = solver.solve(loads)
        except LoadFlowError as exc:
            raise LoadFlowError(
                f"{exc} at sample {chunk * CHUNK + (exc.sample or 0)}", exc.mismatch, chunk * CHUNK + (exc.sample or 0)
            ) from None
        iters = max(iters, it)
        mag = np.abs(v) - base_mag
        out[key] = mag
        if key == "all":
            out["_complex"] = v - base_v
    out["_iters"] = iters
    if keep:
        out["_ds"] = ds
    return out


def run_study(net: NetworkModel, scenario: ScenarioSpec, cfg: MCConfig, keys=None, keep_records: bool = False) -> MCStudy:
    """Run the Monte-Carlo baseline with common random numbers.

    Every configuration (all actors, and each actor held at its mean) reuses
    the same power-change draws, so variance reductions are paired.
    """
    if not scenario.actors:
        raise ScenarioError("no actors defined")
    scenario.validate(net)
    solver = SweepSolver(net, cfg.tolerance, cfg.max_iterations)
    mean, cov = assemble_covariance(scenario)
    factor = covariance_factor(cov)

    # inject[k] maps stacked coordinate k onto a complex (bus, phase) load.
    inject = np.zeros((mean.size, len(solver.order), 3), dtype=complex)
    for j, a in enumerate(scenario.actors):
        bi = solver.index[a.bus]
        for p in a.phases:
            h = PHASE_INDEX[p]
            inject[6 * j + 2 * h, bi, h] = 1.0
            inject[6 * j + 2 * h + 1, bi, h] = 1j
    base_v, _, _ = solver.solve(solver.base_loads)

    keys = ["all"] + (scenario.actor_ids if keys is None else list(keys))
    chunks = [(c, min(CHUNK, cfg.samples - c * CHUNK)) for c in range((cfg.samples + CHUNK - 1) // CHUNK)]

    def job(ch):
        c, n = ch
        return _run_chunk(solver, scenario, factor, mean, inject, base_v, cfg.seed, c, n, keys, keep_records)

    workers = _workers(cfg)
    if workers > 1 and len(chunks) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(job, chunks))
    else:
        parts = [job(ch) for ch in chunks]

    variance = {}
    for key in keys:
        mags = np.concatenate([p[key] for p in parts])
        variance[key] = mags.var(axis=0, ddof=1) if len(mags) > 1 else np.zeros(mags.shape[1:])
    dv = np.concatenate([p["_complex"] for p in parts])
    parts_ri = np.stack([dv.real, dv.imag], axis=-1)
    cmean = parts_ri.mean(axis=0)
    centred = parts_ri - cmean
    denom = max(len(dv) - 1, 1)
    ccov = np.einsum("nbpi,nbpj->bpij", centred, centred) / denom
    records = None
    if keep_records:
        records = {"ds": np.concatenate([p["_ds"] for p in parts]), "dv_mag": np.concatenate([p["all"] for p in parts])}
    iters = max(p["_iters"] for p in parts)
    log.debug("MC study: %d samples, %d configurations, max %d sweep iterations", cfg.samples, len(keys), iters)
    return MCStudy(net, scenario, cfg, solver.order, base_v, variance, cmean[..., 0] + 1j * cmean[..., 1], ccov, iters, records)


def mc_voltage_variance(net: NetworkModel, o: str, scenario: ScenarioSpec, cfg: MCConfig) -> dict:
    """Per-phase variance of ``|dV|`` and 2x2 ``(dV^r, dV^i)`` covariance at bus ``o``."""
    net.bus(o)
    return run_study(net, scenario, cfg, keys=[]).voltage_statistics(o)


def mc_rank_actors(net: NetworkModel, o: str, phase: str, scenario: ScenarioSpec, cfg: MCConfig) -> RankingResult:
    """Rank actors at ``(o, phase)`` by the drop in ``|dV|`` variance when each is held fixed."""
    net.bus(o)
    return run_study(net, scenario, cfg).ranking(o, phase)


def write_sample_records(path, study: MCStudy, observations=None) -> None:
    """Write per-sample power changes and ``|dV|`` (all actors) as CSV."""
    if study.records is None:
        raise ValueError("study was run without keep_records=True")
    net, scenario = study.net, study.scenario
    points = observations or [(b, p) for b in net.bus_ids if b != net.source for p in net.bus(b).phases]
    header = ["sample"]
    cols = []
    for k, a in enumerate(scenario.actors):
        for p in a.phases:
            h = PHASE_INDEX[p]
            header += [f"dP_{a.bus}{p}", f"dQ_{a.bus}{p}"]
            cols += [6 * k + 2 * h, 6 * k + 2 * h + 1]
    header += [f"dVmag_{b}{p}" for b, p in points]
    idx = [(study.order.index(b), PHASE_INDEX[p]) for b, p in points]
    ds, mag = study.records["ds"], study.records["dv_mag"]
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for n in range(ds.shape[0]):
            w.writerow([n] + [repr(float(ds[n, c])) for c in cols] + [repr(float(mag[n, i, p])) for i, p in idx])


__all__ = [
    "PHASES",
    "LoadFlowError",
    "LoadFlowSolution",
    "MCConfig",
    "MCStudy",
    "SweepSolver",
    "chunk_rng",
    "covariance_factor",
    "mc_rank_actors",
    "mc_voltage_variance",
    "power_balance_mismatch",
    "run_study",
    "sample_power_changes",
    "solve_load_flow",
    "split_by_actor",
    "write_sample_records",
]
