"""Outer decomposition loop: primal power solves alternating with the grouping master."""

from __future__ import annotations

import csv
import hashlib
import math
import time
from dataclasses import dataclass, field, replace

import numpy as np

from .beamform import MRT, ZF, BeamformStats, FrameOverflow, InfeasiblePrecoder, gamma_targets, mrt_stats, zf_stats
from .channel import Grouping, estimation_variance
from .master import EBSA, FEASIBILITY, GFSA, OPTIMALITY, Cut, SizeModel, gbma
from .primal import PowerAllocation, PrimalOutcome, solve_power
from .scenario import InvalidInput, QosTargets, RadioConfig, Scenario


@dataclass(frozen=True)
class GbdConfig:
    num_groups: int = 4
    delta: float = 1e-9
    max_iterations: int | None = None  # None means N
    beamforming: str = MRT
    search: str = EBSA
    primal_tol: float = 1e-8
    zf_samples: int = 200
    zf_seed: int = 0
    stall_iterations: int = 3
    cut_model: str = "resize"  # or "frozen"; ZF always uses frozen cuts
    master_starts: int = 3  # extra random starting groupings for each master solve

    def __post_init__(self):
        if self.num_groups < 1:
            raise InvalidInput("num_groups must be >= 1")
        if not self.delta > 0:
            raise InvalidInput("delta must be positive")
        if self.max_iterations is not None and self.max_iterations < 1:
            raise InvalidInput("max_iterations must be >= 1")
        if self.beamforming not in (MRT, ZF):
            raise InvalidInput(f"unknown beamforming {self.beamforming!r}")
        if self.search not in (EBSA, GFSA):
            raise InvalidInput(f"unknown loop search {self.search!r}")
        if not self.primal_tol > 0:
            raise InvalidInput("primal tolerance must be positive")
        if self.master_starts < 0:
            raise InvalidInput("master_starts must be >= 0")
        if self.cut_model not in ("resize", "frozen"):
            raise InvalidInput(f"unknown cut model {self.cut_model!r}")

    def replace(self, **changes) -> "GbdConfig":
        return replace(self, **changes)


@dataclass
class IterationRecord:
    iteration: int
    grouping: Grouping
    status: str
    objective: float  # P_t if feasible, violation otherwise
    upper: float  # running minimum of feasible objectives
    master_bound: float  # raw xi from the master, nan if none
    lower: float  # running maximum of master bounds
    cut_kind: str
    moves: int
    wall_ms: float


def grouping_hash(grouping: Grouping) -> str:
    key = ",".join(map(str, grouping.canonical_key()))
    return hashlib.sha1(key.encode()).hexdigest()[:12]


@dataclass
class GbdTrace:
    records: list = field(default_factory=list)
    stop_reason: str = ""

    def __len__(self):
        return len(self.records)

    @property
    def upper(self) -> np.ndarray:
        return np.array([r.upper for r in self.records])

    @property
    def lower(self) -> np.ndarray:
        return np.array([r.lower for r in self.records])

    def to_csv(self, path, timing: bool = True) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["iteration", "b_u", "b_l", "status", "grouping_hash", "objective", "master_bound", "cut", "wall_ms"])
            for r in self.records:
                w.writerow([
                    r.iteration, repr(r.upper), repr(r.lower), r.status, grouping_hash(r.grouping),
                    repr(r.objective), repr(r.master_bound), r.cut_kind, f"{r.wall_ms if timing else 0.0:.3f}",
                ])


@dataclass
class JointSolution:
    grouping: Grouping
    power: PowerAllocation | None
    total_power_w: float
    gap: float
    iterations: int
    feasible: bool
    gamma: np.ndarray | None = None
    bstats: BeamformStats | None = None
    outcome: PrimalOutcome | None = None


def initial_grouping(n: int, g: int) -> Grouping:
    """Round robin: user ``k`` (1-based) goes to group ``mod(k, g) + 1``."""
    if n < 1 or g < 1:
        raise InvalidInput(f"need n, g >= 1, got n={n}, g={g}")
    return Grouping(np.arange(1, n + 1) % g, g)


def beamform_stats(scenario: Scenario, grouping: Grouping, config: GbdConfig, radio: RadioConfig | None = None):
    """Coefficients for every (group, AP, user), as cuts require."""
    radio = radio or scenario.config
    stats = estimation_variance(scenario, grouping, radio, fill="all")
    if config.beamforming == MRT:
        return mrt_stats(stats, scenario)
    return zf_stats(scenario, grouping, stats, radio, num_samples=config.zf_samples, seed=config.zf_seed)


def size_model(scenario: Scenario, qos: QosTargets, config: GbdConfig, radio: RadioConfig | None = None):
    if config.beamforming != MRT or config.cut_model != "resize":
        return None
    radio = radio or scenario.config
    return SizeModel(
        scenario.beta, scenario.noise_power, radio.pilot_power_w, radio.pilot_factor, radio.coherence_len,
        qos.target_rate_bps / radio.bandwidth_hz, config.num_groups,
    )


def solve_fixed_grouping(scenario: Scenario, qos: QosTargets, grouping: Grouping, config: GbdConfig,
                         radio: RadioConfig | None = None) -> JointSolution:
    """Single primal solve at a given grouping."""
    radio = radio or scenario.config
    bs = beamform_stats(scenario, grouping, config, radio)
    gamma = gamma_targets(qos, radio, grouping)
    out = solve_power(bs, grouping, gamma, tol=config.primal_tol)
    power = out.objective if out.feasible else math.inf
    return JointSolution(grouping, out.q, power, 0.0, 1, out.feasible, gamma, bs, out)


def gpga(scenario: Scenario, qos: QosTargets, config: GbdConfig, radio: RadioConfig | None = None):
    """Joint power allocation and grouping; returns ``(JointSolution, GbdTrace)``.

    Stops when the bound gap is within ``delta``, the upper bound has not
    moved for ``stall_iterations`` feasible iterations, the master proposes
    a grouping already solved, or the iteration cap is hit. When the master
    cannot satisfy its feasibility cuts, the grouping it got closest with is
    still solved if it is new.
    """
    radio = radio or scenario.config
    N = scenario.num_users
    if len(qos) != N:
        raise InvalidInput("QoS vector length differs from the number of users")
    G = config.num_groups
    cap = config.max_iterations or N
    x = initial_grouping(N, G)
    cuts: list[Cut] = []
    visited: set = set()
    trace = GbdTrace()
    sizing = size_model(scenario, qos, config, radio)
    b_u, b_l = math.inf, -math.inf
    best: JointSolution | None = None
    stall = 0
    for k in range(1, cap + 1):
        t0 = time.perf_counter()
        try:
            sol = solve_fixed_grouping(scenario, qos, x, config, radio)
        except (FrameOverflow, InfeasiblePrecoder):
            if k == 1:
                raise
            # frozen ZF cuts cannot see pilot overflow or AP shortage
            trace.stop_reason = "invalid-grouping"
            break
        out = sol.outcome
        visited.add(x.canonical_key())
        if out.feasible:
            cuts.append(Cut(OPTIMALITY, out.q, out.duals, sol.bstats, sol.gamma, sizing))
            if out.objective < b_u:
                stall = 0 if not math.isfinite(b_u) or out.objective < b_u * (1 - 1e-12) else stall + 1
                b_u = out.objective
                best = sol
            else:
                stall += 1
        else:
            cuts.append(Cut(FEASIBILITY, out.q, out.duals, sol.bstats, sol.gamma, sizing))
        rng = np.random.default_rng([N, G, k])
        starts = [Grouping(rng.integers(0, G, size=N), G) for _ in range(config.master_starts)]
        master = gbma(cuts, x, config.search, starts=starts)
        xi = master.bound
        if master.status == "ok" and not math.isnan(xi):
            b_l = max(b_l, xi)
        rec = IterationRecord(
            k, x, out.status, out.objective, b_u, xi, b_l, cuts[-1].kind, master.moves,
            (time.perf_counter() - t0) * 1e3,
        )
        trace.records.append(rec)
        if master.status != "ok":
            # The cuts freeze q, so a grouping they still call infeasible may
            # well be feasible; try the master's best effort once.
            if master.grouping.canonical_key() in visited:
                trace.stop_reason = "master-infeasible"
                break
            x = master.grouping
            continue
        if b_u - b_l <= config.delta:
            trace.stop_reason = "gap"
            break
        if out.feasible and stall >= config.stall_iterations:
            trace.stop_reason = "stalled"
            break
        if master.grouping.canonical_key() in visited:
            trace.stop_reason = "revisit"
            break
        x = master.grouping
    else:
        trace.stop_reason = "iteration-cap"
    iters = len(trace)
    if best is None:
        last = trace.records[-1]
        return JointSolution(last.grouping, None, math.inf, math.inf, iters, False), trace
    gap = b_u - b_l
    return JointSolution(best.grouping, best.power, b_u, gap, iters, True, best.gamma, best.bstats, best.outcome), trace
