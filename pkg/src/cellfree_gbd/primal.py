"""Fixed-grouping power minimisation, its violation relaxation and the two partial Lagrangians.

With the grouping fixed, users only interact inside their own group, so the
power program splits into one small SOCP per group. The violation problem
couples groups only through the common ``phi``; its optimum is the worst
group's phase-one value and the multipliers live on that group alone.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .beamform import MRT, ZF, BeamformStats
from .channel import Grouping
from .conic import ConicResult, NumericalFailure, SocProblem, solve_soc
from .scenario import InvalidInput

FEASIBLE = "feasible"
INFEASIBLE = "infeasible"


@dataclass(frozen=True, eq=False)
class PowerAllocation:
    """Amplitudes ``q[m, n] = sqrt(p[m, n])``; ZF ties every column to one value."""

    q: np.ndarray
    mode: str = MRT

    def __post_init__(self):
        q = np.asarray(self.q, dtype=float)
        if np.any(q < 0):
            raise InvalidInput("power amplitudes must be nonnegative")
        if self.mode == ZF and q.size and not np.allclose(q, q[:1], rtol=1e-12, atol=0.0):
            raise InvalidInput("ZF amplitudes must be equal across APs for each user")
        object.__setattr__(self, "q", q)

    @property
    def p(self) -> np.ndarray:
        return self.q**2


@dataclass(frozen=True, eq=False)
class PrimalOutcome:
    status: str
    q: PowerAllocation
    objective: float
    duals: np.ndarray
    kkt_residual: float
    group_results: dict = field(default_factory=dict)
    boundary: bool = False

    @property
    def feasible(self) -> bool:
        return self.status == FEASIBLE


def transmit_power(q, grouping: Grouping, bstats: BeamformStats) -> float:
    q = np.asarray(q, dtype=float)
    n = np.arange(grouping.num_users)
    return float(np.sum(q**2 * bstats.phi[grouping.group_of][n, :, n].T))


def soc_slacks(q, grouping: Grouping, bstats: BeamformStats, gamma) -> np.ndarray:
    """``sqrt(gamma_n) sqrt(sigma^2 + interference_n) - signal_n`` for every user."""
    q = np.asarray(q, dtype=float)
    gamma = np.asarray(gamma, dtype=float)
    out = np.zeros(grouping.num_users)
    q2 = q**2
    for g in range(grouping.num_groups):
        members = grouping.members(g)
        if members.size == 0:
            continue
        interf = bstats.interference(g, q2, members)
        out[members] = np.sqrt(gamma[members] * (bstats.noise_power + interf)) - bstats.signal(g, q, members)
    return out


def lagrangian(q, lam, grouping: Grouping, bstats: BeamformStats, gamma) -> float:
    """Objective plus multiplier-weighted SOC slacks, for any grouping."""
    lam = np.asarray(lam, dtype=float)
    if np.any(lam < 0):
        raise InvalidInput("multipliers must be nonnegative")
    return transmit_power(q, grouping, bstats) + float(lam @ soc_slacks(q, grouping, bstats, gamma))


def lagrangian_infeasible(q, nu, grouping: Grouping, bstats: BeamformStats, gamma) -> float:
    """Multiplier-weighted SOC slacks without the objective term."""
    nu = np.asarray(nu, dtype=float)
    if np.any(nu < 0):
        raise InvalidInput("multipliers must be nonnegative")
    return float(nu @ soc_slacks(q, grouping, bstats, gamma))


def group_problem(bstats: BeamformStats, grouping: Grouping, gamma, g: int):
    """Build the group-``g`` SOCP over users with a positive target.

    Returns ``(problem, active_users)``; ``problem`` is None when no user of
    the group needs power.
    """
    gamma = np.asarray(gamma, dtype=float)
    members = grouping.members(g)
    active = members[gamma[members] > 0]
    if active.size == 0:
        return None, active
    M = bstats.num_aps
    U = active.size
    if bstats.mode == MRT:
        # variable index a * M + m  <->  q[m, active[a]]
        weight = bstats.phi[g][:, active].T.reshape(-1)
        a_g = bstats.alpha[g][:, active]  # M x U
        quad = np.einsum("mj,mi->jim", bstats.beta[:, active], a_g).reshape(U, U * M)
        lin = np.zeros((U, U * M))
        for j in range(U):
            lin[j, j * M:(j + 1) * M] = bstats.theta[g][:, active[j]]
    else:
        weight = bstats.phi[g][:, active].sum(axis=0)
        quad = bstats.eta[g][np.ix_(active, active)].copy()
        lin = np.diag(bstats.theta[g][:, active].sum(axis=0))
    prob = SocProblem(weight, bstats.noise_power, gamma[active], quad, lin)
    return prob, active


def _scatter(q, z, active, mode, M):
    if mode == MRT:
        q[:, active] = z.reshape(active.size, M).T
    else:
        q[:, active] = z[None, :]


def solve_power(
    bstats: BeamformStats,
    grouping: Grouping,
    gamma,
    tol: float = 1e-8,
    infeasibility_threshold: float = 1e-7,
    dump_path=None,
) -> PrimalOutcome:
    """Minimise transmit power for a fixed grouping, or the common violation if infeasible."""
    gamma = np.asarray(gamma, dtype=float)
    if not np.all(np.isfinite(gamma)):
        raise InvalidInput("SINR targets must be finite")
    if not tol > 0:
        raise InvalidInput("tolerance must be positive")
    M, N = bstats.num_aps, grouping.num_users
    results: dict[int, tuple[ConicResult, np.ndarray]] = {}
    dumps = []
    for g in range(grouping.num_groups):
        prob, active = group_problem(bstats, grouping, gamma, g)
        if prob is None:
            continue
        if dump_path is not None:
            dumps.append(f"# group {g} users {active.tolist()}\n" + prob.dump())
        try:
            res = solve_soc(prob, tol=tol, infeasibility_threshold=infeasibility_threshold)
        except NumericalFailure as exc:
            exc.args = (f"group {g}: {exc.args[0]}",)
            raise
        results[g] = (res, active)
    if dump_path is not None:
        Path(dump_path).write_text("".join(dumps))

    q = np.zeros((M, N))
    duals = np.zeros(N)
    infeasible = {g: r for g, (r, _) in results.items() if r.status == "infeasible"}
    kkt = max((r.kkt_residual for r, _ in results.values()), default=0.0)
    for g, (res, active) in results.items():
        _scatter(q, np.abs(res.z), active, bstats.mode, M)
    if not infeasible:
        for res, active in results.values():
            duals[active] = res.duals
        objective = transmit_power(q, grouping, bstats)
        boundary = any(r.boundary for r, _ in results.values())
        return PrimalOutcome(FEASIBLE, PowerAllocation(q, bstats.mode), objective, duals, kkt, results, boundary)
    worst = max(infeasible, key=lambda g: infeasible[g].violation)
    res, active = results[worst]
    duals[active] = res.duals
    return PrimalOutcome(
        INFEASIBLE, PowerAllocation(q, bstats.mode), res.violation, duals, kkt, results,
    )
