"""Reference groupings, the exhaustive oracle and comparison metrics."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .beamform import BeamformStats, gamma_targets, sinr_all
from .channel import Grouping, estimation_variance
from .conic import solve_soc
from .gbd import GbdConfig, JointSolution, beamform_stats, gpga, initial_grouping, solve_fixed_grouping
from .primal import group_problem
from .scenario import InvalidInput, QosTargets, RadioConfig, Scenario, watts_to_dbm

BRUTE_FORCE_LIMIT = 100_000


@dataclass(frozen=True, eq=False)
class MetricsReport:
    total_power_w: float
    total_power_dbm: float
    mean_interference: float
    interference_mode: str
    sinr_margin: np.ndarray
    group_sizes: np.ndarray


def random_grouping(n: int, g: int, seed) -> Grouping:
    if n < 1 or g < 1:
        raise InvalidInput(f"need n, g >= 1, got n={n}, g={g}")
    return Grouping(np.random.default_rng(seed).integers(0, g, size=n), g)


def mean_interference(bstats: BeamformStats, grouping: Grouping, power) -> float:
    """Average over users of the in-group interference power they receive.

    For MRT this is ``(1/N) sum_n sum_{i in g_n} sum_m p[m, i] beta[m, n] alpha[g, m, i]``.
    With ZF stats the leakage-weighted analogue ``sum_i eta[g, n, i] p_i`` is
    returned instead (an extension; ``p_i`` is the per-AP power of user ``i``).
    """
    p = np.asarray(power, dtype=float)
    total = 0.0
    for g in range(grouping.num_groups):
        members = grouping.members(g)
        if members.size:
            total += float(bstats.interference(g, p, members).sum())
    return total / grouping.num_users


def single_user_power(alpha, beta, gamma: float, noise: float) -> float:
    """Least MRT power that meets ``gamma`` for a user served alone.

    With ``c = sqrt(alpha)`` the answer is ``gamma sigma^2 / lambda_max(c c^T - gamma diag(beta))``,
    or infinity when that eigenvalue is not positive.
    """
    if gamma <= 0:
        return 0.0
    c = np.sqrt(np.asarray(alpha, dtype=float))
    top = np.linalg.eigvalsh(np.outer(c, c) - gamma * np.diag(beta))[-1]
    return gamma * noise / top if top > 0 else math.inf


def metrics(solution: JointSolution) -> MetricsReport:
    x = solution.grouping
    if not solution.feasible:
        nan = np.full(x.num_users, np.nan)
        return MetricsReport(math.inf, math.inf, math.nan, "", nan, x.sizes)
    p = solution.power.p
    s = sinr_all(solution.bstats, x, solution.power.q)
    with np.errstate(divide="ignore", invalid="ignore"):
        margin = np.where(solution.gamma > 0, s / solution.gamma - 1.0, np.inf)
    return MetricsReport(
        solution.total_power_w,
        float(watts_to_dbm(solution.total_power_w)) if solution.total_power_w > 0 else -math.inf,
        mean_interference(solution.bstats, x, p),
        solution.bstats.mode,
        margin,
        x.sizes,
    )


def _capacities(n: int, g: int) -> np.ndarray:
    cap = np.full(g, n // g)
    cap[: n % g] += 1
    return cap


def gale_shapley_preferences(scenario: Scenario, qos: QosTargets, num_groups: int, radio: RadioConfig | None = None):
    """Fixed preference data for deferred acceptance.

    Users rank groups by the interference they would receive from the
    round-robin members of each group, each member radiating its own
    single-user MRT power. Groups rank users by that single-user power,
    lower first. Returns ``(user_rank, user_cost, power)`` where
    ``user_rank[n]`` lists groups from most to least preferred.
    """
    radio = radio or scenario.config
    N, G = scenario.num_users, num_groups
    seed = initial_grouping(N, G)
    stats = estimation_variance(scenario, seed, radio)
    gamma = gamma_targets(qos, radio, seed)
    beta = scenario.beta
    alpha = stats.alpha[seed.group_of, :, np.arange(N)].T  # M x N, own group
    power = np.array([single_user_power(alpha[:, n], beta[:, n], gamma[n], stats.noise_power) for n in range(N)])
    # per-AP split of the single-user power along its optimal direction
    finite = np.where(np.isfinite(power), power, 0.0)
    share = alpha / alpha.sum(axis=0, keepdims=True)
    load = finite[None, :] * share * alpha  # p[m, i] alpha[m, i]
    cost = np.zeros((N, G))
    for g in range(G):
        members = seed.members(g)
        contrib = beta.T @ load[:, members]  # [n, i]
        cost[:, g] = contrib.sum(axis=1)
        own = np.isin(np.arange(N), members)
        cost[own, g] -= (beta.T * load.T).sum(axis=1)[own]
    rank = np.argsort(cost, axis=1, kind="stable")
    return rank, cost, power


def gale_shapley_grouping(scenario: Scenario, qos: QosTargets, config: GbdConfig,
                          radio: RadioConfig | None = None) -> Grouping:
    """User-proposing deferred acceptance with balanced capacities."""
    N, G = scenario.num_users, config.num_groups
    rank, _, power = gale_shapley_preferences(scenario, qos, G, radio)
    cap = _capacities(N, G)
    # group priority: lower single-user power first, index breaks ties
    priority = np.lexsort((np.arange(N), power))
    pos = np.empty(N, dtype=np.int64)
    pos[priority] = np.arange(N)
    nxt = np.zeros(N, dtype=np.int64)
    held = [[] for _ in range(G)]
    free = list(range(N))
    while free:
        n = free.pop(0)
        g = int(rank[n, nxt[n]])
        nxt[n] += 1
        held[g].append(n)
        if len(held[g]) > cap[g]:
            held[g].sort(key=lambda u: pos[u])
            free.append(held[g].pop())
    labels = np.empty(N, dtype=np.int64)
    for g, users in enumerate(held):
        labels[users] = g
    return Grouping(labels, G)


def no_grouping_solution(scenario: Scenario, qos: QosTargets, config: GbdConfig, radio: RadioConfig | None = None):
    """Everyone in one slot: one primal solve with ``tau = N``."""
    sol, _ = gpga(scenario, qos, config.replace(num_groups=1), radio)
    return sol, metrics(sol)


def _partitions(n: int, g: int):
    """Label vectors up to relabelling (restricted growth strings with at most ``g`` blocks)."""
    labels = [0] * n

    def rec(i, used):
        if i == n:
            yield tuple(labels)
            return
        for b in range(min(used + 1, g)):
            labels[i] = b
            yield from rec(i + 1, max(used, b + 1))

    yield from rec(1, 1) if n > 0 else iter(())


def brute_force_joint(scenario: Scenario, qos: QosTargets, config: GbdConfig,
                      radio: RadioConfig | None = None) -> JointSolution:
    """Global minimum over all groupings, each solved exactly by the primal."""
    radio = radio or scenario.config
    N, G = scenario.num_users, config.num_groups
    if G**N > BRUTE_FORCE_LIMIT:
        raise InvalidInput(f"{G}^{N} groupings exceed the enumeration limit of {BRUTE_FORCE_LIMIT}")
    cache: dict = {}

    def group_cost(members: tuple) -> float:
        if members in cache:
            return cache[members]
        labels = np.ones(N, dtype=np.int64)
        labels[list(members)] = 0
        local = Grouping(labels, 2 if len(members) < N else 1)
        sol_bs = beamform_stats(scenario, local, config.replace(num_groups=local.num_groups), radio)
        gamma = gamma_targets(qos, radio, local, num_groups=G)
        prob, _ = group_problem(sol_bs, local, gamma, 0)
        if prob is None:
            cost = 0.0
        else:
            res = solve_soc(prob, tol=config.primal_tol)
            cost = res.objective if res.status == "optimal" else math.inf
        cache[members] = cost
        return cost

    best_cost, best_labels = math.inf, None
    for labels in _partitions(N, G):
        arr = np.array(labels)
        total = 0.0
        for b in range(G):
            members = tuple(np.flatnonzero(arr == b).tolist())
            if members:
                total += group_cost(members)
            if total >= best_cost:
                break
        if total < best_cost:
            best_cost, best_labels = total, arr
    if best_labels is None:
        x = initial_grouping(N, G)
        return JointSolution(x, None, math.inf, 0.0, 0, False)
    x = Grouping(best_labels, G)
    sol = solve_fixed_grouping(scenario, qos, x, config, radio)
    return JointSolution(x, sol.power, sol.total_power_w, 0.0, 1, sol.feasible, sol.gamma, sol.bstats, sol.outcome)
