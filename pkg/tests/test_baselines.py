import itertools

import numpy as np
import pytest
from conftest import desk_instance
from oracles import mean_interference_loops

from cellfree_gbd.baselines import (
    BRUTE_FORCE_LIMIT,
    brute_force_joint,
    gale_shapley_grouping,
    gale_shapley_preferences,
    mean_interference,
    metrics,
    no_grouping_solution,
    random_grouping,
    single_user_power,
)
from cellfree_gbd.beamform import gamma_targets, mrt_stats
from cellfree_gbd.channel import ChannelStats, Grouping, estimation_variance
from cellfree_gbd.gbd import GbdConfig, gpga, solve_fixed_grouping
from cellfree_gbd.primal import solve_power
from cellfree_gbd.scenario import InvalidInput, QosTargets, Scenario


def test_random_grouping_basics():
    assert not random_grouping(5, 1, 0).group_of.any()
    x = random_grouping(9, 3, 4)
    assert np.all(x.x.sum(axis=0) == 1)
    assert random_grouping(9, 3, 4) == x


def test_random_group_sizes_are_multinomial():
    n, g, runs = 6, 3, 10_000
    counts = np.array([random_grouping(n, g, s).sizes for s in range(runs)])
    mean = counts.mean(axis=0)
    sd = np.sqrt(n * (1 / g) * (1 - 1 / g) / runs)
    assert np.all(np.abs(mean - n / g) <= 3 * sd)
    var = counts.var(axis=0)
    assert np.allclose(var, n * (1 / g) * (1 - 1 / g), rtol=0.1)


def test_gale_shapley_capacity_one_is_a_matching():
    sc, qos = desk_instance(0, m=8, n=4)
    x = gale_shapley_grouping(sc, qos, GbdConfig(num_groups=4))
    assert sorted(x.group_of.tolist()) == [0, 1, 2, 3]


@pytest.mark.parametrize("seed", range(5))
def test_gale_shapley_is_stable_and_balanced(seed):
    sc, qos = desk_instance(seed, m=10, n=11)
    G = 3
    x = gale_shapley_grouping(sc, qos, GbdConfig(num_groups=G))
    sizes = x.sizes
    assert sizes.max() - sizes.min() <= 1
    rank, _, power = gale_shapley_preferences(sc, qos, G)
    pos = np.empty((11, G), dtype=int)
    for n in range(11):
        pos[n, rank[n]] = np.arange(G)
    priority = np.lexsort((np.arange(11), power))
    order = np.empty(11, dtype=int)
    order[priority] = np.arange(11)
    for n in range(11):
        for g in range(G):
            if pos[n, g] >= pos[n, x.group_of[n]]:
                continue
            # n prefers g: every member of g must rank ahead of n
            members = x.members(g)
            assert np.all(order[members] < order[n])


def test_mean_interference_reductions(rng):
    sc, qos = desk_instance(1, m=3, n=4)
    x = Grouping([0, 1, 0, 0], 2)
    stats = estimation_variance(sc, x, fill="all")
    bs = mrt_stats(stats, sc)
    assert mean_interference(bs, x, np.zeros((3, 4))) == 0.0
    p = rng.uniform(0, 1, (3, 4))
    ref = mean_interference_loops(p, x, stats.alpha, sc.beta)
    assert mean_interference(bs, x, p) == pytest.approx(ref, rel=1e-12)
    single = Grouping([0], 1)
    sc1, _ = desk_instance(1, m=3, n=1)
    st1 = estimation_variance(sc1, single)
    p1 = rng.uniform(0, 1, (3, 1))
    own = float((p1[:, 0] * sc1.beta[:, 0] * st1.alpha[0][:, 0]).sum())
    assert mean_interference(mrt_stats(st1, sc1), single, p1) == pytest.approx(own)


def test_single_user_power_matches_primal():
    beta = np.array([2e-10, 5e-11, 1e-11])
    alpha = beta * 0.8
    noise, gamma = 8e-14, 0.6
    sc = Scenario(None, None, beta[:, None])
    bs = mrt_stats(ChannelStats(alpha[None, :, None], np.array([1]), noise), sc)
    out = solve_power(bs, Grouping([0], 1), np.array([gamma]))
    assert single_user_power(alpha, beta, gamma, noise) == pytest.approx(out.objective, rel=1e-7)
    assert np.isinf(single_user_power(alpha, beta, 100.0, noise))
    assert single_user_power(alpha, beta, 0.0, noise) == 0.0


def test_no_grouping_is_single_group_gpga():
    sc, qos = desk_instance(3, m=10, n=8)
    cfg = GbdConfig(num_groups=3)
    sol, rep = no_grouping_solution(sc, qos, cfg)
    ref, _ = gpga(sc, qos, cfg.replace(num_groups=1))
    assert sol.total_power_w == ref.total_power_w
    assert rep.total_power_dbm == pytest.approx(10 * np.log10(sol.total_power_w) + 30)
    # everyone shares one pilot block of length N, with G = 1 in the exponent
    rate = qos.target_rate_bps / sc.config.bandwidth_hz
    tc = sc.config.coherence_len
    assert np.allclose(sol.gamma, 2 ** (rate * tc / (tc - 8)) - 1)


def test_brute_force_single_user():
    sc, qos = desk_instance(0, m=4, n=1)
    cfg = GbdConfig(num_groups=2)
    bf = brute_force_joint(sc, qos, cfg)
    one = solve_fixed_grouping(sc, qos, Grouping([0], 2), cfg)
    assert bf.total_power_w == pytest.approx(one.total_power_w, rel=1e-9)


def test_brute_force_infeasible_and_guard():
    sc, _ = desk_instance(0, m=2, n=4)
    qos = QosTargets(np.full(4, 3e7))
    cfg = GbdConfig(num_groups=2)
    assert not brute_force_joint(sc, qos, cfg).feasible
    big, q2 = desk_instance(0, m=4, n=20)
    assert 4**20 > BRUTE_FORCE_LIMIT
    with pytest.raises(InvalidInput):
        brute_force_joint(big, q2, GbdConfig(num_groups=4))


def test_brute_force_agrees_with_full_enumeration():
    sc, qos = desk_instance(5, m=5, n=5)
    cfg = GbdConfig(num_groups=2)
    best = np.inf
    for lab in itertools.product(range(2), repeat=5):
        sol = solve_fixed_grouping(sc, qos, Grouping(np.array(lab), 2), cfg)
        best = min(best, sol.total_power_w)
    assert brute_force_joint(sc, qos, cfg).total_power_w == pytest.approx(best, rel=1e-8)


def test_metrics_report():
    sc, qos = desk_instance(2, m=8, n=6)
    sol, _ = gpga(sc, qos, GbdConfig(num_groups=2))
    rep = metrics(sol)
    assert rep.interference_mode == "MRT"
    assert np.all(rep.sinr_margin[np.isfinite(rep.sinr_margin)] >= -1e-5)
    assert rep.group_sizes.sum() == 6
    gamma = gamma_targets(qos, sc.config, sol.grouping)
    assert np.allclose(gamma, sol.gamma)
