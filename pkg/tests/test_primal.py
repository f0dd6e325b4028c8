import numpy as np
import pytest
from oracles import cvxpy_soc, slsqp_soc

from cellfree_gbd.beamform import MRT, ZF, mrt_stats, zf_stats
from cellfree_gbd.channel import ChannelStats, Grouping, estimation_variance
from cellfree_gbd.primal import (
    PowerAllocation,
    group_problem,
    lagrangian,
    lagrangian_infeasible,
    soc_slacks,
    solve_power,
    transmit_power,
)
from cellfree_gbd.scenario import InvalidInput, RadioConfig, Scenario, generate_scenario

CFG = RadioConfig(area_km=1.04)


def _mrt(sc, x):
    return mrt_stats(estimation_variance(sc, x, CFG, fill="all"), sc)


def test_zero_targets_need_no_power():
    sc = generate_scenario(CFG, 3, 4, 0)
    x = Grouping([0, 1, 0, 1], 2)
    out = solve_power(_mrt(sc, x), x, np.zeros(4))
    assert out.feasible
    assert out.objective == 0.0
    assert not out.q.q.any() and not out.duals.any()


def test_single_link_closed_form():
    beta, alpha, noise = 2e-10, 1.5e-10, 8e-14
    sc = Scenario(None, None, np.array([[beta]]), config=CFG)
    bs = mrt_stats(ChannelStats(np.array([[[alpha]]]), np.array([1]), noise), sc)
    x = Grouping([0], 1)
    gamma = 0.4
    out = solve_power(bs, x, np.array([gamma]))
    p_star = gamma * noise / (alpha * (alpha - gamma * beta))
    assert out.feasible
    assert out.q.p[0, 0] == pytest.approx(p_star, rel=1e-7)
    # alpha <= gamma beta: no power is enough
    out = solve_power(bs, x, np.array([alpha / beta * 1.01]))
    assert not out.feasible


def test_small_instance_matches_independent_solvers():
    sc = generate_scenario(CFG, 4, 3, 12)
    x = Grouping([0, 0, 0], 1)
    bs = _mrt(sc, x)
    gamma = np.array([0.3, 0.5, 0.2])
    out = solve_power(bs, x, gamma)
    prob, _ = group_problem(bs, x, gamma, 0)
    _, ref, _ = cvxpy_soc(prob)
    fo, _ = slsqp_soc(prob)
    assert out.objective == pytest.approx(ref, rel=1e-6)
    assert out.objective == pytest.approx(fo, rel=1e-4)


def test_lagrangian_identities():
    sc = generate_scenario(CFG, 6, 6, 5)
    x = Grouping([0, 1, 0, 1, 0, 1], 2)
    bs = _mrt(sc, x)
    gamma = np.full(6, 0.3)
    out = solve_power(bs, x, gamma)
    assert out.feasible
    q = out.q.q
    assert lagrangian(q, np.zeros(6), x, bs, gamma) == transmit_power(q, x, bs)
    assert lagrangian(q, out.duals, x, bs, gamma) == pytest.approx(out.objective, rel=1e-7)
    assert lagrangian_infeasible(q, np.zeros(6), x, bs, gamma) == 0.0
    assert np.all(soc_slacks(q, x, bs, gamma) <= 1e-9 * np.sqrt(bs.noise_power))
    with pytest.raises(InvalidInput):
        lagrangian(q, -np.ones(6), x, bs, gamma)


def test_violation_problem_strong_duality():
    sc = generate_scenario(CFG, 4, 6, 5)
    x = Grouping([0, 0, 0, 0, 1, 1], 2)
    bs = _mrt(sc, x)
    gamma = np.full(6, 6.0)
    out = solve_power(bs, x, gamma)
    assert not out.feasible
    assert out.duals.sum() == pytest.approx(1.0, abs=1e-6)
    # multipliers live on the worst group only
    groups = {int(x.group_of[n]) for n in np.flatnonzero(out.duals > 1e-12)}
    assert len(groups) == 1
    val = lagrangian_infeasible(out.q.q, out.duals, x, bs, gamma)
    assert val == pytest.approx(out.objective, rel=1e-5)


def test_zf_primal_ties_amplitudes():
    sc = generate_scenario(CFG, 8, 6, 9)
    x = Grouping([0, 1, 0, 1, 0, 1], 2)
    stats = estimation_variance(sc, x, CFG, fill="all")
    bs = zf_stats(sc, x, stats, CFG, num_samples=200, seed=1)
    gamma = np.full(6, 0.3)
    out = solve_power(bs, x, gamma)
    assert out.feasible and out.q.mode == ZF
    assert np.allclose(out.q.q, out.q.q[:1])
    prob, _ = group_problem(bs, x, gamma, 0)
    _, ref, _ = cvxpy_soc(prob)
    obj0 = sum(float(out.q.p[0, n] * bs.phi[0, :, n].sum()) for n in x.members(0))
    assert obj0 == pytest.approx(ref, rel=1e-6)


def test_power_allocation_guards():
    with pytest.raises(InvalidInput):
        PowerAllocation(np.array([[-1.0]]))
    with pytest.raises(InvalidInput):
        PowerAllocation(np.array([[1.0], [2.0]]), ZF)
    assert PowerAllocation(np.array([[2.0]]), MRT).p[0, 0] == 4.0


def test_dump(tmp_path):
    sc = generate_scenario(CFG, 3, 4, 0)
    x = Grouping([0, 1, 0, 1], 2)
    solve_power(_mrt(sc, x), x, np.full(4, 0.2), dump_path=tmp_path / "p.txt")
    text = (tmp_path / "p.txt").read_text()
    assert text.count("# group") == 2


def test_non_finite_targets_rejected():
    sc = generate_scenario(CFG, 3, 2, 0)
    x = Grouping([0, 1], 2)
    with pytest.raises(InvalidInput):
        solve_power(_mrt(sc, x), x, np.array([np.inf, 0.1]))
