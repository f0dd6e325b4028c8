"""Independent reference computations used only by the tests."""

import numpy as np
from scipy.optimize import minimize


def sinr_transcription(q, grouping, alpha_all, beta, noise, n):
    """MRT SINR written out term by term from the lower-bound expression."""
    M = beta.shape[0]
    g = grouping.group_of[n]
    num = 0.0
    for m in range(M):
        num += q[m, n] * alpha_all[g, m, n]
    num = num**2
    den = noise
    for i in range(grouping.num_users):
        if grouping.group_of[i] != g:
            continue
        for m in range(M):
            den += q[m, i] ** 2 * beta[m, n] * alpha_all[g, m, i]
    return num / den


def mean_interference_loops(p, grouping, alpha_all, beta):
    M, N = beta.shape
    total = 0.0
    for n in range(N):
        g = grouping.group_of[n]
        for i in range(N):
            if grouping.group_of[i] != g:
                continue
            for m in range(M):
                total += p[m, i] * beta[m, n] * alpha_all[g, m, i]
    return total / N


def cvxpy_soc(prob):
    """Same program through cvxpy/Clarabel; returns ``(status, objective, z)``.

    Variables are rescaled to unit objective weights and the cones divided by
    the noise amplitude, which keeps Clarabel away from 1e-13-sized data.
    """
    import cvxpy as cp

    n = prob.num_vars
    sw = np.sqrt(prob.obj_weight)
    sigma = np.sqrt(prob.noise)
    Q = prob.quad / (prob.noise * prob.obj_weight[None, :])
    C = prob.lin / (sigma * sw[None, :])
    y = cp.Variable(n)
    cons = []
    for j in range(prob.num_cons):
        stack = cp.hstack([1.0, cp.multiply(np.sqrt(Q[j]), y)])
        cons.append(np.sqrt(prob.gamma[j]) * cp.norm(stack, 2) <= C[j] @ y)
    p = cp.Problem(cp.Minimize(cp.sum_squares(y)), cons)
    p.solve(solver=cp.CLARABEL)
    if p.status not in ("optimal", "optimal_inaccurate"):
        return p.status, np.inf, None
    return "optimal", float(p.value), y.value / sw


def _scaled(prob):
    sw = np.sqrt(prob.obj_weight)
    sigma = np.sqrt(prob.noise)
    Q = prob.quad / (prob.noise * prob.obj_weight[None, :])
    C = prob.lin / (sigma * sw[None, :])
    return np.sqrt(prob.gamma), Q, C, sigma


def phase_one_first_order(prob, iters=6):
    """Common violation ``min_y max_j s_j(y)`` by gradient-only smoothing.

    Log-sum-exp smoothing of the max with a shrinking temperature, each stage
    minimised with L-BFGS from the previous point. Returns the attained
    ``max_j`` violation in original units, an upper bound on the optimum.
    """
    sg, Q, C, sigma = _scaled(prob)
    n = prob.num_vars

    def slack(y):
        r = np.sqrt(1.0 + Q @ y**2)
        return sg * r - C @ y, r

    def lse(y, T):
        f, r = slack(y)
        top = f.max()
        e = np.exp((f - top) / T)
        val = top + T * np.log(e.sum())
        w = e / e.sum()
        grad = ((w * sg / r) @ (Q * y[None, :])) - w @ C
        return val, grad

    y = np.ones(n) * 0.1
    best = (slack(y)[0].max(), y)
    T = 1.0
    for _ in range(iters):
        res = minimize(lse, y, args=(T,), jac=True, method="L-BFGS-B", options={"maxiter": 5000, "gtol": 1e-12, "ftol": 1e-15})
        y = res.x
        v = slack(y)[0].max()
        if v < best[0]:
            best = (v, y)
        T *= 0.1
    return best[0] * sigma


def slsqp_soc(prob):
    """Minimum power by SLSQP on the scaled variables; returns ``(objective, z)``."""
    sg, Q, C, sigma = _scaled(prob)
    n = prob.num_vars

    def cons(y):
        return -(sg * np.sqrt(1.0 + Q @ y**2) - C @ y)

    y0 = np.ones(n)
    while np.any(cons(y0) < 0) and y0[0] < 1e8:
        y0 *= 2.0
    res = minimize(lambda y: y @ y, y0, jac=lambda y: 2 * y, constraints=[{"type": "ineq", "fun": cons}],
                   method="SLSQP", options={"maxiter": 1000, "ftol": 1e-14})
    z = res.x / np.sqrt(prob.obj_weight)
    return float(np.sum(prob.obj_weight * z**2)), z
