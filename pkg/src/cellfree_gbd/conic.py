"""Primal-dual interior-point solver for diagonal second-order cone programs.

The problem family is

    minimize    sum_k w[k] z[k]^2
    subject to  sqrt(gamma[j]) * sqrt(noise + sum_k V[j, k] z[k]^2) - sum_k C[j, k] z[k] <= 0

for ``j = 1..m``. Because ``noise > 0`` every constraint is a smooth convex
function, so a primal-dual path-following method on the smooth form is used.
A phase-one problem (minimise a common violation ``phi``) either yields a
strictly feasible start or certifies infeasibility; its multipliers sum to
one at optimality.

Internally variables are rescaled to ``y = sqrt(w) * z`` and constraints are
divided by ``sqrt(noise)``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize


class NumericalFailure(RuntimeError):
    """The interior-point iteration hit its cap without meeting tolerances."""

    def __init__(self, message, best=None):
        super().__init__(message)
        self.best = best


@dataclass(frozen=True, eq=False)
class SocProblem:
    obj_weight: np.ndarray
    noise: float
    gamma: np.ndarray
    quad: np.ndarray
    lin: np.ndarray

    def __post_init__(self):
        w = np.asarray(self.obj_weight, dtype=float)
        gamma = np.asarray(self.gamma, dtype=float)
        quad = np.atleast_2d(np.asarray(self.quad, dtype=float))
        lin = np.atleast_2d(np.asarray(self.lin, dtype=float))
        if np.any(~np.isfinite(gamma)) or np.any(gamma < 0):
            raise ValueError("SINR targets must be finite and nonnegative")
        if np.any(w <= 0) or not self.noise > 0:
            raise ValueError("objective weights and noise must be positive")
        if quad.shape != (gamma.size, w.size) or lin.shape != quad.shape:
            raise ValueError("constraint data has inconsistent shapes")
        object.__setattr__(self, "obj_weight", w)
        object.__setattr__(self, "gamma", gamma)
        object.__setattr__(self, "quad", quad)
        object.__setattr__(self, "lin", lin)

    @property
    def num_vars(self) -> int:
        return self.obj_weight.size

    @property
    def num_cons(self) -> int:
        return self.gamma.size

    def slack(self, z) -> np.ndarray:
        """Constraint values in original units (nonpositive means satisfied)."""
        z = np.asarray(z, dtype=float)
        return np.sqrt(self.gamma) * np.sqrt(self.noise + self.quad @ z**2) - self.lin @ z

    def dump(self) -> str:
        """Plain-text exchange format: one header line, then labelled rows."""
        lines = [f"# diag-socp vars={self.num_vars} cons={self.num_cons}", f"noise {float(self.noise)!r}"]
        lines.append("objective " + " ".join(repr(float(v)) for v in self.obj_weight))
        for j in range(self.num_cons):
            lines.append(f"cone {j} gamma {float(self.gamma[j])!r}")
            lines.append("  quad " + " ".join(repr(float(v)) for v in self.quad[j]))
            lines.append("  lin " + " ".join(repr(float(v)) for v in self.lin[j]))
        return "\n".join(lines) + "\n"

    @classmethod
    def load(cls, text: str) -> "SocProblem":
        noise, weight, gamma, quad, lin = None, None, [], [], []
        for raw in text.splitlines():
            parts = raw.split()
            if not parts or parts[0].startswith("#"):
                continue
            if parts[0] == "noise":
                noise = float(parts[1])
            elif parts[0] == "objective":
                weight = [float(v) for v in parts[1:]]
            elif parts[0] == "cone":
                gamma.append(float(parts[3]))
            elif parts[0] == "quad":
                quad.append([float(v) for v in parts[1:]])
            elif parts[0] == "lin":
                lin.append([float(v) for v in parts[1:]])
        n = len(weight)
        return cls(
            np.array(weight), noise, np.array(gamma),
            np.array(quad).reshape(len(gamma), n), np.array(lin).reshape(len(gamma), n),
        )


@dataclass
class ConicResult:
    status: str  # "optimal", "infeasible"
    z: np.ndarray
    objective: float
    duals: np.ndarray
    violation: float
    kkt_residual: float
    iterations: int
    boundary: bool = False
    info: dict = field(default_factory=dict)


class _Scaled:
    """Constraint functions in scaled coordinates."""

    def __init__(self, prob: SocProblem):
        self.sw = np.sqrt(prob.obj_weight)
        self.sigma = np.sqrt(prob.noise)
        self.Q = prob.quad / (prob.noise * prob.obj_weight[None, :])
        self.C = prob.lin / (self.sigma * self.sw[None, :])
        self.sg = np.sqrt(prob.gamma)

    def values(self, y):
        r = np.sqrt(1.0 + self.Q @ y**2)
        return self.sg * r - self.C @ y, r

    def derivs(self, y):
        f, r = self.values(y)
        U = self.Q * y[None, :]
        grad = (self.sg / r)[:, None] * U - self.C
        return f, r, U, grad

    def hess_sum(self, y, lam, r, U):
        c = lam * self.sg
        H = np.diag((c / r) @ self.Q)
        H -= U.T @ ((c / r**3)[:, None] * U)
        return H


def _solve_pd(K, rhs):
    try:
        L = np.linalg.cholesky(K)
        return np.linalg.solve(L.T, np.linalg.solve(L, rhs))
    except np.linalg.LinAlgError:
        reg = 1e-12 * max(1.0, np.abs(np.diag(K)).max())
        try:
            return np.linalg.solve(K + reg * np.eye(K.shape[0]), rhs)
        except np.linalg.LinAlgError:
            return np.linalg.lstsq(K, rhs, rcond=None)[0]


def _primal_dual(
    x, lam, evaluate, *, tol, max_iter, centering, stop_when=None, alpha_ls=0.01, beta_ls=0.5,
):
    """Generic primal-dual interior-point loop for ``min f0(x) s.t. f(x) < 0``.

    ``evaluate(x, lam)`` returns ``(f0, g0, f, Df, H)`` where ``H`` is the
    Hessian of the Lagrangian. ``stop_when(x, f)`` may end the loop early.
    """
    m = lam.size
    it = 0
    f0, g0, f, Df, H = evaluate(x, lam)
    for it in range(1, max_iter + 1):
        gap = float(-f @ lam)
        t = m / (centering * max(gap, 1e-300))
        r_dual = g0 + Df.T @ lam
        r_cent = -lam * f - 1.0 / t
        d = -lam / f
        K = H + Df.T @ (d[:, None] * Df)
        rhs = -r_dual - Df.T @ (r_cent / f)
        dx = _solve_pd(K, rhs)
        dlam = (r_cent - lam * (Df @ dx)) / f
        neg = dlam < 0
        s = 0.99 * min(1.0, float(np.min(-lam[neg] / dlam[neg]))) if neg.any() else 1.0
        res0 = np.sqrt(r_dual @ r_dual + r_cent @ r_cent)
        accepted = False
        for _ in range(60):
            x_new = x + s * dx
            lam_new = lam + s * dlam
            f0n, g0n, fn, Dfn, Hn = evaluate(x_new, lam_new)
            if np.all(fn < 0):
                rd = g0n + Dfn.T @ lam_new
                rc = -lam_new * fn - 1.0 / t
                if np.sqrt(rd @ rd + rc @ rc) <= (1.0 - alpha_ls * s) * res0 or s < 1e-10:
                    accepted = True
                    break
            s *= beta_ls
        if not accepted:
            break
        x, lam = x_new, lam_new
        f0, g0, f, Df, H = f0n, g0n, fn, Dfn, Hn
        if stop_when is not None and stop_when(x, f):
            return x, lam, it, True
        gap = float(-f @ lam)
        r_dual = g0 + Df.T @ lam
        scale = max(np.linalg.norm(g0), np.linalg.norm(Df.T @ lam), 1e-300)
        if np.linalg.norm(r_dual) <= tol * scale and gap <= tol * max(abs(f0), 1e-300):
            return x, lam, it, True
    return x, lam, it, False


def _barrier(y, evaluate, m, *, tol, mu=8.0, max_newton=80, max_outer=60):
    """Log-barrier method with Newton centering from a strictly feasible ``y``.

    ``evaluate(y, w)`` must return ``(f0, g0, f, Df, H)`` with ``H`` the
    objective Hessian plus the ``w``-weighted constraint Hessians.
    Returns ``(y, lam, newton_steps, converged)``.
    """
    f0, g0, f, _, _ = evaluate(y, np.zeros(m))
    t = max(m / max(f0, 1e-300), 1.0)
    steps = 0

    def phi(y, t):
        f0, _, f, _, _ = evaluate(y, np.zeros(m))
        return t * f0 - np.sum(np.log(-f)) if np.all(f < 0) else np.inf

    for _ in range(max_outer):
        for _ in range(max_newton):
            f0, g0, f, Df, _ = evaluate(y, np.zeros(m))
            w = 1.0 / -f
            _, _, _, _, Hw = evaluate(y, w / t)
            grad = t * g0 + Df.T @ w
            K = t * Hw + Df.T @ ((w**2)[:, None] * Df)
            dy = -_solve_pd(K, grad)
            dec = float(-grad @ dy)
            steps += 1
            if dec / 2 <= 1e-12:
                break
            s, base = 1.0, phi(y, t)
            while phi(y + s * dy, t) > base - 0.25 * s * dec and s > 1e-14:
                s *= 0.5
            y = y + s * dy
        f0, _, f, _, _ = evaluate(y, np.zeros(m))
        if m / t <= tol * max(f0, 1e-300):
            return y, 1.0 / (t * -f), steps, True
        t *= mu
    f0, _, f, _, _ = evaluate(y, np.zeros(m))
    return y, 1.0 / (t * -f), steps, False


def _phase_one_start(sc: _Scaled, n: int):
    direction = np.zeros(n)
    for j in range(sc.C.shape[0]):
        cj = sc.C[j]
        nrm = np.linalg.norm(cj)
        if nrm > 0:
            direction += cj / nrm
    if not np.any(direction):
        direction = np.ones(n)
    best_s, best_v = 0.0, np.max(sc.values(np.zeros(n))[0])
    for s in np.logspace(-4, 4, 33):
        v = np.max(sc.values(s * direction)[0])
        if v < best_v:
            best_s, best_v = s, v
    return best_s * direction


def _smoothed_start(sc: _Scaled, y0, margin: float, max_iter: int = 500):
    """Look for a strictly feasible point by minimising a smoothed max of the constraints.

    Barely feasible instances are only feasible far out along a ray, where
    damped Newton steps on the phase-one problem crawl. A log-sum-exp
    smoothing minimised with L-BFGS gets there quickly; the point found is
    then pulled back towards the origin while it stays strictly feasible.
    Returns None when no such point turns up.
    """

    def lse(y, T):
        f, r = sc.values(y)
        top = f.max()
        e = np.exp((f - top) / T)
        w = e / e.sum()
        grad = (w * sc.sg / r) @ (sc.Q * y[None, :]) - w @ sc.C
        return top + T * np.log(e.sum()), grad

    def stop(intermediate_result):
        if np.max(sc.values(intermediate_result.x)[0]) < -2 * margin:
            raise StopIteration

    y = y0
    for T in (1.0, 0.1, 0.01):
        y = minimize(lse, y, args=(T,), jac=True, method="L-BFGS-B", callback=stop,
                     options={"maxiter": max_iter}).x
        if np.max(sc.values(y)[0]) < -2 * margin:
            break
    else:
        return None
    while np.max(sc.values(0.5 * y)[0]) < -margin:
        y = 0.5 * y
    return y


def solve_soc(prob: SocProblem, tol: float = 1e-8, max_iter: int = 200, centering: float = 0.2,
              infeasibility_threshold: float = 1e-7) -> ConicResult:
    """Solve the diagonal SOCP, falling back to the phase-one violation problem.

    Returns duals ``lambda`` (original units) for the optimal case and
    normalised multipliers ``nu`` (summing to one) for the infeasible case,
    where ``violation`` is the optimal common violation ``phi`` in the
    original units. A problem counts as infeasible when ``phi`` exceeds
    ``infeasibility_threshold * sqrt(noise * max(gamma))``.
    """
    n, m = prob.num_vars, prob.num_cons
    active = prob.gamma > 0
    if not active.all():
        # zero-target cones hold at z = 0 and never bind; solve without them
        if not active.any():
            return ConicResult("optimal", np.zeros(n), 0.0, np.zeros(m), 0.0, 0.0, 0)
        sub = SocProblem(prob.obj_weight, prob.noise, prob.gamma[active], prob.quad[active], prob.lin[active])
        res = solve_soc(sub, tol, max_iter, centering, infeasibility_threshold)
        duals = np.zeros(m)
        duals[active] = res.duals
        res.duals = duals
        return res
    sc = _Scaled(prob)
    thr = infeasibility_threshold * np.sqrt(prob.gamma.max())

    def eval_phase1(x, lam):
        y, phi = x[:-1], x[-1]
        f, r, U, grad = sc.derivs(y)
        Df = np.hstack([grad, -np.ones((m, 1))])
        H = np.zeros((n + 1, n + 1))
        H[:n, :n] = sc.hess_sum(y, lam, r, U)
        g0 = np.zeros(n + 1)
        g0[-1] = 1.0
        return phi, g0, f - phi, Df, H

    y0 = _phase_one_start(sc, n)
    f_start = sc.values(y0)[0]
    feasible_now = np.all(f_start < -1e-9)
    it1 = 0
    margin = 1e-3 * float(sc.sg.max() or 1.0)
    if not feasible_now:
        y_s = _smoothed_start(sc, y0, margin)
        if y_s is not None:
            y0, feasible_now = y_s, True
    if not feasible_now:
        phi0 = f_start.max() + 0.1 * (abs(f_start.max()) + 1.0)
        x1 = np.append(y0, phi0)
        lam1 = np.full(m, 1.0 / m)

        def stop_feasible(x, fshift):
            return np.max(sc.values(x[:-1])[0]) < -margin

        x1, lam1, it1, converged = _primal_dual(
            x1, lam1, eval_phase1, tol=tol, max_iter=max_iter, centering=centering,
            stop_when=stop_feasible,
        )
        y0 = x1[:-1]
        f_start = sc.values(y0)[0]
        phi_star = float(f_start.max())
        if phi_star >= -margin:
            # Polish phase one without the early stop to certify the violation.
            if phi_star > thr or not converged:
                x1, lam1, extra, converged = _primal_dual(
                    x1, lam1, eval_phase1, tol=tol, max_iter=max_iter, centering=centering,
                )
                it1 += extra
                y0 = x1[:-1]
                f_start = sc.values(y0)[0]
                phi_star = float(f_start.max())
            if phi_star > thr:
                f0, g0, f, Df, _ = eval_phase1(x1, lam1)
                rd = g0 + Df.T @ lam1
                gap = float(-f @ lam1)
                kkt = max(np.linalg.norm(rd), gap / max(abs(phi_star), 1e-300))
                z = y0 / sc.sw
                return ConicResult(
                    "infeasible", z, float(np.sum(prob.obj_weight * z**2)), lam1.copy(),
                    phi_star * sc.sigma, kkt, it1, info={"converged": converged},
                )
            if phi_star >= 0.0:
                return _phase_two(prob, sc, y0, shift=phi_star + thr, tol=tol, max_iter=max_iter,
                                  centering=centering, it_offset=it1, boundary=True)
    return _phase_two(prob, sc, y0, shift=0.0, tol=tol, max_iter=max_iter, centering=centering,
                      it_offset=it1, boundary=False)


def _phase_two(prob, sc, y0, *, shift, tol, max_iter, centering, it_offset, boundary):
    n, m = prob.num_vars, prob.num_cons

    def eval_phase2(y, lam):
        f, r, U, grad = sc.derivs(y)
        H = 2.0 * np.eye(n) + sc.hess_sum(y, lam, r, U)
        return float(y @ y), 2.0 * y, f - shift, grad, H

    f_start = sc.values(y0)[0] - shift
    p0 = max(float(y0 @ y0), 1e-12)
    lam = p0 / (m * -f_start)
    y, lam, it, converged = _primal_dual(y0, lam, eval_phase2, tol=tol, max_iter=max_iter, centering=centering)

    def residual(y, lam):
        f0, g0, f, Df, _ = eval_phase2(y, lam)
        rd = g0 + Df.T @ lam
        gap = float(-f @ lam)
        scale = max(np.linalg.norm(g0), np.linalg.norm(Df.T @ lam), 1e-300)
        return max(np.linalg.norm(rd) / scale, gap / max(f0, 1e-300))

    kkt = residual(y, lam)
    if not converged and kkt > tol:
        # badly scaled cones can pin the primal-dual iterates to the boundary
        yb, lb, itb, ok = _barrier(y0, eval_phase2, m, tol=tol)
        it += itb
        kb = residual(yb, lb)
        if kb < kkt:
            y, lam, kkt, converged = yb, lb, kb, ok
    z = y / sc.sw
    result = ConicResult(
        "optimal", z, float(np.sum(prob.obj_weight * z**2)), lam / sc.sigma, 0.0, kkt,
        it + it_offset, boundary=boundary, info={"converged": converged},
    )
    if not converged and kkt > 1e3 * tol:
        raise NumericalFailure(f"interior point did not converge (kkt residual {kkt:.3e})", best=result)
    return result
