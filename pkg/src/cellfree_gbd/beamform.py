"""Unified MRT/ZF coefficient tensors, achievable SINR and SINR targets.

Both precoders are written in one form: for user ``n`` in group ``g``

    SINR_n = (sum_m q[m, n] theta[g, m, n])^2
             / (sigma^2 + sum_{i in g} sum_m q[m, i]^2 upsilon[g, m, n, i])

with transmit power ``sum_m sum_n q[m, n]^2 phi[g_n, m, n]``. The four-way
``upsilon`` is never materialised outside of tests; MRT keeps it as the
pair ``(beta, alpha)`` and ZF as the ``G x N x N`` leakage matrix ``eta``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .channel import ChannelStats, Grouping, pilot_lengths, sample_estimates
from .scenario import InvalidInput, QosTargets, RadioConfig, Scenario

MRT = "MRT"
ZF = "ZF"


class InfeasiblePrecoder(ValueError):
    """Zero forcing needs at least as many APs as users in the group."""


class FrameOverflow(ValueError):
    """The pilot phase would consume the whole coherence interval."""


@dataclass(frozen=True, eq=False)
class BeamformStats:
    mode: str
    phi: np.ndarray
    theta: np.ndarray
    beta: np.ndarray
    alpha: np.ndarray
    noise_power: float
    eta: np.ndarray | None = None
    diagnostics: dict = field(default_factory=dict)

    @property
    def num_aps(self) -> int:
        return self.beta.shape[0]

    def interference(self, g: int, q2: np.ndarray, members: np.ndarray, users=None) -> np.ndarray:
        """``sum_{i in members} sum_m q2[m, i] upsilon[g, m, n, i]`` for each ``n`` in ``users``."""
        users = members if users is None else users
        if self.mode == MRT:
            load = (q2[:, members] * self.alpha[g][:, members]).sum(axis=1)
            return self.beta[:, users].T @ load
        per_user = q2[:, members].sum(axis=0) / self.num_aps
        return self.eta[g][np.ix_(users, members)] @ per_user

    def signal(self, g: int, q: np.ndarray, users) -> np.ndarray:
        return (q[:, users] * self.theta[g][:, users]).sum(axis=0)

    def upsilon_full(self) -> np.ndarray:
        """Dense ``G x M x N x N`` tensor; test oracles only."""
        G, M, N = self.phi.shape
        if self.mode == MRT:
            return self.beta[None, :, :, None] * self.alpha[:, :, None, :]
        return np.broadcast_to(self.eta[:, None, :, :] / M, (G, M, N, N)).copy()


def mrt_stats(stats: ChannelStats, scenario: Scenario) -> BeamformStats:
    alpha = stats.alpha
    return BeamformStats(
        mode=MRT,
        phi=alpha,
        theta=alpha,
        beta=scenario.beta,
        alpha=alpha,
        noise_power=stats.noise_power,
    )


def zf_precoder_power(h_hat: np.ndarray) -> np.ndarray:
    """``|W|^2`` for ``W = H* (H^T H*)^{-1}``, batched over the leading axis."""
    gram = np.conj(np.swapaxes(h_hat, -1, -2)) @ h_hat
    w = h_hat @ np.linalg.inv(gram)
    return np.abs(w) ** 2


def zf_stats(
    scenario: Scenario,
    grouping: Grouping,
    stats: ChannelStats,
    config: RadioConfig | None = None,
    num_samples: int = 200,
    seed=0,
    rejection_threshold: float = 1e-6,
    max_redraw_rounds: int = 50,
) -> BeamformStats:
    """Monte Carlo estimate of the ZF power weights ``phi`` and leakage ``eta``.

    ``phi[g, m, n] = E|W[m, kappa_n]|^2`` over estimate draws for the users of
    group ``g``. The leakage follows from ``phi`` exactly because the error
    covariance is diagonal: ``eta[g, n, i] = sum_m (beta - alpha)[m, n] phi[g, m, i]``.
    Entries for users outside group ``g`` copy the user's own-group value so
    that frozen cuts stay defined when users move.

    Each group samples from a stream keyed by ``seed`` and its member set.
    Draws whose Gram matrix has smallest eigenvalue below
    ``rejection_threshold`` times its mean diagonal are redrawn and counted.
    """
    if num_samples < 1:
        raise InvalidInput("num_samples must be >= 1")
    beta = scenario.beta
    M, N = beta.shape
    G = grouping.num_groups
    base = seed if isinstance(seed, (list, tuple)) else [int(seed)]
    own_phi = np.zeros((M, N))
    rejected = 0
    unstable = []
    kappa = grouping.kappa(beta)
    for g in range(G):
        idx = grouping.members(g)
        if idx.size == 0:
            continue
        if idx.size > M:
            raise InfeasiblePrecoder(f"group {g} has {idx.size} users but only {M} APs")
        if idx.size == M:
            unstable.append(g)
        idx = idx[np.argsort(kappa[idx])]
        # the draws depend only on the member set, so a group scores the same wherever it appears
        rng = np.random.default_rng([*base, *sorted(idx.tolist())])
        alpha_g = stats.alpha[g][:, idx]
        kept, acc = 0, np.zeros_like(alpha_g)
        scale = alpha_g.sum(axis=0).mean()
        for _ in range(max_redraw_rounds):
            need = num_samples - kept
            draws = sample_estimates(alpha_g, need, rng)
            gram = np.conj(np.swapaxes(draws, -1, -2)) @ draws
            lam_min = np.linalg.eigvalsh(gram)[:, 0]
            ok = lam_min > rejection_threshold * scale
            rejected += int(need - ok.sum())
            if ok.any():
                acc += zf_precoder_power(draws[ok]).sum(axis=0)
                kept += int(ok.sum())
            if kept == num_samples:
                break
        if kept == 0:
            raise InfeasiblePrecoder(f"every Monte Carlo draw for group {g} was near-singular")
        own_phi[:, idx] = acc / kept
    phi = np.broadcast_to(own_phi, (G, M, N)).copy()
    err = np.maximum(beta[None] - stats.alpha, 0.0)
    eta = np.einsum("gmn,gmi->gni", err, phi)
    theta = np.full((G, M, N), 1.0 / M)
    return BeamformStats(
        mode=ZF,
        phi=phi,
        theta=theta,
        beta=beta,
        alpha=stats.alpha,
        noise_power=stats.noise_power,
        eta=eta,
        diagnostics={"rejected_samples": rejected, "unstable_groups": unstable, "num_samples": num_samples},
    )


def zf_eta_direct(h_hat_samples: np.ndarray, err_var: np.ndarray) -> np.ndarray:
    """Literal Monte Carlo of ``diag E[(H^T H*)^{-1} H^T D_n H* (H^T H*)^{-1}]`` for each user ``n``.

    ``h_hat_samples`` has shape ``(S, M, U)``; ``err_var`` is ``M x U`` with the
    error variances ``beta - alpha`` of the group members. Returns ``U x U``
    with rows indexed by ``n`` and columns by ``i``.
    """
    ht = np.swapaxes(h_hat_samples, -1, -2)
    inv = np.linalg.inv(ht @ np.conj(h_hat_samples))
    U = h_hat_samples.shape[-1]
    eta = np.empty((U, U))
    for n in range(U):
        mid = ht @ (err_var[:, n][None, :, None] * np.conj(h_hat_samples))
        eta[n] = np.real(np.diagonal(inv @ mid @ inv, axis1=-2, axis2=-1)).mean(axis=0)
    return eta


def smooth_eta(previous_true, previous_estimate, weight: float):
    """One step of exponential smoothing for the ZF leakage prediction."""
    if not 0.0 <= weight <= 1.0:
        raise InvalidInput("smoothing weight must lie in [0, 1]")
    return weight * np.asarray(previous_true) + (1.0 - weight) * np.asarray(previous_estimate)


def sinr(bstats: BeamformStats, grouping: Grouping, q, n: int) -> float:
    q = np.asarray(q, dtype=float)
    g = int(grouping.group_of[n])
    members = grouping.members(g)
    num = float(bstats.signal(g, q, [n])[0]) ** 2
    den = bstats.noise_power + float(bstats.interference(g, q**2, members, [n])[0])
    return num / den


def sinr_all(bstats: BeamformStats, grouping: Grouping, q) -> np.ndarray:
    q = np.asarray(q, dtype=float)
    out = np.zeros(grouping.num_users)
    q2 = q**2
    for g in range(grouping.num_groups):
        members = grouping.members(g)
        if members.size == 0:
            continue
        num = bstats.signal(g, q, members) ** 2
        out[members] = num / (bstats.noise_power + bstats.interference(g, q2, members))
    return out


def target_from_rate(rate, num_groups: int, coherence_len: int, tau):
    """``2^(G r tau_c / (tau_c - tau)) - 1`` for spectral rate ``r``; infinite once ``tau >= tau_c``."""
    tau = np.asarray(tau, dtype=float)
    with np.errstate(divide="ignore", over="ignore", invalid="ignore"):
        expo = num_groups * np.asarray(rate, dtype=float) * coherence_len / (coherence_len - tau)
        return np.where(tau < coherence_len, np.exp2(expo) - 1.0, np.inf)


def gamma_targets(qos: QosTargets, config: RadioConfig, grouping: Grouping, num_groups: int | None = None) -> np.ndarray:
    """Per-user SINR targets ``2^(G r tau_c / (tau_c - tau_g)) - 1`` with ``r = R / B``."""
    G = grouping.num_groups if num_groups is None else num_groups
    tau = pilot_lengths(grouping, config.pilot_factor)[grouping.group_of]
    tau_c = config.coherence_len
    if np.any(tau >= tau_c):
        raise FrameOverflow(f"pilot length {tau.max()} leaves no data symbols in a frame of {tau_c}")
    return target_from_rate(qos.target_rate_bps / config.bandwidth_hz, G, tau_c, tau)
