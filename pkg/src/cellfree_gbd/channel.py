"""User groupings, MMSE estimation statistics and channel sampling."""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

from .scenario import InvalidInput, RadioConfig, Scenario, noise_power_w


class DegenerateGroupWarning(UserWarning):
    pass


class Grouping:
    """One-hot assignment of ``N`` users to ``G`` time-slot groups.

    Internally the assignment is stored as a label vector ``group_of``; the
    binary ``G x N`` matrix is derived on demand.
    """

    __slots__ = ("_labels", "_G")

    def __init__(self, group_of, num_groups: int):
        labels = np.asarray(group_of, dtype=np.int64).copy()
        if labels.ndim != 1 or labels.size < 1:
            raise InvalidInput("group labels must be a non-empty vector")
        if num_groups < 1:
            raise InvalidInput(f"number of groups must be >= 1, got {num_groups}")
        if labels.min() < 0 or labels.max() >= num_groups:
            raise InvalidInput(f"group labels must lie in [0, {num_groups})")
        labels.setflags(write=False)
        self._labels = labels
        self._G = int(num_groups)

    @classmethod
    def from_matrix(cls, x) -> "Grouping":
        x = np.asarray(x)
        if x.ndim != 2 or not np.all((x == 0) | (x == 1)) or not np.all(x.sum(axis=0) == 1):
            raise InvalidInput("each column of the grouping matrix must be one-hot")
        return cls(np.argmax(x, axis=0), x.shape[0])

    @property
    def group_of(self) -> np.ndarray:
        return self._labels

    @property
    def num_groups(self) -> int:
        return self._G

    @property
    def num_users(self) -> int:
        return self._labels.size

    @property
    def x(self) -> np.ndarray:
        x = np.zeros((self._G, self.num_users), dtype=np.int64)
        x[self._labels, np.arange(self.num_users)] = 1
        return x

    @property
    def sizes(self) -> np.ndarray:
        return np.bincount(self._labels, minlength=self._G)

    def members(self, g: int) -> np.ndarray:
        return np.flatnonzero(self._labels == g)

    def kappa(self, beta=None) -> np.ndarray:
        """Within-group rank of each user (0-based), strongest total gain first."""
        strength = -np.asarray(beta).sum(axis=0) if beta is not None else np.arange(self.num_users)
        kappa = np.empty(self.num_users, dtype=np.int64)
        for g in range(self._G):
            idx = self.members(g)
            order = idx[np.argsort(strength[idx], kind="stable")]
            kappa[order] = np.arange(idx.size)
        return kappa

    def canonical_key(self) -> tuple:
        """Labels renumbered by first appearance; equal for relabelled groupings."""
        remap, out = {}, []
        for g in self._labels.tolist():
            out.append(remap.setdefault(g, len(remap)))
        return tuple(out)

    def with_labels(self, labels) -> "Grouping":
        return Grouping(labels, self._G)

    def __eq__(self, other):
        if not isinstance(other, Grouping):
            return NotImplemented
        return self._G == other._G and np.array_equal(self._labels, other._labels)

    def __hash__(self):
        return hash((self._G, self._labels.tobytes()))

    def __repr__(self):
        return f"Grouping({self._labels.tolist()}, num_groups={self._G})"


@dataclass(frozen=True, eq=False)
class ChannelStats:
    """MMSE estimate variances ``alpha[g, m, n]`` and pilot lengths per group.

    With ``fill='assigned'`` only the entries of each user's own group are
    populated. With ``fill='all'`` every ``(g, m, n)`` holds the variance the
    user would see in group ``g`` with that group's current pilot length;
    this is what frozen GBD cuts need when users change groups.
    """

    alpha: np.ndarray
    pilot_len: np.ndarray
    noise_power: float
    fill: str = "assigned"


@dataclass(frozen=True, eq=False)
class ChannelRealization:
    """Per-group ``M x U_g`` true channels and their MMSE estimates."""

    h: list
    h_hat: list


def pilot_length(grouping: Grouping, g: int, factor: float = 1.0) -> int:
    """Pilot symbols used by group ``g``: ``ceil(factor * U_g)``, or 0 when empty."""
    size = int(grouping.sizes[g])
    if size == 0:
        warnings.warn(f"group {g} is empty; pilot length is 0", DegenerateGroupWarning, stacklevel=2)
        return 0
    return max(1, math.ceil(factor * size - 1e-12))


def pilot_lengths(grouping: Grouping, factor: float = 1.0) -> np.ndarray:
    sizes = grouping.sizes
    out = np.ceil(factor * sizes - 1e-12).astype(np.int64)
    out[sizes > 0] = np.maximum(out[sizes > 0], 1)
    out[sizes == 0] = 0
    return out


def mmse_variance(beta, tau, pilot_power: float, noise_power: float):
    """``rho tau beta^2 / (sigma^2 + rho tau beta)``, elementwise."""
    energy = pilot_power * np.asarray(tau, dtype=float)
    beta = np.asarray(beta, dtype=float)
    return energy * beta**2 / (noise_power + energy * beta)


def estimation_variance(
    scenario: Scenario,
    grouping: Grouping,
    config: RadioConfig | None = None,
    fill: str = "assigned",
) -> ChannelStats:
    config = config or scenario.config
    if grouping.num_users != scenario.num_users:
        raise InvalidInput("grouping and scenario disagree on the number of users")
    if fill not in ("assigned", "all"):
        raise InvalidInput(f"unknown fill mode {fill!r}")
    sigma2 = noise_power_w(config)
    tau = pilot_lengths(grouping, config.pilot_factor)
    beta = scenario.beta
    G = grouping.num_groups
    if fill == "all":
        # An empty group would host a lone newcomer.
        tau_eff = np.where(tau > 0, tau, max(1, math.ceil(config.pilot_factor - 1e-12)))
        alpha = mmse_variance(beta[None, :, :], tau_eff[:, None, None], config.pilot_power_w, sigma2)
    else:
        alpha = np.zeros((G,) + beta.shape)
        labels = grouping.group_of
        own = mmse_variance(beta, tau[labels][None, :], config.pilot_power_w, sigma2)
        alpha[labels, :, np.arange(beta.shape[1])] = own.T
    return ChannelStats(alpha=alpha, pilot_len=tau, noise_power=sigma2, fill=fill)


def _complex_normal(rng, shape):
    return (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / math.sqrt(2.0)


def sample_channel(scenario: Scenario, grouping: Grouping, stats: ChannelStats, seed) -> ChannelRealization:
    """Draw ``h`` and ``h_hat`` with ``h_hat ~ CN(0, alpha)`` and independent error ``CN(0, beta - alpha)``."""
    rng = np.random.default_rng(seed)
    h_list, hh_list = [], []
    for g in range(grouping.num_groups):
        idx = grouping.members(g)
        beta = scenario.beta[:, idx]
        alpha = stats.alpha[g][:, idx]
        h_hat = np.sqrt(alpha) * _complex_normal(rng, beta.shape)
        err = np.sqrt(np.maximum(beta - alpha, 0.0)) * _complex_normal(rng, beta.shape)
        h_list.append(h_hat + err)
        hh_list.append(h_hat)
    return ChannelRealization(h=h_list, h_hat=hh_list)


def sample_estimates(alpha_g: np.ndarray, num_samples: int, rng) -> np.ndarray:
    """``num_samples`` draws of an ``M x U`` estimate matrix, shape ``(S, M, U)``."""
    return np.sqrt(alpha_g)[None] * _complex_normal(rng, (num_samples,) + alpha_g.shape)
