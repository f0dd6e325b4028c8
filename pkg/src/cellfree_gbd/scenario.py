"""Deployment geometry, large-scale fading and QoS targets."""

from __future__ import annotations

import csv
import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

MIN_DISTANCE_KM = 0.01


class InvalidInput(ValueError):
    """Raised when an argument violates a documented precondition."""


def dbm_to_watts(dbm):
    return 10.0 ** ((np.asarray(dbm, dtype=float) - 30.0) / 10.0)


def watts_to_dbm(watts):
    return 10.0 * np.log10(np.asarray(watts, dtype=float)) + 30.0


@dataclass(frozen=True)
class RadioConfig:
    """Radio parameters shared by every module.

    ``pilot_factor`` scales the pilot length relative to the group size
    (1 means one orthogonal pilot symbol per grouped user).
    """

    bandwidth_hz: float = 20e6
    noise_density_dbm_per_hz: float = -174.0
    pilot_power_w: float = 0.2
    coherence_len: int = 200
    area_km: float = 3.0
    smoothing_weight: float = 0.5
    pilot_factor: float = 1.0
    min_distance_km: float = MIN_DISTANCE_KM

    def __post_init__(self):
        if not self.bandwidth_hz > 0:
            raise InvalidInput(f"bandwidth must be positive, got {self.bandwidth_hz}")
        if not self.pilot_power_w > 0:
            raise InvalidInput(f"pilot power must be positive, got {self.pilot_power_w}")
        if int(self.coherence_len) != self.coherence_len or self.coherence_len < 1:
            raise InvalidInput(f"coherence length must be a positive integer, got {self.coherence_len}")
        if not self.area_km > 0:
            raise InvalidInput(f"area side must be positive, got {self.area_km}")
        if not 0.0 <= self.smoothing_weight <= 1.0:
            raise InvalidInput(f"smoothing weight must lie in [0, 1], got {self.smoothing_weight}")
        if not self.pilot_factor > 0:
            raise InvalidInput(f"pilot factor must be positive, got {self.pilot_factor}")
        if not self.min_distance_km > 0:
            raise InvalidInput("minimum distance must be positive")

    def replace(self, **changes) -> "RadioConfig":
        values = asdict(self)
        values.update(changes)
        return RadioConfig(**values)


@dataclass(frozen=True, eq=False)
class Scenario:
    """AP/user placement and the ``M x N`` large-scale gain matrix."""

    ap_positions: np.ndarray
    user_positions: np.ndarray
    beta: np.ndarray
    seed: int | None = None
    config: RadioConfig = field(default_factory=RadioConfig)

    def __post_init__(self):
        beta = np.asarray(self.beta, dtype=float)
        if beta.ndim != 2 or min(beta.shape) < 1:
            raise InvalidInput(f"beta must be a non-empty M x N matrix, got shape {beta.shape}")
        if not np.all(np.isfinite(beta)) or np.any(beta <= 0):
            raise InvalidInput("beta entries must be finite and strictly positive")
        object.__setattr__(self, "beta", beta)

    @property
    def num_aps(self) -> int:
        return self.beta.shape[0]

    @property
    def num_users(self) -> int:
        return self.beta.shape[1]

    @property
    def noise_power(self) -> float:
        return noise_power_w(self.config)

    def __eq__(self, other):
        if not isinstance(other, Scenario):
            return NotImplemented
        return (
            self.seed == other.seed
            and self.config == other.config
            and np.array_equal(self.ap_positions, other.ap_positions)
            and np.array_equal(self.user_positions, other.user_positions)
            and np.array_equal(self.beta, other.beta)
        )

    def to_csv(self, path) -> None:
        """Write beta as CSV (header row, then M rows of N values) plus a JSON sidecar."""
        path = Path(path)
        with path.open("w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow([f"user{n}" for n in range(self.num_users)])
            for row in self.beta:
                writer.writerow([repr(float(v)) for v in row])
        meta = {"seed": self.seed, "config": asdict(self.config)}
        if self.ap_positions is not None:
            meta["ap_positions"] = np.asarray(self.ap_positions).tolist()
            meta["user_positions"] = np.asarray(self.user_positions).tolist()
        path.with_suffix(".json").write_text(json.dumps(meta, indent=2))

    @classmethod
    def from_csv(cls, path) -> "Scenario":
        path = Path(path)
        with path.open(newline="") as fh:
            rows = list(csv.reader(fh))
        beta = np.array([[float(v) for v in row] for row in rows[1:]])
        meta_path = path.with_suffix(".json")
        seed, config, aps, users = None, RadioConfig(), None, None
        if meta_path.exists():
            meta = json.loads(meta_path.read_text())
            seed = meta.get("seed")
            config = RadioConfig(**meta.get("config", {}))
            if "ap_positions" in meta:
                aps = np.array(meta["ap_positions"])
                users = np.array(meta["user_positions"])
        return cls(ap_positions=aps, user_positions=users, beta=beta, seed=seed, config=config)


@dataclass(frozen=True, eq=False)
class QosTargets:
    target_rate_bps: np.ndarray

    def __post_init__(self):
        rates = np.asarray(self.target_rate_bps, dtype=float)
        if rates.ndim != 1 or np.any(rates < 0) or not np.all(np.isfinite(rates)):
            raise InvalidInput("target rates must be a finite nonnegative vector")
        object.__setattr__(self, "target_rate_bps", rates)

    def __len__(self):
        return self.target_rate_bps.size


def path_loss_db(distance_km, min_distance_km: float = MIN_DISTANCE_KM):
    """Log-distance path loss ``128.1 + 37.6 log10(d)`` with ``d`` in km.

    Distances below ``min_distance_km`` are clamped to it.
    """
    d = np.maximum(np.asarray(distance_km, dtype=float), min_distance_km)
    if np.any(~(d > 0)):
        raise InvalidInput("distance must be positive after clamping")
    loss = 128.1 + 37.6 * np.log10(d)
    return float(loss) if loss.ndim == 0 else loss


def db_to_gain(loss_db):
    return 10.0 ** (-np.asarray(loss_db, dtype=float) / 10.0)


def noise_power_w(config: RadioConfig) -> float:
    return float(dbm_to_watts(config.noise_density_dbm_per_hz) * config.bandwidth_hz)


def generate_scenario(config: RadioConfig, m: int, n: int, seed: int) -> Scenario:
    """Place ``m`` APs and ``n`` users uniformly in the square and compute beta."""
    if m < 1 or n < 1:
        raise InvalidInput(f"need at least one AP and one user, got m={m}, n={n}")
    rng = np.random.default_rng(seed)
    aps = rng.uniform(0.0, config.area_km, size=(m, 2))
    users = rng.uniform(0.0, config.area_km, size=(n, 2))
    dist = np.linalg.norm(aps[:, None, :] - users[None, :, :], axis=-1)
    beta = db_to_gain(path_loss_db(dist, config.min_distance_km))
    return Scenario(ap_positions=aps, user_positions=users, beta=beta, seed=seed, config=config)


def sample_qos(n: int, lo_bps: float, hi_bps: float, seed: int) -> QosTargets:
    """Uniform target rates in ``[lo, hi]``.

    The same seed yields the same uniform draws for every range, so sweeping
    ``hi`` moves each user's target monotonically.
    """
    if lo_bps < 0 or hi_bps < lo_bps:
        raise InvalidInput(f"invalid rate range [{lo_bps}, {hi_bps}]")
    u = np.random.default_rng([seed, 0x5EED]).uniform(size=n)
    return QosTargets(lo_bps + u * (hi_bps - lo_bps))
