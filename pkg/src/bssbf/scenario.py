"""Angle grids, spatial profiles and channel realizations.

All randomness is drawn from an explicit ``numpy.random.Generator`` so that
every function is pure given its generator.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

__all__ = [
    "SystemConfig",
    "AngleGrid",
    "SpatialProfile",
    "ChannelRealization",
    "steering_vector",
    "steering_matrix",
    "make_uniform_grid",
    "make_uniform_profile",
    "make_cluster_profile",
    "apply_angle_mismatch",
    "apply_pas_mismatch",
    "truncate_grid",
    "draw_channel",
]

_MAX_GRID_ATTEMPTS = 10_000


@dataclass(frozen=True)
class SystemConfig:
    """Scalar system parameters.

    ``total_power`` is linear; per-user power is ``total_power / num_users``.
    """

    num_antennas: int = 64
    num_users: int = 8
    grid_len: int = 64
    beams_per_user: int = 1
    btbc_rate_inverse: float = 1.0
    total_power: float = 1e4
    coherence_len: int = 100
    spacing_ratio: float = 0.5
    rng_seed: int = 0

    def __post_init__(self):
        for name in ("num_antennas", "num_users", "grid_len", "beams_per_user", "coherence_len"):
            if int(getattr(self, name)) < 1:
                raise ValueError(f"{name} must be a positive integer")
        if self.grid_len > self.num_antennas:
            raise ValueError("grid_len must not exceed num_antennas")
        if self.beams_per_user * self.num_users > self.grid_len:
            raise ValueError("beams_per_user * num_users must not exceed grid_len")
        if self.btbc_rate_inverse < 1:
            raise ValueError("btbc_rate_inverse must be >= 1")
        if self.beams_per_user <= 2 and self.btbc_rate_inverse != 1:
            raise ValueError("btbc_rate_inverse must be 1 for one or two beams per user")
        if self.total_power < 0:
            raise ValueError("total_power must be nonnegative")

    @property
    def per_user_power(self) -> float:
        return self.total_power / self.num_users

    @property
    def rate_scale(self) -> float:
        """Rate-inverse times beams per user, the divisor of the per-beam SNR."""
        return self.btbc_rate_inverse * self.beams_per_user


@dataclass(frozen=True)
class AngleGrid:
    """Sampling grid, stored in the sine domain (exact round-trip)."""

    sines: np.ndarray

    def __post_init__(self):
        s = np.asarray(self.sines, dtype=float)
        if s.ndim != 1 or s.size == 0:
            raise ValueError("grid must be a nonempty 1-D array")
        if np.any(np.abs(s) > 1):
            raise ValueError("grid sines must lie in [-1, 1]")
        if np.any(np.diff(s) <= 0):
            raise ValueError("grid sines must be strictly increasing")
        object.__setattr__(self, "sines", s)

    @classmethod
    def from_degrees(cls, angles) -> "AngleGrid":
        return cls(np.sin(np.deg2rad(np.asarray(angles, dtype=float))))

    @property
    def angles(self) -> np.ndarray:
        return np.rad2deg(np.arcsin(self.sines))

    def __len__(self):
        return self.sines.size


@dataclass(frozen=True)
class SpatialProfile:
    """Per-user beam powers sigma^2 on a grid.

    ``power`` is what the base station believes (used by beam selection and
    the statistical baselines). ``true_power`` and ``offsets`` describe the
    physical channel when spatial information is imperfect; ``None`` means
    identical to the believed values / no angular offset.
    """

    power: np.ndarray
    true_power: np.ndarray | None = None
    offsets: np.ndarray | None = None
    clusters: tuple | None = field(default=None, compare=False)

    def __post_init__(self):
        p = np.asarray(self.power, dtype=float)
        if p.ndim != 2:
            raise ValueError("power must be a (K, L) array")
        if np.any(p < 0):
            raise ValueError("beam powers must be nonnegative")
        object.__setattr__(self, "power", p)
        if self.true_power is not None:
            tp = np.asarray(self.true_power, dtype=float)
            if tp.shape != p.shape:
                raise ValueError("true_power shape mismatch")
            object.__setattr__(self, "true_power", tp)
        if self.offsets is not None:
            off = np.asarray(self.offsets, dtype=float)
            if off.shape != (p.shape[1],):
                raise ValueError("offsets must have one entry per grid point")
            object.__setattr__(self, "offsets", off)

    @property
    def num_users(self) -> int:
        return self.power.shape[0]

    @property
    def grid_len(self) -> int:
        return self.power.shape[1]

    @property
    def channel_power(self) -> np.ndarray:
        return self.power if self.true_power is None else self.true_power

    @property
    def sigma(self) -> np.ndarray:
        return np.sqrt(self.power)

    @property
    def perfect(self) -> bool:
        return self.offsets is None or not np.any(self.offsets)

    def beam_set(self, k: int) -> np.ndarray:
        """Available beams S_k of user k (support of the channel power)."""
        return np.flatnonzero(self.channel_power[k] > 0)

    def beam_sets(self) -> list[np.ndarray]:
        return [self.beam_set(k) for k in range(self.num_users)]


@dataclass(frozen=True)
class ChannelRealization:
    """Small-scale coefficients ``s`` (K, L), zero off-support, and channels ``h`` (K, N)."""

    s: np.ndarray
    h: np.ndarray


def steering_vector(angle: float, num_antennas: int, spacing_ratio: float = 0.5) -> np.ndarray:
    """Unit-norm ULA response at ``angle`` degrees."""
    return steering_matrix(np.array([np.sin(np.deg2rad(angle))]), num_antennas, spacing_ratio)[:, 0]


def steering_matrix(sines, num_antennas: int, spacing_ratio: float = 0.5) -> np.ndarray:
    """Columns are ULA responses for the given sines of the angles; shape (N, len(sines))."""
    sines = np.atleast_1d(np.asarray(sines, dtype=float))
    n = np.arange(num_antennas)[:, None]
    return np.exp(-2j * np.pi * spacing_ratio * n * sines[None, :]) / np.sqrt(num_antennas)


def make_uniform_grid(grid_len: int, rng: np.random.Generator, kappa=None) -> AngleGrid:
    """Jittered uniform grid in the sine domain.

    sin(theta_l) = (2l - 1 - L)/L + kappa_l with kappa_l ~ U[-1/(2L), 1/(2L)].
    Consecutive gaps are kept within [1/L, 3/L]; pass ``kappa`` to fix the jitter.
    """
    L = int(grid_len)
    if L < 2:
        raise ValueError("grid_len must be at least 2")
    centers = (2 * np.arange(1, L + 1) - 1 - L) / L
    if kappa is not None:
        return AngleGrid(np.clip(centers + np.asarray(kappa, dtype=float), -1.0, 1.0))
    half = 1.0 / (2 * L)
    for _ in range(_MAX_GRID_ATTEMPTS):
        sines = np.clip(centers + rng.uniform(-half, half, size=L), -1.0, 1.0)
        gaps = np.diff(sines)
        if np.all(gaps >= 1.0 / L - 1e-15) and np.all(gaps <= 3.0 / L + 1e-15):
            return AngleGrid(sines)
    raise RuntimeError(f"could not draw a grid with L={L} satisfying the gap constraint")


def _draw_pas(rng: np.random.Generator, count: int) -> np.ndarray:
    vals = rng.uniform(0.1, 1.0, size=count)
    return vals / vals.sum()


def _paths_list(paths_per_user, K: int) -> list[int]:
    if np.isscalar(paths_per_user):
        return [int(paths_per_user)] * K
    paths = [int(p) for p in paths_per_user]
    if len(paths) != K:
        raise ValueError("paths_per_user must have one entry per user")
    return paths


def make_uniform_profile(grid: AngleGrid, num_users: int, paths_per_user, rng: np.random.Generator) -> SpatialProfile:
    """Each user gets P(k) distinct random grid beams with unit-sum PAS drawn from U[0.1, 1]."""
    L = len(grid)
    power = np.zeros((num_users, L))
    for k, P in enumerate(_paths_list(paths_per_user, num_users)):
        if not 0 <= P <= L:
            raise ValueError("paths per user must be within [0, L]")
        beams = rng.choice(L, size=P, replace=False)
        if P:
            power[k, beams] = _draw_pas(rng, P)
    return SpatialProfile(power)


def make_cluster_profile(
    grid: AngleGrid,
    num_users: int = 5,
    cluster_count: int = 3,
    cluster_size: float = 0.4,
    path_range: tuple[int, int] = (2, 13),
    rng: np.random.Generator | None = None,
    clusters_per_user: int = 2,
    centers: Sequence[float] | None = None,
) -> SpatialProfile:
    """Clustered geometry: users draw paths from ``clusters_per_user`` of the clusters.

    Cluster centers are uniform on [-1, 1] in the sine domain unless given.
    Each user's path count is uniform on ``path_range`` (inclusive) and is
    capped by the number of grid points inside its clusters.
    """
    if rng is None:
        rng = np.random.default_rng()
    clusters_per_user = min(clusters_per_user, cluster_count)
    if centers is None:
        centers = rng.uniform(-1.0, 1.0, size=cluster_count)
    centers = np.asarray(centers, dtype=float)
    if centers.size != cluster_count:
        raise ValueError("need one center per cluster")
    members = []
    for c, center in enumerate(centers):
        idx = np.flatnonzero(np.abs(grid.sines - center) <= cluster_size / 2)
        if idx.size == 0:
            raise ValueError(f"cluster {c} (center {center:.4f}) contains no grid points")
        members.append(idx)
    power = np.zeros((num_users, len(grid)))
    chosen = []
    for k in range(num_users):
        picks = tuple(sorted(rng.choice(cluster_count, size=clusters_per_user, replace=False).tolist()))
        chosen.append(picks)
        pool = np.unique(np.concatenate([members[c] for c in picks]))
        P = int(rng.integers(path_range[0], path_range[1] + 1))
        P = min(P, pool.size)
        beams = rng.choice(pool, size=P, replace=False)
        power[k, beams] = _draw_pas(rng, P)
    return SpatialProfile(power, clusters=tuple(chosen))


def apply_angle_mismatch(profile: SpatialProfile, variance: float, rng: np.random.Generator) -> SpatialProfile:
    """Off-grid offsets delta_l ~ N(0, variance) in degrees, one per grid point.

    ``variance`` is in squared degrees. The offsets only affect channel
    synthesis; beamformers keep using the grid. Zero variance returns the
    profile unchanged (the draw is still made so that streams stay aligned).
    """
    if variance < 0:
        raise ValueError("mismatch variance must be nonnegative")
    delta = rng.standard_normal(profile.grid_len) * np.sqrt(variance)
    if variance == 0:
        return profile
    return replace(profile, offsets=delta)


def apply_pas_mismatch(profile: SpatialProfile, level: float, rng: np.random.Generator) -> SpatialProfile:
    """Corrupt the believed PAS: (1 - level) * true + level * independent redraw.

    The physical channel keeps the original powers.
    """
    if not 0 <= level <= 1:
        raise ValueError("PAS mismatch level must lie in [0, 1]")
    true = profile.channel_power
    noisy = np.zeros_like(true)
    for k in range(profile.num_users):
        beams = np.flatnonzero(true[k] > 0)
        if beams.size:
            noisy[k, beams] = _draw_pas(rng, beams.size)
    if level == 0:
        return profile
    reported = (1 - level) * true + level * noisy
    return replace(profile, power=reported, true_power=true)


def truncate_grid(profile: SpatialProfile, grid: AngleGrid, target_len: int) -> tuple[SpatialProfile, AngleGrid]:
    """Drop the weakest grid points (smallest total power over users) until ``target_len`` remain."""
    L = profile.grid_len
    if not 1 <= target_len <= L:
        raise ValueError("target_len must lie in [1, L]")
    keep = list(range(L))
    col_power = profile.power.sum(axis=0)
    while len(keep) > target_len:
        worst = int(np.argmin(col_power[keep]))
        del keep[worst]
    keep = np.asarray(keep)
    new = replace(
        profile,
        power=profile.power[:, keep],
        true_power=None if profile.true_power is None else profile.true_power[:, keep],
        offsets=None if profile.offsets is None else profile.offsets[keep],
    )
    return new, AngleGrid(grid.sines[keep])


def true_steering(profile: SpatialProfile, grid: AngleGrid, num_antennas: int, spacing_ratio: float = 0.5) -> np.ndarray:
    """Steering matrix at the physical path angles (grid plus offsets)."""
    if profile.perfect:
        return steering_matrix(grid.sines, num_antennas, spacing_ratio)
    angles = np.deg2rad(grid.angles + profile.offsets)
    return steering_matrix(np.sin(angles), num_antennas, spacing_ratio)


def complex_normal(rng: np.random.Generator, shape) -> np.ndarray:
    """Circularly-symmetric CN(0, 1) samples."""
    return (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / np.sqrt(2)


def draw_channel(profile: SpatialProfile, grid: AngleGrid, config: SystemConfig, rng: np.random.Generator, draws: int | None = None) -> ChannelRealization:
    """Draw s ~ CN(0, 1) and assemble h_k = sum_l a(true angle_l) sigma_{k,l} s_{k,l}.

    With ``draws`` given, arrays gain a leading draw axis.
    """
    if len(grid) != profile.grid_len:
        raise ValueError("grid and profile lengths differ")
    K, L = profile.power.shape
    shape = (K, L) if draws is None else (draws, K, L)
    amp = np.sqrt(profile.channel_power)
    s = complex_normal(rng, shape) * (amp > 0)
    A = true_steering(profile, grid, config.num_antennas, config.spacing_ratio)
    h = (amp * s) @ A.T
    return ChannelRealization(s=s, h=h)
