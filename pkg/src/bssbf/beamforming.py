"""Pseudoinverse beam basis, BS-SBF beamformers and the two-beam block code."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np
import scipy.linalg

from .scenario import AngleGrid, ChannelRealization, SpatialProfile, SystemConfig, steering_matrix

__all__ = [
    "SingularBasisError",
    "UnsupportedCodingError",
    "DeepFadeError",
    "BeamBasis",
    "BeamAssignment",
    "BtbcBlock",
    "build_basis",
    "beam_vector",
    "beam_matrix",
    "btbc_encode",
    "btbc_decode",
    "btbc_matrix",
    "instantaneous_sinr",
    "sparse_sinr",
]

RCOND_THRESHOLD = 1e-12


class SingularBasisError(np.linalg.LinAlgError):
    def __init__(self, cond: float):
        super().__init__(f"grid Gram matrix is near-singular (condition number {cond:.3e})")
        self.cond = cond


class UnsupportedCodingError(ValueError):
    pass


class DeepFadeError(ArithmeticError):
    pass


@dataclass(frozen=True)
class BeamBasis:
    response: np.ndarray
    pinv: np.ndarray
    gram_inv: np.ndarray

    @property
    def num_antennas(self) -> int:
        return self.response.shape[0]

    @property
    def grid_len(self) -> int:
        return self.response.shape[1]


@dataclass(frozen=True)
class BeamAssignment:
    """Selected beams G_k per user, stored as sorted tuples."""

    groups: tuple[tuple[int, ...], ...]

    def __post_init__(self):
        object.__setattr__(self, "groups", tuple(tuple(sorted(int(l) for l in g)) for g in self.groups))

    @classmethod
    def of(cls, groups: Sequence[Sequence[int]]) -> "BeamAssignment":
        return cls(tuple(tuple(g) for g in groups))

    def __len__(self):
        return len(self.groups)

    def __getitem__(self, k):
        return self.groups[k]

    def __iter__(self):
        return iter(self.groups)

    def validate(self, beams_per_user: int | None = None, grid_len: int | None = None) -> "BeamAssignment":
        seen = set()
        for k, g in enumerate(self.groups):
            if beams_per_user is not None and len(g) != beams_per_user:
                raise ValueError(f"user {k} has {len(g)} beams, expected {beams_per_user}")
            if len(set(g)) != len(g):
                raise ValueError(f"user {k} repeats a beam")
            for l in g:
                if grid_len is not None and not 0 <= l < grid_len:
                    raise ValueError(f"beam index {l} outside the grid")
                if l in seen:
                    raise ValueError(f"beam {l} assigned to more than one user")
                seen.add(l)
        return self

    def owners(self, grid_len: int) -> np.ndarray:
        """owner[l] = user holding beam l, or -1."""
        owner = np.full(grid_len, -1)
        for k, g in enumerate(self.groups):
            owner[list(g)] = k
        return owner

    def all_beams(self) -> list[int]:
        return sorted(l for g in self.groups for l in g)

    def active_beams(self, profile_power: np.ndarray, k: int) -> list[int]:
        """Omega_k: available beams of user k claimed by any user."""
        return [l for l in self.all_beams() if profile_power[k, l] > 0]

    def interfering_beams(self, profile_power: np.ndarray, k: int) -> list[int]:
        """Omega_k minus G_k."""
        own = set(self.groups[k])
        return [l for l in self.all_beams() if l not in own and profile_power[k, l] > 0]


@dataclass(frozen=True)
class BtbcBlock:
    """Transmit vectors for the two slots, shape (2, N), plus per-user parts (K, 2, N)."""

    q: np.ndarray
    per_user: np.ndarray
    symbols: np.ndarray


def build_basis(grid: AngleGrid, config: SystemConfig | None = None, *, num_antennas: int | None = None,
                spacing_ratio: float | None = None) -> BeamBasis:
    """A^dagger = A (A^H A)^{-1}, via a Cholesky factorization of the Gram matrix."""
    if config is not None:
        num_antennas = num_antennas or config.num_antennas
        spacing_ratio = spacing_ratio if spacing_ratio is not None else config.spacing_ratio
    if num_antennas is None:
        raise ValueError("num_antennas is required")
    spacing_ratio = 0.5 if spacing_ratio is None else spacing_ratio
    A = steering_matrix(grid.sines, num_antennas, spacing_ratio)
    gram = A.conj().T @ A
    cond = np.linalg.cond(gram)
    if not np.isfinite(cond) or 1.0 / cond < RCOND_THRESHOLD:
        raise SingularBasisError(cond)
    factor = scipy.linalg.cho_factor(gram)
    gram_inv = scipy.linalg.cho_solve(factor, np.eye(gram.shape[0], dtype=complex))
    pinv = A @ gram_inv
    err = np.max(np.abs(A.conj().T @ pinv - np.eye(A.shape[1])))
    if err > 1e-8:
        raise SingularBasisError(cond)
    return BeamBasis(response=A, pinv=pinv, gram_inv=gram_inv)


def beam_vector(basis: BeamBasis, beams: Sequence[int]) -> np.ndarray:
    """v_k = sum of the selected pseudoinverse columns over sqrt(Gamma); not renormalized."""
    beams = list(beams)
    if not beams:
        raise ValueError("a beamformer needs at least one beam")
    return basis.pinv[:, beams].sum(axis=1) / np.sqrt(len(beams))


def beam_matrix(basis: BeamBasis, assignment: BeamAssignment) -> np.ndarray:
    """Stack of BS-SBF beamformers, shape (N, K)."""
    return np.stack([beam_vector(basis, g) for g in assignment], axis=1)


def btbc_encode(basis: BeamBasis, assignment: BeamAssignment, symbols) -> BtbcBlock:
    """Two-slot beam-time block code; ``symbols`` has shape (K, 2)."""
    symbols = np.asarray(symbols, dtype=complex)
    if any(len(g) != 2 for g in assignment):
        raise UnsupportedCodingError("beam-time block coding is implemented for two beams per user only")
    if symbols.shape != (len(assignment), 2):
        raise ValueError("symbols must have shape (K, 2)")
    per_user = np.empty((len(assignment), 2, basis.num_antennas), dtype=complex)
    for k, (l1, l2) in enumerate(assignment):
        a1, a2 = basis.pinv[:, l1], basis.pinv[:, l2]
        x1, x2 = symbols[k]
        per_user[k, 0] = (a1 * x1 + a2 * x2) / np.sqrt(2)
        per_user[k, 1] = (-a1 * np.conj(x2) + a2 * np.conj(x1)) / np.sqrt(2)
    return BtbcBlock(q=per_user.sum(axis=0), per_user=per_user, symbols=symbols)


def btbc_matrix(g1, g2) -> np.ndarray:
    """Effective 2x2 code matrix M for beam gains g1, g2 (broadcasts over leading axes)."""
    g1, g2 = np.asarray(g1, dtype=complex), np.asarray(g2, dtype=complex)
    return np.stack([np.stack([g1, g2], -1), np.stack([np.conj(g2), -np.conj(g1)], -1)], -2)


def btbc_decode(y1, y2, g1, g2, gamma: float):
    """Linear decoding of the two-slot code.

    ``g1``, ``g2`` are the effective gains h_k^H a^dagger_l of the user's two
    beams. Inputs broadcast; returns (x1_hat, x2_hat).
    """
    y1, y2 = np.asarray(y1, dtype=complex), np.asarray(y2, dtype=complex)
    g1, g2 = np.asarray(g1, dtype=complex), np.asarray(g2, dtype=complex)
    energy = np.abs(g1) ** 2 + np.abs(g2) ** 2
    if np.any(energy == 0):
        raise DeepFadeError("combined beam gain is zero")
    z2 = np.conj(y2)
    scale = np.sqrt(2.0 / gamma) / energy
    # M^H [y1; y2*] with M = [[g1, g2], [g2*, -g1*]]
    x1 = scale * (np.conj(g1) * y1 + g2 * z2)
    x2 = scale * (np.conj(g2) * y1 - g1 * z2)
    return x1, x2


def sparse_sinr(gains2: np.ndarray, assignment: BeamAssignment, snr_scale: float) -> np.ndarray:
    """SINR of every user from per-beam received powers.

    ``gains2[..., k, l]`` is sigma_{k,l}^2 |s_{k,l}|^2 (zero off-support);
    ``snr_scale`` is gamma / (Upsilon Gamma). Returns shape (..., K).
    """
    gains2 = np.asarray(gains2, dtype=float)
    K = len(assignment)
    out = np.empty(gains2.shape[:-2] + (K,))
    claimed = assignment.all_beams()
    total = gains2[..., :, claimed].sum(axis=-1) if claimed else np.zeros(gains2.shape[:-1])
    for k, g in enumerate(assignment):
        sig = gains2[..., k, list(g)].sum(axis=-1)
        interf = total[..., k] - sig
        out[..., k] = snr_scale * sig / (1.0 + snr_scale * interf)
    return out


def instantaneous_sinr(profile: SpatialProfile, realization: ChannelRealization, assignment: BeamAssignment,
                       config: SystemConfig, k: int) -> float:
    """SINR of user ``k`` for one realization, perfect angle information assumed."""
    gains2 = profile.channel_power * np.abs(realization.s) ** 2
    scale = config.per_user_power / config.rate_scale
    return float(sparse_sinr(gains2, assignment, scale)[k])
