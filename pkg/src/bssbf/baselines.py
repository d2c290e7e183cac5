"""Reference precoders: SLNR eigen-beamforming, DFT-grid SLNR and training-based ZF."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import linalg

from .scenario import AngleGrid, SpatialProfile, SystemConfig, steering_matrix

__all__ = [
    "CovarianceSet",
    "ConvergenceError",
    "build_covariances",
    "slnr_eigen_precoder",
    "dft_matrix",
    "dft_slnr_precoder",
    "zf_precoder",
    "estimate_channels",
    "zf_sum_rate_with_overhead",
]


class ConvergenceError(ArithmeticError):
    def __init__(self, residual: float, iterations: int):
        super().__init__(f"power iteration did not converge after {iterations} iterations (residual {residual:.3e})")
        self.residual = residual


@dataclass(frozen=True)
class CovarianceSet:
    """Downlink covariances R_k, shape (K, N, N)."""

    R: np.ndarray

    @property
    def num_users(self) -> int:
        return self.R.shape[0]

    @property
    def num_antennas(self) -> int:
        return self.R.shape[1]


def build_covariances(profile: SpatialProfile, grid: AngleGrid, config: SystemConfig) -> CovarianceSet:
    """R_k = A diag(sigma_k^2) A^H from the believed profile on the grid."""
    A = steering_matrix(grid.sines, config.num_antennas, config.spacing_ratio)
    R = np.einsum("nl,kl,ml->knm", A, profile.power, A.conj())
    return CovarianceSet(0.5 * (R + R.conj().transpose(0, 2, 1)))


def _interference_plus_noise(cov: CovarianceSet, gamma: float) -> np.ndarray:
    total = cov.R.sum(axis=0)
    eye = np.eye(cov.num_antennas)
    return np.stack([eye / gamma + total - cov.R[k] for k in range(cov.num_users)])


def slnr_eigen_precoder(cov: CovarianceSet, gamma: float, tol: float = 1e-10, max_iter: int = 10_000,
                        residual_tol: float = 1e-8) -> np.ndarray:
    """Unit-norm principal eigenvectors of ((1/gamma) I + sum_{j != k} R_j)^{-1} R_k, shape (N, K).

    Power iteration on the (nonsymmetric) product, warm-started from the
    generalized Hermitian eigenvector of (R_k, Q_k). It stops once the
    eigenvalue estimate changes by less than ``tol`` relative and the
    eigenpair residual is below ``residual_tol`` relative.
    """
    K, N = cov.num_users, cov.num_antennas
    Q = _interference_plus_noise(cov, gamma)
    V = np.empty((N, K), dtype=complex)
    for k in range(K):
        B = np.linalg.solve(Q[k], cov.R[k])
        _, U = linalg.eigh(cov.R[k], Q[k])
        v = U[:, -1] / np.linalg.norm(U[:, -1])
        lam = np.vdot(v, B @ v).real
        for it in range(max_iter):
            u = B @ v
            norm = np.linalg.norm(u)
            if norm == 0:
                break
            new_lam = np.vdot(v, u).real
            resid = np.linalg.norm(u - new_lam * v)
            v = u / norm
            if abs(new_lam - lam) <= tol * abs(new_lam) and resid <= residual_tol * abs(new_lam):
                break
            lam = new_lam
        else:
            raise ConvergenceError(float(np.linalg.norm(B @ v - lam * v)), max_iter)
        V[:, k] = v
    return V


def dft_matrix(N: int) -> np.ndarray:
    n = np.arange(N)
    return np.exp(-2j * np.pi * np.outer(n, n) / N) / np.sqrt(N)


def dft_slnr_precoder(cov: CovarianceSet, gamma: float, return_indices: bool = False):
    """Each user takes the DFT column maximizing g_kn / (1/gamma + sum_{j != k} g_jn).

    Users may share a column.
    """
    N = cov.num_antennas
    F = dft_matrix(N)
    g = np.einsum("nm,knp,pm->km", F.conj(), cov.R, F).real
    g = np.maximum(g, 0.0)
    leak = g.sum(axis=0)[None, :] - g
    ratio = g / (1.0 / gamma + leak)
    idx = np.argmax(ratio, axis=1)
    V = F[:, idx]
    return (V, idx) if return_indices else V


def estimate_channels(h: np.ndarray, gamma: float, rng: np.random.Generator) -> np.ndarray:
    """Noisy training estimates h + n with n ~ CN(0, I / gamma)."""
    noise = (rng.standard_normal(h.shape) + 1j * rng.standard_normal(h.shape)) / np.sqrt(2 * gamma)
    return h + noise


def zf_precoder(h_est: np.ndarray, loading: float = 1e-10):
    """Zero-forcing beamformers from channel estimates.

    ``h_est`` has shape (..., K, N); returns (V with shape (..., N, K), flagged)
    where ``flagged`` is True if any Gram matrix needed diagonal loading.
    Column k is P_k h_k / ||P_k h_k|| with P_k projecting onto the
    complement of the other users' estimates, i.e. the normalized k-th
    column of H (H^H H)^{-1} with H = [h_1 ... h_K].
    """
    h_est = np.asarray(h_est, dtype=complex)
    H = np.swapaxes(h_est, -1, -2)  # (..., N, K)
    K = H.shape[-1]
    gram = np.swapaxes(H.conj(), -1, -2) @ H
    rcond = 1.0 / np.linalg.cond(gram)
    flagged = bool(np.any(~np.isfinite(rcond) | (rcond < 1e-12)))
    if flagged:
        scale = np.trace(gram, axis1=-2, axis2=-1).real[..., None, None] / K
        gram = gram + loading * np.maximum(scale, 1.0) * np.eye(K)
    W = H @ np.linalg.inv(gram)
    W = W / np.linalg.norm(W, axis=-2, keepdims=True)
    return W, flagged


def zf_sum_rate_with_overhead(rates, num_antennas: int, coherence_len: int) -> float:
    """Sum of ergodic rates scaled by the training overhead factor (1 - N/T), floored at 0."""
    if coherence_len <= 0:
        raise ValueError("coherence length must be positive")
    factor = max(0.0, 1.0 - num_antennas / coherence_len)
    return factor * float(np.sum(rates))
