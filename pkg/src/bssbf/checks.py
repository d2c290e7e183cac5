"""Fast numerical self-checks run by ``bssbf validate``."""

from __future__ import annotations

import math

import numpy as np
from scipy import integrate, special

from .baselines import dft_matrix, zf_precoder, zf_sum_rate_with_overhead
from .beamforming import BeamAssignment, btbc_decode, btbc_encode, build_basis
from .rate import GroupedGains, exact_rate, exact_rate_distinct, hypoexp_pdf
from .scenario import SystemConfig, draw_channel, make_uniform_grid, make_uniform_profile
from .special import exp_scaled_En


def run_checks(seed: int = 0) -> list[tuple[str, bool, str]]:
    """Return (label, passed, detail) for each check."""
    rng = np.random.default_rng(seed)
    out = []

    def add(label, value, limit):
        out.append((label, bool(value <= limit), f"{value:.2e} <= {limit:.0e}"))

    grid = make_uniform_grid(16, rng)
    basis = build_basis(grid, num_antennas=16)
    add("unit-norm steering vectors", np.max(np.abs(np.linalg.norm(basis.response, axis=0) - 1)), 1e-12)
    add("pseudoinverse identity", np.max(np.abs(basis.response.conj().T @ basis.pinv - np.eye(16))), 1e-8)

    assignment = BeamAssignment.of([(0, 5), (9, 13)])
    x = np.array([[1, -1], [1j, -1j]])
    block = btbc_encode(basis, assignment, x)
    gamma = 10.0
    err = 0.0
    for k, (l1, l2) in enumerate(assignment):
        h = basis.response[:, l1] * 0.7 + basis.response[:, l2] * (0.2 - 0.4j)
        y1 = math.sqrt(gamma) * np.conj(h) @ block.q[0]
        y2 = math.sqrt(gamma) * np.conj(h) @ block.q[1]
        g1, g2 = np.conj(h) @ basis.pinv[:, l1], np.conj(h) @ basis.pinv[:, l2]
        xh = np.array(btbc_decode(y1, y2, g1, g2, gamma))
        err = max(err, float(np.max(np.abs(xh - x[k]))))
    add("block code noiseless round trip", err, 1e-10)

    worst = 0.0
    for _ in range(20):
        a = rng.uniform(0.05, 1.0, size=4)
        b = a[2:]
        ref = exact_rate(GroupedGains(tuple(sorted(a, reverse=True)), (1,) * 4, tuple(sorted(b, reverse=True)), (1, 1)),
                         100.0)
        alt = exact_rate_distinct(a, b, 100.0)
        worst = max(worst, abs(ref - alt) / abs(ref))
    add("closed form vs distinct-gain form", worst, 1e-9)

    worst = max(abs(exp_scaled_En(t, x) - math.exp(x) * special.expn(t, x)) / (math.exp(x) * special.expn(t, x))
                for t in (1, 2, 5) for x in (0.01, 0.7, 3.0, 40.0))
    add("scaled exponential integral", worst, 1e-10)

    grouped = GroupedGains((0.6, 0.25), (2, 1))
    mass, _ = integrate.quad(lambda r: hypoexp_pdf(grouped, r), 0, np.inf, limit=200)
    add("density normalization", abs(mass - 1), 1e-6)

    F = dft_matrix(16)
    add("DFT basis unitary", np.max(np.abs(F.conj().T @ F - np.eye(16))), 1e-10)

    cfg = SystemConfig(num_antennas=16, num_users=4, grid_len=16)
    profile = make_uniform_profile(grid, 4, 3, rng)
    h = draw_channel(profile, grid, cfg, rng).h
    V, _ = zf_precoder(h)
    G = np.abs(np.conj(h) @ V) ** 2
    leak = (G.sum(axis=1) - np.diag(G)) / np.diag(G)
    add("zero-forcing leakage ratio", float(leak.max()), 1e-18)
    add("training overhead factor", abs(zf_sum_rate_with_overhead([1.0], 64, 100) - 0.36), 1e-15)
    return out
