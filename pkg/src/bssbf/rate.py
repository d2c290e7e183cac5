"""Closed-form ergodic rates of BS-SBF, their approximation and asymptotes.

The rate of user k is E[log2(1 + c rho_all)] - E[log2(1 + c rho_int)] where
c = gamma / (Upsilon Gamma), rho_all = sum over Omega_k of sigma^2 |s|^2 and
rho_int the same sum restricted to Omega_k minus G_k. Both sums are
hypoexponential, so each expectation has a finite expansion in scaled
exponential integrals.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Mapping, Sequence

import mpmath
import numpy as np

from .beamforming import BeamAssignment
from .special import EULER_GAMMA, exp_scaled_En_partial_sum

__all__ = [
    "GroupedGains",
    "RateReport",
    "group_values",
    "group_gains",
    "exact_rate",
    "exact_rate_distinct",
    "expected_log2",
    "hypoexp_pdf",
    "approx_sum_rate",
    "fs_ratio",
    "user_rates",
    "sum_rate",
    "low_snr_limit",
    "high_snr_constants",
]

LN2 = math.log(2.0)
DEFAULT_GROUP_TOL = 1e-9


@dataclass(frozen=True)
class GroupedGains:
    """Distinct beam powers (sigma^2, descending) with multiplicities.

    ``values``/``mult`` describe Omega_k, ``interf_values``/``interf_mult``
    describe Omega_k minus G_k.
    """

    values: tuple[float, ...]
    mult: tuple[int, ...]
    interf_values: tuple[float, ...] = ()
    interf_mult: tuple[int, ...] = ()

    @property
    def size(self) -> int:
        return sum(self.mult)


@dataclass
class RateReport:
    per_user: np.ndarray
    per_user_stderr: np.ndarray | None = None
    sum_stderr: float | None = None
    c1: float | None = None
    c2: float | None = None
    extras: dict = field(default_factory=dict)

    @property
    def sum_rate(self) -> float:
        return float(np.sum(self.per_user))


def group_values(power: Sequence[float], tol: float = DEFAULT_GROUP_TOL) -> tuple[tuple[float, ...], tuple[int, ...]]:
    """Group beam powers whose amplitudes differ by at most ``tol`` (relative)."""
    if tol < 0:
        raise ValueError("tolerance must be nonnegative")
    vals = sorted((float(p) for p in power), reverse=True)
    out_vals: list[float] = []
    out_mult: list[int] = []
    anchor = None
    for v in vals:
        amp = math.sqrt(v)
        if anchor is not None and abs(anchor - amp) <= tol * max(anchor, amp):
            out_mult[-1] += 1
            continue
        anchor = amp
        out_vals.append(v)
        out_mult.append(1)
    return tuple(out_vals), tuple(out_mult)


def group_gains(power: np.ndarray, assignment: BeamAssignment, k: int, tol: float = DEFAULT_GROUP_TOL) -> GroupedGains:
    """Grouped gains of user ``k``; ``power`` is the (K, L) array of sigma^2."""
    power = np.asarray(power, dtype=float)
    active = assignment.active_beams(power, k)
    interf = assignment.interfering_beams(power, k)
    v, m = group_values(power[k, active], tol)
    iv, im = group_values(power[k, interf], tol)
    return GroupedGains(v, m, iv, im)


@lru_cache(maxsize=4096)
def _compositions(total: int, parts: int) -> tuple[tuple[int, ...], ...]:
    if parts == 0:
        return ((),) if total == 0 else ()
    out = []
    for first in range(total + 1):
        for rest in _compositions(total - first, parts - 1):
            out.append((first,) + rest)
    return tuple(out)


class _Double:
    """Float arithmetic for the expansions."""

    num = float
    exp = staticmethod(math.exp)
    log = staticmethod(math.log)
    total = staticmethod(math.fsum)
    scaled_sum = staticmethod(exp_scaled_En_partial_sum)


class _Extended:
    """mpmath arithmetic at the working precision in force when called."""

    num = staticmethod(mpmath.mpf)
    exp = staticmethod(mpmath.exp)
    log = staticmethod(mpmath.log)
    total = staticmethod(mpmath.fsum)

    @staticmethod
    def scaled_sum(order, x):
        return mpmath.exp(x) * mpmath.fsum(mpmath.expint(t, x) for t in range(1, order + 1))


# a sum whose terms cancel beyond this factor is redone at higher precision
_MAX_CANCELLATION = 1e3


def _stable_sum(build) -> float:
    """Sum of ``build(arith)``, repeated with extra digits when the terms cancel heavily."""
    terms = build(_Double)
    total = math.fsum(terms)
    size = math.fsum(abs(t) for t in terms)
    if size == 0 or size <= _MAX_CANCELLATION * abs(total):
        return total
    ratio = size / abs(total) if total else 1e300
    with mpmath.workdps(25 + int(math.log10(min(ratio, 1e300)))):
        return float(mpmath.fsum(build(_Extended)))


def _f_weight(values, mult, j: int, l: int, arith=_Double):
    """Partial-fraction weight f_{r,j,l}; compositions of l-1 over the groups other than j."""
    lam = [1 / arith.num(v) for v in values]
    others = [t for t in range(len(values)) if t != j]
    total = arith.num(0)
    for comp in _compositions(l - 1, len(others)):
        term = arith.num(1)
        for tau, i in zip(others, comp):
            r = mult[tau]
            term *= math.comb(i + r - 1, i) * (lam[tau] - lam[j]) ** (-(r + i))
        total += term
    return total


def _erlang_terms(values, mult, arith=_Double):
    """Yield (j, m, coef) such that pdf(rho) = sum coef * rho^m e^{-rho/values[j]} / m!."""
    prefactor = arith.exp(-sum(r * arith.log(arith.num(v)) for v, r in zip(values, mult)))
    for j, r in enumerate(mult):
        for l in range(1, r + 1):
            sign = -1 if (l - 1) % 2 else 1
            yield j, r - l, prefactor * sign * _f_weight(values, mult, j, l, arith)


def expected_log2(values: Sequence[float], mult: Sequence[int], snr_scale: float) -> float:
    """E[log2(1 + snr_scale * rho)] for rho = sum of mult[j] exponentials with mean values[j]."""
    if not values or snr_scale <= 0:
        return 0.0

    def build(arith):
        c = arith.num(snr_scale)
        return [coef * arith.num(values[j]) ** (m + 1) * arith.scaled_sum(m + 1, 1 / (c * arith.num(values[j])))
                for j, m, coef in _erlang_terms(values, mult, arith)]

    return _stable_sum(build) / LN2


def exact_rate(grouped: GroupedGains, gamma: float, beams_per_user: int = 1, rate_inverse: float = 1.0) -> float:
    """Ergodic rate of one user in bits/s/Hz; zero when Omega_k is empty."""
    if not grouped.values or gamma <= 0:
        return 0.0
    c = gamma / (rate_inverse * beams_per_user)
    rate = expected_log2(grouped.values, grouped.mult, c) - expected_log2(grouped.interf_values, grouped.interf_mult, c)
    return max(rate, 0.0)


def _lagrange_weights(values, arith=_Double) -> list:
    out = []
    for l, vl in enumerate(values):
        vl = arith.num(vl)
        prod = arith.num(1)
        for j, vj in enumerate(values):
            if j != l:
                prod *= (vl - vj) / vl
        out.append(1 / prod)
    return out


def _check_distinct(values: Sequence[float], tol: float) -> None:
    _, mult = group_values(values, tol)
    if any(m > 1 for m in mult):
        raise ValueError("beam powers must be pairwise distinct; use exact_rate for repeated values")


def exact_rate_distinct(active: Sequence[float], interfering: Sequence[float], gamma: float,
                        beams_per_user: int = 1, rate_inverse: float = 1.0, tol: float = DEFAULT_GROUP_TOL) -> float:
    """Rate for pairwise-distinct powers (sigma^2) of Omega_k and Omega_k minus G_k."""
    active, interfering = list(map(float, active)), list(map(float, interfering))
    _check_distinct(active, tol)
    if not active or gamma <= 0:
        return 0.0
    c = gamma / (rate_inverse * beams_per_user)

    def part(vals):
        def build(arith):
            cc = arith.num(c)
            return [w * arith.scaled_sum(1, 1 / (cc * arith.num(v)))
                    for w, v in zip(_lagrange_weights(vals, arith), vals)]

        return _stable_sum(build) if vals else 0.0

    return (part(active) - part(interfering)) / LN2


def hypoexp_pdf(grouped: GroupedGains, rho):
    """Density of sum over Omega_k of sigma^2 |s|^2 at ``rho`` (scalar or array)."""
    rho = np.asarray(rho, dtype=float)
    out = np.zeros_like(rho)
    if np.any(rho < 0):
        raise ValueError("rho must be nonnegative")
    for j, m, coef in _erlang_terms(grouped.values, grouped.mult):
        v = grouped.values[j]
        out = out + coef * rho**m * np.exp(-rho / v) / math.factorial(m)
    # close gains cancel near rho = 0; clip the rounding residue
    out = np.maximum(out, 0.0)
    return out if out.ndim else float(out)


def _as_groups(assignment) -> dict[int, tuple[int, ...]]:
    if isinstance(assignment, Mapping):
        return {int(k): tuple(g) for k, g in assignment.items()}
    return {k: tuple(g) for k, g in enumerate(assignment) if g is not None}


def fs_ratio(power: np.ndarray, others: Mapping[int, Sequence[int]], user: int, candidates, noise: float):
    """Numerator and denominator of the greedy selection ratio for each candidate set.

    ``others`` are the already fixed users' beam sets. ``candidates`` is an
    (C, Gamma) integer array. ``noise`` is Upsilon Gamma / gamma.
    Returns (signal, interference-plus-noise) arrays of length C.
    """
    power = np.asarray(power, dtype=float)
    cand = np.atleast_2d(np.asarray(candidates, dtype=int))
    signal = power[user, cand].sum(axis=1)
    users = [i for i in others if i != user]
    base = noise
    if users:
        claimed = [l for i in users for l in others[i]]
        for i in users:
            own = set(others[i])
            base += sum(power[i, l] for l in claimed if l not in own)
        col = power[users].sum(axis=0)
        leak = col[cand].sum(axis=1)
    else:
        leak = np.zeros(len(cand))
    return signal, base + leak


def approx_sum_rate(power: np.ndarray, prior, user: int, candidate: Sequence[int], gamma: float,
                    beams_per_user: int = 1, rate_inverse: float = 1.0) -> float:
    """Greedy-selection score of ``candidate`` for ``user`` given earlier users ``prior``.

    log2(signal) - log2(Upsilon Gamma / gamma + interference among earlier
    users including the leakage of the candidate onto them); terms that do
    not depend on the candidate are dropped. Returns -inf for a candidate
    with no signal.
    """
    others = _as_groups(prior)
    if set(candidate) & {l for g in others.values() for l in g}:
        raise ValueError("candidate overlaps an existing assignment")
    noise = rate_inverse * beams_per_user / gamma
    sig, den = fs_ratio(power, others, user, [list(candidate)], noise)
    if sig[0] <= 0:
        return -math.inf
    return math.log2(sig[0]) - math.log2(den[0])


def user_rates(power: np.ndarray, assignment: BeamAssignment, gamma: float, beams_per_user: int | None = None,
               rate_inverse: float = 1.0, tol: float = DEFAULT_GROUP_TOL) -> np.ndarray:
    if beams_per_user is None:
        beams_per_user = len(assignment[0]) if len(assignment) else 1
    return np.array([
        exact_rate(group_gains(power, assignment, k, tol), gamma, beams_per_user, rate_inverse)
        for k in range(len(assignment))
    ])


def sum_rate(power: np.ndarray, assignment: BeamAssignment, gamma: float, beams_per_user: int | None = None,
             rate_inverse: float = 1.0, tol: float = DEFAULT_GROUP_TOL) -> float:
    """Closed-form ergodic sum-rate."""
    return float(user_rates(power, assignment, gamma, beams_per_user, rate_inverse, tol).sum())


def low_snr_limit(power: np.ndarray, assignment: BeamAssignment, beams_per_user: int, rate_inverse: float = 1.0) -> float:
    """lim R_sum / gamma as gamma -> 0."""
    power = np.asarray(power, dtype=float)
    sig = sum(power[k, list(g)].sum() for k, g in enumerate(assignment) if g)
    return float(sig) / (rate_inverse * beams_per_user * LN2)


def high_snr_constants(power: np.ndarray, assignment: BeamAssignment, beams_per_user: int, rate_inverse: float = 1.0,
                       tol: float = DEFAULT_GROUP_TOL) -> tuple[float, float]:
    """(C1, C2) with R_sum ~ C1 log2(gamma) + C2 for large gamma."""
    power = np.asarray(power, dtype=float)
    scale = rate_inverse * beams_per_user
    c1 = c2 = 0.0
    for k in range(len(assignment)):
        for sign, beams in ((1.0, assignment.active_beams(power, k)), (-1.0, assignment.interfering_beams(power, k))):
            vals = [float(power[k, l]) for l in beams]
            _check_distinct(vals, tol)
            for w, v in zip(_lagrange_weights(vals), vals):
                c1 += sign * w
                c2 += sign * w * (math.log2(v / scale) - EULER_GAMMA / LN2)
    return c1, c2
