"""Beam selection: exhaustive search, forward stepwise, annealed Gibbs, low-SNR greedy."""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .beamforming import BeamAssignment
from .rate import DEFAULT_GROUP_TOL, exact_rate, fs_ratio, group_values, GroupedGains
from .scenario import SpatialProfile, SystemConfig

__all__ = [
    "InstanceTooLargeError",
    "SelectorConfig",
    "SelectionResult",
    "ExactSumRate",
    "exhaustive_select",
    "fs_select",
    "gibbs_select",
    "gibbs_probabilities",
    "low_snr_select",
    "select",
    "count_assignments",
]

METHODS = ("exhaustive", "fs", "gibbs", "low-snr-greedy")


class InstanceTooLargeError(RuntimeError):
    def __init__(self, count: int, budget: int):
        super().__init__(f"exhaustive search needs {count} evaluations, budget is {budget}")
        self.count = count
        self.budget = budget


@dataclass(frozen=True)
class SelectorConfig:
    method: str = "fs"
    gibbs_steps: int | None = None  # None -> 5 K
    initial_temperature: float = 0.1
    cooling_rate: float = 0.95
    restarts: int = 3
    rng_seed: int = 0
    budget: int = 10**7
    candidates: str = "full"

    def __post_init__(self):
        if self.method not in METHODS:
            raise ValueError(f"unknown selection method {self.method!r}")
        if self.initial_temperature <= 0:
            raise ValueError("initial_temperature must be positive")
        if not 0 < self.cooling_rate < 1:
            raise ValueError("cooling_rate must lie in (0, 1)")
        if self.candidates not in ("full", "support"):
            raise ValueError("candidates must be 'full' or 'support'")
        if self.restarts < 1:
            raise ValueError("restarts must be >= 1")

    def steps_for(self, num_users: int) -> int:
        return 5 * num_users if self.gibbs_steps is None else int(self.gibbs_steps)


@dataclass
class SelectionResult:
    assignment: BeamAssignment
    trace: list[tuple[int, float]] = field(default_factory=list)
    meta: dict = field(default_factory=dict)


class ExactSumRate:
    """Closed-form sum-rate with per-user memoization on (signal set, interference set)."""

    def __init__(self, power: np.ndarray, gamma: float, beams_per_user: int, rate_inverse: float = 1.0,
                 tol: float = DEFAULT_GROUP_TOL):
        self.power = np.asarray(power, dtype=float)
        self.gamma = gamma
        self.beams_per_user = beams_per_user
        self.rate_inverse = rate_inverse
        self.tol = tol
        K, L = self.power.shape
        self.support = [int(sum(1 << l for l in np.flatnonzero(self.power[k] > 0))) for k in range(K)]
        self._memo: list[dict] = [{} for _ in range(K)]

    def user_rate(self, k: int, own_mask: int, other_mask: int) -> float:
        sup = self.support[k]
        key = (own_mask & sup, other_mask & sup)
        memo = self._memo[k]
        val = memo.get(key)
        if val is None:
            val = self._evaluate(k, *key)
            memo[key] = val
        return val

    def _evaluate(self, k: int, sig_mask: int, int_mask: int) -> float:
        row = self.power[k]
        sig = [row[l] for l in _bits(sig_mask)]
        interf = [row[l] for l in _bits(int_mask)]
        v, m = group_values(sig + interf, self.tol)
        iv, im = group_values(interf, self.tol)
        return exact_rate(GroupedGains(v, m, iv, im), self.gamma, self.beams_per_user, self.rate_inverse)

    def masks(self, groups: Sequence[Sequence[int]]) -> list[int]:
        return [sum(1 << l for l in g) for g in groups]

    def __call__(self, groups: Sequence[Sequence[int]]) -> float:
        masks = self.masks(groups)
        union = 0
        for m in masks:
            union |= m
        return sum(self.user_rate(k, m, union & ~m) for k, m in enumerate(masks))


def _bits(mask: int):
    l = 0
    while mask:
        if mask & 1:
            yield l
        mask >>= 1
        l += 1


def count_assignments(grid_len: int, num_users: int, beams_per_user: int) -> int:
    count = 1
    for k in range(num_users):
        count *= math.comb(grid_len - k * beams_per_user, beams_per_user)
    return count


def _check(result: SelectionResult, Gamma: int, L: int) -> SelectionResult:
    result.assignment.validate(Gamma, L)
    return result


def _reduced_count(support_size: int, null_count: int, num_users: int, beams_per_user: int) -> int:
    # upper bound on the enumeration once zero-power beams are pooled
    per_user = sum(math.comb(support_size, j) for j in range(beams_per_user + 1))
    return min(per_user**num_users, count_assignments(support_size + null_count, num_users, beams_per_user))


def exhaustive_select(profile: SpatialProfile, system: SystemConfig, cfg: SelectorConfig | None = None) -> SelectionResult:
    """Maximize the closed-form sum-rate over all assignments of disjoint beam sets.

    Beams with zero power for every user are interchangeable, so they are
    pooled: each user picks its beams among the powered ones plus a count of
    pooled beams, which are handed out in index order at the end. This
    enumerates every distinct sum-rate value of the full search space.
    Ties go to the first assignment in enumeration order.
    """
    cfg = cfg or SelectorConfig(method="exhaustive")
    K, L = profile.power.shape
    Gamma = system.beams_per_user
    powered = [int(l) for l in np.flatnonzero(profile.power.sum(axis=0) > 0)]
    null = [l for l in range(L) if l not in set(powered)]
    count = _reduced_count(len(powered), len(null), K, Gamma)
    if count > cfg.budget:
        raise InstanceTooLargeError(count, cfg.budget)
    objective = ExactSumRate(profile.power, system.per_user_power, Gamma, system.btbc_rate_inverse)
    options = []
    for j in range(Gamma, -1, -1):
        for c in itertools.combinations(powered, j):
            options.append((sum(1 << l for l in c), c, Gamma - j))
    user_rate = objective.user_rate

    best_val = -math.inf
    best: list | None = None
    chosen_masks = [0] * K
    chosen = [None] * K
    leaves = 0

    def recurse(k: int, used: int, nulls_left: int):
        nonlocal best_val, best, leaves
        if k == K:
            leaves += 1
            val = 0.0
            for i in range(K):
                m = chosen_masks[i]
                val += user_rate(i, m, used & ~m)
            if val > best_val:
                best_val = val
                best = list(chosen)
            return
        for mask, comb, n_null in options:
            if mask & used or n_null > nulls_left:
                continue
            chosen_masks[k] = mask
            chosen[k] = (comb, n_null)
            recurse(k + 1, used | mask, nulls_left - n_null)

    recurse(0, 0, len(null))
    pool = iter(null)
    groups = [tuple(comb) + tuple(next(pool) for _ in range(n)) for comb, n in best]
    assignment = BeamAssignment.of(groups)
    meta = {"method": "exhaustive", "evaluations": leaves, "full_space": count_assignments(L, K, Gamma)}
    return _check(SelectionResult(assignment, [(leaves, best_val)], meta), Gamma, L)


def _fillers(power: np.ndarray, user: int, prior: Sequence[int], claimed: set[int], avail: Sequence[int], need: int) -> list[int]:
    # zero-signal beams least harmful to already active users, then to everyone
    L = power.shape[1]
    prior_col = power[list(prior)].sum(axis=0) if len(prior) else np.zeros(L)
    all_col = power.sum(axis=0)
    pool = [l for l in range(L) if l not in claimed and l not in set(avail)]
    pool.sort(key=lambda l: (prior_col[l], all_col[l], l))
    return pool[:need]


def fs_select(profile: SpatialProfile, system: SystemConfig, cfg: SelectorConfig | None = None,
              rng: np.random.Generator | None = None) -> SelectionResult:
    """Forward stepwise selection: users activated in random order, each takes its best-ratio beam set."""
    cfg = cfg or SelectorConfig(method="fs")
    rng = rng if rng is not None else np.random.default_rng(cfg.rng_seed)
    power = profile.power
    K, L = power.shape
    Gamma = system.beams_per_user
    noise = system.rate_scale / system.per_user_power if system.per_user_power > 0 else math.inf
    order = rng.permutation(K)
    groups: dict[int, tuple[int, ...]] = {}
    claimed: set[int] = set()
    trace = []
    for step, k in enumerate(order):
        k = int(k)
        avail = [int(l) for l in np.flatnonzero(power[k] > 0) if l not in claimed]
        if cfg.candidates == "full":
            pool = sorted(avail + _fillers(power, k, list(groups), claimed, avail, Gamma))
        elif len(avail) >= Gamma:
            pool = avail
        else:
            pool = sorted(avail + _fillers(power, k, list(groups), claimed, avail, Gamma - len(avail)))
        cands = np.array(list(itertools.combinations(pool, Gamma)), dtype=int)
        sig, den = fs_ratio(power, groups, k, cands, noise)
        score = sig / den
        best = int(np.argmax(score))
        choice = tuple(int(l) for l in cands[best])
        trace.append((step, float(np.log2(score[best])) if score[best] > 0 else -math.inf))
        groups[k] = choice
        claimed.update(choice)
    assignment = BeamAssignment.of([groups[k] for k in range(K)])
    return _check(SelectionResult(assignment, trace, {"method": "fs", "order": order.tolist()}), Gamma, L)


def gibbs_probabilities(normalized_scores, temperature: float) -> np.ndarray:
    """Sampling law proportional to exp(-1 / (temperature * normalized score))."""
    j = np.asarray(normalized_scores, dtype=float)
    with np.errstate(divide="ignore", over="ignore"):
        logits = np.where(j > 0, -1.0 / (temperature * np.where(j > 0, j, 1.0)), -np.inf)
    top = logits.max()
    if not np.isfinite(top):
        # every positive score underflowed; the largest ones share the mass
        logits = np.where((j > 0) & (j == j.max()), 0.0, -np.inf)
        top = 0.0
    p = np.exp(logits - top)
    return p / p.sum()


def _gibbs_candidates(power: np.ndarray, k: int, blocked: set[int], Gamma: int, policy: str) -> np.ndarray:
    L = power.shape[1]
    avail = [l for l in np.flatnonzero(power[k] > 0) if l not in blocked]
    if policy == "full" or len(avail) < Gamma:
        avail = [l for l in range(L) if l not in blocked]
    return np.array(list(itertools.combinations(avail, Gamma)), dtype=int)


def _gibbs_chain(power, system, cfg, start: BeamAssignment, objective: ExactSumRate, rng: np.random.Generator):
    K = power.shape[0]
    Gamma = system.beams_per_user
    noise = system.rate_scale / system.per_user_power
    groups = [tuple(g) for g in start]
    best_groups = list(groups)
    best_val = objective(groups)
    trace = [(0, best_val)]
    beta = cfg.initial_temperature
    for step in range(1, cfg.steps_for(K) + 1):
        for k in range(K):
            others = {i: groups[i] for i in range(K) if i != k}
            blocked = {l for g in others.values() for l in g}
            cands = _gibbs_candidates(power, k, blocked, Gamma, cfg.candidates)
            sig, den = fs_ratio(power, others, k, cands, noise)
            score = sig / den
            top = score.max()
            if top > 0:
                idx = int(rng.choice(len(cands), p=gibbs_probabilities(score / top, beta)))
                groups[k] = tuple(int(l) for l in cands[idx])
            val = objective(groups)
            if val > best_val:
                best_val = val
                best_groups = list(groups)
        trace.append((step, best_val))
        beta *= cfg.cooling_rate
    return best_groups, best_val, trace


def gibbs_select(profile: SpatialProfile, system: SystemConfig, cfg: SelectorConfig | None = None,
                 rng: np.random.Generator | None = None, start: SelectionResult | None = None) -> SelectionResult:
    """Annealed Gibbs sampling over per-user beam sets, started from the stepwise solution.

    Keeps the best assignment seen (by closed-form sum-rate) over several
    independent chains.
    """
    cfg = cfg or SelectorConfig(method="gibbs")
    rng = rng if rng is not None else np.random.default_rng(cfg.rng_seed)
    power = profile.power
    K, L = power.shape
    Gamma = system.beams_per_user
    if start is None:
        start = fs_select(profile, system, cfg, rng=rng)
    if system.per_user_power <= 0:
        return _check(SelectionResult(start.assignment, list(start.trace), {"method": "gibbs", "restarts": 0}), Gamma, L)
    objective = ExactSumRate(power, system.per_user_power, Gamma, system.btbc_rate_inverse)
    seeds = rng.bit_generator.seed_seq.spawn(cfg.restarts) if hasattr(rng.bit_generator, "seed_seq") else None
    best_groups, best_val, best_trace = list(start.assignment), -math.inf, []
    for r in range(cfg.restarts):
        chain_rng = np.random.default_rng(seeds[r]) if seeds is not None else np.random.default_rng(rng.integers(2**63))
        groups, val, trace = _gibbs_chain(power, system, cfg, start.assignment, objective, chain_rng)
        if val > best_val:
            best_groups, best_val = groups, val
        if not best_trace:
            best_trace = trace
        else:
            best_trace = [(s, max(a, b)) for (s, a), (_, b) in zip(best_trace, trace)]
    result = SelectionResult(BeamAssignment.of(best_groups), best_trace,
                             {"method": "gibbs", "restarts": cfg.restarts, "steps": cfg.steps_for(K),
                              "start": start.assignment})
    return _check(result, Gamma, L)


def low_snr_select(profile: SpatialProfile, system: SystemConfig, cfg: SelectorConfig | None = None,
                   rng: np.random.Generator | None = None) -> SelectionResult:
    """Users in random order claim their strongest unclaimed beams."""
    cfg = cfg or SelectorConfig(method="low-snr-greedy")
    rng = rng if rng is not None else np.random.default_rng(cfg.rng_seed)
    power = profile.power
    K, L = power.shape
    Gamma = system.beams_per_user
    order = rng.permutation(K)
    groups: dict[int, tuple[int, ...]] = {}
    claimed: set[int] = set()
    for k in order:
        k = int(k)
        ranked = sorted((l for l in range(L) if l not in claimed), key=lambda l: (-power[k, l], l))
        groups[k] = tuple(ranked[:Gamma])
        claimed.update(groups[k])
    assignment = BeamAssignment.of([groups[k] for k in range(K)])
    return _check(SelectionResult(assignment, [], {"method": "low-snr-greedy", "order": order.tolist()}), Gamma, L)


def select(profile: SpatialProfile, system: SystemConfig, cfg: SelectorConfig, rng: np.random.Generator | None = None) -> SelectionResult:
    if cfg.method == "exhaustive":
        return exhaustive_select(profile, system, cfg)
    if cfg.method == "fs":
        return fs_select(profile, system, cfg, rng)
    if cfg.method == "gibbs":
        return gibbs_select(profile, system, cfg, rng)
    return low_snr_select(profile, system, cfg, rng)
