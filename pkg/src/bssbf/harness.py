"""Monte Carlo rate and BER estimation, experiment specs and sweeps."""

from __future__ import annotations

import csv
import io
import json
import logging
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path
from typing import Callable, Union

import numpy as np

from .baselines import (build_covariances, dft_slnr_precoder, estimate_channels, slnr_eigen_precoder,
                        zf_precoder, zf_sum_rate_with_overhead)
from .beamforming import (BeamAssignment, UnsupportedCodingError, btbc_decode, build_basis,
                          beam_matrix, sparse_sinr)
from .io import load_profile
from .rate import RateReport, sum_rate
from .scenario import (AngleGrid, SpatialProfile, SystemConfig, apply_angle_mismatch, apply_pas_mismatch,
                       draw_channel, make_cluster_profile, make_uniform_grid, make_uniform_profile)
from .selection import SelectorConfig, select

try:  # Python >= 3.11
    import tomllib
except ModuleNotFoundError:  # pragma: no cover
    import tomli as tomllib

__all__ = [
    "BerReport",
    "MethodSpec",
    "ExperimentSpec",
    "SpecError",
    "ResultRow",
    "ResultTable",
    "estimate_ergodic_rates",
    "estimate_ber_bpsk",
    "load_spec",
    "spec_from_dict",
    "run_experiment",
    "CSV_COLUMNS",
]

log = logging.getLogger(__name__)

Scheme = Union[BeamAssignment, np.ndarray, Callable]
CSV_COLUMNS = ("method", "sweep_name", "sweep_value", "sum_rate", "sum_rate_stderr", "ber", "ber_stderr",
               "trials", "seed")
BS_SBF_METHODS = ("bs-sbf-fs", "bs-sbf-gibbs", "bs-sbf-exhaustive", "bs-sbf-lowsnr")
BASELINE_METHODS = ("baseline1", "baseline2", "zfbf")
SWEEP_VARIABLES = ("P", "K", "delta0", "tau0")
_SELECTOR_METHOD = {"bs-sbf-fs": "fs", "bs-sbf-gibbs": "gibbs", "bs-sbf-exhaustive": "exhaustive",
                    "bs-sbf-lowsnr": "low-snr-greedy"}


# ---------------------------------------------------------------- estimators

def _link_gains(h: np.ndarray, scheme, gamma: float, rng: np.random.Generator) -> np.ndarray:
    """Effective gains h_k^H v_j, shape (d, K, K), for a linear precoder."""
    V = scheme(h, rng) if callable(scheme) else np.asarray(scheme)
    return np.conj(h) @ V


def _linear_sinr(G: np.ndarray, gamma: float) -> np.ndarray:
    p = np.abs(G) ** 2
    sig = np.diagonal(p, axis1=-2, axis2=-1)
    interf = p.sum(axis=-1) - sig
    return gamma * sig / (1.0 + gamma * interf)


def estimate_ergodic_rates(profile: SpatialProfile, grid: AngleGrid, scheme: Scheme, config: SystemConfig,
                           draws: int, rng: np.random.Generator, chunk: int = 20_000) -> RateReport:
    """Monte Carlo average of log2(1 + SINR_k) over small-scale fading.

    ``scheme`` is a BeamAssignment (BS-SBF), an (N, K) precoder, or a
    callable ``(h, rng) -> V`` returning per-draw precoders of shape
    (d, N, K). BS-SBF with exact angles draws |s|^2 directly; otherwise
    full channel vectors are synthesized.
    """
    if draws < 1:
        raise ValueError("draws must be >= 1")
    K = profile.num_users
    gamma = config.per_user_power
    if gamma <= 0:
        zeros = np.zeros(K)
        return RateReport(zeros, zeros.copy(), 0.0, extras={"draws": draws})
    s1 = np.zeros(K)
    s2 = np.zeros(K)
    t1 = t2 = 0.0
    basis = None
    if isinstance(scheme, BeamAssignment):
        if profile.perfect:
            # only claimed beams enter the SINR; draw fading for those columns alone
            cols = scheme.all_beams()
            pos = {l: i for i, l in enumerate(cols)}
            claimed_power = profile.channel_power[:, cols]
            local = BeamAssignment.of([[pos[l] for l in g] for g in scheme])
        else:
            basis = build_basis(grid, config)
    done = 0
    while done < draws:
        d = min(chunk, draws - done)
        if isinstance(scheme, BeamAssignment):
            scale = gamma / (config.btbc_rate_inverse * config.beams_per_user)
            if basis is None:
                gains2 = claimed_power * rng.exponential(size=(d,) + claimed_power.shape)
                sinr = sparse_sinr(gains2, local, scale)
            else:
                h = draw_channel(profile, grid, config, rng, draws=d).h
                sinr = sparse_sinr(np.abs(np.conj(h) @ basis.pinv) ** 2, scheme, scale)
        else:
            h = draw_channel(profile, grid, config, rng, draws=d).h
            sinr = _linear_sinr(_link_gains(h, scheme, gamma, rng), gamma)
        r = np.log2(1.0 + sinr)
        s1 += r.sum(axis=0)
        s2 += (r**2).sum(axis=0)
        tot = r.sum(axis=1)
        t1 += tot.sum()
        t2 += (tot**2).sum()
        done += d
    mean = s1 / draws
    if draws > 1:
        var = np.maximum(s2 - draws * mean**2, 0.0) / (draws - 1)
        tvar = max(t2 - draws * (t1 / draws) ** 2, 0.0) / (draws - 1)
    else:
        var, tvar = np.zeros(K), 0.0
    return RateReport(mean, np.sqrt(var / draws), math.sqrt(tvar / draws), extras={"draws": draws})


@dataclass
class BerReport:
    per_user: np.ndarray
    per_user_stderr: np.ndarray
    mean: float
    mean_stderr: float
    symbols: int
    erasures: int = 0


def _bpsk(rng, shape) -> np.ndarray:
    return 2.0 * rng.integers(0, 2, size=shape) - 1.0


def estimate_ber_bpsk(profile: SpatialProfile, grid: AngleGrid, scheme: Scheme, config: SystemConfig,
                      symbols: int, rng: np.random.Generator, blocks_per_chunk: int = 512) -> BerReport:
    """BPSK bit error rate per user with one channel draw per coherence block.

    Two-beam BS-SBF assignments use the beam-time block code with linear
    decoding; everything else uses coherent detection with the known
    effective gain h_k^H v_k. Blocks where a user's combined beam gain is
    exactly zero count as erasures, scored as coin flips.
    """
    if symbols < 1000:
        raise ValueError("symbols must be >= 1000")
    K, T = profile.num_users, config.coherence_len
    gamma = config.per_user_power
    coded = isinstance(scheme, BeamAssignment) and config.beams_per_user == 2
    if isinstance(scheme, BeamAssignment) and config.beams_per_user > 2:
        raise UnsupportedCodingError("BER simulation supports one or two beams per user")
    if coded and T < 2:
        raise ValueError("coherence length must be >= 2 for the block code")
    per_block = 2 * (T // 2) if coded else T
    n_blocks = math.ceil(symbols / per_block)
    basis = build_basis(grid, config) if isinstance(scheme, BeamAssignment) else None
    if isinstance(scheme, BeamAssignment) and not coded:
        scheme_V = beam_matrix(basis, scheme)
    else:
        scheme_V = scheme
    block_err = np.empty((n_blocks, K))
    erasures = 0
    sg = math.sqrt(max(gamma, 0.0))
    done = 0
    while done < n_blocks:
        b = min(blocks_per_chunk, n_blocks - done)
        h = draw_channel(profile, grid, config, rng, draws=b).h  # (b, K, N)
        if coded:
            E = np.conj(h) @ basis.pinv  # (b, K, L)
            l1 = np.array([g[0] for g in scheme])
            l2 = np.array([g[1] for g in scheme])
            g1, g2 = E[:, :, l1], E[:, :, l2]  # gain of user k on user j's beams: (b, k, j)
            P = per_block // 2
            x = _bpsk(rng, (b, P, K, 2))
            x1, x2 = x[..., 0], x[..., 1]
            y1 = sg / math.sqrt(2) * (np.einsum("bkj,bpj->bpk", g1, x1) + np.einsum("bkj,bpj->bpk", g2, x2))
            y2 = sg / math.sqrt(2) * (-np.einsum("bkj,bpj->bpk", g1, np.conj(x2))
                                      + np.einsum("bkj,bpj->bpk", g2, np.conj(x1)))
            y1 = y1 + _cn(rng, y1.shape)
            y2 = y2 + _cn(rng, y2.shape)
            own1 = np.diagonal(g1, axis1=1, axis2=2)[:, None, :]
            own2 = np.diagonal(g2, axis1=1, axis2=2)[:, None, :]
            faded = (np.abs(own1) ** 2 + np.abs(own2) ** 2) == 0
            safe1 = np.where(faded, 1.0, own1)
            xh1, xh2 = btbc_decode(y1, y2, safe1, own2, max(gamma, 1e-300))
            err = (np.sign(xh1.real) != x1).astype(float) + (np.sign(xh2.real) != x2).astype(float)
            err = np.where(faded, 1.0, err)  # two coin flips per pair
            erasures += int(faded.sum()) * 2 * P
            block_err[done:done + b] = err.sum(axis=1) / per_block
        else:
            G = _link_gains(h, scheme_V, gamma, rng)  # (b, K, K)
            x = _bpsk(rng, (b, per_block, K))
            y = sg * np.einsum("bkj,btj->btk", G, x) + _cn(rng, (b, per_block, K))
            own = np.diagonal(G, axis1=1, axis2=2)[:, None, :]
            faded = np.abs(own) == 0
            z = (np.conj(own) * y).real
            err = np.where(faded, 0.5, (np.sign(z) != x).astype(float))
            erasures += int(np.broadcast_to(faded, err.shape).sum())
            block_err[done:done + b] = err.mean(axis=1)
        done += b
    per_user = block_err.mean(axis=0)
    user_avg = block_err.mean(axis=1)
    if n_blocks > 1:
        se = block_err.std(axis=0, ddof=1) / math.sqrt(n_blocks)
        mse = float(user_avg.std(ddof=1) / math.sqrt(n_blocks))
    else:
        se, mse = np.zeros(K), 0.0
    return BerReport(per_user, se, float(user_avg.mean()), mse, n_blocks * per_block, erasures)


def _cn(rng, shape) -> np.ndarray:
    return (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / math.sqrt(2)


# ---------------------------------------------------------------- specs

class SpecError(ValueError):
    def __init__(self, field_name: str, message: str):
        super().__init__(f"{field_name}: {message}")
        self.field = field_name
        self.message = message


@dataclass(frozen=True)
class MethodSpec:
    name: str
    beams_per_user: int = 1

    @property
    def label(self) -> str:
        return f"{self.name}-G{self.beams_per_user}" if self.name in BS_SBF_METHODS else self.name


@dataclass(frozen=True)
class ExperimentSpec:
    """One sweep: scenario parameters, a swept variable, and the methods to compare."""

    name: str = "experiment"
    version: int = 1
    scenario: str = "uniform"
    profile_file: str | None = None
    num_antennas: int = 64
    grid_len: int = 64
    num_users: int = 8
    paths_per_user: int = 5
    total_power_db: float = 40.0
    coherence_len: int = 100
    spacing_ratio: float = 0.5
    cluster_count: int = 3
    cluster_size: float = 0.4
    path_range: tuple[int, int] = (2, 13)
    clusters_per_user: int = 2
    angle_mismatch: float = 0.0
    pas_mismatch: float = 0.0
    sweep_name: str = "P"
    sweep_values: tuple[float, ...] = (40.0,)
    methods: tuple[MethodSpec, ...] = (MethodSpec("bs-sbf-fs"),)
    trials: int = 300
    draws: int = 200
    ber_symbols: int = 0
    seed: int = 0
    per_trial: bool = False
    crosscheck: bool = False
    gibbs_steps: int | None = None
    initial_temperature: float = 0.1
    cooling_rate: float = 0.95
    restarts: int = 3
    candidates: str = "full"
    budget: int = 10**7

    def __post_init__(self):
        self.validate()

    def validate(self) -> "ExperimentSpec":
        if self.version != 1:
            raise SpecError("version", f"unsupported version {self.version}")
        if self.scenario not in ("uniform", "cluster", "from-file"):
            raise SpecError("scenario.kind", f"unknown scenario {self.scenario!r}")
        if self.scenario == "from-file" and not self.profile_file:
            raise SpecError("scenario.profile_file", "required for from-file scenarios")
        if self.trials < 1:
            raise SpecError("trials", "must be >= 1")
        if self.draws < 1:
            raise SpecError("draws", "must be >= 1")
        if self.ber_symbols and self.ber_symbols < 1000:
            raise SpecError("ber_symbols", "must be 0 (disabled) or >= 1000")
        if self.sweep_name not in SWEEP_VARIABLES:
            raise SpecError("sweep.variable", f"must be one of {', '.join(SWEEP_VARIABLES)}")
        if not self.sweep_values:
            raise SpecError("sweep.values", "must not be empty")
        if not self.methods:
            raise SpecError("methods", "must not be empty")
        if self.candidates not in ("full", "support"):
            raise SpecError("selector.candidates", "must be 'full' or 'support'")
        users = [int(v) for v in self.sweep_values] if self.sweep_name == "K" else [self.num_users]
        for i, m in enumerate(self.methods):
            if m.name not in BS_SBF_METHODS + BASELINE_METHODS:
                raise SpecError(f"methods[{i}].name", f"unknown method {m.name!r}")
            if m.beams_per_user < 1:
                raise SpecError(f"methods[{i}].beams_per_user", "must be >= 1")
            if m.beams_per_user * max(users) > self.grid_len:
                raise SpecError(f"methods[{i}].beams_per_user",
                                f"Gamma * K = {m.beams_per_user * max(users)} exceeds L = {self.grid_len}")
        if self.sweep_name == "tau0" and any(not 0 <= v <= 1 for v in self.sweep_values):
            raise SpecError("sweep.values", "tau0 values must lie in [0, 1]")
        if self.sweep_name == "delta0" and any(v < 0 for v in self.sweep_values):
            raise SpecError("sweep.values", "delta0 values must be nonnegative")
        return self

    def cell(self, value) -> "ExperimentSpec":
        """Spec with the swept variable fixed to ``value``."""
        key = {"P": "total_power_db", "K": "num_users", "delta0": "angle_mismatch", "tau0": "pas_mismatch"}
        v = int(value) if self.sweep_name == "K" else float(value)
        return replace(self, **{key[self.sweep_name]: v})

    def selector(self, method: MethodSpec) -> SelectorConfig:
        return SelectorConfig(method=_SELECTOR_METHOD[method.name], gibbs_steps=self.gibbs_steps,
                              initial_temperature=self.initial_temperature, cooling_rate=self.cooling_rate,
                              restarts=self.restarts, budget=self.budget, candidates=self.candidates)

    def system(self, method: MethodSpec) -> SystemConfig:
        return SystemConfig(num_antennas=self.num_antennas, num_users=self.num_users, grid_len=self.grid_len,
                            beams_per_user=method.beams_per_user,
                            total_power=10 ** (self.total_power_db / 10), coherence_len=self.coherence_len,
                            spacing_ratio=self.spacing_ratio, rng_seed=self.seed)


_SECTIONS = {
    None: {"name": "name", "version": "version", "seed": "seed", "trials": "trials", "draws": "draws",
           "ber_symbols": "ber_symbols", "per_trial": "per_trial", "crosscheck": "crosscheck"},
    "scenario": {"kind": "scenario", "profile_file": "profile_file", "num_antennas": "num_antennas",
                 "grid_len": "grid_len", "num_users": "num_users", "paths_per_user": "paths_per_user",
                 "total_power_db": "total_power_db", "coherence_len": "coherence_len",
                 "spacing_ratio": "spacing_ratio", "cluster_count": "cluster_count",
                 "cluster_size": "cluster_size", "path_range": "path_range",
                 "clusters_per_user": "clusters_per_user", "angle_mismatch": "angle_mismatch",
                 "pas_mismatch": "pas_mismatch"},
    "sweep": {"variable": "sweep_name", "values": "sweep_values"},
    "selector": {"gibbs_steps": "gibbs_steps", "initial_temperature": "initial_temperature",
                 "cooling_rate": "cooling_rate", "restarts": "restarts", "candidates": "candidates",
                 "budget": "budget"},
}


def spec_from_dict(doc: dict, base_dir: Path | None = None) -> ExperimentSpec:
    """Build a spec from parsed TOML; unknown or mistyped fields raise SpecError naming the field."""
    kwargs: dict = {}
    types = {f.name: f.type for f in fields(ExperimentSpec)}
    defaults = ExperimentSpec.__dataclass_fields__
    for key, value in doc.items():
        if key == "methods":
            continue
        if key in _SECTIONS:
            if not isinstance(value, dict):
                raise SpecError(key, "must be a table")
            table, prefix = value, key + "."
            mapping = _SECTIONS[key]
        else:
            table, prefix, mapping = {key: value}, "", _SECTIONS[None]
        for k, v in table.items():
            if k not in mapping:
                raise SpecError(prefix + k, "unknown field")
            kwargs[mapping[k]] = _coerce(prefix + k, v, defaults[mapping[k]].default, types[mapping[k]])
    methods = doc.get("methods", [])
    if not isinstance(methods, list):
        raise SpecError("methods", "must be an array of tables")
    parsed = []
    for i, m in enumerate(methods):
        if not isinstance(m, dict) or "name" not in m:
            raise SpecError(f"methods[{i}].name", "missing")
        extra = set(m) - {"name", "beams_per_user"}
        if extra:
            raise SpecError(f"methods[{i}].{sorted(extra)[0]}", "unknown field")
        gamma = m.get("beams_per_user", 1)
        if not isinstance(gamma, int) or isinstance(gamma, bool):
            raise SpecError(f"methods[{i}].beams_per_user", "must be an integer")
        parsed.append(MethodSpec(str(m["name"]), gamma))
    if parsed:
        kwargs["methods"] = tuple(parsed)
    if "sweep_values" in kwargs:
        kwargs["sweep_values"] = tuple(float(v) for v in kwargs["sweep_values"])
    if "path_range" in kwargs:
        pr = kwargs["path_range"]
        if len(pr) != 2:
            raise SpecError("scenario.path_range", "must have two entries")
        kwargs["path_range"] = (int(pr[0]), int(pr[1]))
    if kwargs.get("profile_file") and base_dir is not None and not Path(kwargs["profile_file"]).is_absolute():
        kwargs["profile_file"] = str(base_dir / kwargs["profile_file"])
    return ExperimentSpec(**kwargs)


def _coerce(name: str, value, default, annotation: str):
    base = str(annotation).split(" | ")[0]
    if value is None and "None" in str(annotation):
        return None
    if base == "bool":
        ok = isinstance(value, bool)
    elif base == "int":
        ok = isinstance(value, int) and not isinstance(value, bool)
    elif base == "float":
        ok = isinstance(value, (int, float)) and not isinstance(value, bool)
        value = float(value) if ok else value
    elif base == "str":
        ok = isinstance(value, str)
    else:
        ok = isinstance(value, list) and all(isinstance(v, (int, float)) and not isinstance(v, bool) for v in value)
        value = tuple(value) if ok else value
    if not ok:
        raise SpecError(name, f"expected {base.split('[')[0]}, got {type(value).__name__}")
    return value


def load_spec(path) -> ExperimentSpec:
    path = Path(path)
    try:
        doc = tomllib.loads(path.read_text())
    except tomllib.TOMLDecodeError as exc:
        raise SpecError("<file>", f"not valid TOML: {exc}") from exc
    return spec_from_dict(doc, base_dir=path.parent)


# ---------------------------------------------------------------- results

@dataclass
class ResultRow:
    method: str
    sweep_name: str
    sweep_value: float
    sum_rate: float
    sum_rate_stderr: float
    ber: float
    ber_stderr: float
    trials: int
    seed: int
    extras: dict = field(default_factory=dict)

    def csv_record(self) -> list:
        return [_fmt(getattr(self, c)) for c in CSV_COLUMNS]


def _fmt(v):
    if isinstance(v, float):
        return "" if math.isnan(v) else repr(v)
    return v


@dataclass
class ResultTable:
    rows: list[ResultRow] = field(default_factory=list)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\r\n")
        w.writerow(CSV_COLUMNS)
        for r in self.rows:
            w.writerow(r.csv_record())
        return buf.getvalue()

    def to_jsonl(self) -> str:
        out = []
        for r in self.rows:
            rec = {k: v for k, v in asdict(r).items() if k != "extras"}
            rec.update(r.extras)
            out.append(json.dumps({k: (None if isinstance(v, float) and math.isnan(v) else v)
                                   for k, v in rec.items()}))
        return "\n".join(out) + ("\n" if out else "")

    def write(self, path, fmt: str = "csv") -> None:
        Path(path).write_text(self.to_csv() if fmt == "csv" else self.to_jsonl(), newline="")

    def select(self, method: str | None = None, sweep_value: float | None = None) -> list[ResultRow]:
        return [r for r in self.rows if (method is None or r.method == method)
                and (sweep_value is None or r.sweep_value == sweep_value)]


# ---------------------------------------------------------------- experiments

def trial_seed(base_seed: int, trial: int) -> int:
    """32-bit seed of one trial, derived from the base seed."""
    return int(np.random.SeedSequence([base_seed, trial]).generate_state(1)[0])


def _stream(tseed: int, stream: int) -> np.random.Generator:
    return np.random.default_rng([tseed, stream])


def make_scenario(spec: ExperimentSpec, tseed: int) -> tuple[SpatialProfile, AngleGrid]:
    """Scenario of one trial; geometry, PAS and mismatch use separate streams."""
    geo = _stream(tseed, 0)
    if spec.scenario == "from-file":
        profile, grid = load_profile(spec.profile_file)
        if profile.num_users != spec.num_users or len(grid) != spec.grid_len:
            raise SpecError("scenario.profile_file", "profile shape disagrees with num_users / grid_len")
    else:
        grid = make_uniform_grid(spec.grid_len, geo)
        if spec.scenario == "uniform":
            profile = make_uniform_profile(grid, spec.num_users, spec.paths_per_user, geo)
        else:
            profile = make_cluster_profile(grid, spec.num_users, spec.cluster_count, spec.cluster_size,
                                           spec.path_range, geo, spec.clusters_per_user)
    profile = apply_angle_mismatch(profile, spec.angle_mismatch, _stream(tseed, 1))
    profile = apply_pas_mismatch(profile, spec.pas_mismatch, _stream(tseed, 2))
    return profile, grid


@dataclass
class TrialOutcome:
    method: str
    cell: int
    trial: int
    sum_rate: float = math.nan
    ber: float = math.nan
    mc_sum_rate: float = math.nan
    mc_stderr: float = math.nan
    select_time: float = math.nan
    norm_dev: float = math.nan
    error: str | None = None


def _run_method(spec: ExperimentSpec, method: MethodSpec, profile, grid, tseed: int) -> dict:
    system = spec.system(method)
    gamma = system.per_user_power
    out: dict = {}
    if method.name in BS_SBF_METHODS:
        t0 = time.perf_counter()
        res = select(profile, system, spec.selector(method), rng=_stream(tseed, 3))
        out["select_time"] = time.perf_counter() - t0
        assignment = res.assignment
        basis = build_basis(grid, system)
        norms = np.linalg.norm(beam_matrix(basis, assignment), axis=0)
        out["norm_dev"] = float(np.max(np.abs(norms - 1.0)))
        if profile.perfect:
            out["sum_rate"] = sum_rate(profile.channel_power, assignment, gamma, method.beams_per_user,
                                       system.btbc_rate_inverse)
        if not profile.perfect or spec.crosscheck:
            rep = estimate_ergodic_rates(profile, grid, assignment, system, spec.draws, _stream(tseed, 4))
            out["mc_sum_rate"], out["mc_stderr"] = rep.sum_rate, rep.sum_stderr
            out.setdefault("sum_rate", rep.sum_rate)
        scheme = assignment
    else:
        if method.name == "zfbf":
            def scheme(h, rng, _g=gamma):
                return zf_precoder(estimate_channels(h, _g, rng))[0]
        else:
            cov = build_covariances(profile, grid, system)
            scheme = slnr_eigen_precoder(cov, gamma) if method.name == "baseline1" else dft_slnr_precoder(cov, gamma)
        rep = estimate_ergodic_rates(profile, grid, scheme, system, spec.draws, _stream(tseed, 4))
        total = rep.sum_rate
        if method.name == "zfbf":
            total = zf_sum_rate_with_overhead(rep.per_user, system.num_antennas, system.coherence_len)
        out["sum_rate"] = total
    if spec.ber_symbols:
        ber = estimate_ber_bpsk(profile, grid, scheme, system, spec.ber_symbols, _stream(tseed, 5))
        out["ber"] = ber.mean
    return out


def _run_trial(args) -> list[TrialOutcome]:
    spec, cell_index, trial = args
    cell = spec.cell(spec.sweep_values[cell_index])
    tseed = trial_seed(spec.seed, trial)
    outcomes = []
    try:
        profile, grid = make_scenario(cell, tseed)
    except Exception as exc:  # noqa: BLE001 - recorded in the row
        return [TrialOutcome(m.label, cell_index, trial, error=f"{type(exc).__name__}: {exc}") for m in spec.methods]
    for m in spec.methods:
        try:
            res = _run_method(cell, m, profile, grid, tseed)
            outcomes.append(TrialOutcome(m.label, cell_index, trial, **res))
        except Exception as exc:  # noqa: BLE001
            outcomes.append(TrialOutcome(m.label, cell_index, trial, error=f"{type(exc).__name__}: {exc}"))
    return outcomes


def _mean_se(values) -> tuple[float, float]:
    a = np.asarray(values, dtype=float)
    if a.size == 0 or np.all(np.isnan(a)):
        return math.nan, math.nan
    mean = float(a.mean())
    return mean, float(a.std(ddof=1) / math.sqrt(a.size)) if a.size > 1 else 0.0


def run_experiment(spec: ExperimentSpec, threads: int = 1) -> ResultTable:
    """Run every sweep value x method over ``spec.trials`` seeded trials.

    Trial ``t`` uses the same scenario for every method and every sweep
    value (common random numbers), so differences between rows are paired.
    Output is independent of ``threads``.
    """
    tasks = [(spec, c, t) for c in range(len(spec.sweep_values)) for t in range(spec.trials)]
    if threads > 1:
        with ProcessPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(_run_trial, tasks, chunksize=max(1, len(tasks) // (4 * threads))))
    else:
        results = [_run_trial(t) for t in tasks]
    by_key: dict = {}
    for outs in results:
        for o in outs:
            by_key.setdefault((o.cell, o.method), []).append(o)
    table = ResultTable()
    max_dev = 0.0
    for c, value in enumerate(spec.sweep_values):
        for m in spec.methods:
            outs = sorted(by_key[(c, m.label)], key=lambda o: o.trial)
            errors = [o.error for o in outs if o.error]
            if spec.per_trial:
                for o in outs:
                    table.rows.append(ResultRow(m.label, spec.sweep_name, value, o.sum_rate, 0.0, o.ber,
                                                0.0 if not math.isnan(o.ber) else math.nan, 1,
                                                trial_seed(spec.seed, o.trial), _extras([o], o.error)))
                continue
            if errors:
                log.warning("cell %s=%s method %s aborted: %s", spec.sweep_name, value, m.label, errors[0])
                table.rows.append(ResultRow(m.label, spec.sweep_name, value, math.nan, math.nan, math.nan,
                                            math.nan, len(outs), spec.seed, {"error": errors[0]}))
                continue
            sr, sr_se = _mean_se([o.sum_rate for o in outs])
            ber, ber_se = _mean_se([o.ber for o in outs])
            table.rows.append(ResultRow(m.label, spec.sweep_name, value, sr, sr_se, ber, ber_se, len(outs),
                                        spec.seed, _extras(outs, None)))
            devs = [o.norm_dev for o in outs if not math.isnan(o.norm_dev)]
            max_dev = max([max_dev] + devs)
    if max_dev:
        log.info("%s: max beamformer norm deviation from 1 is %.3g", spec.name, max_dev)
    return table


def _extras(outs: list[TrialOutcome], error) -> dict:
    ex: dict = {}
    if error:
        ex["error"] = error
    mc = [o.mc_sum_rate for o in outs]
    if not any(math.isnan(v) for v in mc):
        ex["mc_sum_rate"] = float(np.mean(mc))
        ex["mc_stderr"] = float(math.sqrt(sum(o.mc_stderr**2 for o in outs)) / len(outs))
    st = [o.select_time for o in outs if not math.isnan(o.select_time)]
    if st:
        ex["select_time"] = float(np.mean(st))
    nd = [o.norm_dev for o in outs if not math.isnan(o.norm_dev)]
    if nd:
        ex["max_norm_dev"] = float(max(nd))
    if len(outs) == 1:
        ex["trial"] = outs[0].trial
    return ex
