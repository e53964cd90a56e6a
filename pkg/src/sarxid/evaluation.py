"""Relabeling, FE/CER metrics, diagnostics and the multi-realization harness."""
from __future__ import annotations

import csv
import itertools
import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from . import rng as rngmod
from .errors import ConfigError, InstabilityError, NumericalError
from .identify import Identifier, IdentifierConfig, MonteCarloBound, StepRecord, run
from .model import (
    FastSwitching,
    MinDwell,
    NoiseModel,
    SarxSystem,
    SlowSwitching,
    SystemOrder,
    Trajectory,
    random_system_from_poles,
    regressor_matrix,
    simulate,
)

MAX_RELABEL_M = 8

# The regressor at t = 0 only sees the zero pre-history, so no method can
# classify it; it is never counted as a mismatch.
FIRST_INFORMATIVE_STEP = 1


def relabel(estimates, true_params) -> tuple:
    """Bijection h minimizing sum_j ||w_j - w_hat_{h[j]}||.

    h[j] is the candidate index matched to subsystem j. Exhaustive search in
    lexicographic order, so ties resolve to the lexicographically smallest h.
    """
    est = np.asarray(estimates, dtype=float)
    true = np.asarray(true_params, dtype=float)
    if est.shape != true.shape:
        raise ConfigError(f"estimate shape {est.shape} does not match true parameters {true.shape}")
    m = len(true)
    if m > MAX_RELABEL_M:
        raise ConfigError(f"relabel search is limited to m <= {MAX_RELABEL_M}")
    dist = np.linalg.norm(true[:, None, :] - est[None, :, :], axis=2)  # [subsystem, candidate]
    rows = np.arange(m)
    best, best_cost = None, math.inf
    for perm in itertools.permutations(range(m)):
        cost = dist[rows, perm].sum()
        if cost < best_cost:
            best, best_cost = perm, cost
    return tuple(int(p) for p in best)


@dataclass(frozen=True)
class RealizationSummary:
    fe: float
    cer: float
    relabel: tuple
    trace: np.ndarray | None = None  # (T, m) errors of relabeled candidates

    def as_dict(self) -> dict:
        return {"fe": self.fe, "cer": self.cer, "relabel": list(self.relabel)}


def compute_metrics(records: list[StepRecord], h, true_modes, true_params, with_trace=False) -> RealizationSummary:
    """FE and CER after relabeling with h (h[j] = candidate for subsystem j).

    Skipped steps count as mismatches, except the first step, whose
    regressor holds only the zero pre-history.
    """
    true = np.asarray(true_params, dtype=float)
    modes = np.asarray(true_modes)
    m = len(true)
    if sorted(h) != list(range(m)):
        raise ConfigError(f"relabel {h} is not a permutation of 0..{m - 1}")
    if len(records) != len(modes):
        raise ConfigError("records and true modes differ in length")
    to_subsystem = np.empty(m, dtype=np.int64)
    to_subsystem[list(h)] = np.arange(m)
    final = records[-1].estimates
    fe = float(np.mean(np.linalg.norm(true - final[list(h)], axis=1)))
    wrong = sum(
        1 for rec in records[FIRST_INFORMATIVE_STEP:]
        if rec.result.chosen is None or to_subsystem[rec.result.chosen] != modes[rec.t]
    )
    cer = wrong / len(records) if records else 0.0
    trace = None
    if with_trace:
        trace = np.array([np.linalg.norm(true - rec.estimates[list(h)], axis=1) for rec in records])
    return RealizationSummary(fe, cer, tuple(h), trace)


def summarize(records, trajectory: Trajectory, true_params, with_trace=False) -> RealizationSummary:
    h = relabel(records[-1].estimates, true_params)
    return compute_metrics(records, h, trajectory.modes, true_params, with_trace)


# --- experiment harness ----------------------------------------------------------------

PATTERNS = {"SS": SlowSwitching, "MD": MinDwell, "FS": FastSwitching}


def make_pattern(tag: str, m: int, T: int):
    if tag == "SS":
        return SlowSwitching(block_length=max(1, math.ceil(T / m)))
    if tag == "MD":
        return MinDwell()
    if tag == "FS":
        return FastSwitching()
    raise ConfigError(f"unknown switching pattern tag {tag!r}")


@dataclass(frozen=True)
class ExperimentSetup:
    """One cell of the experiment grid.

    `system=None` draws a fresh random-pole system with `m` subsystems in
    every realization. The identifier's seed is replaced per realization.
    """

    pattern: str
    sigma_n: float
    M: int
    T: int
    identifier: IdentifierConfig
    system: SarxSystem | None = None
    m: int = 4
    input_std: float = 1.0
    noise_width: float = 3.0
    keep_traces: bool = False

    def __post_init__(self):
        if self.M < 1 or self.T < 1:
            raise ConfigError("M and T must be at least 1")
        if self.pattern not in PATTERNS:
            raise ConfigError(f"pattern must be one of {sorted(PATTERNS)}")
        if self.system is not None and self.system.m != self.identifier.m:
            raise ConfigError("identifier candidate count differs from subsystem count")

    @property
    def noise(self) -> NoiseModel:
        if self.sigma_n == 0:
            return NoiseModel()
        return NoiseModel.truncated(self.sigma_n, self.noise_width)


@dataclass(frozen=True)
class RealizationResult:
    index: int
    seed: int
    ours: RealizationSummary | None
    baseline: RealizationSummary | None
    error: str | None = None

    @property
    def failed(self) -> bool:
        return self.error is not None


def run_realization(setup: ExperimentSetup, index: int, base_seed: int) -> RealizationResult:
    """One realization: draw system and data, run ours and the baseline on the same trajectory."""
    seed = rngmod.derive_seed(base_seed, index)
    try:
        system = setup.system
        if system is None:
            system = random_system_from_poles(setup.m, seed=rngmod.stream(seed, "system"))
        pattern = make_pattern(setup.pattern, system.m, setup.T)
        traj = simulate(system, pattern, setup.noise, setup.input_std, setup.T,
                        rngmod.stream(seed, "simulation"))
        cfg = replace(setup.identifier, seed=seed)
        if setup.noise.bound is not None:
            cfg = replace(cfg, n_max=setup.noise.bound)
        if isinstance(cfg.bound_mode, MonteCarloBound):
            cfg = replace(cfg, bound_mode=replace(cfg.bound_mode, noise=setup.noise))
        summaries = []
        for c in (cfg, cfg.as_baseline()):
            records = run(Identifier(c), traj, system.params)
            summaries.append(summarize(records, traj, system.params, setup.keep_traces))
    except (InstabilityError, NumericalError) as exc:
        return RealizationResult(index, seed, None, None, f"{type(exc).__name__}: {exc}")
    return RealizationResult(index, seed, summaries[0], summaries[1])


def _run_one(args):
    return run_realization(*args)


@dataclass(frozen=True)
class ExperimentRow:
    setup: str
    noise: float
    fe_ours: float
    fe_base: float
    cer_ours: float
    cer_base: float
    failed: int
    realizations: tuple = field(default=(), compare=False, repr=False)

    def as_csv_row(self):
        return [self.setup, f"{self.noise:g}"] + [f"{v:.17g}" for v in
                                                    (self.fe_ours, self.fe_base, self.cer_ours, self.cer_base)] + [self.failed]


SUMMARY_HEADER = ["setup", "noise", "fe_ours", "fe_base", "cer_ours", "cer_base", "failed"]


def run_realizations(setup: ExperimentSetup, base_seed: int, threads: int = 1) -> ExperimentRow:
    """Run M realizations (optionally in worker processes) and average the survivors."""
    jobs = [(setup, k, base_seed) for k in range(setup.M)]
    if threads > 1 and setup.M > 1:
        with ProcessPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(_run_one, jobs))
    else:
        results = [_run_one(j) for j in jobs]
    results.sort(key=lambda r: r.index)
    ok = [r for r in results if not r.failed]
    failed = len(results) - len(ok)

    def mean(values):
        return float(np.mean(values)) if values else math.nan

    return ExperimentRow(
        setup=setup.pattern, noise=setup.sigma_n,
        fe_ours=mean([r.ours.fe for r in ok]), fe_base=mean([r.baseline.fe for r in ok]),
        cer_ours=mean([r.ours.cer for r in ok]), cer_base=mean([r.baseline.cer for r in ok]),
        failed=failed, realizations=tuple(results),
    )


def write_summary_csv(rows, path):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(SUMMARY_HEADER)
        for row in rows:
            w.writerow(row.as_csv_row())


def write_realizations_json(row: ExperimentRow, path):
    doc = [
        {
            "index": r.index, "seed": r.seed, "error": r.error,
            "ours": None if r.ours is None else r.ours.as_dict(),
            "baseline": None if r.baseline is None else r.baseline.as_dict(),
        }
        for r in row.realizations
    ]
    with open(path, "w") as fh:
        json.dump({"setup": row.setup, "noise": row.noise, "realizations": doc}, fh, indent=1)


# --- single-system error curves ---------------------------------------------------------


def squared_error_trace(records: list[StepRecord]) -> np.ndarray:
    """||eps_t||^2 of the single candidate after each step."""
    return np.array([float(rec.errors[0]) ** 2 for rec in records])


def empirical_error_curve(system: SarxSystem, noise: NoiseModel, config: IdentifierConfig,
                          T: int, M: int, base_seed: int = 0, input_std: float = 1.0) -> np.ndarray:
    """Mean squared error over M seeded runs of a one-candidate identifier on a one-subsystem system.

    Runs differ in input, noise and column-sampling draws.
    """
    if system.m != 1 or config.m != 1:
        raise ConfigError("error curves are defined for a single subsystem and candidate")
    traces = []
    for k in range(M):
        seed = rngmod.derive_seed(base_seed, k)
        traj = simulate(system, SlowSwitching(T), noise, input_std, T, rngmod.stream(seed, "simulation"))
        records = run(Identifier(replace(config, seed=seed)), traj, system.params)
        traces.append(squared_error_trace(records))
    return np.mean(traces, axis=0)


# --- assumption diagnostics ----------------------------------------------------------------


@dataclass(frozen=True)
class Diagnostics:
    sigma_min: float
    sigma_max: float
    phi_max: float
    S_min: float | None
    S_max: float | None
    psi: float | None


def window_singular_values(phis, N_R: int, stride: int = 1) -> tuple[float, float]:
    """sqrt of the extreme eigenvalues of sum phi phi^T over length-N_R windows of rows."""
    phis = np.asarray(phis, dtype=float)
    if len(phis) < N_R:
        raise ConfigError("need at least N_R regressors")
    if stride < 1:
        raise ConfigError("stride must be positive")
    lo, hi = math.inf, 0.0
    for start in range(0, len(phis) - N_R + 1, stride):
        win = phis[start:start + N_R]
        eig = np.linalg.eigvalsh(win.T @ win)
        lo = min(lo, eig[0])
        hi = max(hi, eig[-1])
    return math.sqrt(max(lo, 0.0)), math.sqrt(hi)


def assumption_diagnostics(trajectory: Trajectory, orders: SystemOrder, N_R: int, stride: int = 1,
                           true_params=None) -> Diagnostics:
    """Measured excitation, regressor-size, SNR and separation constants of a trajectory.

    The zero regressor at t = 0 is left out.
    """
    phis = regressor_matrix(trajectory.y, trajectory.u, orders)[FIRST_INFORMATIVE_STEP:]
    noise = np.asarray(trajectory.noise)[FIRST_INFORMATIVE_STEP:]
    smin, smax = window_singular_values(phis, N_R, stride)
    norms = np.linalg.norm(phis, axis=1)
    S_min = S_max = None
    nz = noise != 0
    if nz.any():
        snr = norms[nz] / np.abs(noise[nz])
        S_min, S_max = float(snr.min()), float(snr.max())
    psi = None
    if true_params is not None:
        W = np.asarray(true_params, dtype=float)
        if len(W) < 2:
            raise ConfigError("separation needs at least two subsystems")
        gaps = [np.abs(phis @ (W[i] - W[j])).min() for i, j in itertools.combinations(range(len(W)), 2)]
        psi = float(min(gaps))
    return Diagnostics(smin, smax, float(norms.max()), S_min, S_max, psi)
