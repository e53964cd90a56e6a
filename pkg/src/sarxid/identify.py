"""Online identification of SARX systems.

Each step scores every candidate on the new datum, assigns the datum to the
best-scoring candidate and moves that candidate with a windowed randomized
Kaczmarz projection. The score multiplies the normalized residual by a
penalty that grows when the tentative move would exceed the diameter of the
candidate's certified error ball, which keeps a converged candidate from
being dragged toward another subsystem.
"""
from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from typing import Union

import numpy as np

from . import rng as rngmod
from .bound import (
    EXACT_WINDOW_CAP,
    UNBOUNDED,
    McSchedule,
    assemble_bound_system,
    exact_upper_bound,
    is_bounded,
    mc_sample_schedule,
    monte_carlo_upper_bound,
)
from .errors import ConfigError, DegenerateRegressor, ExactModeTooLarge, IllConditioned, NumericalError
from .model import NoiseModel, SystemOrder, Trajectory, regressor_matrix


# --- bound modes -------------------------------------------------------------


@dataclass(frozen=True)
class ExactBound:
    cap: int = EXACT_WINDOW_CAP


@dataclass(frozen=True)
class MonteCarloBound:
    noise: NoiseModel
    schedule: McSchedule = McSchedule()


@dataclass(frozen=True)
class MultiWindowBound:
    windows: tuple = (12,)
    cap: int = EXACT_WINDOW_CAP


@dataclass(frozen=True)
class NoBound:
    """Bounds never computed; the assignment reduces to minimum residual."""


BoundMode = Union[ExactBound, MonteCarloBound, MultiWindowBound, NoBound]


@dataclass(frozen=True)
class IdentifierConfig:
    m: int
    orders: SystemOrder
    N_R: int = 3
    N_C: int = 12
    alpha: float = 4.0
    beta: float = 3.0
    nu: float = 1e-4
    n_max: float | None = None
    gamma: float | None = None
    init: object = "gaussian"  # "zeros", "gaussian" or an (m, n) array
    init_scale: float = 1.0
    bound_mode: BoundMode = ExactBound()
    seed: int | None = None

    def __post_init__(self):
        n = self.orders.n
        if self.m < 1:
            raise ConfigError("need at least one candidate")
        if self.N_R < n:
            raise ConfigError(f"N_R = {self.N_R} must be at least n = {n}")
        for N in self.windows:
            if N < self.N_R ** 2:
                raise ConfigError(f"bound window {N} must be at least N_R^2 = {self.N_R ** 2}")
        if self.alpha <= 0 or self.beta <= 0 or self.nu <= 0:
            raise ConfigError("alpha, beta and nu must be positive")
        if self.gamma is not None and not 0.5 < self.gamma < 1:
            raise ConfigError("forgetting factor gamma must lie in (0.5, 1)")
        mode = self.bound_mode
        if isinstance(mode, (ExactBound, MultiWindowBound)):
            if self.n_max is None:
                raise ConfigError("exact bound mode needs a noise bound n_max (use monte-carlo for unbounded noise)")
            if self.n_max < 0:
                raise ConfigError("n_max must be nonnegative")
            if max(self.windows) > mode.cap:
                raise ExactModeTooLarge(max(self.windows), mode.cap)
        if isinstance(self.init, str):
            if self.init not in ("zeros", "gaussian"):
                raise ConfigError(f"unknown init {self.init!r}")
        else:
            init = np.asarray(self.init, dtype=float)
            if init.shape != (self.m, n):
                raise ConfigError(f"explicit init must have shape {(self.m, n)}, got {init.shape}")

    @property
    def windows(self) -> tuple:
        if isinstance(self.bound_mode, MultiWindowBound):
            if not self.bound_mode.windows:
                raise ConfigError("multi-window bound needs at least one window")
            return tuple(self.bound_mode.windows)
        return (self.N_C,)

    @property
    def bounds_enabled(self) -> bool:
        return not isinstance(self.bound_mode, NoBound)

    def as_baseline(self) -> "IdentifierConfig":
        """Same settings with bounds disabled (pure minimum-residual assignment)."""
        return _replace(self, bound_mode=NoBound())

    def to_dict(self) -> dict:
        mode = self.bound_mode
        if isinstance(mode, ExactBound):
            bm = {"kind": "exact", "cap": mode.cap}
        elif isinstance(mode, MonteCarloBound):
            bm = {"kind": "monte-carlo", "zeta1": mode.schedule.zeta1, "zeta2": mode.schedule.zeta2,
                  "cap": mode.schedule.cap, "noise": _noise_to_dict(mode.noise)}
        elif isinstance(mode, MultiWindowBound):
            bm = {"kind": "multi-window", "windows": list(mode.windows), "cap": mode.cap}
        else:
            bm = {"kind": "disabled"}
        init = self.init if isinstance(self.init, str) else np.asarray(self.init).tolist()
        return {
            "m": self.m, "n_a": self.orders.n_a, "n_c": self.orders.n_c,
            "N_R": self.N_R, "N_C": self.N_C, "alpha": self.alpha, "beta": self.beta,
            "nu": self.nu, "n_max": self.n_max, "gamma": self.gamma, "init": init,
            "init_scale": self.init_scale, "bound_mode": bm, "seed": self.seed,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "IdentifierConfig":
        bm = d.get("bound_mode", {"kind": "exact"})
        kind = bm.get("kind", "exact")
        if kind == "exact":
            mode = ExactBound(bm.get("cap", EXACT_WINDOW_CAP))
        elif kind == "monte-carlo":
            mode = MonteCarloBound(
                noise=_noise_from_dict(bm["noise"]),
                schedule=McSchedule(bm.get("zeta1", 0.9), bm.get("zeta2", 0.5), bm.get("cap", 10_000)),
            )
        elif kind == "multi-window":
            mode = MultiWindowBound(tuple(bm["windows"]), bm.get("cap", EXACT_WINDOW_CAP))
        elif kind == "disabled":
            mode = NoBound()
        else:
            raise ConfigError(f"unknown bound mode {kind!r}")
        init = d.get("init", "gaussian")
        if not isinstance(init, str):
            init = np.asarray(init, dtype=float)
        return cls(
            m=d["m"], orders=SystemOrder(d["n_a"], d["n_c"]), N_R=d.get("N_R", 3),
            N_C=d.get("N_C", 12), alpha=d.get("alpha", 4.0), beta=d.get("beta", 3.0),
            nu=d.get("nu", 1e-4), n_max=d.get("n_max"), gamma=d.get("gamma"), init=init,
            init_scale=d.get("init_scale", 1.0), bound_mode=mode, seed=d.get("seed"),
        )


def _replace(cfg, **changes):
    from dataclasses import replace
    return replace(cfg, **changes)


def _noise_to_dict(noise: NoiseModel) -> dict:
    return {"kind": noise.kind, "sigma": noise.sigma, "n_max": noise.n_max}


def _noise_from_dict(d) -> NoiseModel:
    return NoiseModel(d.get("kind", "gaussian"), d.get("sigma", 0.0), d.get("n_max"))


# --- per-step data -------------------------------------------------------------


@dataclass
class Candidate:
    """One live estimate with its sliding windows.

    `W_C[:, j]` is the estimate held just before the update that used
    `phi_C[:, j]`; in particular `W_C[:, 0]` is the estimate N_C updates ago.
    """

    w_hat: np.ndarray
    c: int
    phi_R: np.ndarray
    y_R: np.ndarray
    phi_C: np.ndarray
    W_C: np.ndarray
    h_C: np.ndarray
    eps_u: object = UNBOUNDED

    @classmethod
    def fresh(cls, w0, N_R, N_C):
        n = len(w0)
        return cls(
            w_hat=np.array(w0, dtype=float), c=0,
            phi_R=np.zeros((n, N_R)), y_R=np.zeros(N_R),
            phi_C=np.zeros((n, N_C)), W_C=np.zeros((n, N_C)), h_C=np.zeros(N_C),
        )

    @property
    def w_hat_lag(self) -> np.ndarray:
        return self.W_C[:, 0]


@dataclass(frozen=True)
class StepDatum:
    phi_star: np.ndarray
    y_star: float
    eta_star: float

    @classmethod
    def of(cls, phi, y):
        norm2 = float(phi @ phi)
        if norm2 == 0.0:
            raise DegenerateRegressor("zero update regressor")
        return cls(phi, float(y), 1.0 / norm2)


@dataclass(frozen=True)
class StepResult:
    chosen: int | None
    scores: np.ndarray
    residuals: np.ndarray
    tentative: np.ndarray
    sampled_index: int | None  # None: the current datum was used
    eps_u_after: object
    skipped: bool = False
    ill_conditioned: bool = False
    cond: float | None = None
    guarantee_void: bool = False


def _push(window, value):
    window[..., :-1] = window[..., 1:]
    window[..., -1] = value


# --- building blocks ---------------------------------------------------------------


def score_candidates(phi, y, estimates, eps_u, alpha, beta, nu):
    """Residuals, tentative estimates and assignment scores for all candidates.

    estimates is (m, n); eps_u a sequence of floats or UNBOUNDED.
    """
    phi = np.asarray(phi, dtype=float)
    norm2 = float(phi @ phi)
    if norm2 == 0.0:
        raise DegenerateRegressor("zero regressor")
    err = estimates @ phi - y
    residuals = np.abs(err) / np.sqrt(norm2)
    tentative = estimates - np.outer(err / norm2, phi)
    moves = np.linalg.norm(tentative - estimates, axis=1)
    scores = residuals.copy()
    for i, bound in enumerate(eps_u):
        if is_bounded(bound):
            factor = max(1.0, alpha * moves[i] / (2.0 * (bound + nu)))
            scores[i] = residuals[i] * factor ** beta
    return residuals, tentative, scores


def assign(scores) -> int:
    """Index of the smallest score; ties go to the lowest index."""
    scores = np.asarray(scores, dtype=float)
    if scores.size == 0:
        raise ConfigError("no scores to assign from")
    if not np.all(np.isfinite(scores)):
        raise NumericalError(f"non-finite assignment score in {scores}")
    return int(np.argmin(scores))


def window_weights(phi_R, gamma=None) -> np.ndarray:
    """Column sampling probabilities for a full window."""
    w = np.einsum("ij,ij->j", phi_R, phi_R)
    if gamma is not None:
        scale = np.full(len(w), 1.0 - gamma)
        scale[-1] = gamma
        w = w * scale
    total = w.sum()
    if total == 0.0:
        raise DegenerateRegressor("all-zero sampling window")
    return w / total


def sample_window_column(phi_R, y_R, gamma=None, rng=None):
    """Draw a window column with probability proportional to its squared norm.

    With a forgetting factor the newest column's weight is scaled by gamma
    and the others by 1 - gamma before normalizing.
    """
    rng = rngmod.as_generator(rng)
    p = window_weights(phi_R, gamma)
    l = int(np.searchsorted(np.cumsum(p), rng.random() * p.sum(), side="right"))
    l = min(l, len(p) - 1)
    while p[l] == 0.0:  # guard against landing on an empty column through rounding
        l -= 1
    return l, StepDatum.of(phi_R[:, l].copy(), y_R[l])


def kaczmarz_update(w_hat, datum: StepDatum) -> np.ndarray:
    """Project w_hat onto the hyperplane {w : w . phi* = y*}."""
    if datum.eta_star <= 0 or not np.isfinite(datum.eta_star):
        raise DegenerateRegressor("invalid step size")
    return w_hat - datum.eta_star * datum.phi_star * (float(w_hat @ datum.phi_star) - datum.y_star)


# --- the identifier ------------------------------------------------------------------


class Identifier:
    """Sequential state machine; feed it one (phi, y) pair per step."""

    def __init__(self, config: IdentifierConfig):
        self.config = config
        n = config.orders.n
        if isinstance(config.init, str):
            if config.init == "zeros":
                w0 = np.zeros((config.m, n))
            else:
                w0 = config.init_scale * rngmod.stream(config.seed, "init").standard_normal((config.m, n))
        else:
            w0 = np.asarray(config.init, dtype=float)
        self._window = max(config.windows)
        self.candidates = [Candidate.fresh(w, config.N_R, self._window) for w in w0]
        self.rng_sampling = rngmod.stream(config.seed, "sampling")
        self.rng_mc = rngmod.stream(config.seed, "mc-bound")
        self.steps = 0

    @property
    def estimates(self) -> np.ndarray:
        return np.array([c.w_hat for c in self.candidates])

    def step(self, phi, y) -> StepResult:
        cfg = self.config
        m = cfg.m
        self.steps += 1
        phi = np.asarray(phi, dtype=float)
        eps = [c.eps_u for c in self.candidates]
        try:
            residuals, tentative, scores = score_candidates(
                phi, y, self.estimates, eps, cfg.alpha, cfg.beta, cfg.nu)
        except DegenerateRegressor:
            nan = np.full(m, np.nan)
            return StepResult(None, nan, nan, np.full((m, cfg.orders.n), np.nan), None,
                              UNBOUNDED, skipped=True)
        i = assign(scores)
        cand = self.candidates[i]
        cand.c += 1
        _push(cand.phi_R, phi)
        _push(cand.y_R, y)
        if cand.c < cfg.N_R:
            l, datum = None, StepDatum.of(phi.copy(), y)
        else:
            l, datum = sample_window_column(cand.phi_R, cand.y_R, cfg.gamma, self.rng_sampling)
        w_prev = cand.w_hat
        cand.w_hat = kaczmarz_update(w_prev, datum)
        ill, cond, void = self._update_bound(cand, datum, w_prev)
        return StepResult(i, scores, residuals, tentative, l, cand.eps_u,
                          ill_conditioned=ill, cond=cond, guarantee_void=void)

    def _update_bound(self, cand: Candidate, datum: StepDatum, w_prev):
        cfg = self.config
        _push(cand.phi_C, datum.phi_star)
        _push(cand.W_C, w_prev)
        _push(cand.h_C, datum.eta_star)
        mode = cfg.bound_mode
        if isinstance(mode, NoBound):
            return False, None, False
        windows = cfg.windows
        if cand.c < min(windows):
            return False, None, False
        try:
            comps = []
            for N in windows:
                if cand.c < N:
                    comps.append(None)
                    continue
                comps.append(assemble_bound_system(
                    cand.phi_C[:, -N:], cand.W_C[:, -N:], cand.h_C[-N:],
                    cand.w_hat, cand.W_C[:, -N]))
        except IllConditioned as exc:
            return True, exc.cond, False
        cond = max(bc.cond for bc in comps if bc is not None)
        void = False
        if isinstance(mode, MonteCarloBound):
            count, void = mc_sample_schedule(cand.c - cfg.N_C + 1, mode.schedule)
            sampler = lambda k, N: mode.noise.sample((k, N), self.rng_mc)  # noqa: E731
            cand.eps_u = monte_carlo_upper_bound(comps[0], sampler, count)
        elif any(bc is None for bc in comps):
            cand.eps_u = UNBOUNDED
        else:
            cand.eps_u = max(exact_upper_bound(bc, cfg.n_max, mode.cap) for bc in comps)
        return False, cond, void

    # --- snapshots ---------------------------------------------------------------

    def snapshot(self) -> dict:
        """JSON-ready state; matrices are nested lists in row-major order."""
        return {
            "config": self.config.to_dict(),
            "steps": self.steps,
            "candidates": [
                {
                    "w_hat": c.w_hat.tolist(), "c": c.c,
                    "phi_R": c.phi_R.tolist(), "y_R": c.y_R.tolist(),
                    "phi_C": c.phi_C.tolist(), "W_C": c.W_C.tolist(), "h_C": c.h_C.tolist(),
                    "eps_u": c.eps_u if is_bounded(c.eps_u) else "inf",
                }
                for c in self.candidates
            ],
            "rng": {
                "sampling": self.rng_sampling.bit_generator.state,
                "mc-bound": self.rng_mc.bit_generator.state,
            },
        }

    @classmethod
    def from_snapshot(cls, snap: dict) -> "Identifier":
        ident = cls(IdentifierConfig.from_dict(snap["config"]))
        ident.steps = snap["steps"]
        for cand, d in zip(ident.candidates, snap["candidates"], strict=True):
            cand.w_hat = np.array(d["w_hat"], dtype=float)
            cand.c = d["c"]
            for key in ("phi_R", "y_R", "phi_C", "W_C", "h_C"):
                setattr(cand, key, np.array(d[key], dtype=float))
            cand.eps_u = UNBOUNDED if d["eps_u"] == "inf" else float(d["eps_u"])
        ident.rng_sampling.bit_generator.state = snap["rng"]["sampling"]
        ident.rng_mc.bit_generator.state = snap["rng"]["mc-bound"]
        return ident

    def save(self, path):
        with open(path, "w") as fh:
            json.dump(self.snapshot(), fh, indent=1)


def init_identifier(config: IdentifierConfig) -> Identifier:
    return Identifier(config)


# --- streaming a trajectory -------------------------------------------------------


@dataclass(frozen=True)
class StepRecord:
    t: int
    true_mode: int
    result: StepResult
    estimates: np.ndarray  # (m, n) after the step
    errors: np.ndarray | None = None  # ||w_i - w_hat_i|| per candidate, if truth given

    @property
    def skipped(self) -> bool:
        return self.result.skipped


def run(identifier: Identifier, trajectory: Trajectory, true_params=None) -> list[StepRecord]:
    """Stream every step of the trajectory through the identifier."""
    orders = identifier.config.orders
    phis = regressor_matrix(trajectory.y, trajectory.u, orders)
    truth = None if true_params is None else np.asarray(true_params, dtype=float)
    if truth is not None and truth.shape[1] != orders.n:
        raise ConfigError(f"true parameters have length {truth.shape[1]}, identifier expects {orders.n}")
    records = []
    for t in range(trajectory.T):
        result = identifier.step(phis[t], trajectory.y[t])
        est = identifier.estimates
        errors = None
        if truth is not None:
            k = min(len(truth), len(est))
            errors = np.linalg.norm(truth[:k] - est[:k], axis=1)
        records.append(StepRecord(t, int(trajectory.modes[t]), result, est, errors))
    return records


# --- CSV output -------------------------------------------------------------------------


def _fmt(x):
    if x is UNBOUNDED:
        return "inf"
    if x is None:
        return ""
    return f"{x:.17g}"


def write_records_csv(records, path, m: int):
    header = (["t", "true_mode", "assigned_mode"]
              + [f"score_{i + 1}" for i in range(m)]
              + [f"resid_{i + 1}" for i in range(m)]
              + [f"err_{i + 1}" for i in range(m)]
              + ["eps_u_chosen", "skipped"])
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for rec in records:
            r = rec.result
            errs = [""] * m if rec.errors is None else [_fmt(e) for e in rec.errors]
            w.writerow([rec.t, rec.true_mode, "" if r.chosen is None else r.chosen]
                       + [_fmt(s) for s in r.scores] + [_fmt(s) for s in r.residuals] + errs
                       + [_fmt(r.eps_u_after) if not r.skipped else "", int(r.skipped)])


def write_bound_trace_csv(records, path, true_params):
    """Per-step bound audit: eps_u of the chosen candidate against its true error.

    `mode` is the true mode of the step and `true_err` the distance of the
    chosen candidate to that subsystem.
    """
    truth = np.asarray(true_params, dtype=float)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["t", "candidate", "eps_u", "true_err", "cond", "mode"])
        for rec in records:
            r = rec.result
            if r.skipped:
                continue
            err = float(np.linalg.norm(truth[rec.true_mode] - rec.estimates[r.chosen]))
            w.writerow([rec.t, r.chosen, _fmt(r.eps_u_after), _fmt(err), _fmt(r.cond), rec.true_mode])
