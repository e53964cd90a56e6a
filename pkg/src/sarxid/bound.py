"""Certified estimation-error upper bounds from a window of past updates.

Over the last N_C Kaczmarz updates of one candidate the estimation error
satisfies

    eps_t = b - A n,    |n_j| <= n_max,

with A and b assembled from the stored update regressors, step sizes and
estimates. The bound is the largest ||A v - b|| over the vertices v of the
noise cube.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .errors import ConfigError, ExactModeTooLarge, IllConditioned, SizingError


class _Unbounded:
    """Marker for an error bound that is not (yet) finite."""

    _instance = None

    def __new__(cls):
        if cls._instance is None:
            cls._instance = super().__new__(cls)
        return cls._instance

    def __repr__(self):
        return "UNBOUNDED"

    def __reduce__(self):
        return (_Unbounded, ())


UNBOUNDED = _Unbounded()

EXACT_WINDOW_CAP = 24
COND_LIMIT = 1e12
_BLOCK_BITS = 16


def is_bounded(eps_u) -> bool:
    return eps_u is not UNBOUNDED


@dataclass(frozen=True)
class BoundComputation:
    A: np.ndarray  # (n, N_C)
    b: np.ndarray  # (n,)
    H: np.ndarray  # step sizes, the diagonal of H
    cond: float


@dataclass(frozen=True)
class McSchedule:
    zeta1: float = 0.9
    zeta2: float = 0.5
    cap: int = 10_000

    def __post_init__(self):
        if not (0 < self.zeta1 < 1 and 0 < self.zeta2 < 1):
            raise ConfigError("zeta1 and zeta2 must lie in (0, 1)")
        if self.cap < 1:
            raise ConfigError("Monte Carlo sample cap must be at least 1")


def column_dot(M1, M2) -> np.ndarray:
    """Column-wise inner products: out[j] = M1[:, j] . M2[:, j]."""
    M1 = np.asarray(M1, dtype=float)
    M2 = np.asarray(M2, dtype=float)
    if M1.shape != M2.shape:
        raise SizingError(f"column_dot shape mismatch {M1.shape} vs {M2.shape}")
    return np.einsum("ij,ij->j", M1, M2)


def assemble_bound_system(phi_C, W_C, h_C, w_now, w_lag, cond_limit=COND_LIMIT) -> BoundComputation:
    """Build A and b for the window.

    `W_C[:, j]` must hold the estimate in force *before* the update that used
    `phi_C[:, j]`, and `w_lag` the estimate before the oldest update in the
    window (which equals `W_C[:, 0]` when the window is contiguous).
    """
    phi_C = np.asarray(phi_C, dtype=float)
    W_C = np.asarray(W_C, dtype=float)
    h = np.asarray(h_C, dtype=float)
    n, N = phi_C.shape
    if W_C.shape != (n, N) or h.shape != (N,):
        raise SizingError("window shapes do not agree")
    dW = w_now[:, None] - W_C
    dw = w_now - w_lag
    PhiH = phi_C * h
    M = PhiH @ phi_C.T
    cond = float(np.linalg.cond(M))
    if not np.isfinite(cond) or cond > cond_limit:
        raise IllConditioned(cond, cond_limit)
    rhs = np.column_stack([PhiH, dw - PhiH @ column_dot(phi_C, dW)])
    sol = np.linalg.solve(M, rhs)
    return BoundComputation(A=sol[:, :N], b=sol[:, N], H=h.copy(), cond=cond)


def _gray_steps(lo, hi):
    """Flipped bit and flip direction (+1 for -n_max -> +n_max) for Gray steps lo .. hi-1."""
    k = np.arange(lo, hi, dtype=np.int64)
    flipped = np.log2(k & -k).astype(np.int64)
    gray = k ^ (k >> 1)
    sign = np.where((gray >> flipped) & 1, 1.0, -1.0)
    return flipped, sign


@lru_cache(maxsize=32)
def _gray_steps_cached(bits):
    flipped, sign = _gray_steps(1, 1 << bits)
    flipped.setflags(write=False)
    sign.setflags(write=False)
    return flipped, sign


def _max_over_half_cube(A, b, n_max):
    """max ||A v - b|| over v in {+-n_max}^N.

    Only vertices with the last coordinate at -n_max are walked; the mirror
    vertex -v gives ||A v + b||. The walk is in Gray-code order, so each step
    adds or subtracts one column of 2 n_max A to the running product A v.
    """
    n, N = A.shape
    free = N - 1
    current = -n_max * A.sum(axis=1)
    best = max(np.linalg.norm(current - b), np.linalg.norm(current + b))
    cols = 2.0 * n_max * A[:, :free]
    total = 1 << free
    block = 1 << _BLOCK_BITS
    for lo in range(1, total, block):
        hi = min(lo + block, total)
        if free <= _BLOCK_BITS:
            flipped, sign = _gray_steps_cached(free)
        else:
            flipped, sign = _gray_steps(lo, hi)
        path = current[:, None] + np.cumsum(cols[:, flipped] * sign, axis=1)
        minus = path - b[:, None]
        plus = path + b[:, None]
        best = max(best,
                   float(np.einsum("ij,ij->j", minus, minus).max()) ** 0.5,
                   float(np.einsum("ij,ij->j", plus, plus).max()) ** 0.5)
        current = path[:, -1]
    return float(best)


def exact_upper_bound(bc: BoundComputation, n_max: float, cap: int = EXACT_WINDOW_CAP) -> float:
    """Exact max of ||A v - b|| over all 2^N_C noise-cube vertices."""
    if n_max < 0:
        raise ConfigError("n_max must be nonnegative")
    N = bc.A.shape[1]
    if N > cap:
        raise ExactModeTooLarge(N, cap)
    if n_max == 0:
        return float(np.linalg.norm(bc.b))
    return _max_over_half_cube(bc.A, bc.b, n_max)


def naive_upper_bound(bc: BoundComputation, n_max: float) -> float:
    """Reference enumeration: multiply A by every vertex from scratch."""
    N = bc.A.shape[1]
    best = 0.0
    for code in range(1 << N):
        v = np.array([n_max if (code >> j) & 1 else -n_max for j in range(N)])
        best = max(best, float(np.linalg.norm(bc.A @ v - bc.b)))
    return best


def monte_carlo_upper_bound(bc: BoundComputation, noise_sampler, n_samples: int) -> float:
    """max ||A n_i - b|| over `n_samples` noise vectors from `noise_sampler(k, N_C)`."""
    if n_samples < 1:
        raise ConfigError("need at least one Monte Carlo sample")
    N = bc.A.shape[1]
    samples = np.asarray(noise_sampler(n_samples, N), dtype=float).reshape(n_samples, N)
    resid = samples @ bc.A.T - bc.b
    return float(np.sqrt((resid ** 2).sum(axis=1)).max())


def mc_sample_count(t: int, zeta1: float, zeta2: float) -> float:
    """Unclamped sample count zeta2 t / (2 zeta1^(2t)); inf once it overflows."""
    if t < 1:
        raise ConfigError("schedule is defined for t >= 1")
    if 2.0 * t * -math.log(zeta1) + math.log(zeta2 * t / 2.0) > 700:
        return math.inf
    return zeta2 * t / (2.0 * zeta1 ** (2 * t))


def mc_sample_schedule(t: int, sched: McSchedule) -> tuple[int, bool]:
    """ceil of the sample count, clamped to the cap.

    Returns (N_t, guarantee_void); the flag is set when the cap was applied,
    in which case the probabilistic validity guarantee no longer holds.
    """
    raw = mc_sample_count(t, sched.zeta1, sched.zeta2)
    if raw > sched.cap:
        return sched.cap, True
    return max(1, math.ceil(raw)), False


def multi_window_bound(computations, n_max: float, cap: int = EXACT_WINDOW_CAP):
    """Largest exact bound over several windows; any unfilled window (None) makes it UNBOUNDED."""
    if len(computations) == 0:
        raise ConfigError("multi-window bound needs at least one window")
    if any(bc is None for bc in computations):
        return UNBOUNDED
    return max(exact_upper_bound(bc, n_max, cap) for bc in computations)
