"""SARX systems: domain types, regressors, switching sequences, noise and simulation.

A switched ARX system with `m` subsystems evolves as

    y_t = w_{s_t} . phi_t + n_t,
    phi_t = [y_{t-1}, ..., y_{t-n_a}, u_{t-1}, ..., u_{t-n_c}]

where s_t is the active mode. Modes are 0-based integers throughout the
package. Samples before t = 0 are taken to be zero.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass, field
from typing import Sequence, Union

import numpy as np

from .errors import ConfigError, InstabilityError, SizingError
from .rng import as_generator

INSTABILITY_CAP = 1e12


@dataclass(frozen=True)
class SystemOrder:
    n_a: int
    n_c: int

    def __post_init__(self):
        if self.n_a < 0 or self.n_c < 0:
            raise ConfigError(f"lag counts must be nonnegative, got n_a={self.n_a}, n_c={self.n_c}")
        if self.n_a + self.n_c < 1:
            raise ConfigError("system order n_a + n_c must be at least 1")

    @property
    def n(self) -> int:
        return self.n_a + self.n_c


@dataclass(frozen=True)
class SarxSystem:
    """A set of subsystems sharing one order.

    `params` has shape (m, n); row i is [a_1..a_{n_a}, c_1..c_{n_c}] of
    subsystem i.
    """

    orders: SystemOrder
    params: np.ndarray

    def __post_init__(self):
        params = np.atleast_2d(np.asarray(self.params, dtype=float))
        if params.shape[0] < 1:
            raise ConfigError("a SARX system needs at least one subsystem")
        if params.shape[1] != self.orders.n:
            raise SizingError(
                f"subsystem parameter length {params.shape[1]} != n = {self.orders.n}"
            )
        for i in range(len(params)):
            for j in range(i + 1, len(params)):
                if np.array_equal(params[i], params[j]):
                    raise ConfigError(f"subsystems {i} and {j} have identical parameters")
        params.setflags(write=False)
        object.__setattr__(self, "params", params)

    @property
    def m(self) -> int:
        return self.params.shape[0]

    @classmethod
    def from_lists(cls, n_a, n_c, subsystems):
        return cls(SystemOrder(n_a, n_c), np.asarray(subsystems, dtype=float))


@dataclass(frozen=True)
class NoiseModel:
    """Additive output noise.

    kind is one of "none", "truncated-gaussian" (normal conditioned on
    |n| <= n_max) or "gaussian" (unbounded).
    """

    kind: str = "none"
    sigma: float = 0.0
    n_max: float | None = None

    def __post_init__(self):
        if self.kind not in ("none", "truncated-gaussian", "gaussian"):
            raise ConfigError(f"unknown noise kind {self.kind!r}")
        if self.sigma < 0:
            raise ConfigError("noise standard deviation must be nonnegative")
        if self.kind == "truncated-gaussian":
            if self.n_max is None or self.n_max <= 0:
                raise ConfigError("truncated-gaussian noise needs n_max > 0")
        elif self.kind == "gaussian" and self.n_max is not None:
            raise ConfigError("gaussian noise is unbounded; n_max must be absent")

    @classmethod
    def truncated(cls, sigma, width=3.0):
        """Normal noise truncated to [-width*sigma, width*sigma]."""
        return cls("truncated-gaussian", sigma, width * sigma)

    @property
    def bound(self) -> float | None:
        """Hard magnitude bound, 0 for no noise, None if unbounded."""
        if self.kind == "none":
            return 0.0
        return self.n_max

    def sample(self, size, rng) -> np.ndarray:
        rng = as_generator(rng)
        if self.kind == "none" or self.sigma == 0.0:
            return np.zeros(size)
        if self.kind == "gaussian":
            return rng.normal(0.0, self.sigma, size)
        return _truncated_normal(self.sigma, self.n_max, size, rng)


def _truncated_normal(sigma, n_max, size, rng):
    shape = (size,) if np.isscalar(size) else tuple(size)
    out = rng.normal(0.0, sigma, shape)
    bad = np.abs(out) > n_max
    while bad.any():
        out[bad] = rng.normal(0.0, sigma, int(bad.sum()))
        bad = np.abs(out) > n_max
    return out


def sample_truncated_gaussian(sigma, n_max, rng) -> float:
    """One draw from N(0, sigma^2) conditioned on |x| <= n_max (rejection)."""
    if sigma < 0 or n_max <= 0:
        raise ConfigError("need sigma >= 0 and n_max > 0")
    if sigma == 0:
        return 0.0
    rng = as_generator(rng)
    while True:
        x = rng.normal(0.0, sigma)
        if abs(x) <= n_max:
            return float(x)


# --- switching patterns -----------------------------------------------------


@dataclass(frozen=True)
class SlowSwitching:
    """Blocks of `block_length` steps visiting subsystems 0, 1, ..., m-1 in turn."""

    block_length: int = 500


@dataclass(frozen=True)
class MinDwell:
    """Segments of `dwell + G` steps, G ~ Geometric(geo_p) on {0, 1, ...}."""

    dwell: int = 30
    geo_p: float = 1 / 16


@dataclass(frozen=True)
class FastSwitching:
    """Mode drawn i.i.d. uniformly at every step."""


@dataclass(frozen=True)
class Explicit:
    sequence: tuple = field(default=())


SwitchingPattern = Union[SlowSwitching, MinDwell, FastSwitching, Explicit]


def generate_switching(pattern: SwitchingPattern, m: int, T: int, seed=None) -> np.ndarray:
    """Mode sequence of length T over {0, ..., m-1}."""
    if m < 1 or T < 1:
        raise ConfigError("need m >= 1 and T >= 1")
    rng = as_generator(seed)
    if isinstance(pattern, SlowSwitching):
        if pattern.block_length < 1:
            raise ConfigError("block_length must be positive")
        return (np.arange(T) // pattern.block_length) % m
    if isinstance(pattern, FastSwitching):
        return rng.integers(0, m, T)
    if isinstance(pattern, MinDwell):
        if pattern.dwell < 1 or not 0 < pattern.geo_p <= 1:
            raise ConfigError("MinDwell needs dwell >= 1 and 0 < geo_p <= 1")
        out = np.empty(T, dtype=np.int64)
        pos = 0
        while pos < T:
            mode = rng.integers(0, m)
            length = pattern.dwell + int(rng.geometric(pattern.geo_p)) - 1
            out[pos:pos + length] = mode
            pos += length
        return out
    if isinstance(pattern, Explicit):
        seq = np.asarray(pattern.sequence, dtype=np.int64)
        if seq.shape != (T,):
            raise ConfigError(f"explicit sequence has length {seq.size}, expected {T}")
        if seq.size and (seq.min() < 0 or seq.max() >= m):
            raise ConfigError(f"explicit sequence has modes outside [0, {m})")
        return seq.copy()
    raise ConfigError(f"unknown switching pattern {pattern!r}")


# --- regressors and trajectories ---------------------------------------------


def build_regressor(y_history, u_history, orders: SystemOrder | None = None) -> np.ndarray:
    """Stack newest-first output and input histories into phi."""
    y_history = np.asarray(y_history, dtype=float).ravel()
    u_history = np.asarray(u_history, dtype=float).ravel()
    if orders is not None and (y_history.size != orders.n_a or u_history.size != orders.n_c):
        raise SizingError(
            f"expected {orders.n_a} output and {orders.n_c} input lags, "
            f"got {y_history.size} and {u_history.size}"
        )
    return np.concatenate([y_history, u_history])


def regressor_at(y, u, t, orders: SystemOrder) -> np.ndarray:
    """phi_t from stored sequences, with zeros before index 0."""
    phi = np.zeros(orders.n)
    for j in range(1, orders.n_a + 1):
        if t - j >= 0:
            phi[j - 1] = y[t - j]
    for k in range(1, orders.n_c + 1):
        if t - k >= 0:
            phi[orders.n_a + k - 1] = u[t - k]
    return phi


def regressor_matrix(y, u, orders: SystemOrder) -> np.ndarray:
    """All regressors as a (T, n) array."""
    T = len(y)
    out = np.zeros((T, orders.n))
    for j in range(1, orders.n_a + 1):
        out[j:, j - 1] = y[:T - j]
    for k in range(1, orders.n_c + 1):
        out[k:, orders.n_a + k - 1] = u[:T - k]
    return out


@dataclass(frozen=True)
class Trajectory:
    u: np.ndarray
    y: np.ndarray
    modes: np.ndarray
    noise: np.ndarray

    def __post_init__(self):
        arrays = {}
        for name in ("u", "y", "noise"):
            arrays[name] = np.array(getattr(self, name), dtype=float)
        arrays["modes"] = np.array(self.modes, dtype=np.int64)
        T = len(arrays["y"])
        for name, arr in arrays.items():
            if arr.shape != (T,):
                raise SizingError(f"trajectory field {name} has shape {arr.shape}, expected ({T},)")
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    @property
    def T(self) -> int:
        return len(self.y)

    def regressors(self, orders: SystemOrder) -> np.ndarray:
        return regressor_matrix(self.y, self.u, orders)

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["t", "u", "y", "mode", "noise"])
            for t in range(self.T):
                writer.writerow([t, f"{self.u[t]:.17g}", f"{self.y[t]:.17g}",
                                 int(self.modes[t]), f"{self.noise[t]:.17g}"])

    @classmethod
    def from_csv(cls, path) -> "Trajectory":
        with open(path, newline="") as fh:
            reader = csv.DictReader(fh)
            if reader.fieldnames != ["t", "u", "y", "mode", "noise"]:
                raise ConfigError(f"{path}: expected header t,u,y,mode,noise, got {reader.fieldnames}")
            rows = list(reader)
        for i, row in enumerate(rows):
            if int(row["t"]) != i:
                raise ConfigError(f"{path}: row {i} has t={row['t']}")
        return cls(
            u=[float(r["u"]) for r in rows],
            y=[float(r["y"]) for r in rows],
            modes=[int(r["mode"]) for r in rows],
            noise=[float(r["noise"]) for r in rows],
        )


def simulate(system: SarxSystem, pattern: SwitchingPattern, noise: NoiseModel,
             input_std: float, T: int, seed=None, *, modes=None,
             cap: float = INSTABILITY_CAP) -> Trajectory:
    """Simulate T steps with i.i.d. N(0, input_std^2) inputs and zero pre-history.

    `seed` may be an int or a Generator. The switching sequence, inputs and
    noise are drawn in that order from the same generator unless `modes` is
    supplied explicitly.
    """
    if T < 1:
        raise ConfigError("horizon T must be at least 1")
    rng = as_generator(seed)
    if modes is None:
        modes = generate_switching(pattern, system.m, T, rng)
    else:
        modes = np.asarray(modes, dtype=np.int64)
        if modes.shape != (T,) or modes.min() < 0 or modes.max() >= system.m:
            raise ConfigError("explicit modes must have length T and values in [0, m)")
    u = rng.normal(0.0, input_std, T) if input_std > 0 else np.zeros(T)
    n = noise.sample(T, rng)
    orders = system.orders
    y = np.zeros(T)
    for t in range(T):
        phi = regressor_at(y, u, t, orders)
        y[t] = float(system.params[modes[t]] @ phi) + n[t]
        if not np.isfinite(y[t]) or abs(y[t]) > cap:
            raise InstabilityError(t, y[t], cap)
    return Trajectory(u=u, y=y, modes=modes, noise=n)


def replay_outputs(system: SarxSystem, trajectory: Trajectory) -> np.ndarray:
    """Recompute outputs from stored inputs, modes and noise."""
    y = np.zeros(trajectory.T)
    for t in range(trajectory.T):
        phi = regressor_at(y, trajectory.u, t, system.orders)
        y[t] = float(system.params[trajectory.modes[t]] @ phi) + trajectory.noise[t]
    return y


# --- random systems and MIMO ---------------------------------------------------


def coefficients_from_poles(p1, p2):
    """(a1, a2) of y_t = a1 y_{t-1} + a2 y_{t-2} + ... with poles p1, p2."""
    return p1 + p2, -p1 * p2


def random_system_from_poles(m: int, c1: float = 1.0, seed=None, low=-1.0, high=1.0) -> SarxSystem:
    """m order-(2, 1) subsystems with real poles drawn uniformly on [low, high]."""
    if m < 1:
        raise ConfigError("m must be at least 1")
    rng = as_generator(seed)
    params = []
    for _ in range(m):
        p1, p2 = rng.uniform(low, high, 2)
        a1, a2 = coefficients_from_poles(p1, p2)
        params.append([a1, a2, c1])
    return SarxSystem(SystemOrder(2, 1), np.array(params))


@dataclass(frozen=True)
class MimoChannel:
    """One scalar-output problem of a MIMO SARX system.

    `params[s]` is the parameter vector of subsystem s for this output
    channel, matched to the stacked regressor
    [y_{t-1}; ...; y_{t-n_a}; u_{t-1}; ...; u_{t-n_c}].
    """

    channel: int
    orders: SystemOrder
    params: np.ndarray

    def system(self) -> SarxSystem:
        return SarxSystem(self.orders, self.params)


def mimo_decompose(A_mats, C_mats, n_y: int, n_u: int) -> list[MimoChannel]:
    """Split a MIMO SARX system into n_y independent scalar-output problems.

    A_mats[s][j] is the (n_y, n_y) lag-(j+1) output matrix of subsystem s and
    C_mats[s][k] the (n_y, n_u) lag-(k+1) input matrix. The returned orders
    count stacked regressor entries: n_a * n_y output and n_c * n_u input slots.
    """
    if len(A_mats) != len(C_mats) or len(A_mats) < 1:
        raise SizingError("need the same positive number of subsystems in A_mats and C_mats")
    n_a = len(A_mats[0])
    n_c = len(C_mats[0])
    rows = []
    for s, (As, Cs) in enumerate(zip(A_mats, C_mats)):
        if len(As) != n_a or len(Cs) != n_c:
            raise SizingError(f"subsystem {s} has inconsistent lag counts")
        blocks = []
        for A in As:
            A = np.asarray(A, dtype=float)
            if A.shape != (n_y, n_y):
                raise SizingError(f"subsystem {s}: output matrix shape {A.shape} != {(n_y, n_y)}")
            blocks.append(A.T)
        for C in Cs:
            C = np.asarray(C, dtype=float)
            if C.shape != (n_y, n_u):
                raise SizingError(f"subsystem {s}: input matrix shape {C.shape} != {(n_y, n_u)}")
            blocks.append(C.T)
        rows.append(np.vstack(blocks))  # W_s, (n_a n_y + n_c n_u, n_y)
    orders = SystemOrder(n_a * n_y, n_c * n_u)
    return [MimoChannel(i, orders, np.array([W[:, i] for W in rows])) for i in range(n_y)]


def mimo_regressor(y_history: Sequence, u_history: Sequence) -> np.ndarray:
    """Stack newest-first vector histories into one regressor."""
    parts = [np.ravel(v) for v in y_history] + [np.ravel(v) for v in u_history]
    return np.concatenate(parts) if parts else np.zeros(0)
