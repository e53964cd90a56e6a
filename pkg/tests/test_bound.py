import numpy as np
import pytest
from hypothesis import given, strategies as st

from sarxid.bound import (
    UNBOUNDED,
    BoundComputation,
    McSchedule,
    assemble_bound_system,
    column_dot,
    exact_upper_bound,
    mc_sample_count,
    mc_sample_schedule,
    monte_carlo_upper_bound,
    multi_window_bound,
    naive_upper_bound,
)
from sarxid.errors import ConfigError, ExactModeTooLarge, IllConditioned
from sarxid.identify import Identifier, IdentifierConfig, run
from sarxid.model import NoiseModel, SarxSystem, SlowSwitching, SystemOrder, simulate

W_TRUE = np.array([0.7, -0.12, 1.0])
SINGLE = SarxSystem.from_lists(2, 1, [W_TRUE])


def bc_of(A, b):
    A = np.atleast_2d(np.asarray(A, dtype=float))
    return BoundComputation(A, np.asarray(b, dtype=float), np.ones(A.shape[1]), 1.0)


def random_bc(seed, n, N):
    rng = np.random.default_rng(seed)
    return bc_of(rng.standard_normal((n, N)), rng.standard_normal(n))


def test_column_dot_examples():
    np.testing.assert_array_equal(column_dot(np.eye(2), np.eye(2)), [1, 1])
    np.testing.assert_array_equal(column_dot(np.eye(2), np.zeros((2, 2))), [0, 0])
    M1 = np.array([[1, 0], [2, 1]])  # columns [1,2] and [0,1]
    M2 = np.array([[3, 1], [0, 1]])  # columns [3,0] and [1,1]
    np.testing.assert_array_equal(column_dot(M1, M2), [3, 1])


def test_assemble_one_dimensional():
    bc = assemble_bound_system(np.array([[1.0, 1.0]]), np.zeros((1, 2)), np.ones(2), np.zeros(1), np.zeros(1))
    np.testing.assert_allclose(bc.A, [[0.5, 0.5]])
    np.testing.assert_allclose(bc.b, [0.0])


@given(st.integers(0, 10_000))
def test_assemble_defines_A(seed):
    rng = np.random.default_rng(seed)
    n, N = 3, 9
    phi = rng.standard_normal((n, N))
    h = 1.0 / np.einsum("ij,ij->j", phi, phi)
    bc = assemble_bound_system(phi, rng.standard_normal((n, N)), h, rng.standard_normal(n), rng.standard_normal(n))
    M = (phi * h) @ phi.T
    np.testing.assert_allclose(M @ bc.A, phi * h, atol=1e-8)


def test_assemble_rejects_singular():
    phi = np.array([[1.0, 2.0, 3.0], [2.0, 4.0, 6.0]])  # rank one
    with pytest.raises(IllConditioned):
        assemble_bound_system(phi, np.zeros((2, 3)), np.ones(3), np.zeros(2), np.zeros(2))


def _noiseless_candidate(steps=200, seed=1):
    traj = simulate(SINGLE, SlowSwitching(10 ** 6), NoiseModel(), 1.0, steps, seed=seed)
    cfg = IdentifierConfig(1, SystemOrder(2, 1), N_R=3, N_C=12, n_max=0.0, init="zeros", seed=seed)
    ident = Identifier(cfg)
    phis = traj.regressors(cfg.orders)
    for t in range(steps):
        ident.step(phis[t], traj.y[t])
        yield ident.candidates[0]


def test_noiseless_reconstruction_equals_error():
    checked = 0
    for cand in _noiseless_candidate():
        if cand.c >= 12:
            bc = assemble_bound_system(cand.phi_C, cand.W_C, cand.h_C, cand.w_hat, cand.W_C[:, 0])
            assert np.linalg.norm(bc.b - (W_TRUE - cand.w_hat)) <= 1e-8
            checked += 1
    assert checked > 150


def test_noiseless_bound_is_exact():
    for cand in _noiseless_candidate(seed=4):
        if cand.c >= 12 and cand.eps_u is not UNBOUNDED:
            err = np.linalg.norm(W_TRUE - cand.w_hat)
            assert abs(cand.eps_u - err) <= 1e-6 * max(err, 1e-300) + 1e-14


def test_exact_bound_examples():
    bc = random_bc(0, 3, 6)
    assert exact_upper_bound(bc, 0.0) == pytest.approx(np.linalg.norm(bc.b))
    assert exact_upper_bound(bc_of([[1.0, 1.0]], [0.0]), 1.0) == pytest.approx(2.0)


def test_gray_matches_naive_n10():
    for seed in range(5):
        bc = random_bc(seed, 3, 10)
        np.testing.assert_allclose(exact_upper_bound(bc, 0.3), naive_upper_bound(bc, 0.3), rtol=0, atol=1e-10)


@given(st.integers(0, 100_000), st.integers(1, 12), st.integers(1, 4), st.floats(1e-3, 10.0))
def test_gray_matches_naive_property(seed, N, n, n_max):
    bc = random_bc(seed, n, N)
    assert abs(exact_upper_bound(bc, n_max) - naive_upper_bound(bc, n_max)) <= 1e-10 * max(1.0, n_max)


def test_gray_block_path_matches_naive():
    # 18 vertices exceed a single Gray block, so the blocked walk is exercised
    bc = random_bc(7, 2, 18)
    np.testing.assert_allclose(exact_upper_bound(bc, 1.0), naive_upper_bound(bc, 1.0), atol=1e-10)


def test_exact_cap():
    with pytest.raises(ExactModeTooLarge, match="monte-carlo"):
        exact_upper_bound(random_bc(0, 2, 25), 1.0)


@given(st.integers(0, 10_000), st.floats(0.0, 5.0), st.floats(0.0, 5.0))
def test_bound_monotone_in_n_max(seed, a, b):
    bc = random_bc(seed, 3, 8)
    lo, hi = sorted((a, b))
    assert exact_upper_bound(bc, lo) <= exact_upper_bound(bc, hi) + 1e-12


def test_mc_examples():
    bc = random_bc(1, 3, 5)
    zeros = monte_carlo_upper_bound(bc, lambda k, N: np.zeros((k, N)), 10)
    assert zeros == pytest.approx(np.linalg.norm(bc.b))
    two = monte_carlo_upper_bound(bc_of([[1.0, 1.0]], [0.0]), lambda k, N: np.array([[1.0, 1.0], [0.0, 0.0]]), 2)
    assert two == pytest.approx(2.0)


@given(st.integers(0, 10_000), st.floats(1e-3, 2.0))
def test_mc_dominated_by_exact(seed, n_max):
    bc = random_bc(seed, 3, 8)
    rng = np.random.default_rng(seed)
    mc = monte_carlo_upper_bound(bc, lambda k, N: rng.uniform(-n_max, n_max, (k, N)), 200)
    assert mc <= exact_upper_bound(bc, n_max) + 1e-12


def test_mc_schedule_examples():
    assert np.ceil(mc_sample_count(1, 0.5, 1.0)) == 2
    assert mc_sample_schedule(2, McSchedule(0.5, 0.5)) == (8, False)
    assert mc_sample_schedule(200, McSchedule(0.5, 0.5, cap=1000)) == (1000, True)
    assert mc_sample_count(100_000, 0.5, 0.5) == np.inf


def test_mc_schedule_validation():
    with pytest.raises(ConfigError):
        McSchedule(1.0, 0.5)
    with pytest.raises(ConfigError):
        mc_sample_count(0, 0.5, 0.5)


def test_multi_window_examples():
    bc = random_bc(3, 3, 6)
    assert multi_window_bound([bc], 0.2) == exact_upper_bound(bc, 0.2)
    small = bc_of([[0.0]], [0.3])
    large = bc_of([[0.0]], [0.7])
    assert multi_window_bound([small, large], 0.0) == pytest.approx(0.7)
    assert multi_window_bound([small, None], 0.0) is UNBOUNDED
    with pytest.raises(ConfigError):
        multi_window_bound([], 0.0)


def test_validity_single_run():
    traj = simulate(SINGLE, SlowSwitching(10 ** 6), NoiseModel.truncated(1e-4), 1.0, 300, seed=12)
    cfg = IdentifierConfig(1, SystemOrder(2, 1), N_R=3, N_C=12, n_max=3e-4, seed=12)
    for rec in run(Identifier(cfg), traj, [W_TRUE]):
        r = rec.result
        if not r.skipped and r.eps_u_after is not UNBOUNDED and not r.ill_conditioned:
            assert r.eps_u_after >= rec.errors[0]
