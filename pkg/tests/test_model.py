import numpy as np
import pytest
from hypothesis import given, strategies as st

from sarxid import rng as rngmod
from sarxid.errors import ConfigError, InstabilityError, SizingError
from sarxid.model import (
    Explicit,
    FastSwitching,
    MinDwell,
    NoiseModel,
    SarxSystem,
    SlowSwitching,
    SystemOrder,
    Trajectory,
    build_regressor,
    coefficients_from_poles,
    generate_switching,
    mimo_decompose,
    mimo_regressor,
    random_system_from_poles,
    regressor_matrix,
    replay_outputs,
    simulate,
)

SINGLE = SarxSystem.from_lists(2, 1, [[0.7, -0.12, 1.0]])
FOUR = SarxSystem.from_lists(2, 1, [[0.2, 0.24, 2], [0.7, -0.12, 1], [-1.4, -0.53, 1], [1.7, -0.72, 0.5]])


def test_regressor_stacking():
    np.testing.assert_array_equal(build_regressor([5, 3], [2], SystemOrder(2, 1)), [5, 3, 2])
    np.testing.assert_array_equal(build_regressor([0], [0], SystemOrder(1, 1)), [0, 0])
    np.testing.assert_array_equal(build_regressor([], [1, -1], SystemOrder(0, 2)), [1, -1])


def test_regressor_length_checked():
    with pytest.raises(SizingError):
        build_regressor([1, 2, 3], [1], SystemOrder(2, 1))


def test_regressor_matrix_zero_prehistory():
    y = np.array([1.0, 2.0, 3.0])
    u = np.array([10.0, 20.0, 30.0])
    phis = regressor_matrix(y, u, SystemOrder(2, 1))
    np.testing.assert_array_equal(phis, [[0, 0, 0], [1, 0, 10], [2, 1, 20]])


def test_order_validation():
    with pytest.raises(ConfigError):
        SystemOrder(0, 0)
    with pytest.raises(SizingError):
        SarxSystem.from_lists(2, 1, [[1.0, 2.0]])
    with pytest.raises(ConfigError):
        SarxSystem.from_lists(1, 1, [[1.0, 2.0], [1.0, 2.0]])


def test_slow_switching_blocks():
    modes = generate_switching(SlowSwitching(500), 4, 2000)
    for k in range(4):
        assert np.all(modes[500 * k:500 * (k + 1)] == k)


def test_fast_switching_single_mode():
    np.testing.assert_array_equal(generate_switching(FastSwitching(), 1, 10, seed=3), np.zeros(10))


def test_min_dwell_degenerate_geometric():
    modes = generate_switching(MinDwell(30, geo_p=1.0), 4, 300, seed=1)
    # with geo_p = 1 every extra wait is zero, so segments are cut every 30 steps
    starts = np.arange(0, 300, 30)
    for s in starts:
        assert np.all(modes[s:s + 30] == modes[s])


@given(st.integers(0, 10_000), st.integers(2, 5))
def test_min_dwell_segments_at_least_dwell(seed, m):
    modes = generate_switching(MinDwell(30, 1 / 16), m, 1500, seed=seed)
    change = np.flatnonzero(np.diff(modes)) + 1
    bounds = np.concatenate([[0], change, [len(modes)]])
    lengths = np.diff(bounds)
    assert np.all(lengths[:-1] >= 30)


def test_explicit_pattern_validated():
    with pytest.raises(ConfigError):
        generate_switching(Explicit((0, 1, 5)), 2, 3)
    np.testing.assert_array_equal(generate_switching(Explicit((0, 1, 1)), 2, 3), [0, 1, 1])


def test_one_step_recursion():
    system = SarxSystem.from_lists(1, 1, [[0.5, 1.0]])
    traj = simulate(system, FastSwitching(), NoiseModel(), 1.0, 2, seed=0)
    # y_0 = 0 (zero pre-history), y_1 = 0.5*y_0 + 1*u_0
    assert traj.y[0] == 0.0
    np.testing.assert_allclose(traj.y[1], traj.u[0])


def test_zero_input_zero_output():
    traj = simulate(FOUR, MinDwell(), NoiseModel(), 0.0, 200, seed=4)
    np.testing.assert_array_equal(traj.y, 0.0)


def test_empirical_correlation_matches_closed_form():
    traj = simulate(SINGLE, SlowSwitching(10 ** 6), NoiseModel("gaussian", 1e-4), 1.0, 100_000, seed=5)
    phis = traj.regressors(SINGLE.orders)[2:]
    R = phis.T @ phis / len(phis)
    np.testing.assert_allclose(R, [[1.67, 1.04, 0], [1.04, 1.67, 0], [0, 0, 1]], atol=0.05)


def test_noise_sampler_contracts():
    rng = np.random.default_rng(0)
    np.testing.assert_array_equal(NoiseModel().sample(5, rng), 0.0)
    x = NoiseModel("truncated-gaussian", 1.0, 3.0).sample(100_000, rng)
    assert np.abs(x).max() <= 3.0
    assert abs(x.mean()) < 0.02
    small = NoiseModel.truncated(1e-4).sample(10_000, rng)
    assert np.abs(small).max() <= 3e-4


def test_truncated_noise_fuzz():
    x = NoiseModel("truncated-gaussian", 2.0, 1.5).sample(1_000_000, np.random.default_rng(9))
    assert np.abs(x).max() <= 1.5


def test_noise_validation():
    with pytest.raises(ConfigError):
        NoiseModel("truncated-gaussian", 1.0)
    with pytest.raises(ConfigError):
        NoiseModel("gaussian", 1.0, 2.0)
    assert NoiseModel("gaussian", 1.0).bound is None


def test_replay_bit_identical():
    traj = simulate(FOUR, MinDwell(), NoiseModel.truncated(1e-3), 1.0, 500, seed=8)
    np.testing.assert_array_equal(replay_outputs(FOUR, traj), traj.y)


def test_same_seed_same_trajectory():
    a = simulate(FOUR, FastSwitching(), NoiseModel.truncated(1e-2), 1.0, 300, rngmod.stream(1, "simulation"))
    b = simulate(FOUR, FastSwitching(), NoiseModel.truncated(1e-2), 1.0, 300, rngmod.stream(1, "simulation"))
    for field in ("u", "y", "modes", "noise"):
        np.testing.assert_array_equal(getattr(a, field), getattr(b, field))


def test_trajectory_csv_round_trip(tmp_path):
    traj = simulate(FOUR, MinDwell(), NoiseModel.truncated(1e-3), 1.0, 100, seed=2)
    path = tmp_path / "traj.csv"
    traj.to_csv(path)
    back = Trajectory.from_csv(path)
    for field in ("u", "y", "modes", "noise"):
        np.testing.assert_array_equal(getattr(back, field), getattr(traj, field))


def test_instability_cap():
    unstable = SarxSystem.from_lists(1, 1, [[1.5, 1.0]])
    with pytest.raises(InstabilityError):
        simulate(unstable, FastSwitching(), NoiseModel(), 1.0, 200, seed=0)


def test_pole_map():
    assert coefficients_from_poles(0.0, 0.0) == (0.0, -0.0)
    np.testing.assert_allclose(coefficients_from_poles(0.5, 0.3), (0.8, -0.15))
    a1, a2 = coefficients_from_poles(0.6, 0.2)
    roots = np.roots([1.0, -a1, -a2])
    np.testing.assert_allclose(np.sort(roots), [0.2, 0.6])


def test_random_system_from_poles_reproducible():
    a = random_system_from_poles(4, seed=rngmod.stream(3, "system"))
    b = random_system_from_poles(4, seed=rngmod.stream(3, "system"))
    np.testing.assert_array_equal(a.params, b.params)
    np.testing.assert_array_equal(a.params[:, 2], 1.0)
    for a1, a2, _ in a.params:
        assert np.all(np.abs(np.roots([1.0, -a1, -a2])) <= 1.0 + 1e-12)


def test_mimo_siso_degenerate():
    chans = mimo_decompose([[[[0.5]], [[0.1]]]], [[[[2.0]]]], n_y=1, n_u=1)
    assert len(chans) == 1
    np.testing.assert_array_equal(chans[0].params, [[0.5, 0.1, 2.0]])
    assert chans[0].orders == SystemOrder(2, 1)


def test_mimo_dimension_count():
    A = [[np.array([[0.5, 0.1], [0.2, 0.3]])]]
    C = [[np.array([[1.0], [2.0]])]]
    chans = mimo_decompose(A, C, n_y=2, n_u=1)
    assert len(chans) == 2
    assert all(c.orders.n == 3 for c in chans)
    # channel i predicts y_i = A[i, :] y_{t-1} + C[i, :] u_{t-1}
    phi = mimo_regressor([np.array([1.0, -1.0])], [np.array([3.0])])
    for i, ch in enumerate(chans):
        expected = A[0][0][i] @ [1.0, -1.0] + C[0][0][i] @ [3.0]
        np.testing.assert_allclose(ch.params[0] @ phi, expected)


def test_mimo_diagonal_decouples():
    A = [[np.diag([0.5, 0.7])], [np.diag([0.1, 0.2])]]
    C = [[np.diag([1.0, 2.0])], [np.diag([3.0, 4.0])]]
    chans = mimo_decompose(A, C, n_y=2, n_u=2)
    for i, ch in enumerate(chans):
        other = 1 - i
        assert np.all(ch.params[:, other] == 0)
        assert np.all(ch.params[:, 2 + other] == 0)
