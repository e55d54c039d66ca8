import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from dynesom.objective import (DynamicLeastSquares, FrozenObjective, FunctionObjective,
                               ObjectiveError, estimate_bounds, local_gradient_ls,
                               local_hessian_ls, make_dynamic_least_squares, target_scaling)


def central_gradient(fn, x, h=1e-6):
    g = np.zeros_like(x)
    for k in range(x.size):
        e = np.zeros_like(x)
        e[k] = h
        g[k] = (fn(x + e) - fn(x - e)) / (2 * h)
    return g


def test_target_after_first_change():
    obj = make_dynamic_least_squares(20, 5, 1000, change_period=100, seed=0)
    np.testing.assert_allclose(obj.target(100), abs(np.sin(np.pi / 5)) * obj.target(0),
                               atol=1e-15)
    assert np.linalg.norm(obj.target(0)) == pytest.approx(1.0)


def test_target_constant_in_first_epoch():
    obj = make_dynamic_least_squares(4, 3, 300, change_period=100, seed=1)
    for t in range(100):
        np.testing.assert_array_equal(obj.target(t), obj.target(0))


def test_target_zero_at_sine_period():
    obj = make_dynamic_least_squares(4, 3, 600, change_period=100, seed=1)
    np.testing.assert_array_equal(obj.target(500), np.zeros(3))
    assert target_scaling(500) == 0.0 and target_scaling(1000) == 0.0


def test_trajectory_scale():
    obj = make_dynamic_least_squares(3, 4, 10, change_period=5, seed=2, trajectory_scale=7.5)
    assert np.linalg.norm(obj.target(0)) == pytest.approx(7.5)


@pytest.mark.parametrize("noise_std", [0.0, 0.8])
@pytest.mark.parametrize("redraw", [True, False])
def test_minimizer_identity(noise_std, redraw):
    obj = make_dynamic_least_squares(8, 4, 500, change_period=50, seed=3,
                                     noise_std=noise_std, redraw_noise=redraw)
    A = np.einsum("nri,nrj->ij", obj.H, obj.H)
    for t in range(0, 501, 50):
        b = sum(obj.H[i].T @ obj.y(i, t) for i in range(obj.n))
        np.testing.assert_allclose(np.linalg.solve(A, b), obj.target(t), atol=1e-10)


def test_projected_noise_makes_local_minimizers_disagree():
    obj = make_dynamic_least_squares(6, 3, 10, change_period=5, seed=4, noise_std=1.0)
    local = [np.linalg.solve(obj.H[i], obj.y(i, 0)) for i in range(obj.n)]
    assert max(np.linalg.norm(x - obj.target(0)) for x in local) > 0.1


def test_raw_noise_targets_are_noisy_minimizers():
    obj = make_dynamic_least_squares(6, 3, 20, change_period=10, seed=4, noise_std=0.5,
                                     noise="raw")
    A = np.einsum("nri,nrj->ij", obj.H, obj.H)
    b = sum(obj.H[i].T @ obj.y(i, 10) for i in range(obj.n))
    np.testing.assert_allclose(np.linalg.solve(A, b), obj.target(10), atol=1e-10)


def test_piecewise_constant_observations():
    obj = make_dynamic_least_squares(5, 3, 200, change_period=40, seed=5, noise_std=0.3)
    for t in range(1, 201):
        if not obj.changes_at(t):
            for i in range(obj.n):
                assert obj.y(i, t).tobytes() == obj.y(i, t - 1).tobytes()
    assert obj.changes_at(40) and not obj.changes_at(0) and not obj.changes_at(41)


def test_gradient_zero_at_target_noise_free():
    obj = make_dynamic_least_squares(5, 3, 100, change_period=10, seed=6)
    for t in (0, 10, 55):
        for i in range(obj.n):
            assert np.max(np.abs(local_gradient_ls(obj, i, t, obj.target(t)))) < 1e-12


def test_identity_regressor():
    obj = DynamicLeastSquares(np.eye(3)[None], np.zeros((2, 1, 3)), np.zeros((2, 3)), 5, 5)
    v = np.array([1.0, -2.0, 0.5])
    np.testing.assert_array_equal(local_gradient_ls(obj, 0, 0, v), v)
    np.testing.assert_array_equal(local_hessian_ls(obj, 0, 0, v), np.eye(3))


def test_hessian_eigs_are_squared_singular_values():
    obj = make_dynamic_least_squares(4, 5, 10, change_period=5, seed=7)
    for i in range(obj.n):
        sv = np.linalg.svd(obj.H[i], compute_uv=False)
        np.testing.assert_allclose(np.linalg.eigvalsh(obj.hessian(i, 0, None)),
                                   np.sort(sv ** 2), rtol=1e-10)


@given(st.integers(0, 10_000), st.integers(1, 4), st.integers(0, 29))
def test_gradient_and_hessian_match_finite_differences(seed, p, t):
    obj = make_dynamic_least_squares(3, p, 30, change_period=7, seed=seed, noise_std=0.5)
    rng = np.random.default_rng(seed)
    for i in range(obj.n):
        x = rng.standard_normal(p)
        g = obj.gradient(i, t, x)
        fd = central_gradient(lambda z: obj.value(i, t, z), x)
        assert np.linalg.norm(fd - g) <= 1e-5 * max(np.linalg.norm(g), 1e-3)
        Hfd = np.column_stack([central_gradient(lambda z: obj.gradient(i, t, z)[k], x)
                               for k in range(p)]).T
        Hs = obj.hessian(i, t, x)
        np.testing.assert_array_equal(Hs, Hs.T)
        assert np.linalg.norm(Hfd - Hs) <= 1e-4 * np.linalg.norm(Hs)


def test_stacked_gradient_matches_per_node(problem, rng):
    _, _, obj = problem
    X = rng.standard_normal((obj.n, obj.p))
    for t in (0, 11, 29):
        loop = np.stack([obj.gradient(i, t, X[i]) for i in range(obj.n)])
        np.testing.assert_allclose(obj.stacked_gradient(t, X), loop, atol=1e-12)


def test_bounds_quadratic_exact():
    obj = make_dynamic_least_squares(6, 4, 50, change_period=10, seed=8)
    m, M, L = estimate_bounds(obj, [0, 10, 20])
    eig = np.concatenate([np.linalg.eigvalsh(obj.H[i].T @ obj.H[i]) for i in range(obj.n)])
    assert L == 0.0
    assert m == pytest.approx(eig.min(), rel=1e-10)
    assert M == pytest.approx(eig.max(), rel=1e-10)


def test_bounds_scaled_identity():
    obj = DynamicLeastSquares(2.0 * np.eye(3)[None], np.zeros((1, 1, 3)), np.zeros((1, 3)), 5, 1)
    assert estimate_bounds(obj, [0]) == pytest.approx((4.0, 4.0, 0.0))


def test_bounds_detect_lost_convexity():
    flat = FunctionObjective(1, 2, 1, lambda i, t, x: 0.0, lambda i, t, x: np.zeros(2),
                             lambda i, t, x: np.zeros((2, 2)))
    with pytest.raises(ObjectiveError, match="strongly convex"):
        estimate_bounds(flat, [0])
    with pytest.raises(ObjectiveError):
        estimate_bounds(flat, [])


def test_bounds_nonquadratic_lipschitz():
    # f(x) = sum x^4 / 12 has Hessian diag(x^2): Lipschitz constant grows with the sample scale
    obj = FunctionObjective(1, 2, 1, lambda i, t, x: float(np.sum(x ** 4) / 12 + x @ x / 2),
                            lambda i, t, x: x ** 3 / 3 + x,
                            lambda i, t, x: np.diag(x ** 2 + 1))
    m, M, L = estimate_bounds(obj, [0], scale=0.5)
    assert m >= 1.0 and L > 0


def test_regressor_redraw_and_validation():
    with pytest.raises(ObjectiveError):
        make_dynamic_least_squares(2, 3, 10, rows=2)
    with pytest.raises(ObjectiveError):
        make_dynamic_least_squares(2, 3, 0)
    with pytest.raises(ObjectiveError):
        make_dynamic_least_squares(2, 3, 10, noise="pink")
    obj = make_dynamic_least_squares(3, 2, 10, change_period=5, seed=9, rows=4)
    assert obj.H.shape == (3, 4, 2)


def test_bundle_round_trip(tmp_path):
    obj = make_dynamic_least_squares(5, 3, 60, change_period=20, seed=10, noise_std=0.4,
                                     redraw_noise=False)
    obj.save(tmp_path / "inst.npz")
    back = DynamicLeastSquares.load(tmp_path / "inst.npz")
    for name in ("H", "y_epochs", "targets"):
        assert getattr(back, name).tobytes() == getattr(obj, name).tobytes()
    assert (back.change_period, back.horizon, back.seed, back.noise_std, back.redraw_noise) == \
        (20, 60, 10, 0.4, False)


def test_bundle_rejects_other_formats(tmp_path):
    np.savez(tmp_path / "x.npz", format=np.array("something-else"))
    with pytest.raises(ObjectiveError):
        DynamicLeastSquares.load(tmp_path / "x.npz")


def test_frozen_view_pins_time():
    obj = make_dynamic_least_squares(3, 2, 40, change_period=10, seed=11, noise_std=0.2)
    fr = FrozenObjective(obj, 15)
    x = np.ones(2)
    assert fr.value(1, 33, x) == obj.value(1, 15, x)
    np.testing.assert_array_equal(fr.target(0), obj.target(10))
    assert not fr.changes_at(20)
