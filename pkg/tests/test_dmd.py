import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from dmdrate.dmd import (PROJECT, TRAJECTORY_LSQ, DmdModel, SnapshotSet, fit, hankel, predict,
                         predict_steps, reconstruction_error)
from dmdrate.errors import DegenerateSnapshotError
from dmdrate.numerics import RankPolicy, eig_dense


def stable_system(rng, n=8, radius=0.95):
    """Random real 8x8 matrix with spectral radius ``radius`` and full rank."""
    A = rng.normal(size=(n, n))
    return A * radius / np.abs(np.linalg.eigvals(A)).max()


def iterate(A, x0, n):
    X = np.empty((len(x0), n), dtype=complex)
    X[:, 0] = x0
    for k in range(1, n):
        X[:, k] = A @ X[:, k - 1]
    return X


def test_exponential_decay_single_mode():
    t = 0.1 * np.arange(50)
    m = fit(SnapshotSet(np.exp(-t), 0.1), delay=1)
    assert m.rank == 1
    assert abs(m.disc_eigs[0] - np.exp(-0.1)) < 1e-12
    assert abs(m.cont_freqs[0] - 1j) < 1e-10
    assert abs(predict(m, 2.0)[0] - np.exp(-2.0)) < 1e-10


def test_rotation_two_modes():
    t = 0.1 * np.arange(100)
    m = fit(SnapshotSet(np.array([np.cos(t), np.sin(t)]), 0.1))
    assert m.rank == 2
    assert np.allclose(np.sort(m.cont_freqs.real), [-1, 1], atol=1e-10)
    assert np.abs(m.cont_freqs.imag).max() < 1e-10
    for s in (0.3, 4.1):
        assert np.allclose(predict(m, s + 2 * np.pi), predict(m, s), atol=1e-8)


def test_linear_system_eigenvalues_and_forecast(rng):
    A = stable_system(rng)
    X = iterate(A, rng.normal(size=8), 40)
    m = fit(SnapshotSet(X.real, 0.1))
    ref, _ = eig_dense(A)
    for lam in ref:
        assert np.min(np.abs(m.disc_eigs - lam)) < 1e-9
    X_long = iterate(A, X[:, 0], 160)
    pred = predict(m, 0.1 * np.arange(160))
    assert np.linalg.norm(pred - X_long) / np.linalg.norm(X_long) < 1e-8
    assert reconstruction_error(m, SnapshotSet(X.real, 0.1)) < 1e-8


def test_zero_mode_model_error_is_one():
    data = np.ones((2, 5))
    m = DmdModel(np.zeros((2, 0)), np.zeros(0), np.zeros(0), np.zeros(0), 0.1, 1, 2)
    assert reconstruction_error(m, SnapshotSet(data, 0.1)) == pytest.approx(1.0)
    assert predict(m, 1.0).shape == (2,)


def test_noisy_fit_error_tracks_noise(rng):
    sigma = 1e-3
    t = 0.05 * np.arange(80)
    clean = np.array([np.exp(-0.3 * t) * np.cos(2 * t), np.exp(-0.3 * t) * np.sin(2 * t)])
    errs = []
    for _ in range(20):
        noisy = clean + sigma * rng.normal(size=clean.shape)
        snaps = SnapshotSet(noisy, 0.05)
        m = fit(snaps, RankPolicy.fixed(2))
        errs.append(reconstruction_error(m, snaps))
    rel_sigma = sigma * np.sqrt(clean.size) / np.linalg.norm(clean)
    assert rel_sigma / 10 < np.mean(errs) < 10 * rel_sigma


def test_degenerate_snapshots_raise():
    with pytest.raises(DegenerateSnapshotError):
        fit(SnapshotSet(np.zeros((2, 10)), 0.1))


def test_zero_eigenvalue_dropped_with_warning():
    # nilpotent shift: x1 -> x0 -> 0 has a zero eigenvalue
    X = np.array([[0.0, 1.0, 0.0, 0.0], [1.0, 0.0, 0.0, 0.0]])
    with pytest.warns(RuntimeWarning, match="zero eigenvalue"):
        m = fit(SnapshotSet(X, 1.0), RankPolicy.fixed(2))
    assert np.all(m.disc_eigs != 0)


def test_argument_validation():
    with pytest.raises(ValueError):
        SnapshotSet(np.ones((2, 1)), 0.1)
    with pytest.raises(ValueError):
        SnapshotSet(np.ones((2, 4)), 0.0)
    with pytest.raises(ValueError):
        fit(SnapshotSet(np.ones((1, 5)), 0.1), delay=4)
    with pytest.raises(ValueError):
        fit(SnapshotSet(np.ones((1, 5)), 0.1), amp_method="nope")


def test_hankel_layout():
    data = np.arange(10.0).reshape(2, 5)
    Hk = hankel(data, 3)
    assert Hk.shape == (6, 3)
    assert np.array_equal(Hk[:, 1], [1, 6, 2, 7, 3, 8])


def test_delay_embedding_lifts_rank():
    t = 0.01 * np.arange(150)
    x = np.exp(-t) * np.cos(3 * t) + 0.5 * np.exp(-2 * t) * np.sin(7 * t)
    m1 = fit(SnapshotSet(x, 0.01), delay=1)
    m4 = fit(SnapshotSet(x, 0.01), delay=10)
    assert m1.rank == 1 and m4.rank == 4
    tt = 0.01 * np.arange(600)
    xx = np.exp(-tt) * np.cos(3 * tt) + 0.5 * np.exp(-2 * tt) * np.sin(7 * tt)
    assert np.abs(predict_steps(m4, 600)[0] - xx).max() < 1e-8


def test_predict_steps_matches_predict(rng):
    A = stable_system(rng, 4)
    X = iterate(A, rng.normal(size=4), 30)
    m = fit(SnapshotSet(X, 0.2))
    assert np.allclose(predict_steps(m, 50), predict(m, 0.2 * np.arange(50)), atol=1e-12)


def test_json_round_trip(tmp_path, rng):
    A = stable_system(rng, 3)
    X = iterate(A, rng.normal(size=3), 30)
    m = fit(SnapshotSet(X.real, 0.1), delay=4)
    path = tmp_path / "model.json"
    m.save(path)
    m2 = DmdModel.load(path)
    t = np.linspace(0, 20, 57)
    assert np.abs(predict(m2, t) - predict(m, t)).max() <= 1e-12
    assert m2.delay == 4 and m2.base_dim == 3


@settings(max_examples=25, deadline=None)
@given(st.integers(2, 6), st.integers(0, 2**32 - 1))
def test_exact_linear_data_properties(n, seed):
    rng = np.random.default_rng(seed)
    A = stable_system(rng, n, 0.9)
    X = iterate(A, rng.normal(size=n), 3 * n + 4).real
    snaps = SnapshotSet(X, 0.1)
    ml = fit(snaps, amp_method=TRAJECTORY_LSQ)
    mp = fit(snaps, amp_method=PROJECT)
    t = 0.1 * np.arange(2 * X.shape[1])
    scale = np.linalg.norm(X)
    # exactness and amplitude-method agreement
    assert reconstruction_error(ml, snaps) < 1e-8
    assert np.linalg.norm(predict(ml, t) - predict(mp, t)) < 1e-8 * scale
    # real data: conjugate eigenvalue pairs and real forecasts
    for lam in ml.disc_eigs[np.abs(ml.disc_eigs.imag) > 1e-12]:
        assert np.min(np.abs(ml.disc_eigs - lam.conjugate())) < 1e-8
    assert np.abs(predict(ml, t).imag).max() < 1e-8 * scale
    # principal-branch frequencies
    assert np.allclose(np.exp(1j * ml.cont_freqs * 0.1), ml.disc_eigs, atol=1e-12)
    assert np.all(np.abs(ml.cont_freqs.real) <= np.pi / 0.1 + 1e-12)
