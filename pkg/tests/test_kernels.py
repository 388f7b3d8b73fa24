import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from dmdrate.bath import BRIDGE, BathExpansion, SpectralDensity, correlation_expansion
from dmdrate.errors import ConfigError
from dmdrate.gme import solve_population
from dmdrate.kernels import (POPULATION, SYSTEM, KernelSeries, ProjectorKind, _two_time_kernels,
                             apply_complement, apply_projector, dc_component,
                             extract_floquet_kernels, extract_kernel, kernel_fft, snap_dt,
                             tensor_relations)
from dmdrate.propagator import (AdoState, EtHamiltonian, build_hierarchy, donor_population)


@pytest.fixture(scope="module")
def driven_small():
    e1 = correlation_expansion(SpectralDensity.drude(0.2, 1.0), 1.0, 1)
    e2 = correlation_expansion(SpectralDensity.brownian(0.2, 1.0, 1.0), 1.0, 1, BRIDGE)
    space = build_hierarchy([e1, e2], 3)
    H = EtHamiltonian.et_params(1.5, 0.2, 1.0, eps=2.0, Omega=4.0)
    return space, H


@settings(max_examples=30, deadline=None)
@given(st.sampled_from([POPULATION, SYSTEM]), st.integers(1, 6), st.integers(0, 2**32 - 1))
def test_projector_algebra(kind, n_ado, seed):
    rng = np.random.default_rng(seed)
    p = ProjectorKind(kind)
    v = rng.normal(size=4 * n_ado) + 1j * rng.normal(size=4 * n_ado)
    Pv = apply_projector(p, v)
    Qv = apply_complement(p, v)
    assert np.array_equal(apply_projector(p, Pv), Pv)
    assert np.array_equal(Pv + Qv, v)
    assert np.vdot(Pv, Qv) == 0
    assert np.array_equal(apply_projector(p, Qv), np.zeros_like(v))


def test_projector_on_ado_state():
    s = AdoState(np.arange(8, dtype=complex), 1.5)
    out = apply_projector(ProjectorKind(POPULATION), s)
    assert isinstance(out, AdoState) and out.t == 1.5
    assert np.array_equal(out.values, [0, 0, 0, 3, 0, 0, 0, 0])
    with pytest.raises(ValueError):
        ProjectorKind("bogus")


def test_zero_coupling_kernel_vanishes(fig1_H):
    space = build_hierarchy([BathExpansion(np.zeros(2), np.ones(2), 1.0, 0)], 3)
    ks = extract_kernel(space, fig1_H, ProjectorKind(SYSTEM), np.arange(101) * 0.01)
    assert np.abs(ks.stack()).max() == 0.0


def test_fig1_kernel_shape(fig1_kernels):
    k_dd = fig1_kernels.comp["k_DD"]
    k_ad = fig1_kernels.comp["k_AD"]
    assert np.abs(fig1_kernels.stack().imag).max() < 1e-10
    assert k_dd[0].real == pytest.approx(2.0, rel=1e-12)
    for k in (k_dd.real, k_ad.real):
        # dips below zero then recovers, decaying to a few percent by t = 6
        assert np.count_nonzero(np.diff(np.sign(k)) != 0) >= 1
        assert k.min() < 0
        assert np.abs(k[-50:]).max() < 0.05 * np.abs(k).max()


def test_population_closure(fig1_kernels, fig1_space, fig1_H, fig1_grid):
    P_direct, _ = donor_population(fig1_space, fig1_H, fig1_grid)
    P = solve_population(fig1_kernels, 1.0, fig1_grid).P_D
    assert np.abs(P - P_direct).max() < 0.02
    # much tighter in practice: second order in dt
    assert np.abs(P - P_direct).max() < 1e-3


def test_driven_hamiltonian_rejected(driven_small):
    space, H = driven_small
    with pytest.raises(ValueError, match="extract_floquet_kernels"):
        extract_kernel(space, H, ProjectorKind(POPULATION), np.arange(5) * 0.01)


def test_floquet_undriven_reduces(driven_small):
    space, H = driven_small
    H0 = EtHamiltonian.et_params(1.5, 0.2, 1.0, eps=0.0, Omega=4.0)
    tau = np.arange(101) * snap_dt(0.01, H.period)
    fs = extract_floquet_kernels(space, H0, tau, n_max=3, n_phase=8)
    ref = extract_kernel(space, H0, ProjectorKind(POPULATION), tau)
    for lab in ("k_DD", "k_AD"):
        assert np.abs(fs.comps[(0, lab)] - ref.comp[lab]).max() < 1e-8
        for n in (1, 2, 3):
            assert np.abs(fs.comps[(n, lab)]).max() < 1e-8


def test_floquet_reconstruction_and_symmetry(driven_small):
    space, H = driven_small
    dt = snap_dt(0.01, H.period)
    tau = np.arange(201) * dt
    fs = extract_floquet_kernels(space, H, tau, n_max=3, n_phase=16, negative_check=True)
    for lab in ("k_DD", "k_AD"):
        assert np.abs(fs.comps[(-1, lab)] - fs.comps[(1, lab)].conj()).max() < 1e-8
        assert np.abs(fs.component(-2, lab) - fs.comps[(2, lab)].conj()).max() == 0
        assert np.abs(fs.comps[(1, lab)].imag).max() > 1e-3
    # an off-grid start phase, computed directly, against the harmonic sum
    t0 = 0.37 * H.period / 16
    direct = _two_time_kernels(space, H, tau, np.array([t0]))
    idx = np.arange(len(tau))
    for lab in ("k_DD", "k_AD"):
        rebuilt = fs.evaluate(lab, idx, t0 + tau)
        d = direct[lab][:, 0].real
        assert np.abs(rebuilt - d).max() < 0.01 * np.abs(d).max()


def test_floquet_needs_enough_phases(driven_small):
    space, H = driven_small
    with pytest.raises(ConfigError, match="n_phase"):
        extract_floquet_kernels(space, H, np.arange(3) * 0.01, n_max=3, n_phase=6)


def test_snap_dt_divides_period():
    T0 = np.pi / 2
    dt = snap_dt(0.01, T0)
    assert T0 / dt == pytest.approx(157)
    assert dt == pytest.approx(0.0100050721, abs=1e-10)


def test_fft_delta_is_flat():
    t = np.arange(64) * 0.05
    x = np.zeros(64)
    x[0] = 1.0
    omega, spec = kernel_fft(KernelSeries(t, {"k": x}))
    assert np.allclose(np.abs(spec["k"]), 0.05)


@pytest.mark.parametrize("sign", [1, -1])
def test_fft_lorentzian(sign):
    dt = 0.001
    t = np.arange(20001) * dt
    s = KernelSeries(t, {"k": np.exp(-t)})
    omega, spec = kernel_fft(s, sign=sign)
    sel = np.abs(omega) <= 5
    exact = 1.0 / (1.0 - sign * 1j * omega[sel])
    assert np.abs(spec["k"][sel] - exact).max() < 1e-3
    assert spec["k"][np.argmin(np.abs(omega))] == pytest.approx(dc_component(s, "k"))


def test_dc_component_is_sum():
    t = np.arange(10) * 0.1
    s = KernelSeries(t, {"k": np.ones(10)})
    assert dc_component(s, "k") == pytest.approx(1.0)


def test_tensor_relations_fig1_system(fig1_H):
    exp = correlation_expansion(SpectralDensity.drude(1.0, 1.0), 1.0, 2)
    space = build_hierarchy([exp], 3)
    ks = extract_kernel(space, fig1_H, ProjectorKind(SYSTEM), np.arange(201) * 0.01)
    rel = tensor_relations(ks)
    assert rel["column_sum_max"] < 1e-8
    assert rel["K_DD_eq_minus_K_AA"]
    assert rel["K_AD_eq_conj_K_DA_transposed"]
    assert not rel["K_DA_self_conjugate"]


def test_kernel_series_helpers():
    t = np.arange(5) * 0.1
    s = KernelSeries(t, {"a": np.arange(5.0)})
    w = s.window(3)
    assert len(w.t_grid) == 3
    z = w.zero_padded(t)
    assert np.array_equal(z.comp["a"], [0, 1, 2, 0, 0])
    assert z.meta["zero_padded_after"] == pytest.approx(0.2)
    with pytest.raises(ValueError):
        KernelSeries(t, {"a": np.ones(4)})


def test_thread_count_does_not_change_kernels(monkeypatch, small_space, fig1_H):
    t = np.arange(51) * 0.01
    p = ProjectorKind(SYSTEM)
    monkeypatch.setenv("DMDRATE_NUM_THREADS", "1")
    a = extract_kernel(small_space, fig1_H, p, t).stack()
    monkeypatch.setenv("DMDRATE_NUM_THREADS", "3")
    b = extract_kernel(small_space, fig1_H, p, t).stack()
    assert np.array_equal(a, b)
