import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from dmdrate.bath import BRIDGE, BathExpansion
from dmdrate.errors import CapacityError
from dmdrate.propagator import (PROJ_A, Q_BRIDGE, SIGMA_X, SIGMA_Z, AdoState, EtHamiltonian,
                                assemble_generator, build_hierarchy, donor_population,
                                enumerate_indices, propagate, rhs, thermal_donor_initial)


def null_bath(n=1, label="donor_gap"):
    return BathExpansion(np.zeros(n), np.ones(n), 1.0, 0, label)


def test_enumeration_small_cases():
    assert enumerate_indices(1, 2) == [(0,), (1,), (2,)]
    assert len(enumerate_indices(3, 2)) == 10
    assert enumerate_indices(2, 1) == [(0, 0), (1, 0), (0, 1)]


def test_enumeration_k8_l6():
    idx = enumerate_indices(8, 6)
    assert len(idx) == math.comb(14, 6) == 3003
    assert len(set(idx)) == 3003


@settings(max_examples=30, deadline=None)
@given(st.integers(1, 5), st.integers(1, 5))
def test_enumeration_properties(K, L):
    idx = enumerate_indices(K, L)
    assert len(idx) == math.comb(K + L, L)
    assert len(set(idx)) == len(idx)
    tiers = [sum(o) for o in idx]
    assert tiers == sorted(tiers) and max(tiers) == L
    assert all(min(o) >= 0 and len(o) == K for o in idx)


def test_capacity_error_suggests_depth():
    with pytest.raises(CapacityError, match="hierarchy.depth = 3"):
        build_hierarchy([null_bath(4)], 10, max_state=4 * math.comb(7, 3))


def test_zero_coupling_rhs_is_commutator():
    space = build_hierarchy([null_bath()], 2)
    H = EtHamiltonian.explicit(SIGMA_X + SIGMA_Z)
    st0 = thermal_donor_initial(space)
    d = rhs(space, H, st0, 0.0)
    rho = st0.rho
    Hm = SIGMA_X + SIGMA_Z
    assert np.allclose(d[:4].reshape(2, 2), -1j * (Hm @ rho - rho @ Hm))
    assert abs(d[0] + d[3]) < 1e-15


def test_hermiticity_over_short_propagation(small_space, fig1_H):
    rhos = propagate(small_space, fig1_H, thermal_donor_initial(small_space),
                     np.arange(11) * 0.01)
    drho = np.diff(rhos, axis=0)
    assert np.abs(drho - drho.conj().transpose(0, 2, 1)).max() < 1e-14
    assert np.abs(rhos - rhos.conj().transpose(0, 2, 1)).max() < 1e-14


def test_single_term_l1_against_dense_oracle():
    eta, gam = 0.3 - 0.2j, 1.2 + 0.0j
    bath = BathExpansion(np.array([eta]), np.array([gam]), 1.0, 0, BRIDGE)
    space = build_hierarchy([bath], 1)
    Hm = np.array([[0.5, 0.7], [0.7, -0.3]], dtype=complex)
    H = EtHamiltonian.explicit(Hm)
    Q = Q_BRIDGE
    etabar = np.conj(eta)

    # hand-written two-block equations, independent of the sparse assembly
    def f(y):
        r0, r1 = y[:4].reshape(2, 2), y[4:].reshape(2, 2)
        d0 = -1j * (Hm @ r0 - r0 @ Hm) - 1j * (Q @ r1 - r1 @ Q)
        d1 = -1j * (Hm @ r1 - r1 @ Hm) - gam * r1 - 1j * (eta * Q @ r0 - etabar * r0 @ Q)
        return np.concatenate([d0.ravel(), d1.ravel()])

    M = np.array([f(e) for e in np.eye(8, dtype=complex)]).T
    lam, W = np.linalg.eig(M)
    y0 = np.zeros(8, dtype=complex)
    y0[0] = 1.0
    c = np.linalg.solve(W, y0)
    t = np.linspace(0, 1, 101)
    exact = np.array([(W * np.exp(lam * s)) @ c for s in t])
    states = propagate(space, H, thermal_donor_initial(space), t, keep="all")
    got = np.array([s.values for s in states])
    assert np.abs(got - exact).max() < 1e-6


def test_zero_coupling_rabi():
    space = build_hierarchy([null_bath()], 2)
    H = EtHamiltonian.explicit(SIGMA_X)
    t = np.linspace(0, 3, 301)
    P, _ = donor_population(space, H, t)
    assert np.abs(P - np.cos(t) ** 2).max() < 1e-8


def test_zero_coupling_keeps_ados_zero():
    space = build_hierarchy([null_bath(2)], 3)
    H = EtHamiltonian.explicit(SIGMA_X + SIGMA_Z)
    states = propagate(space, H, thermal_donor_initial(space), np.arange(101) * 0.01, keep="all")
    assert max(np.abs(s.values[4:]).max() for s in states) < 1e-14


def test_thermal_initial_state(small_space):
    a = thermal_donor_initial(small_space)
    b = thermal_donor_initial(small_space)
    assert np.trace(a.rho) == 1 and a.rho[0, 0] == 1 and a.rho[0, 1] == 0
    assert np.array_equal(a.values, b.values)
    assert np.all(a.values[4:] == 0)


def test_fig1_dynamics_invariants(fig1_space, fig1_H, fig1_grid):
    P, rhos = donor_population(fig1_space, fig1_H, fig1_grid)
    tr = rhos[:, 0, 0] + rhos[:, 1, 1]
    assert np.abs(tr - 1).max() < 1e-8
    assert np.abs(rhos - rhos.conj().transpose(0, 2, 1)).max() < 1e-8
    # after the initial coherent wiggle P_D relaxes monotonically, ever slower
    late = P[fig1_grid >= 2.0]
    rate = np.diff(late)
    assert np.all(rate <= 0)
    assert abs(rate[-1]) < abs(rate[0])
    assert 0 <= P.min() and P.max() <= 1 + 1e-12


def test_driven_hamiltonian_is_periodic():
    H = EtHamiltonian.et_params(1.5, 0.2, 1.0, eps=2.0, Omega=4.0)
    T0 = 2 * np.pi / 4.0
    assert H.period == pytest.approx(T0)
    for t in (0.0, 0.37, 2.2):
        assert np.array_equal(H.at(t + T0).round(12), H.at(t).round(12))
    assert np.allclose(H.at(0.0), (1.5 + 2.0 + 0.2) * PROJ_A + SIGMA_X)


def test_hamiltonian_validation():
    with pytest.raises(ValueError):
        EtHamiltonian.explicit(np.array([[0, 1], [0, 0]]))
    with pytest.raises(ValueError):
        EtHamiltonian.et_params(1.0, 0.0, eps=1.0, Omega=0.0)


def test_generator_trace_row_vanishes(small_space, fig1_H):
    G, _ = assemble_generator(small_space, fig1_H)
    # d/dt (rho_DD + rho_AA) of the tier-0 block has no source
    row = G[0].toarray() + G[3].toarray()
    assert np.abs(row).max() < 1e-14


def test_ado_state_views():
    s = AdoState(np.arange(8, dtype=complex))
    assert np.array_equal(s.block(1), [[4, 5], [6, 7]])
    assert np.array_equal(s.rho, [[0, 1], [2, 3]])
