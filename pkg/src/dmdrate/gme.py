"""Generalized rate and master equations driven by tabulated or DMD kernels.

Population route::

    dP_D/dt = -int_0^t k(t-s; t) P_D(s) ds + int_0^t k'(t-s; t) P_A(s) ds,  P_A = 1 - P_D

Density-matrix route (convolution form)::

    drho/dt = -i [H_S, rho] + int_0^t K(t-s) rho(s) ds

Both use trapezoidal convolution weights with a Heun predictor-corrector,
which is second order in ``dt`` for smooth kernels. In the density-matrix
route the commutator term is integrated exactly through ``exp(L0 dt)`` and
Heun acts on the memory term only.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import expm

from . import _backend
from .dmd import DmdModel, predict_steps
from .errors import GridError
from .kernels import POP_LABELS, FloquetKernelSet, KernelSeries
from .propagator import EtHamiltonian, comm

_GRID_RTOL = 1e-9


@dataclass
class PopulationTrajectory:
    t_grid: np.ndarray
    P_D: np.ndarray
    meta: dict = field(default_factory=dict)

    @property
    def P_A(self):
        return 1.0 - self.P_D


@dataclass
class DensityTrajectory:
    t_grid: np.ndarray
    rho: np.ndarray
    meta: dict = field(default_factory=dict)

    @property
    def P_D(self):
        return self.rho[:, 0, 0].real

    def invariant_drift(self):
        tr = self.rho[:, 0, 0] + self.rho[:, 1, 1]
        herm = np.abs(self.rho - self.rho.conj().transpose(0, 2, 1)).max()
        return {"trace": float(np.abs(tr - 1.0).max()), "hermiticity": float(herm)}


def _uniform_dt(t_grid):
    t_grid = np.asarray(t_grid, dtype=float)
    if len(t_grid) < 2:
        raise GridError("time grid needs at least two points")
    dt = t_grid[1] - t_grid[0]
    if not np.allclose(np.diff(t_grid), dt, rtol=1e-9, atol=1e-12):
        raise GridError("time grid must be uniform")
    return t_grid, float(dt)


def _resample(series, dt_series, dt, n):
    """Kernel samples at lags ``0, dt, .., (n-1) dt`` from a stored grid."""
    if dt_series > dt * (1 + _GRID_RTOL):
        raise GridError(f"kernel grid (dt={dt_series:g}) is coarser than the solver grid "
                        f"(dt={dt:g}); interpolation is refused")
    ratio = dt / dt_series
    stride = int(round(ratio))
    if abs(ratio - stride) > 1e-6 * ratio:
        raise GridError(f"solver dt={dt:g} is not an integer multiple of kernel dt={dt_series:g}")
    need = (n - 1) * stride + 1
    if series.shape[-1] < need:
        raise GridError(f"kernel covers {series.shape[-1]} samples but the grid needs {need}; "
                        "extend it (DMD) or zero-pad explicitly")
    return series[..., :need:stride]


def kernel_rows(kern, t_grid, labels=POP_LABELS):
    """Kernel components on the lags of ``t_grid`` as ``(len(labels), n)``.

    ``kern`` is a :class:`KernelSeries` or a :class:`DmdModel` whose state
    rows are ``labels`` in order.
    """
    t_grid, dt = _uniform_dt(t_grid)
    n = len(t_grid)
    if isinstance(kern, DmdModel):
        if abs(kern.dt - dt) > _GRID_RTOL * dt:
            if kern.dt > dt:
                raise GridError("DMD model dt is coarser than the solver grid; interpolation is refused")
            return _resample(predict_steps(kern, int(round((n - 1) * dt / kern.dt)) + 1), kern.dt, dt, n)
        return predict_steps(kern, n)
    return _resample(kern.stack(list(labels)), kern.dt, dt, n)


def solve_population(kern, P_D0, t_grid, backend=None) -> PopulationTrajectory:
    """Generalized rate equation with time-independent kernels ``k_DD``, ``k_AD``."""
    if not 0.0 <= P_D0 <= 1.0:
        raise ValueError("P_D0 must lie in [0, 1]")
    t_grid, dt = _uniform_dt(t_grid)
    rows = kernel_rows(kern, t_grid)
    k_dd, k_ad = rows.real
    pop, _ = _backend.get(backend)
    a = (k_dd + k_ad)[None, :]
    b = k_ad[None, :]
    z = np.zeros_like(a)
    y = pop(a, z, b, z, 0.0, dt, float(P_D0), len(t_grid))
    return PopulationTrajectory(t_grid, np.asarray(y), {"backend": backend or _backend.NAME})


def solve_population_floquet(fset: FloquetKernelSet, P_D0, t_grid, n_max=None,
                             backend=None) -> PopulationTrajectory:
    """Generalized rate equation with two-time kernels rebuilt from harmonics.

    ``k(s; t) = sum_{|n| <= n_max} k_n(s) e^{i n Omega t}`` using
    ``k_{-n} = conj(k_n)``.
    """
    if not 0.0 <= P_D0 <= 1.0:
        raise ValueError("P_D0 must lie in [0, 1]")
    t_grid, dt = _uniform_dt(t_grid)
    n_max = fset.n_max if n_max is None else min(n_max, fset.n_max)
    n = len(t_grid)
    kdd = np.array([_resample(fset.comps[(h, "k_DD")], fset.dt, dt, n) for h in range(n_max + 1)])
    kad = np.array([_resample(fset.comps[(h, "k_AD")], fset.dt, dt, n) for h in range(n_max + 1)])
    a = kdd + kad
    pop, _ = _backend.get(backend)
    y = pop(a.real, a.imag, kad.real, kad.imag, float(fset.Omega), dt, float(P_D0), n)
    return PopulationTrajectory(t_grid, np.asarray(y),
                                {"backend": backend or _backend.NAME, "n_max": n_max})


def solve_gme(tensor: KernelSeries | np.ndarray, H_S, rho0, t_grid, backend=None,
              flag_tol=1e-4) -> DensityTrajectory:
    """Density-matrix master equation with a full 4x4 memory kernel tensor.

    ``tensor`` is a system-projector :class:`KernelSeries` or an array
    ``(n, 4, 4)`` already on the solver grid. Invariant violations above
    ``flag_tol`` are recorded in ``meta["flags"]``.
    """
    t_grid, dt = _uniform_dt(t_grid)
    n = len(t_grid)
    if isinstance(tensor, KernelSeries):
        K = _resample(np.moveaxis(tensor.tensor(), 0, -1), tensor.dt, dt, n)
        K = np.moveaxis(K, -1, 0)
    else:
        K = np.asarray(tensor, dtype=complex)
        if K.shape[0] < n or K.shape[1:] != (4, 4):
            raise GridError("kernel tensor array must have shape (>= n_t, 4, 4)")
        K = K[:n]
    Hs = H_S.static() if isinstance(H_S, EtHamiltonian) else np.asarray(H_S, dtype=complex)
    E = expm(-1j * comm(Hs) * dt)
    _, mat = _backend.get(backend)
    y = mat(K, E, np.asarray(rho0, dtype=complex).reshape(4), dt, n)
    traj = DensityTrajectory(t_grid, np.asarray(y).reshape(n, 2, 2),
                             {"backend": backend or _backend.NAME})
    drift = traj.invariant_drift()
    traj.meta["drift"] = drift
    traj.meta["flags"] = [k for k, v in drift.items() if v > flag_tol]
    return traj


def tensor_from_dmd(model: DmdModel, labels, n):
    """Rebuild a ``(n, 4, 4)`` tensor from a DMD model whose rows are ``labels``."""
    rows = predict_steps(model, n)
    ks = KernelSeries(np.arange(n) * model.dt, {lab: rows[i] for i, lab in enumerate(labels)})
    return ks.tensor()
