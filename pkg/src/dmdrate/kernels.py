"""Nakajima-Zwanzig memory kernels from the hierarchy by P/Q projection.

With ``G`` the hierarchy generator (``d rho/dt = G rho``) and the initial
state inside the P-subspace, the projected equation is

    dp/dt = P G P p + int_0^t Kt(t - s; t) p(s) ds,
    Kt(s; t) = P G(t) Q  U_QQ(t, t - s)  Q G(t - s) P

and each column of ``Kt`` is one propagation of a Q-space vector. For the
population projector ``P G P = 0``, and the rate kernels of
``dP_D/dt = -int k P_D + int k' P_A`` are ``k = -Kt[D<-D]``, ``k' = Kt[D<-A]``.
"""

from __future__ import annotations

import logging
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, NumericalError
from .propagator import (HierarchySpace, EtHamiltonian, AdoState, assemble_generator,
                         auto_substeps, integrate_grid, make_rhs)

log = logging.getLogger(__name__)

POPULATION = "population"
SYSTEM = "system"

# row-major positions of the tier-0 block
_POP_ENTRIES = (0, 3)
_SYS_ENTRIES = (0, 1, 2, 3)
_PAIR = ("DD", "DA", "AD", "AA")

POP_LABELS = ("k_DD", "k_AD")
TENSOR_LABELS = tuple(f"K_{ij}[{ab}]" for ij in _PAIR for ab in _PAIR)


def _num_threads():
    try:
        return max(1, int(os.environ.get("DMDRATE_NUM_THREADS", "1")))
    except ValueError:
        return 1


@dataclass(frozen=True)
class ProjectorKind:
    kind: str = POPULATION

    def __post_init__(self):
        if self.kind not in (POPULATION, SYSTEM):
            raise ValueError(f"unknown projector {self.kind!r}")

    @property
    def entries(self):
        return _POP_ENTRIES if self.kind == POPULATION else _SYS_ENTRIES

    def p_mask(self, size):
        m = np.zeros(size, dtype=bool)
        m[list(self.entries)] = True
        return m

    def q_mask(self, size):
        return ~self.p_mask(size)


def apply_projector(p: ProjectorKind, state):
    """``P state``; ``state - P state`` is the Q part."""
    v = state.values if isinstance(state, AdoState) else np.asarray(state)
    out = np.zeros_like(v)
    idx = list(p.entries)
    out[idx] = v[idx]
    if isinstance(state, AdoState):
        return AdoState(out, state.t)
    return out


def apply_complement(p: ProjectorKind, state):
    v = state.values if isinstance(state, AdoState) else np.asarray(state)
    out = v - apply_projector(p, v)
    if isinstance(state, AdoState):
        return AdoState(out, state.t)
    return out


@dataclass
class KernelSeries:
    t_grid: np.ndarray
    comp: dict = field(default_factory=dict)
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.t_grid = np.asarray(self.t_grid, dtype=float)
        for k, v in self.comp.items():
            v = np.asarray(v, dtype=complex)
            if v.shape != self.t_grid.shape:
                raise ValueError(f"component {k} has length {v.shape} != grid {self.t_grid.shape}")
            self.comp[k] = v

    @property
    def dt(self):
        return float(self.t_grid[1] - self.t_grid[0])

    @property
    def labels(self):
        return list(self.comp)

    def stack(self, labels=None):
        """Components as rows of an ``(n_labels, n_t)`` array."""
        labels = self.labels if labels is None else labels
        return np.array([self.comp[k] for k in labels])

    def window(self, n):
        return KernelSeries(self.t_grid[:n].copy(), {k: v[:n].copy() for k, v in self.comp.items()},
                            dict(self.meta))

    def zero_padded(self, t_grid):
        """Extend onto a longer grid with zeros past the stored window."""
        t_grid = np.asarray(t_grid, dtype=float)
        n = len(self.t_grid)
        if not np.allclose(t_grid[:n], self.t_grid, atol=1e-12):
            raise ValueError("zero padding needs a grid that starts with the stored one")
        comp = {}
        for k, v in self.comp.items():
            out = np.zeros(len(t_grid), dtype=complex)
            out[:n] = v
            comp[k] = out
        meta = dict(self.meta)
        meta["zero_padded_after"] = float(self.t_grid[-1])
        return KernelSeries(t_grid, comp, meta)

    def tensor(self):
        """``(n_t, 4, 4)`` array ``K[t, target, source]`` for tensor kernels."""
        arr = np.zeros((len(self.t_grid), 4, 4), dtype=complex)
        for i, ij in enumerate(_PAIR):
            for j, ab in enumerate(_PAIR):
                arr[:, i, j] = self.comp[f"K_{ij}[{ab}]"]
        return arr


def _propagate_columns(space, H, p, t_grid, t_offsets=None, substeps=None):
    """Kt[b, a](s) for every basis element ``a`` (and start time offset).

    Returns an array ``(n_t, n_p, n_cols)`` where columns run over basis
    elements (times offsets, offset-major).
    """
    G, d1 = assemble_generator(space, H)
    size = space.size
    qmask = p.q_mask(size)
    entries = list(p.entries)
    t_grid = np.asarray(t_grid, dtype=float)
    dt = t_grid[1] - t_grid[0]
    if substeps is None:
        substeps = auto_substeps(space, H, dt)
    offsets = np.zeros(1) if t_offsets is None else np.asarray(t_offsets, dtype=float)

    # w(0) = Q G(t0) e_a for every (offset, basis) pair
    cols, col_off = [], []
    for t0 in offsets:
        drive0 = float(H.drive(t0))
        for a in entries:
            g = G[:, a].toarray().ravel()
            if H.driven:
                g[a] += drive0 * d1[a]
            cols.append(np.where(qmask, g, 0.0))
            col_off.append(t0)
    W0 = np.array(cols, dtype=complex).T
    col_off = np.array(col_off)
    f = make_rhs(space, H, mask=qmask, t_offsets=col_off if H.driven else None)
    G_p = G[entries, :]
    d1_p = d1[entries]

    if H.driven:
        def observe(w, t):
            out = G_p @ w
            out += d1_p[:, None] * w[entries, :] * (H.eps * np.cos(H.Omega * (t + col_off)))[None, :]
            return out
    else:
        def observe(w, t):
            return G_p @ w

    n_workers = _num_threads()
    n_cols = W0.shape[1]
    if n_workers > 1 and n_cols > 1 and not H.driven:
        chunks = np.array_split(np.arange(n_cols), min(n_workers, n_cols))

        def run(ix):
            return np.array(integrate_grid(f, W0[:, ix], t_grid, substeps, observe))

        with ThreadPoolExecutor(max_workers=n_workers) as ex:
            parts = list(ex.map(run, chunks))
        res = np.concatenate(parts, axis=2)
    else:
        res = np.array(integrate_grid(f, W0, t_grid, substeps, observe))
    if not np.all(np.isfinite(res)):
        raise NumericalError("kernel propagation produced non-finite values")
    return res


def extract_kernel(space: HierarchySpace, H: EtHamiltonian, p: ProjectorKind, t_grid,
                   substeps=None) -> KernelSeries:
    """Memory kernel of a time-independent Hamiltonian on ``t_grid``.

    Population projector gives ``k_DD`` and ``k_AD``; system projector gives
    all 16 tensor entries ``K_ij[ab]`` (target ``ij``, source ``ab``).
    """
    if H.driven:
        raise ValueError("extract_kernel needs a time-independent Hamiltonian; "
                         "use extract_floquet_kernels")
    t_grid = np.asarray(t_grid, dtype=float)
    Kt = _propagate_columns(space, H, p, t_grid, substeps=substeps)
    meta = {"projector": p.kind, "depth": space.depth, "n_ado": space.n_ado}
    if p.kind == POPULATION:
        comp = {"k_DD": -Kt[:, 0, 0], "k_AD": Kt[:, 0, 1]}
    else:
        comp = {}
        for i, ij in enumerate(_PAIR):
            for j, ab in enumerate(_PAIR):
                comp[f"K_{ij}[{ab}]"] = Kt[:, i, j]
    return KernelSeries(t_grid, comp, meta)


@dataclass
class FloquetKernelSet:
    """Fourier components ``k_n(tau)`` of ``k(tau; t) = sum_n k_n(tau) e^{i n Omega t}``.

    Only ``n >= 0`` is stored; ``k_{-n} = conj(k_n)``.
    """

    tau_grid: np.ndarray
    n_max: int
    Omega: float
    comps: dict = field(default_factory=dict)
    meta: dict = field(default_factory=dict)

    @property
    def dt(self):
        return float(self.tau_grid[1] - self.tau_grid[0])

    def component(self, n, label):
        if n >= 0:
            return self.comps[(n, label)]
        return self.comps[(-n, label)].conj()

    def as_series(self, n):
        return KernelSeries(self.tau_grid, {lab: self.comps[(n, lab)] for lab in POP_LABELS})

    def evaluate(self, label, tau_idx, t):
        """``k(tau; t)`` on a sampled ``tau`` index set at absolute time ``t``."""
        out = self.comps[(0, label)][tau_idx].real.copy()
        for n in range(1, self.n_max + 1):
            out += 2.0 * (self.comps[(n, label)][tau_idx] * np.exp(1j * n * self.Omega * t)).real
        return out


def snap_dt(dt_requested, period):
    """Largest step <= ``dt_requested`` that divides ``period`` an integer number of times."""
    steps = max(1, round(period / dt_requested))
    return period / steps


def _two_time_kernels(space, H, tau_grid, phases, substeps=None):
    """``k(tau; t0 + tau)`` for population labels, shape ``(n_tau, n_phase)`` each."""
    p = ProjectorKind(POPULATION)
    Kt = _propagate_columns(space, H, p, tau_grid, t_offsets=phases, substeps=substeps)
    n_phase = len(phases)
    # columns are offset-major: (phase, basis)
    Kt = Kt.reshape(len(tau_grid), 2, n_phase, 2)
    return {"k_DD": -Kt[:, 0, :, 0], "k_AD": Kt[:, 0, :, 1]}


def extract_floquet_kernels(space: HierarchySpace, H: EtHamiltonian, tau_grid, n_max=3,
                            n_phase=32, substeps=None, negative_check=False) -> FloquetKernelSet:
    """Fourier components of the periodically driven population kernels.

    One propagation per (phase, basis element) with the start time ``t0``
    spread uniformly over a period; at fixed ``tau`` the samples cover
    ``t = t0 + tau`` uniformly over a period, so the periodic trapezoid rule
    is a plain mean.
    """
    tau_grid = np.asarray(tau_grid, dtype=float)
    if n_max < 0:
        raise ConfigError("floquet.n_max must be >= 0")
    if n_phase < 2 * n_max + 1:
        raise ConfigError(
            f"floquet.n_phase={n_phase} cannot resolve harmonics up to n_max={n_max} "
            f"(need n_phase >= {2 * n_max + 1})")
    Omega = H.Omega if H.driven else (H.Omega or 1.0)
    T0 = 2.0 * math.pi / Omega
    phases = np.arange(n_phase) * (T0 / n_phase)
    two_time = _two_time_kernels(space, H, tau_grid, phases, substeps)
    t_abs = tau_grid[:, None] + phases[None, :]
    comps = {}
    ns = list(range(n_max + 1))
    if negative_check:
        ns.append(-1)
    for label, k2 in two_time.items():
        for n in ns:
            comps[(n, label)] = (k2 * np.exp(-1j * n * Omega * t_abs)).mean(axis=1)
    meta = {"n_phase": n_phase, "depth": space.depth, "n_ado": space.n_ado, "period": T0}
    fs = FloquetKernelSet(tau_grid, n_max, Omega, comps, meta)
    fs.meta["two_time"] = two_time
    fs.meta["phases"] = phases
    return fs


def kernel_fft(series: KernelSeries, labels=None, sign=1):
    """Discrete transform ``k(w_j) = dt * sum_n k(t_n) exp(sign * i w_j t_n)``.

    The default ``sign=+1`` matches the ``e^{+i w t}`` convention of the
    spectral densities. Returns ``(omega, {label: spectrum})`` with ``omega``
    in fftshift order. The DC entry is ``dt * sum(samples)``.
    """
    if sign not in (1, -1):
        raise ValueError("sign must be +1 or -1")
    labels = series.labels if labels is None else labels
    n = len(series.t_grid)
    dt = series.dt
    omega = 2.0 * np.pi * np.fft.fftshift(np.fft.fftfreq(n, d=dt))
    out = {}
    phase0 = np.exp(sign * 1j * omega * series.t_grid[0])
    for lab in labels:
        if sign > 0:
            # e^{+i w t}: inverse FFT scaled back by n
            spec = np.fft.ifft(series.comp[lab]) * n * dt
        else:
            spec = np.fft.fft(series.comp[lab]) * dt
        out[lab] = np.fft.fftshift(spec) * phase0
    return omega, out


def dc_component(series: KernelSeries, label):
    return series.dt * series.comp[label].sum()


def tensor_relations(series: KernelSeries, atol=1e-8):
    """Which block relations the extracted kernel tensor satisfies numerically."""
    K = series.tensor()
    DA = K[:, 1, :]
    AD = K[:, 2, :]
    perm = [0, 2, 1, 3]  # ab -> ba
    col_sum = np.abs(K[:, 0, :] + K[:, 3, :]).max()
    scale = max(np.abs(K).max(), 1e-300)
    return {
        "column_sum_max": float(col_sum),
        "K_DD_eq_minus_K_AA": bool(col_sum <= atol * max(1.0, scale)),
        "K_DA_self_conjugate": bool(np.abs(DA - DA.conj()).max() <= atol * max(1.0, scale)),
        "K_AD_eq_conj_K_DA": bool(np.abs(AD - DA.conj()).max() <= atol * max(1.0, scale)),
        "K_AD_eq_conj_K_DA_transposed": bool(
            np.abs(AD - DA[:, perm].conj()).max() <= atol * max(1.0, scale)),
    }
