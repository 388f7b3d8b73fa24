"""Hierarchical (HEOM-type) propagator for the driven two-level transfer model.

State layout: ADO ``i`` occupies ``values[4*i : 4*i+4]`` as the row-major
2x2 block ``(rho_DD, rho_DA, rho_AD, rho_AA)``. Basis order is ``|D>, |A>``.

For an index ``n`` the generator is

    d rho_n/dt = -i [H_S(t), rho_n] - (sum_k n_k gamma_k) rho_n
                 - i sum_k [Q_k, rho_{n+1_k}]
                 - i sum_k n_k (eta_k Q_k rho_{n-1_k} - etabar_k rho_{n-1_k} Q_k)

with ``etabar_k = conj(eta_kbar)`` and ``gamma_kbar = conj(gamma_k)``. The
static part is assembled once as a sparse matrix; the drive
``eps cos(Omega t) |A><A|`` only touches the commutator and is diagonal in
this layout, so it is kept as a vector.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .bath import BRIDGE, DONOR_GAP, BathExpansion
from .errors import CapacityError
from .numerics import rk4_step

log = logging.getLogger(__name__)

D, A = 0, 1
PROJ_A = np.array([[0, 0], [0, 1]], dtype=complex)
Q_BRIDGE = np.array([[0, 1], [1, 0]], dtype=complex)
SIGMA_X = Q_BRIDGE
SIGMA_Z = np.array([[1, 0], [0, -1]], dtype=complex)
I2 = np.eye(2, dtype=complex)

COUPLING_OPS = {DONOR_GAP: PROJ_A, BRIDGE: Q_BRIDGE}

DEFAULT_MAX_STATE = 20_000_000
# RK4 is stable for h*|z| up to ~2.8 on both axes; keep some margin
_RK4_RADIUS = 2.5


def left(op):
    return np.kron(op, I2)


def right(op):
    return np.kron(I2, op.T)


def comm(op):
    return left(op) - right(op)


@dataclass(frozen=True)
class EtHamiltonian:
    """System Hamiltonian, either an explicit 2x2 matrix or transfer parameters.

    ``H_S(t) = (E0 + eps cos(Omega t) + lam) |A><A| + vbar (|D><A| + |A><D|)``
    """

    H: np.ndarray | None = None
    E0: float = 0.0
    lam: float = 0.0
    vbar: float = 1.0
    eps: float = 0.0
    Omega: float = 0.0

    def __post_init__(self):
        if self.H is not None:
            H = np.asarray(self.H, dtype=complex)
            if H.shape != (2, 2) or np.abs(H - H.conj().T).max() > 1e-12:
                raise ValueError("explicit H must be a 2x2 hermitian matrix")
            object.__setattr__(self, "H", H)
            if self.eps != 0.0:
                raise ValueError("explicit H does not take a drive")
        if self.eps != 0.0 and not self.Omega > 0:
            raise ValueError("a driven Hamiltonian needs Omega > 0")

    @classmethod
    def explicit(cls, H):
        return cls(H=np.asarray(H, dtype=complex))

    @classmethod
    def et_params(cls, E0, lam, vbar=1.0, eps=0.0, Omega=0.0):
        return cls(E0=float(E0), lam=float(lam), vbar=float(vbar), eps=float(eps),
                   Omega=float(Omega))

    @property
    def driven(self):
        return self.eps != 0.0

    @property
    def period(self):
        return 2.0 * math.pi / self.Omega if self.Omega > 0 else math.inf

    def static(self):
        if self.H is not None:
            return self.H.copy()
        return (self.E0 + self.lam) * PROJ_A + self.vbar * Q_BRIDGE

    def drive(self, t):
        """Scalar multiplying ``|A><A|`` at time ``t``."""
        if not self.driven:
            return np.zeros_like(np.asarray(t, dtype=float))
        return self.eps * np.cos(self.Omega * np.asarray(t, dtype=float))

    def at(self, t):
        return self.static() + float(self.drive(t)) * PROJ_A

    def undriven(self):
        if self.H is not None:
            return self
        return EtHamiltonian.et_params(self.E0, self.lam, self.vbar)

    def to_dict(self):
        if self.H is not None:
            return {"mode": "explicit",
                    "H_re": self.H.real.tolist(), "H_im": self.H.imag.tolist()}
        return {"mode": "et_params", "E0": self.E0, "lambda": self.lam,
                "vbar": self.vbar, "eps": self.eps, "Omega": self.Omega}


def _compositions(total, K):
    if K == 1:
        yield (total,)
        return
    for first in range(total, -1, -1):
        for rest in _compositions(total - first, K - 1):
            yield (first,) + rest


def enumerate_indices(K, L):
    """All occupation vectors of length K with total <= L, graded lexicographic.

    Within a tier the order is descending lexicographic, so for K=2 tier 1
    reads (1, 0), (0, 1).
    """
    return [occ for tier in range(L + 1) for occ in _compositions(tier, K)]


@dataclass
class HierarchySpace:
    indices: np.ndarray
    lookup: dict
    expansions: list
    depth: int
    etas: np.ndarray
    etabars: np.ndarray
    gammas: np.ndarray
    coupling_ops: list
    generator: sp.csr_matrix = field(default=None, repr=False)
    drive_diag: np.ndarray = field(default=None, repr=False)
    H_static: np.ndarray = field(default=None, repr=False)

    @property
    def n_ado(self):
        return len(self.indices)

    @property
    def n_terms(self):
        return self.indices.shape[1]

    @property
    def size(self):
        return 4 * self.n_ado

    def index_of(self, occ):
        return self.lookup[tuple(int(x) for x in occ)]

    def tiers(self):
        return self.indices.sum(axis=1)


def build_hierarchy(expansions, L, max_state=DEFAULT_MAX_STATE) -> HierarchySpace:
    """Enumerate every ADO index with tier <= ``L`` over all expansion terms."""
    if L < 1:
        raise ValueError("hierarchy depth must be >= 1")
    expansions = list(expansions)
    K = sum(e.n_terms for e in expansions)
    if K == 0:
        raise ValueError("need at least one expansion term")
    n_ado = math.comb(K + L, L)
    if 4 * n_ado > max_state:
        fit_L = max((d for d in range(1, L) if 4 * math.comb(K + d, d) <= max_state), default=0)
        hint = f"try hierarchy.depth = {fit_L}" if fit_L else "reduce bath.n_matsubara"
        raise CapacityError(
            f"hierarchy with K={K} terms at depth L={L} needs {4 * n_ado} entries "
            f"(cap {max_state}); {hint}")
    idx = enumerate_indices(K, L)
    etas, etabars, gammas, ops = [], [], [], []
    for e in expansions:
        etas.extend(e.etas)
        etabars.extend(e.eta_bar())
        gammas.extend(e.gammas)
        ops.extend([COUPLING_OPS[e.coupling_label]] * e.n_terms)
    return HierarchySpace(
        indices=np.array(idx, dtype=np.int64).reshape(len(idx), K),
        lookup={o: i for i, o in enumerate(idx)},
        expansions=expansions,
        depth=int(L),
        etas=np.array(etas, dtype=complex),
        etabars=np.array(etabars, dtype=complex),
        gammas=np.array(gammas, dtype=complex),
        coupling_ops=ops,
    )


def assemble_generator(space: HierarchySpace, H: EtHamiltonian):
    """Sparse static generator and the drive diagonal for ``space`` and ``H``.

    The result is cached on ``space`` keyed by the static Hamiltonian.
    """
    Hs = H.static()
    if space.generator is not None and np.array_equal(space.H_static, Hs):
        return space.generator, space.drive_diag
    N, K = space.indices.shape
    damping = space.indices @ space.gammas
    blocks = [sp.kron(sp.identity(N, format="csr"), sp.csr_matrix(-1j * comm(Hs))),
              sp.kron(sp.diags(-damping), sp.identity(4))]
    occs = [tuple(int(x) for x in o) for o in space.indices]
    for k in range(K):
        up_rows, up_cols, dn_rows, dn_cols, dn_vals = [], [], [], [], []
        for i, occ in enumerate(occs):
            plus = list(occ)
            plus[k] += 1
            j = space.lookup.get(tuple(plus))
            if j is not None:
                up_rows.append(i)
                up_cols.append(j)
            if occ[k] > 0:
                minus = list(occ)
                minus[k] -= 1
                dn_rows.append(i)
                dn_cols.append(space.lookup[tuple(minus)])
                dn_vals.append(float(occ[k]))
        Qk = space.coupling_ops[k]
        if up_rows:
            up = sp.csr_matrix((np.ones(len(up_rows)), (up_rows, up_cols)), shape=(N, N))
            blocks.append(sp.kron(up, sp.csr_matrix(-1j * comm(Qk))))
        if dn_rows:
            dn = sp.csr_matrix((dn_vals, (dn_rows, dn_cols)), shape=(N, N))
            sk = -1j * (space.etas[k] * left(Qk) - space.etabars[k] * right(Qk))
            blocks.append(sp.kron(dn, sp.csr_matrix(sk)))
    G = blocks[0]
    for b in blocks[1:]:
        G = G + b
    G = sp.csr_matrix(G, dtype=complex)
    G.eliminate_zeros()
    # -i [|A><A|, rho] in row-major layout: (0, +i, -i, 0) per block
    d1 = np.tile(np.diag(-1j * comm(PROJ_A)), N)
    space.generator, space.drive_diag, space.H_static = G, d1, Hs
    return G, d1


def generator_norm(space, H):
    G, d1 = assemble_generator(space, H)
    row = np.asarray(abs(G).sum(axis=1)).ravel()
    drive = abs(H.eps) * np.abs(d1) if H.driven else 0.0
    return float(np.max(row + drive))


def auto_substeps(space, H, dt):
    """Number of RK4 substeps per output step so that ``h * ||G||_inf`` stays stable."""
    return max(1, math.ceil(dt * generator_norm(space, H) / _RK4_RADIUS))


@dataclass
class AdoState:
    values: np.ndarray
    t: float = 0.0

    def block(self, i=0):
        return self.values[4 * i: 4 * i + 4].reshape(2, 2)

    @property
    def rho(self):
        return self.block(0)


def thermal_donor_initial(space: HierarchySpace) -> AdoState:
    """Donor-equilibrium start: tier-0 block ``|D><D|``, every higher ADO zero."""
    v = np.zeros(space.size, dtype=complex)
    v[0] = 1.0
    return AdoState(v, 0.0)


def rhs(space: HierarchySpace, H: EtHamiltonian, state, t):
    """Time derivative of a state vector (or a batch of column states)."""
    G, d1 = assemble_generator(space, H)
    y = state.values if isinstance(state, AdoState) else state
    out = G @ y
    if H.driven:
        f = float(H.drive(t))
        out += f * (d1 * y.T).T
    return out


def make_rhs(space, H, mask=None, t_offsets=None):
    """Closure ``f(t, y)`` for the (optionally projected) generator.

    ``mask`` restricts to a subspace as ``M G M``. ``t_offsets`` gives each
    column of a batched ``y`` its own absolute start time.
    """
    G, d1 = assemble_generator(space, H)
    if mask is not None:
        m = sp.diags(mask.astype(float))
        G = sp.csr_matrix(m @ G @ m)
        d1 = d1 * mask
    if not H.driven:
        return lambda t, y: G @ y
    eps, Om = H.eps, H.Omega
    if t_offsets is None:
        def f(t, y):
            return G @ y + (eps * math.cos(Om * t)) * (d1 * y.T).T
    else:
        t_offsets = np.asarray(t_offsets, dtype=float)

        def f(t, y):
            return G @ y + d1[:, None] * y * (eps * np.cos(Om * (t + t_offsets)))[None, :]
    return f


def integrate_grid(f, y0, t_grid, substeps=1, observe=None, t_start=None):
    """March ``y`` over a uniform grid with fixed-step RK4.

    ``observe(y, t)`` is called at every grid point (including the first) and its
    results are stacked; if ``observe`` is None the full states are kept.
    """
    t_grid = np.asarray(t_grid, dtype=float)
    if len(t_grid) > 1:
        dt = t_grid[1] - t_grid[0]
        if not np.allclose(np.diff(t_grid), dt, rtol=1e-9, atol=1e-12):
            raise ValueError("time grid must be uniform")
    else:
        dt = 0.0
    h = dt / substeps
    observe = observe or (lambda y, t: y.copy())
    y = y0
    t = t_grid[0] if t_start is None else t_start
    out = [observe(y, t)]
    for _ in range(len(t_grid) - 1):
        t0 = t
        for s in range(substeps):
            y = rk4_step(f, t0 + s * h, y, h)
        t = t0 + dt
        out.append(observe(y, t))
    return out


def propagate(space: HierarchySpace, H: EtHamiltonian, state0: AdoState, t_grid,
              substeps=None, keep="tier0"):
    """Integrate the full hierarchy over ``t_grid``.

    ``keep="tier0"`` returns the physical density matrices ``(len(t), 2, 2)``;
    ``keep="all"`` returns a list of :class:`AdoState`.
    """
    t_grid = np.asarray(t_grid, dtype=float)
    if substeps is None:
        substeps = auto_substeps(space, H, t_grid[1] - t_grid[0]) if len(t_grid) > 1 else 1
    f = make_rhs(space, H)
    if keep == "all":
        ys = integrate_grid(f, state0.values.copy(), t_grid, substeps)
        return [AdoState(y, t) for y, t in zip(ys, t_grid)]
    rhos = integrate_grid(f, state0.values.copy(), t_grid, substeps,
                          observe=lambda y, t: y[:4].reshape(2, 2).copy())
    return np.array(rhos)


def donor_population(space, H, t_grid, substeps=None):
    """Directly propagated ``P_D(t)`` from the donor-equilibrium start."""
    rhos = propagate(space, H, thermal_donor_initial(space), t_grid, substeps)
    return rhos[:, 0, 0].real, rhos
