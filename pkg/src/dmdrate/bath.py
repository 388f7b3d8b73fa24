"""Spectral densities and their sum-of-exponentials correlation expansions.

The correlation function of a harmonic bath at inverse temperature ``beta``

    C(t) = (1/pi) * int dw J(w) exp(-i w t) / (1 - exp(-beta w))

is expanded for ``t >= 0`` by closing the contour in the lower half plane.
Poles of ``J`` give the "physical" terms, poles of the Bose factor at
``w = -i nu_k`` (``nu_k = 2 pi k / beta``) give the Matsubara terms.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import integrate

from .errors import UnsupportedRegimeError

DONOR_GAP = "donor_gap"
BRIDGE = "bridge"


@dataclass(frozen=True)
class SpectralDensity:
    """Drude ``2 lam gam w / (w^2 + gam^2)`` or Brownian
    ``2 lam w0^2 zeta w / ((w^2 - w0^2)^2 + w^2 zeta^2)``."""

    kind: str
    lam: float
    gamma: float = 0.0
    omega0: float = 0.0
    zeta: float = 0.0

    def __post_init__(self):
        if self.kind == "drude":
            params = (self.lam, self.gamma)
        elif self.kind == "brownian":
            params = (self.lam, self.omega0, self.zeta)
        else:
            raise ValueError(f"unknown spectral density kind {self.kind!r}")
        if any(not p > 0 for p in params):
            raise ValueError(f"{self.kind} spectral density needs positive parameters")

    @classmethod
    def drude(cls, lam, gamma):
        return cls("drude", float(lam), gamma=float(gamma))

    @classmethod
    def brownian(cls, lam, omega0, zeta):
        return cls("brownian", float(lam), omega0=float(omega0), zeta=float(zeta))

    def to_dict(self):
        if self.kind == "drude":
            return {"kind": "drude", "lam": self.lam, "gamma": self.gamma}
        return {"kind": "brownian", "lam": self.lam, "omega0": self.omega0,
                "zeta": self.zeta}


def eval_j(J: SpectralDensity, w):
    """Spectral density at (real or complex) frequency ``w``."""
    if J.kind == "drude":
        return 2.0 * J.lam * J.gamma * w / (w * w + J.gamma ** 2)
    w0 = J.omega0
    return 2.0 * J.lam * w0 * w0 * J.zeta * w / ((w * w - w0 * w0) ** 2 + (w * J.zeta) ** 2)


def _lower_poles(J: SpectralDensity):
    """Poles of J in the lower half plane with the residue of J at each."""
    if J.kind == "drude":
        # J = 2 lam gam w / ((w - i gam)(w + i gam))
        return [(-1j * J.gamma, J.lam * J.gamma + 0j)]
    w0, z = J.omega0, J.zeta
    if z >= 2.0 * w0:
        raise UnsupportedRegimeError(
            f"overdamped Brownian oscillator (zeta={z} >= 2*omega0={2 * w0}) is not supported")
    w1 = math.sqrt(w0 * w0 - 0.25 * z * z)
    out = []
    for p in (-w1 - 0.5j * z, w1 - 0.5j * z):
        # D(w) = (w^2 - w0^2)^2 + w^2 z^2, residue = N(p) / D'(p)
        num = 2.0 * J.lam * w0 * w0 * z * p
        dden = 4.0 * p * (p * p - w0 * w0) + 2.0 * p * z * z
        out.append((p, num / dden))
    return out


@dataclass
class BathExpansion:
    """``C(t) = sum_k eta_k exp(-gamma_k t)`` for ``t >= 0``.

    ``c0_residual`` is ``|C(0) - sum eta_k|`` against quadrature, or ``None``
    where ``C(0)`` itself diverges (the Drude ``1/w`` tail).
    """

    etas: np.ndarray
    gammas: np.ndarray
    beta: float
    n_matsubara: int
    coupling_label: str = DONOR_GAP
    density: SpectralDensity | None = None
    c0_residual: float | None = None
    partners: np.ndarray = field(default=None, repr=False)

    def __post_init__(self):
        self.etas = np.asarray(self.etas, dtype=complex)
        self.gammas = np.asarray(self.gammas, dtype=complex)
        if np.any(self.gammas.real <= 0):
            raise ValueError("every decay rate needs a positive real part")
        if self.partners is None:
            self.partners = conjugate_partners(self.gammas)

    @property
    def n_terms(self):
        return len(self.etas)

    def eta_bar(self):
        """Coefficients of ``C(t)^*`` in the same exponential basis."""
        return self.etas[self.partners].conj()

    def correlation(self, t):
        t = np.asarray(t, dtype=float)
        return (self.etas[:, None] * np.exp(-np.outer(self.gammas, t.ravel()))).sum(0).reshape(t.shape)


def conjugate_partners(gammas, tol=1e-10):
    """Index map k -> kbar with gamma_kbar == conj(gamma_k)."""
    gammas = np.asarray(gammas, dtype=complex)
    partners = np.empty(len(gammas), dtype=int)
    for k, g in enumerate(gammas):
        d = np.abs(gammas - g.conjugate())
        j = int(np.argmin(d))
        if d[j] > tol * max(1.0, abs(g)):
            raise ValueError(f"decay rate {g} has no conjugate partner in the expansion")
        partners[k] = j
    return partners


def correlation_expansion(J: SpectralDensity, beta: float, n_matsubara: int = 6,
                          coupling_label: str = DONOR_GAP) -> BathExpansion:
    """Residue (Matsubara) decomposition of the bath correlation function."""
    if not beta > 0:
        raise ValueError("beta must be positive")
    if n_matsubara < 0:
        raise ValueError("n_matsubara must be >= 0")
    etas, gammas = [], []
    for p, res in _lower_poles(J):
        bose = 1.0 / (1.0 - np.exp(-beta * p))
        etas.append(-2j * res * bose)
        gammas.append(1j * p)
    for k in range(1, n_matsubara + 1):
        nu = 2.0 * np.pi * k / beta
        if np.any(np.abs(np.array(gammas) - nu) < 1e-12):
            raise UnsupportedRegimeError(f"Matsubara frequency {nu} collides with a bath pole")
        etas.append((-2j / beta) * eval_j(J, -1j * nu))
        gammas.append(nu + 0j)
    etas = np.array(etas, dtype=complex)
    gammas = np.array(gammas, dtype=complex)
    # exact pairs get exact conjugates so the hierarchy stays hermitian
    gammas = np.where(np.abs(gammas.imag) < 1e-15, gammas.real + 0j, gammas)
    residual = None
    if J.kind != "drude":
        residual = float(abs(correlation_quadrature(J, beta, 0.0) - etas.sum()))
    return BathExpansion(etas, gammas, float(beta), int(n_matsubara), coupling_label,
                         density=J, c0_residual=residual)


def correlation_quadrature(J: SpectralDensity, beta: float, t: float) -> complex:
    """Reference ``C(t)`` by adaptive quadrature over ``[0, inf)``.

    Uses ``C(t) = (1/pi) int_0^inf J(w) [coth(beta w/2) cos(w t) - i sin(w t)] dw``.
    Valid for any real ``t``; for Drude only at ``t != 0``.
    """

    def sym(w):
        if w == 0.0:
            # J(w) coth(beta w / 2) -> 2 J'(0) / beta
            h = 1e-8
            return 2.0 * float(eval_j(J, h)) / (h * beta)
        return float(eval_j(J, w)) / math.tanh(0.5 * beta * w)

    def anti(w):
        return float(eval_j(J, w))

    if t == 0.0:
        re = integrate.quad(sym, 0.0, np.inf, limit=500, epsabs=1e-13, epsrel=1e-12)[0]
        return complex(re / np.pi, 0.0)
    tt = abs(t)
    re = integrate.quad(sym, 0.0, np.inf, weight="cos", wvar=tt, limlst=200)[0]
    im = integrate.quad(anti, 0.0, np.inf, weight="sin", wvar=tt, limlst=200)[0]
    im = -im if t > 0 else im
    return complex(re, im) / np.pi
