"""Dynamic mode decomposition with optional Hankel (delay) embedding.

Given snapshots ``x_0 .. x_{m-1}`` at spacing ``dt``, the fit builds

    X1 = [x_0 .. x_{m-2}],  X2 = [x_1 .. x_{m-1}]
    X1 ~ U S V^H (truncated),  Atilde = U^H X2 V S^-1
    Atilde W = W diag(lam),    Phi = X2 V S^-1 W
    omega = -i log(lam) / dt   (principal branch)

and forecasts ``x(t) = sum_l phi_l exp(i omega_l t) b_l`` with ``t`` measured
from the first snapshot. With ``delay = d > 1`` each column is the stack of
``d`` consecutive samples, which lifts the rank cap from ``n`` to ``n*d``.
"""

from __future__ import annotations

import json
import logging
import warnings
from dataclasses import dataclass

import numpy as np

from .numerics import RankPolicy, eig_dense, lsq_solve, truncated_svd

log = logging.getLogger(__name__)

PROJECT = "project"
TRAJECTORY_LSQ = "trajectory_lsq"


@dataclass(frozen=True)
class SnapshotSet:
    data: np.ndarray
    dt: float
    t0: float = 0.0

    def __post_init__(self):
        data = np.asarray(self.data)
        if data.ndim == 1:
            data = data[None, :]
        if data.ndim != 2 or data.shape[1] < 2:
            raise ValueError("snapshot set needs at least two columns")
        if not self.dt > 0:
            raise ValueError("dt must be positive")
        if not np.all(np.isfinite(data)):
            raise ValueError("snapshots contain non-finite values")
        object.__setattr__(self, "data", data)

    @property
    def n(self):
        return self.data.shape[0]

    @property
    def m(self):
        return self.data.shape[1]

    @property
    def times(self):
        return self.t0 + self.dt * np.arange(self.m)


@dataclass(frozen=True)
class DmdModel:
    modes: np.ndarray
    disc_eigs: np.ndarray
    cont_freqs: np.ndarray
    amplitudes: np.ndarray
    dt: float
    delay: int = 1
    base_dim: int = 1
    t0: float = 0.0

    @property
    def rank(self):
        return len(self.disc_eigs)

    def to_dict(self):
        def pairs(a):
            a = np.asarray(a, dtype=complex)
            return np.stack([a.real, a.imag], axis=-1).tolist()

        return {
            "modes": pairs(self.modes),
            "disc_eigs": pairs(self.disc_eigs),
            "cont_freqs": pairs(self.cont_freqs),
            "amplitudes": pairs(self.amplitudes),
            "dt": self.dt,
            "delay": self.delay,
            "base_dim": self.base_dim,
            "t0": self.t0,
            "rank": self.rank,
        }

    @classmethod
    def from_dict(cls, d):
        def unpairs(x, shape_tail=()):
            a = np.asarray(x, dtype=float)
            if a.size == 0:
                return np.zeros(shape_tail, dtype=complex)
            return a[..., 0] + 1j * a[..., 1]

        base_dim, delay = int(d["base_dim"]), int(d["delay"])
        modes = unpairs(d["modes"], (base_dim * delay, 0))
        return cls(
            modes=modes.reshape(base_dim * delay, -1),
            disc_eigs=unpairs(d["disc_eigs"], (0,)),
            cont_freqs=unpairs(d["cont_freqs"], (0,)),
            amplitudes=unpairs(d["amplitudes"], (0,)),
            dt=float(d["dt"]),
            delay=delay,
            base_dim=base_dim,
            t0=float(d.get("t0", 0.0)),
        )

    def save(self, path):
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh, indent=1)

    @classmethod
    def load(cls, path):
        with open(path) as fh:
            return cls.from_dict(json.load(fh))


def hankel(data, delay):
    """Stack ``delay`` shifted copies: column j is ``x_j, .., x_{j+delay-1}``."""
    n, m = data.shape
    cols = m - delay + 1
    return np.concatenate([data[:, i:i + cols] for i in range(delay)], axis=0)


def fit(snaps: SnapshotSet, policy: RankPolicy | None = None,
        amp_method: str = TRAJECTORY_LSQ, delay: int = 1) -> DmdModel:
    """Fit a DMD model to uniformly sampled snapshots."""
    if policy is None:
        policy = RankPolicy()
    if delay < 1:
        raise ValueError("delay must be >= 1")
    if snaps.m - delay < 2:
        raise ValueError(f"need m - delay >= 2 (m={snaps.m}, delay={delay})")
    if amp_method not in (PROJECT, TRAJECTORY_LSQ):
        raise ValueError(f"unknown amplitude method {amp_method!r}")
    X = hankel(snaps.data.astype(complex), delay)
    X1, X2 = X[:, :-1], X[:, 1:]
    U, s, V = truncated_svd(X1, policy)
    X2VSinv = (X2 @ V) / s[None, :]
    Atilde = U.conj().T @ X2VSinv
    lam, W = eig_dense(Atilde)
    keep = lam != 0
    if not np.all(keep):
        warnings.warn(f"dropping {int((~keep).sum())} DMD mode(s) with zero eigenvalue",
                      RuntimeWarning, stacklevel=2)
        lam, W = lam[keep], W[:, keep]
    Phi = X2VSinv @ W
    omega = -1j * np.log(lam) / snaps.dt
    model = DmdModel(Phi, lam, omega, np.zeros(len(lam), dtype=complex), snaps.dt,
                     delay, snaps.n, snaps.t0)
    if len(lam) == 0:
        return model
    if amp_method == PROJECT:
        b = lsq_solve(Phi, X[:, 0])
    else:
        b = _trajectory_amplitudes(Phi[: snaps.n], lam, snaps.data)
    return DmdModel(Phi, lam, omega, b, snaps.dt, delay, snaps.n, snaps.t0)


def _trajectory_amplitudes(phi_top, lam, data):
    """Least-squares ``b`` over every sampled time: ``phi_top diag(lam^j) b ~ x_j``."""
    n, m = data.shape
    powers = lam[None, :] ** np.arange(m)[:, None]
    design = (powers[:, None, :] * phi_top[None, :, :]).reshape(m * n, -1)
    return lsq_solve(design, data.T.reshape(-1).astype(complex))


def predict(model: DmdModel, t):
    """Forecast at time(s) ``t`` measured from the first snapshot.

    Scalar ``t`` gives a vector of length ``base_dim``; an array of times
    gives ``(base_dim, len(t))``.
    """
    t_arr = np.atleast_1d(np.asarray(t, dtype=float))
    top = model.modes[: model.base_dim]
    if model.rank == 0:
        out = np.zeros((model.base_dim, len(t_arr)), dtype=complex)
    else:
        evol = np.exp(1j * np.outer(model.cont_freqs, t_arr)) * model.amplitudes[:, None]
        out = top @ evol
    return out[:, 0] if np.ndim(t) == 0 else out


def predict_steps(model: DmdModel, n_steps):
    """Forecast on the sample grid ``0, dt, .., (n_steps-1) dt`` via powers of ``lam``.

    Identical to :func:`predict` on the grid but avoids the ``exp(log)`` round
    trip.
    """
    top = model.modes[: model.base_dim]
    if model.rank == 0:
        return np.zeros((model.base_dim, n_steps), dtype=complex)
    powers = model.disc_eigs[:, None] ** np.arange(n_steps)[None, :]
    return top @ (powers * model.amplitudes[:, None])


def reconstruction_error(model: DmdModel, snaps: SnapshotSet) -> float:
    """Relative Frobenius error of the forecast over the snapshot window."""
    rel_t = snaps.times - model.t0
    pred = predict(model, rel_t)
    norm = np.linalg.norm(snaps.data)
    if norm == 0.0:
        return float(np.linalg.norm(pred))
    return float(np.linalg.norm(pred - snaps.data) / norm)
