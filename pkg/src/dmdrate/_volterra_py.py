"""Pure numpy Volterra steppers. Same signatures as the compiled ``_volterra``.

Both integrate ``y' = F(t, y) + int_0^t K(t - s; t) y(s) ds`` on a uniform
grid with trapezoidal convolution weights and a Heun predictor-corrector.
The history part of the trapezoid sum (every node but the newest) is
computed once per step and shared by predictor and corrector.
"""

import numpy as np


def _harmonic_row(re, im, coef, cos_t, sin_t, upto):
    """sum_n coef_n Re(k_n[:upto] e^{i n Omega t})."""
    return (coef * cos_t) @ re[:, :upto] - (coef * sin_t) @ im[:, :upto]


def population(a_re, a_im, b_re, b_im, omega, dt, y0, n_steps):
    """Donor population under ``y' = -int a(t-s; t) y(s) ds + int b(t-s; t) ds``.

    ``a = k + k'`` and ``b = k'`` are given by harmonic components
    ``(n_harm, n_kernel)``; the kernel at ``(s, t)`` is
    ``sum_n c_n Re(x_n(s) e^{i n omega t})`` with ``c_0 = 1``, ``c_n = 2``.
    """
    a_re = np.ascontiguousarray(a_re, dtype=float)
    a_im = np.ascontiguousarray(a_im, dtype=float)
    b_re = np.ascontiguousarray(b_re, dtype=float)
    b_im = np.ascontiguousarray(b_im, dtype=float)
    n_h = a_re.shape[0]
    harm = np.arange(n_h)
    coef = np.where(harm == 0, 1.0, 2.0)
    y = np.empty(n_steps)
    y[0] = y0
    if n_steps == 1:
        return y
    half = 0.5 * dt
    # f_0: empty memory integral
    f_prev = 0.0
    for i in range(n_steps - 1):
        t1 = (i + 1) * dt
        cos_t = np.cos(harm * omega * t1)
        sin_t = np.sin(harm * omega * t1)
        a_row = _harmonic_row(a_re, a_im, coef, cos_t, sin_t, i + 2)
        b_row = _harmonic_row(b_re, b_im, coef, cos_t, sin_t, i + 2)
        # nodes j = 0..i at lags i+1-j, trapezoid half weight on j = 0
        lags = a_row[i + 1:0:-1]
        hist = dt * (lags @ y[: i + 1]) - half * a_row[i + 1] * y[0]
        src = dt * b_row.sum() - half * (b_row[0] + b_row[i + 1])
        y_pred = y[i] + dt * f_prev
        f_pred = -(hist + half * a_row[0] * y_pred) + src
        y[i + 1] = y[i] + half * (f_prev + f_pred)
        f_prev = -(hist + half * a_row[0] * y[i + 1]) + src
    return y


def matrix(K, E, y0, dt, n_steps):
    """Vector Volterra equation ``y' = L0 y + int K(t - s) y(s) ds``.

    ``K`` is ``(n_kernel, d, d)`` complex and ``E = exp(L0 dt)``. The local
    term is carried exactly by ``E`` (integrating factor) and only the memory
    term goes through the trapezoid/Heun pair, so ``K = 0`` is exact.
    """
    K = np.ascontiguousarray(K, dtype=complex)
    E = np.asarray(E, dtype=complex)
    d = E.shape[0]
    y = np.empty((n_steps, d), dtype=complex)
    y[0] = y0
    if n_steps == 1:
        return y
    half = 0.5 * dt
    # memory term at t = 0 is an empty integral
    m_prev = np.zeros(d, dtype=complex)
    K0 = K[0]
    for i in range(n_steps - 1):
        # sum_j w_j K[i+1-j] y_j over j = 0..i
        lagged = K[i + 1:0:-1]
        hist = dt * np.einsum("jab,jb->a", lagged, y[: i + 1]) - half * (K[i + 1] @ y[0])
        Em = E @ m_prev
        y_pred = E @ y[i] + dt * Em
        m_pred = hist + half * (K0 @ y_pred)
        y[i + 1] = E @ y[i] + half * (Em + m_pred)
        m_prev = hist + half * (K0 @ y[i + 1])
    return y
