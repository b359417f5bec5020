"""Fused per-spin kernels for the Lie-group integrator.

Arrays use a components-first layout (3, n_traj, N).
"""
import numba
import numpy as np


@numba.njit(cache=True, inline="always")
def _rotation_coefficients(th2):
    if th2 < 1e-8:
        return 1.0 - th2 / 6.0 + th2 * th2 / 120.0, 0.5 - th2 / 24.0 + th2 * th2 / 720.0
    th = np.sqrt(th2)
    return np.sin(th) / th, (1.0 - np.cos(th)) / th2


@numba.njit(cache=True)
def rotate(v, w, out):
    """out = exp(w x) v for every spin."""
    for t in range(v.shape[1]):
        for i in range(v.shape[2]):
            w0, w1, w2 = w[0, t, i], w[1, t, i], w[2, t, i]
            v0, v1, v2 = v[0, t, i], v[1, t, i], v[2, t, i]
            a, b = _rotation_coefficients(w0 * w0 + w1 * w1 + w2 * w2)
            c0 = w1 * v2 - w2 * v1
            c1 = w2 * v0 - w0 * v2
            c2 = w0 * v1 - w1 * v0
            out[0, t, i] = v0 + a * c0 + b * (w1 * c2 - w2 * c1)
            out[1, t, i] = v1 + a * c1 + b * (w2 * c0 - w0 * c2)
            out[2, t, i] = v2 + a * c2 + b * (w0 * c1 - w1 * c0)


@numba.njit(cache=True)
def stage(s0, sums, omega, u, h_next, acc, weight, first, s_out):
    """One RKMK stage.

    Builds b = (omega - 2 sums_x, -2 sums_y, 0), maps it through the
    truncated dexp^-1 at u (skipped for the first stage), adds weight * k to
    acc, then sets u = h_next * k and s_out = exp(u x) s0.
    """
    for t in range(s0.shape[1]):
        for i in range(s0.shape[2]):
            b0 = omega - 2.0 * sums[0, t, i]
            b1 = -2.0 * sums[1, t, i]
            if first:
                k0, k1, k2 = b0, b1, 0.0
            else:
                u0, u1, u2 = u[0, t, i], u[1, t, i], u[2, t, i]
                c0 = -u2 * b1
                c1 = u2 * b0
                c2 = u0 * b1 - u1 * b0
                k0 = b0 - 0.5 * c0 + (u1 * c2 - u2 * c1) / 12.0
                k1 = b1 - 0.5 * c1 + (u2 * c0 - u0 * c2) / 12.0
                k2 = -0.5 * c2 + (u0 * c1 - u1 * c0) / 12.0
            acc[0, t, i] += weight * k0
            acc[1, t, i] += weight * k1
            acc[2, t, i] += weight * k2
            if h_next != 0.0:
                w0, w1, w2 = h_next * k0, h_next * k1, h_next * k2
                u[0, t, i], u[1, t, i], u[2, t, i] = w0, w1, w2
                v0, v1, v2 = s0[0, t, i], s0[1, t, i], s0[2, t, i]
                a, b = _rotation_coefficients(w0 * w0 + w1 * w1 + w2 * w2)
                d0 = w1 * v2 - w2 * v1
                d1 = w2 * v0 - w0 * v2
                d2 = w0 * v1 - w1 * v0
                s_out[0, t, i] = v0 + a * d0 + b * (w1 * d2 - w2 * d1)
                s_out[1, t, i] = v1 + a * d1 + b * (w2 * d0 - w0 * d2)
                s_out[2, t, i] = v2 + a * d2 + b * (w0 * d1 - w1 * d0)
