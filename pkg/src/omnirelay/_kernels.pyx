# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled integration kernels; same contract as ``_kernels_py``."""

import numpy as np
cimport numpy as cnp
from libc.math cimport atan2, sqrt

cnp.import_array()

BACKEND = "cython"

cdef double GRAVITY = 9.81


cdef inline void _rhs(const double* x, const double* f, const double* tau,
                      double mass, const double* J, const double* Jinv,
                      const double* dist, double* dx) noexcept nogil:
    cdef double qw = x[6], qx = x[7], qy = x[8], qz = x[9]
    cdef double p = x[10], q = x[11], r = x[12]
    cdef double fx = f[0], fy = f[1], fz = f[2]
    cdef double ax, ay, az, iw0, iw1, iw2, m0, m1, m2

    ax = ((1.0 - 2.0 * (qy * qy + qz * qz)) * fx
          + 2.0 * (qx * qy - qw * qz) * fy
          + 2.0 * (qx * qz + qw * qy) * fz)
    ay = (2.0 * (qx * qy + qw * qz) * fx
          + (1.0 - 2.0 * (qx * qx + qz * qz)) * fy
          + 2.0 * (qy * qz - qw * qx) * fz)
    az = (2.0 * (qx * qz - qw * qy) * fx
          + 2.0 * (qy * qz + qw * qx) * fy
          + (1.0 - 2.0 * (qx * qx + qy * qy)) * fz)

    dx[0] = x[3]
    dx[1] = x[4]
    dx[2] = x[5]
    dx[3] = (ax + dist[0]) / mass
    dx[4] = (ay + dist[1]) / mass
    dx[5] = (az + dist[2]) / mass - GRAVITY

    dx[6] = 0.5 * (-qx * p - qy * q - qz * r)
    dx[7] = 0.5 * (qw * p + qy * r - qz * q)
    dx[8] = 0.5 * (qw * q + qz * p - qx * r)
    dx[9] = 0.5 * (qw * r + qx * q - qy * p)

    iw0 = J[0] * p + J[1] * q + J[2] * r
    iw1 = J[3] * p + J[4] * q + J[5] * r
    iw2 = J[6] * p + J[7] * q + J[8] * r
    m0 = tau[0] - (q * iw2 - r * iw1)
    m1 = tau[1] - (r * iw0 - p * iw2)
    m2 = tau[2] - (p * iw1 - q * iw0)
    dx[10] = Jinv[0] * m0 + Jinv[1] * m1 + Jinv[2] * m2
    dx[11] = Jinv[3] * m0 + Jinv[4] * m1 + Jinv[5] * m2
    dx[12] = Jinv[6] * m0 + Jinv[7] * m1 + Jinv[8] * m2


cdef inline void _rk4(double* x, const double* f, const double* tau, double dt,
                      double mass, const double* J, const double* Jinv,
                      const double* dist) noexcept nogil:
    cdef double k1[13]
    cdef double k2[13]
    cdef double k3[13]
    cdef double k4[13]
    cdef double tmp[13]
    cdef int i
    cdef double h = 0.5 * dt
    cdef double nrm

    _rhs(x, f, tau, mass, J, Jinv, dist, k1)
    for i in range(13):
        tmp[i] = x[i] + h * k1[i]
    _rhs(tmp, f, tau, mass, J, Jinv, dist, k2)
    for i in range(13):
        tmp[i] = x[i] + h * k2[i]
    _rhs(tmp, f, tau, mass, J, Jinv, dist, k3)
    for i in range(13):
        tmp[i] = x[i] + dt * k3[i]
    _rhs(tmp, f, tau, mass, J, Jinv, dist, k4)
    for i in range(13):
        x[i] = x[i] + (dt / 6.0) * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i])
    nrm = sqrt(x[6] * x[6] + x[7] * x[7] + x[8] * x[8] + x[9] * x[9])
    for i in range(6, 10):
        x[i] = x[i] / nrm


cdef inline void _wrench(const double* alloc, const double* thrust, int n,
                         double* f, double* tau) noexcept nogil:
    cdef int i, j
    cdef double s
    for i in range(3):
        s = 0.0
        for j in range(n):
            s = s + thrust[j] * alloc[i * n + j]
        f[i] = s
    for i in range(3):
        s = 0.0
        for j in range(n):
            s = s + thrust[j] * alloc[(i + 3) * n + j]
        tau[i] = s


def rigid_step(x, thrusts, double dt, double mass, inertia, inertia_inv,
               alloc, disturbance):
    """One RK4 step of a single 13-vector under constant thrusts."""
    cdef double[::1] xv = np.array(x[:13], dtype=np.float64, copy=True)
    cdef const double[::1] th = np.ascontiguousarray(thrusts, dtype=np.float64)
    cdef const double[:, ::1] J = np.ascontiguousarray(inertia, dtype=np.float64)
    cdef const double[:, ::1] Ji = np.ascontiguousarray(inertia_inv, dtype=np.float64)
    cdef const double[:, ::1] B = np.ascontiguousarray(alloc, dtype=np.float64)
    cdef const double[::1] d = np.ascontiguousarray(disturbance, dtype=np.float64)
    cdef double f[3]
    cdef double tau[3]
    _wrench(&B[0, 0], &th[0], th.shape[0], f, tau)
    _rk4(&xv[0], f, tau, dt, mass, &J[0, 0], &Ji[0, 0], &d[0])
    return np.asarray(xv)


def augmented_rollout(x0, rates, double dt, double mass, inertia, inertia_inv,
                      alloc, disturbance):
    """Roll a batch of thrust-rate sequences forward from one augmented state.

    rates has shape (B, N, n); returns (B, N + 1, 13 + n).
    """
    cdef const double[::1] x0v = np.ascontiguousarray(x0, dtype=np.float64)
    cdef const double[:, :, ::1] u = np.ascontiguousarray(rates, dtype=np.float64)
    cdef const double[:, ::1] J = np.ascontiguousarray(inertia, dtype=np.float64)
    cdef const double[:, ::1] Ji = np.ascontiguousarray(inertia_inv, dtype=np.float64)
    cdef const double[:, ::1] B = np.ascontiguousarray(alloc, dtype=np.float64)
    cdef const double[::1] d = np.ascontiguousarray(disturbance, dtype=np.float64)
    cdef Py_ssize_t nb = u.shape[0], horizon = u.shape[1], n = u.shape[2]
    cdef Py_ssize_t nx = 13 + n
    if x0v.shape[0] != nx or B.shape[1] != n:
        raise ValueError("state, rate and allocation dimensions disagree")
    out_arr = np.empty((nb, horizon + 1, nx), dtype=np.float64)
    cdef double[:, :, ::1] out = out_arr
    cdef double rigid[13]
    cdef double thrust[16]
    cdef double f[3]
    cdef double tau[3]
    cdef Py_ssize_t b, k, i
    if n > 16:
        raise ValueError("at most 16 rotors supported")
    with nogil:
        for b in range(nb):
            for i in range(13):
                rigid[i] = x0v[i]
            for i in range(n):
                thrust[i] = x0v[13 + i]
            for i in range(nx):
                out[b, 0, i] = x0v[i]
            for k in range(horizon):
                for i in range(n):
                    thrust[i] = thrust[i] + dt * u[b, k, i]
                _wrench(&B[0, 0], thrust, <int>n, f, tau)
                _rk4(rigid, f, tau, dt, mass, &J[0, 0], &Ji[0, 0], &d[0])
                for i in range(13):
                    out[b, k + 1, i] = rigid[i]
                for i in range(n):
                    out[b, k + 1, 13 + i] = thrust[i]
    return out_arr


def pointing_batch(states, boresights, targets):
    """Boresight-to-line-of-sight geometry for every stage of a batch of rollouts."""
    cdef const double[:, :, ::1] x = np.ascontiguousarray(states, dtype=np.float64)
    cdef const double[:, ::1] bs = np.ascontiguousarray(boresights, dtype=np.float64)
    cdef const double[:, :, ::1] tg = np.ascontiguousarray(targets, dtype=np.float64)
    cdef Py_ssize_t nb = x.shape[0], nk = x.shape[1], nl = bs.shape[0]
    if tg.shape[0] != nk or tg.shape[1] != nl or bs.shape[1] != 3 or tg.shape[2] != 3:
        raise ValueError("state, boresight and target dimensions disagree")
    cos_arr = np.empty((nb, nk, nl))
    theta_arr = np.empty((nb, nk, nl))
    dist_arr = np.empty((nb, nk, nl))
    axes_arr = np.empty((nb, nk, nl, 3))
    cdef double[:, :, ::1] co = cos_arr
    cdef double[:, :, ::1] th = theta_arr
    cdef double[:, :, ::1] di = dist_arr
    cdef double[:, :, :, ::1] ax = axes_arr
    cdef Py_ssize_t b, k, l
    cdef double qw, qx, qy, qz, bx, by, bz, wx, wy, wz
    cdef double lx, ly, lz, d, inv, c, cx, cy, cz, s
    with nogil:
        for b in range(nb):
            for k in range(nk):
                qw = x[b, k, 6]
                qx = x[b, k, 7]
                qy = x[b, k, 8]
                qz = x[b, k, 9]
                for l in range(nl):
                    bx = bs[l, 0]
                    by = bs[l, 1]
                    bz = bs[l, 2]
                    wx = ((1.0 - 2.0 * (qy * qy + qz * qz)) * bx
                          + 2.0 * (qx * qy - qw * qz) * by
                          + 2.0 * (qx * qz + qw * qy) * bz)
                    wy = (2.0 * (qx * qy + qw * qz) * bx
                          + (1.0 - 2.0 * (qx * qx + qz * qz)) * by
                          + 2.0 * (qy * qz - qw * qx) * bz)
                    wz = (2.0 * (qx * qz - qw * qy) * bx
                          + 2.0 * (qy * qz + qw * qx) * by
                          + (1.0 - 2.0 * (qx * qx + qy * qy)) * bz)
                    lx = tg[k, l, 0] - x[b, k, 0]
                    ly = tg[k, l, 1] - x[b, k, 1]
                    lz = tg[k, l, 2] - x[b, k, 2]
                    d = sqrt(lx * lx + ly * ly + lz * lz)
                    inv = 1.0 / d if d > 0.0 else 0.0
                    lx = lx * inv
                    ly = ly * inv
                    lz = lz * inv
                    c = wx * lx + wy * ly + wz * lz
                    cx = wy * lz - wz * ly
                    cy = wz * lx - wx * lz
                    cz = wx * ly - wy * lx
                    s = sqrt(cx * cx + cy * cy + cz * cz)
                    co[b, k, l] = c
                    th[b, k, l] = atan2(s, c)
                    di[b, k, l] = d
                    inv = 1.0 / s if s > 0.0 else 0.0
                    ax[b, k, l, 0] = cx * inv
                    ax[b, k, l, 1] = cy * inv
                    ax[b, k, l, 2] = cz * inv
    return cos_arr, theta_arr, dist_arr, axes_arr
