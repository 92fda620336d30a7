"""Pure numpy implementation of the integration kernels.

Mirrors ``_kernels.pyx`` function for function. Everything is vectorized over
a leading batch axis so that the finite-difference perturbation sweep of the
NMPC solver runs as one batched rollout instead of hundreds of Python loops.

State layout (rigid part, 13 entries)::

    [px py pz | vx vy vz | qw qx qy qz | wx wy wz]

The augmented state appends the per-rotor thrusts.
"""

import numpy as np

GRAVITY = 9.81

BACKEND = "python"


def rigid_rhs(x, force_body, torque_body, mass, inertia, inertia_inv, disturbance):
    """Time derivative of a batch of rigid-body states.

    ``x`` has shape (B, 13); wrench arrays have shape (B, 3).
    """
    qw, qx, qy, qz = x[:, 6], x[:, 7], x[:, 8], x[:, 9]
    w = x[:, 10:13]
    fx, fy, fz = force_body[:, 0], force_body[:, 1], force_body[:, 2]

    # R(q) @ f, expanded
    ax = ((1.0 - 2.0 * (qy * qy + qz * qz)) * fx
          + 2.0 * (qx * qy - qw * qz) * fy
          + 2.0 * (qx * qz + qw * qy) * fz)
    ay = (2.0 * (qx * qy + qw * qz) * fx
          + (1.0 - 2.0 * (qx * qx + qz * qz)) * fy
          + 2.0 * (qy * qz - qw * qx) * fz)
    az = (2.0 * (qx * qz - qw * qy) * fx
          + 2.0 * (qy * qz + qw * qx) * fy
          + (1.0 - 2.0 * (qx * qx + qy * qy)) * fz)

    dx = np.empty_like(x)
    dx[:, 0:3] = x[:, 3:6]
    dx[:, 3] = (ax + disturbance[0]) / mass
    dx[:, 4] = (ay + disturbance[1]) / mass
    dx[:, 5] = (az + disturbance[2]) / mass - GRAVITY

    p, q, r = w[:, 0], w[:, 1], w[:, 2]
    dx[:, 6] = 0.5 * (-qx * p - qy * q - qz * r)
    dx[:, 7] = 0.5 * (qw * p + qy * r - qz * q)
    dx[:, 8] = 0.5 * (qw * q + qz * p - qx * r)
    dx[:, 9] = 0.5 * (qw * r + qx * q - qy * p)

    iw = w @ inertia.T
    dx[:, 10:13] = (torque_body - np.cross(w, iw)) @ inertia_inv.T
    return dx


def _rk4_rigid(x, force_body, torque_body, dt, mass, inertia, inertia_inv, disturbance):
    args = (force_body, torque_body, mass, inertia, inertia_inv, disturbance)
    k1 = rigid_rhs(x, *args)
    k2 = rigid_rhs(x + (0.5 * dt) * k1, *args)
    k3 = rigid_rhs(x + (0.5 * dt) * k2, *args)
    k4 = rigid_rhs(x + dt * k3, *args)
    out = x + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
    out[:, 6:10] /= np.sqrt(np.sum(out[:, 6:10] ** 2, axis=1))[:, None]
    return out


def rigid_step(x, thrusts, dt, mass, inertia, inertia_inv, alloc, disturbance):
    """One RK4 step of a single 13-vector under constant thrusts."""
    wrench = alloc @ thrusts
    out = _rk4_rigid(
        x[None, :], wrench[None, :3], wrench[None, 3:], dt,
        mass, inertia, inertia_inv, disturbance,
    )
    return out[0]


def augmented_rollout(x0, rates, dt, mass, inertia, inertia_inv, alloc, disturbance):
    """Roll a batch of thrust-rate sequences forward from one augmented state.

    Each stage first integrates the rates into the thrusts, then advances the
    rigid body one RK4 step with those thrusts held.

    Parameters
    ----------
    x0 : (13 + n,) array
    rates : (B, N, n) array
    Returns
    -------
    (B, N + 1, 13 + n) array of states; index 0 is ``x0`` for every batch member.
    """
    n_batch, horizon, n_rot = rates.shape
    nx = 13 + n_rot
    out = np.empty((n_batch, horizon + 1, nx))
    out[:, 0, :] = x0
    rigid = np.repeat(x0[None, :13], n_batch, axis=0)
    thrust = np.repeat(x0[None, 13:], n_batch, axis=0)
    force_map = alloc[:3].T
    torque_map = alloc[3:].T
    for k in range(horizon):
        thrust = thrust + dt * rates[:, k, :]
        rigid = _rk4_rigid(
            rigid, thrust @ force_map, thrust @ torque_map, dt,
            mass, inertia, inertia_inv, disturbance,
        )
        out[:, k + 1, :13] = rigid
        out[:, k + 1, 13:] = thrust
    return out


def pointing_batch(states, boresights, targets):
    """Boresight-to-line-of-sight geometry for every stage of a batch of rollouts.

    Parameters
    ----------
    states : (B, K, 13 + n) array
    boresights : (L, 3) array of body-frame unit vectors
    targets : (K, L, 3) array of peer positions per stage and link

    Returns
    -------
    cos_t, theta, dist : (B, K, L) arrays
    axes : (B, K, L, 3) array
        Unit rotation axis taking the boresight onto the line of sight, zero
        where the two are parallel. A coincident target yields a zero line of
        sight, so ``cos_t`` and ``theta`` are 0 rather than NaN.
    """
    pos = states[..., None, 0:3]
    qw = states[..., 6, None]
    qx = states[..., 7, None]
    qy = states[..., 8, None]
    qz = states[..., 9, None]
    bx, by, bz = boresights[:, 0], boresights[:, 1], boresights[:, 2]
    wx = ((1.0 - 2.0 * (qy * qy + qz * qz)) * bx
          + 2.0 * (qx * qy - qw * qz) * by
          + 2.0 * (qx * qz + qw * qy) * bz)
    wy = (2.0 * (qx * qy + qw * qz) * bx
          + (1.0 - 2.0 * (qx * qx + qz * qz)) * by
          + 2.0 * (qy * qz - qw * qx) * bz)
    wz = (2.0 * (qx * qz - qw * qy) * bx
          + 2.0 * (qy * qz + qw * qx) * by
          + (1.0 - 2.0 * (qx * qx + qy * qy)) * bz)
    los = targets - pos
    dist = np.sqrt(np.sum(los * los, axis=-1))
    inv = np.divide(1.0, dist, out=np.zeros_like(dist), where=dist > 0.0)
    ux, uy, uz = los[..., 0] * inv, los[..., 1] * inv, los[..., 2] * inv
    cos_t = wx * ux + wy * uy + wz * uz
    cx = wy * uz - wz * uy
    cy = wz * ux - wx * uz
    cz = wx * uy - wy * ux
    sin_t = np.sqrt(cx * cx + cy * cy + cz * cz)
    theta = np.arctan2(sin_t, cos_t)
    inv_s = np.divide(1.0, sin_t, out=np.zeros_like(sin_t), where=sin_t > 0.0)
    axes = np.stack([cx * inv_s, cy * inv_s, cz * inv_s], axis=-1)
    return cos_t, theta, dist, axes
