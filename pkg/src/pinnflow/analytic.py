"""Closed-form flow fields used as verification oracles.

Every field takes (x, y, t, nu) that may be plain numbers/arrays or
DiffValues, so the same expression serves data generation and
derivative-based checks.
"""

from __future__ import annotations

import numpy as np

from .autodiff import cos, exp, sin


def taylor_green(x, y, t, nu):
    """Decaying 2D vortex: an exact solution of the incompressible
    Navier-Stokes equations on the 2-pi periodic box."""
    decay = exp(-2.0 * nu * t)
    u = -cos(x) * sin(y) * decay
    v = sin(x) * cos(y) * decay
    p = -0.25 * (cos(2.0 * x) + cos(2.0 * y)) * exp(-4.0 * nu * t)
    return u, v, p


def taylor_green_vorticity(x, y, t, nu):
    """omega = v_x - u_y = 2 cos(x) cos(y) exp(-2 nu t) in closed form."""
    return 2.0 * np.cos(x) * np.cos(y) * np.exp(-2.0 * np.asarray(nu, dtype=float) * t)


def uniform_flow(x, y, t, nu):
    """u = 1, v = 0, p = 0 (trivially satisfies the equations)."""
    zero = 0.0 * x
    return zero + 1.0, zero, zero


def rigid_rotation(x, y, t, nu):
    """u = -y, v = x: constant vorticity 2, divergence-free."""
    return -y, x, 0.0 * x
