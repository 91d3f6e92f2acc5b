"""Incidence geometry shared by the ray, classical and quantum levels."""
from __future__ import annotations

import math

import numpy as np

from .constants import HE4, PhysicalConstants
from .errors import DomainError

LAUNCH_HEIGHT = 10.27  # A, mean height of the incident packet / ray origins


def initial_conditions(b, theta_i: float, E_i: float, z0: float = LAUNCH_HEIGHT,
                       constants: PhysicalConstants = HE4):
    """Launch position and momentum for impact parameter(s) ``b``.

    The straight incident line crosses z = 0 at x = b.

    Returns:
        ``(x, z), (p_x, p_z)`` with momenta in meV ps / A. ``x`` and ``z``
        broadcast against ``b``.
    """
    if not E_i > 0:
        raise DomainError("incident energy must be positive")
    if not abs(theta_i) < math.pi / 2:
        raise DomainError("incidence angle must satisfy |theta_i| < pi/2")
    b = np.asarray(b, dtype=float)
    p = constants.momentum(E_i)
    x = b - z0 * math.tan(theta_i)
    z = np.full_like(b, z0)
    px = np.full_like(b, p * math.sin(theta_i))
    pz = np.full_like(b, -p * math.cos(theta_i))
    return (x, z), (px, pz)


def parallel_momentum_transfer(E_i: float, theta_i: float, theta_d,
                               constants: PhysicalConstants = HE4):
    """Delta K = k_i (sin theta_d - sin theta_i) in 1/A."""
    k = constants.wavenumber(E_i)
    return k * (np.sin(theta_d) - math.sin(theta_i))


def angle_from_momentum_transfer(E_i: float, theta_i: float, delta_k,
                                 constants: PhysicalConstants = HE4):
    k = constants.wavenumber(E_i)
    return np.arcsin(np.asarray(delta_k) / k + math.sin(theta_i))
