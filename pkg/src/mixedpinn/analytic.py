"""Closed-form solution of the homogeneous unit-square problem.

With T = 1 on x = 0, T = 0 on x = 1 and insulated top/bottom, the temperature is
T = 1 - x.  Because u_x is fixed on the vertical edges and u_y on the horizontal
ones, the displacement reduces to u_y = 0 and

    u_x = beta / (2 (lambda + 2 mu)) * x (1 - x)

where the plane-strain thermal modulus is beta = 2 (lambda + mu) alpha, which
equals E alpha / ((1 + nu)(1 - 2 nu)).  The normal stress along x is the
constant -beta / 2 for T0 = 0.
"""
from __future__ import annotations

import numpy as np


def lame(E: float, nu: float) -> tuple[float, float]:
    lam = E * nu / ((1 + nu) * (1 - 2 * nu))
    mu = E / (2 * (1 + nu))
    return lam, mu


def thermal_modulus(E: float, nu: float, alpha: float) -> float:
    """beta such that a free plane-strain body under Delta T carries -beta Delta T per normal component."""
    lam, mu = lame(E, nu)
    return 2.0 * (lam + mu) * alpha


def homogeneous_solution(x, y, E=1.0, nu=0.3, k=1.0, alpha=1.0, T0=0.0) -> dict:
    """All eight fields of the homogeneous problem at points (x, y)."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    lam, mu = lame(E, nu)
    beta = thermal_modulus(E, nu, alpha)
    # (lambda + 2 mu) u_x'' = beta T' with T' = -1 and u_x(0) = u_x(1) = 0;
    # a constant T0 drops out of equilibrium, so u_x does not depend on it
    a = beta / (2.0 * (lam + 2.0 * mu))
    T = 1.0 - x
    dT = T - T0
    ux = a * x * (1.0 - x)
    ex = a * (1.0 - 2.0 * x)
    sxx = (lam + 2.0 * mu) * ex - beta * dT
    syy = lam * ex - beta * dT
    zeros = np.zeros(np.broadcast_shapes(x.shape, y.shape))
    return {
        "u_x": ux + zeros,
        "u_y": zeros.copy(),
        "sxx": sxx + zeros,
        "syy": syy + zeros,
        "sxy": zeros.copy(),
        "T": T + zeros,
        "qx": k + zeros,
        "qy": zeros.copy(),
    }
