"""Backward-Euler step of the thin-ring wall law shared by balloon and tube."""

import numpy as np


def hoop_stiffness(E_s, s, R0):
    """Pressure per unit radial displacement of a thin ring, ``E s / R0^2``."""
    return E_s * s / R0**2


def ring_step(p, x_n, v_n, mass, stiffness, dt, x_rest=0.0):
    """
    One implicit step of ``mass * x'' + stiffness * (x - x_rest) = p``.

    Solves the 2x2 backward-Euler system in (x, v) in closed form and returns
    the new position and velocity.  Works elementwise on arrays.
    """
    p = np.asarray(p, dtype=float)
    v = (p + mass * v_n / dt - stiffness * (x_n - x_rest)) / (mass / dt + stiffness * dt)
    return x_n + dt * v, v
