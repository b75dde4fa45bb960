"""Artificial flux, analytic balloon radius and iteration statistics."""

from dataclasses import dataclass, field

import numpy as np

from .errors import DimensionError, NonPhysical, ParameterError

SIMPSON_INTERVALS = 10_000


def artificial_flux_rate(u_s, u_f, weights):
    """
    Volume rate crossing the interface because of a velocity mismatch.

    Parameters
    ----------
    u_s, u_f : array_like
        Structure and fluid wall-normal velocities at the interface nodes.
    weights : array_like
        Positive quadrature weights (interface measure per node).

    Returns
    -------
    float
        ``sum(weights * |u_s - u_f|)``.
    """
    u_s = np.atleast_1d(np.asarray(u_s, dtype=float))
    u_f = np.atleast_1d(np.asarray(u_f, dtype=float))
    weights = np.atleast_1d(np.asarray(weights, dtype=float))
    if not (u_s.shape == u_f.shape == weights.shape):
        raise DimensionError(f"shape mismatch: {u_s.shape}, {u_f.shape}, {weights.shape}")
    if np.any(weights < 0.0):
        raise ParameterError("quadrature weights must be non-negative")
    return float(np.sum(weights * np.abs(u_s - u_f)))


@dataclass
class FluxAccumulator:
    """Running relative artificial flux with the enclosed volume it is measured against."""

    V0: float
    eps_rel: float = 0.0
    V_current: float = None

    def __post_init__(self):
        if not self.V0 > 0.0:
            raise NonPhysical(f"reference volume must be positive, got {self.V0}")
        if self.V_current is None:
            self.V_current = self.V0


def accumulate_eps_rel(acc, flux_rate, volume_rate_total, dt):
    """Rectangle-rule step: add ``dt*flux/V`` and then advance ``V``."""
    if not dt > 0.0:
        raise ParameterError("dt must be positive")
    if not acc.V_current > 0.0:
        raise NonPhysical("volume is not positive")
    eps_rel = acc.eps_rel + dt * abs(flux_rate) / acc.V_current
    V_next = acc.V_current + dt * volume_rate_total
    if not V_next > 0.0:
        raise NonPhysical(f"volume would become {V_next}")
    return FluxAccumulator(acc.V0, eps_rel, V_next)


def simpson(f, a, b, n=SIMPSON_INTERVALS):
    """Composite Simpson rule with ``n`` (even) subintervals."""
    if n % 2:
        n += 1
    x = np.linspace(a, b, n + 1)
    y = np.array([f(xi) for xi in x], dtype=float)
    h = (b - a) / n
    return float(h / 3.0 * (y[0] + y[-1] + 4.0 * y[1:-1:2].sum() + 2.0 * y[2:-1:2].sum()))


def analytic_balloon_radius(t, R0, Q_in=None, Q_integral=None):
    """
    Radius of a circular balloon whose area grows by the inflow.

    ``R(t) = sqrt(R0**2 + (1/pi) * int_0^t Q_in)``.  Pass ``Q_integral`` when
    the antiderivative is known, otherwise ``Q_in`` is integrated by composite
    Simpson.  Without either the inflow is zero.
    """
    if Q_integral is not None:
        volume = Q_integral(t) - Q_integral(0.0)
    elif Q_in is not None:
        volume = simpson(Q_in, 0.0, t) if t != 0.0 else 0.0
    else:
        volume = 0.0
    radicand = R0**2 + volume / np.pi
    if not radicand > 0.0:
        raise NonPhysical(f"radius squared would be {radicand}")
    return float(np.sqrt(radicand))


@dataclass
class IterationStats:
    per_step: list = field(default_factory=list)

    def add(self, iterations):
        if iterations < 1:
            raise ParameterError("a time step needs at least one coupling iteration")
        self.per_step.append(int(iterations))

    @property
    def mean(self):
        return float(np.mean(self.per_step)) if self.per_step else float("nan")

    @property
    def max(self):
        return max(self.per_step) if self.per_step else 0
