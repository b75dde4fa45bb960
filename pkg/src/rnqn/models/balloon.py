"""
Zero-dimensional inflating balloon.

A circular elastic ring of radius R encloses an incompressible fluid fed by a
prescribed net inflow Q_in(t).  The fluid fixes its wall-normal velocity from
the volume constraint and its pressure from the Robin closure; it cannot
accept a Dirichlet wall motion because the enclosed volume would then be
over-determined.
"""

from dataclasses import dataclass

import numpy as np

from ..errors import IncompressibilityDilemma, NonPhysical, ParameterError
from ..interface import DIRICHLET, NEUMANN, ROBIN, SolverAdapter
from .ring import hoop_stiffness, ring_step


@dataclass
class BalloonConfig:
    R0: float = 0.28
    rho_s: float = 1000.0
    s: float = 0.02
    E_s: float = 1.4e6
    nu_s: float = 0.3  # kept for reference; the ring law has no Poisson effect
    mu_f: float = 1.0
    # Q_in(t) = inflow_amplitude * sin(inflow_frequency * t); peak radius ~0.332 by default.
    inflow_amplitude: float = 0.05 * np.pi
    inflow_frequency: float = np.pi

    def __post_init__(self):
        for name in ("R0", "rho_s", "s", "E_s"):
            if not getattr(self, name) > 0.0:
                raise ParameterError(f"{name} must be positive")
        if self.mu_f < 0.0:
            raise ParameterError("mu_f must be non-negative")

    @property
    def k_s(self):
        return hoop_stiffness(self.E_s, self.s, self.R0)

    @property
    def wall_mass(self):
        return self.rho_s * self.s

    def q_in(self, t):
        return self.inflow_amplitude * np.sin(self.inflow_frequency * t)

    def q_in_integral(self, t):
        w = self.inflow_frequency
        return self.inflow_amplitude * (1.0 - np.cos(w * t)) / w


@dataclass
class BalloonState:
    R: float
    Rdot: float = 0.0
    p: float = 0.0
    u_f: float = 0.0


def balloon_structure_solve(config, p, prev_state, dt):
    """Backward-Euler ring step under pressure ``p``; returns (R, Rdot)."""
    if not dt > 0.0:
        raise ParameterError("dt must be positive")
    R, Rdot = ring_step(p, prev_state.R, prev_state.Rdot, config.wall_mass, config.k_s, dt, config.R0)
    R, Rdot = float(R), float(Rdot)
    if R <= 0.0:
        raise NonPhysical(f"balloon radius became {R}")
    return R, Rdot


def balloon_fluid_solve(config, boundary, t):
    """
    Solve the two closure equations for the enclosed fluid.

    ``2 pi R u_f = Q_in(t)`` and ``p = h_prev + alpha (u_f - Rdot_s)``.
    Returns ``(p, u_f, traction)``; the traction on the ring is the pressure
    plus the viscous normal stress ``2 mu_f u_f / R`` of the radial flow.
    """
    if boundary.kind == DIRICHLET:
        raise IncompressibilityDilemma(
            "enclosed incompressible fluid cannot take a prescribed wall motion: "
            "the volume is fixed by the inflow and the pressure is undetermined"
        )
    if boundary.kind != ROBIN:
        raise ParameterError(f"balloon fluid takes Robin input, got {boundary.kind}")
    R = float(boundary.displacement[0])
    if R <= 0.0:
        raise NonPhysical(f"balloon radius {R} is not positive")
    u_f = config.q_in(t) / (2.0 * np.pi * R)
    p = float(boundary.traction[0]) + boundary.robin_parameter * (u_f - float(boundary.velocity[0]))
    return p, u_f, p + 2.0 * config.mu_f * u_f / R


class BalloonStructure(SolverAdapter):
    interface_size = 1

    def __init__(self, config, state=None):
        self.config = config
        self.state = state or BalloonState(R=config.R0)
        self._trial = self.state
        self.velocity = np.array([self.state.Rdot])

    def solve(self, boundary):
        if boundary.kind != NEUMANN:
            raise ParameterError(f"balloon structure takes Neumann input, got {boundary.kind}")
        boundary.check_size(1)
        p = float(boundary.traction[0])
        R, Rdot = balloon_structure_solve(self.config, p, self.state, self.dt)
        self._trial = BalloonState(R, Rdot, p, self.state.u_f)
        self.velocity = np.array([Rdot])
        self.subproblem_converged = True
        return np.array([R])

    def commit(self):
        self.state = self._trial


class BalloonFluid(SolverAdapter):
    interface_size = 1

    def __init__(self, config):
        self.config = config
        self.p = 0.0
        self.u_f = 0.0
        self._trial = (0.0, 0.0)
        self.interface_velocity = np.zeros(1)

    def solve(self, boundary):
        boundary.check_size(1)
        p, u_f, traction = balloon_fluid_solve(self.config, boundary, self.t)
        self._trial = (p, u_f)
        self.interface_velocity = np.array([u_f])
        self.subproblem_converged = True
        return np.array([traction])

    def commit(self):
        self.p, self.u_f = self._trial
