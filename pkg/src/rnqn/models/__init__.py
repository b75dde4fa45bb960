"""
Reduced fluid-structure problems.

Each problem bundles a fluid and a structure adapter with the quantities the
time loop needs: the initial interface fields, the interface quadrature
weights and the volume bookkeeping for the artificial-flux metric.
"""

import numpy as np

from ..errors import ParameterError
from ..metrics import artificial_flux_rate
from .affine import AffineFluid, AffineProblemConfig, AffineStructure
from .balloon import BalloonConfig, BalloonFluid, BalloonStructure
from .tube import CLOSED, OPEN, TubeConfig, TubeFluid, TubeStructure

PROBLEMS = ("affine", "balloon0d", "tube1d_open", "tube1d_closed")


class Problem:
    """Base wrapper; subclasses fill in the adapters and the geometry hooks."""

    name = None
    fluid = None
    structure = None

    @property
    def m(self):
        return self.structure.interface_size

    def initial_fields(self):
        """Interface displacement and traction at t = 0."""
        raise NotImplementedError

    def flux_weights(self):
        raise NotImplementedError

    def artificial_flux_rate(self):
        return artificial_flux_rate(self.structure.velocity, self.fluid.interface_velocity, self.flux_weights())

    def signed_artificial_flux(self):
        return float(np.sum(self.flux_weights() * (self.structure.velocity - self.fluid.interface_velocity)))

    def volume_rate_total(self, t):
        raise NotImplementedError

    @property
    def V0(self):
        raise NotImplementedError

    def sample(self, t):
        return {"t": t}

    def step_diagnostics(self):
        return {}


class AffineProblem(Problem):
    name = "affine"

    def __init__(self, config):
        self.config = config
        self.structure = AffineStructure(config)
        self.fluid = AffineFluid(config)

    def initial_fields(self):
        return np.zeros(self.config.m), np.zeros(self.config.m)

    def flux_weights(self):
        return np.ones(self.config.m)

    def artificial_flux_rate(self):
        return 0.0

    def volume_rate_total(self, t):
        return 0.0

    @property
    def V0(self):
        return 1.0

    def sample(self, t):
        return {"t": t, "d": self.structure.d.tolist()}


class BalloonProblem(Problem):
    name = "balloon0d"

    def __init__(self, config):
        self.config = config
        self.structure = BalloonStructure(config)
        self.fluid = BalloonFluid(config)

    def initial_fields(self):
        return np.array([self.config.R0]), np.zeros(1)

    def flux_weights(self):
        return np.array([2.0 * np.pi * self.structure.state.R])

    def volume_rate_total(self, t):
        return self.config.q_in(t) + self.signed_artificial_flux()

    @property
    def V0(self):
        return np.pi * self.config.R0**2

    def sample(self, t):
        s = self.structure.state
        return {"t": t, "R": s.R, "Rdot": s.Rdot, "p": self.fluid.p}


class TubeProblem(Problem):
    def __init__(self, config, eps_problem=1e-10):
        self.config = config
        self.name = "tube1d_" + config.outlet
        self.structure = TubeStructure(config)
        self.fluid = TubeFluid(config, eps_problem)

    def initial_fields(self):
        return np.zeros(self.config.N), np.zeros(self.config.N)

    def flux_weights(self):
        return 2.0 * np.pi * (self.config.R0 + self.structure.state.w) * self.config.dx

    def volume_rate_total(self, t):
        s = self.fluid.state
        A = s.a
        q_in = A[0] * s.u[0]
        q_out = A[-1] * s.u[-1]
        return q_in - q_out + self.signed_artificial_flux()

    @property
    def V0(self):
        return float(np.pi * self.config.R0**2 * self.config.L)

    def sample(self, t):
        return {
            "t": t,
            "w": self.structure.state.w.tolist(),
            "p": self.fluid.state.p.tolist(),
        }

    def step_diagnostics(self):
        info = self.fluid.committed_info
        return {"mass_defect": info.get("mass_defect", 0.0)}


def build_problem(name, params=None, eps_problem=1e-10):
    """
    Construct a problem by name.

    Parameters
    ----------
    name : str
        One of ``affine``, ``balloon0d``, ``tube1d_open`` or ``tube1d_closed``.
    params : dict, optional
        Keyword arguments for the model configuration.  The affine problem
        needs ``A_s``, ``A_f``, ``b_s`` and ``b_f``.
    eps_problem : float
        Internal tolerance of iterative subproblem solvers.
    """
    params = dict(params or {})
    if name == "affine":
        return AffineProblem(AffineProblemConfig(**params))
    if name == "balloon0d":
        return BalloonProblem(BalloonConfig(**params))
    if name in ("tube1d_open", "tube1d_closed"):
        params["outlet"] = OPEN if name == "tube1d_open" else CLOSED
        return TubeProblem(TubeConfig(**params), eps_problem)
    raise ParameterError(f"unknown problem {name!r}; expected one of {PROBLEMS}")


__all__ = [
    "PROBLEMS",
    "AffineProblem",
    "AffineProblemConfig",
    "BalloonConfig",
    "BalloonProblem",
    "Problem",
    "TubeConfig",
    "TubeProblem",
    "build_problem",
]
