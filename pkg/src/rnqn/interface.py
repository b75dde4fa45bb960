"""Boundary data exchanged between the fluid and structure adapters."""

from dataclasses import dataclass

import numpy as np

from .errors import DimensionError, ParameterError

DIRICHLET = "dirichlet"
NEUMANN = "neumann"
ROBIN = "robin"


@dataclass(frozen=True)
class BoundaryData:
    """
    One interface condition.

    ``dirichlet``: prescribed deformation (its rate is optional; adapters
    that track their own geometry derive it).  ``neumann``: prescribed
    traction.  ``robin``: deformation, its rate, the traction fed back from
    the previous fluid call, and the weight ``robin_parameter > 0``.
    """

    kind: str
    displacement: np.ndarray = None
    velocity: np.ndarray = None
    traction: np.ndarray = None
    robin_parameter: float = None

    def __post_init__(self):
        if self.kind not in (DIRICHLET, NEUMANN, ROBIN):
            raise ParameterError(f"unknown boundary kind {self.kind!r}")
        if self.kind == ROBIN:
            if self.robin_parameter is None or not self.robin_parameter > 0.0:
                raise ParameterError(f"Robin condition needs robin_parameter > 0, got {self.robin_parameter}")
            if self.traction is None or self.velocity is None:
                raise ParameterError("Robin condition needs traction and velocity")

    @classmethod
    def dirichlet(cls, displacement, velocity=None):
        return cls(DIRICHLET, displacement=np.asarray(displacement, dtype=float),
                   velocity=None if velocity is None else np.asarray(velocity, dtype=float))

    @classmethod
    def neumann(cls, traction):
        return cls(NEUMANN, traction=np.asarray(traction, dtype=float))

    @classmethod
    def robin(cls, displacement, velocity, traction, robin_parameter):
        return cls(
            ROBIN,
            displacement=np.asarray(displacement, dtype=float),
            velocity=np.asarray(velocity, dtype=float),
            traction=np.asarray(traction, dtype=float),
            robin_parameter=float(robin_parameter),
        )

    def check_size(self, m):
        for name in ("displacement", "velocity", "traction"):
            value = getattr(self, name)
            if value is not None and value.size != m:
                raise DimensionError(f"{name} has {value.size} entries, interface has {m}")


class SolverAdapter:
    """
    Black-box subproblem solver.

    ``begin_step`` fixes the time level, ``solve`` may be called any number of
    times and always restarts from the last committed state, and ``commit``
    accepts the latest solution.  After ``solve`` the attribute
    ``subproblem_converged`` reports whether the internal tolerance was met.
    """

    interface_size = 1
    subproblem_converged = True

    def begin_step(self, t, dt):
        self.t = t
        self.dt = dt

    def solve(self, boundary):
        raise NotImplementedError

    def commit(self):
        raise NotImplementedError
