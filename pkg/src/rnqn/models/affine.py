"""Affine fluid and structure maps with a known coupled fixed point."""

from dataclasses import dataclass

import numpy as np

from ..densela import as_matrix, as_vector
from ..errors import DimensionError, ParameterError
from ..interface import DIRICHLET, NEUMANN, SolverAdapter


@dataclass
class AffineProblemConfig:
    A_s: np.ndarray
    A_f: np.ndarray
    b_s: np.ndarray
    b_f: np.ndarray

    def __post_init__(self):
        self.A_s = as_matrix(self.A_s, "A_s")
        self.A_f = as_matrix(self.A_f, "A_f")
        self.b_s = as_vector(self.b_s, "b_s")
        self.b_f = as_vector(self.b_f, "b_f")
        m = self.b_s.size
        for name, a in (("A_s", self.A_s), ("A_f", self.A_f)):
            if a.shape != (m, m):
                raise DimensionError(f"{name} must be {m}x{m}, got {a.shape}")
        if self.b_f.size != m:
            raise DimensionError("b_f and b_s sizes differ")

    @property
    def m(self):
        return self.b_s.size

    def composed(self):
        """Matrix and offset of ``d -> S(F(d))``."""
        return self.A_s @ self.A_f, self.A_s @ self.b_f + self.b_s

    def spectral_radius(self):
        return float(np.max(np.abs(np.linalg.eigvals(self.A_s @ self.A_f))))

    def fixed_point(self):
        """Coupled solution (d, h) by a direct linear solve."""
        a, b = self.composed()
        d = np.linalg.solve(np.eye(self.m) - a, b)
        return d, self.A_f @ d + self.b_f


def affine_structure_solve(config, load):
    return config.A_s @ as_vector(load, "load") + config.b_s


def affine_fluid_solve(config, displacement):
    return config.A_f @ as_vector(displacement, "displacement") + config.b_f


class AffineStructure(SolverAdapter):
    def __init__(self, config):
        self.config = config
        self.interface_size = config.m
        self.velocity = np.zeros(config.m)
        self.d = np.zeros(config.m)

    def solve(self, boundary):
        if boundary.kind != NEUMANN:
            raise ParameterError(f"affine structure takes Neumann input, got {boundary.kind}")
        boundary.check_size(self.interface_size)
        self.d = affine_structure_solve(self.config, boundary.traction)
        self.subproblem_converged = True
        return self.d.copy()

    def commit(self):
        pass


class AffineFluid(SolverAdapter):
    def __init__(self, config):
        self.config = config
        self.interface_size = config.m
        self.interface_velocity = np.zeros(config.m)

    def solve(self, boundary):
        if boundary.kind != DIRICHLET:
            raise ParameterError(f"affine fluid takes Dirichlet input, got {boundary.kind}")
        boundary.check_size(self.interface_size)
        self.subproblem_converged = True
        return affine_fluid_solve(self.config, boundary.displacement)

    def commit(self):
        pass
