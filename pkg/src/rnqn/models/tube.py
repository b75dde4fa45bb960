"""
One-dimensional flexible tube.

The wall is a row of independent rings (one per cell).  The fluid is the
area-averaged incompressible flow on a staggered grid: pressure and area live
in the N cells, axial velocity on the N+1 faces.  Each time step solves the
backward-Euler continuity and momentum equations by damped Newton iteration:

    (a_i - a_i^n)/dt + (A_{i+1} u_{i+1} - A_i u_i)/dx = q_i
    (A_j u_j - A_j^n u_j^n)/dt + (F_j - F_{j-1})/dx
        + (A_j/rho)(p_j - p_{j-1})/dx + 8 pi nu u_j = 0

with face areas ``A`` averaged from the cells, first-order upwind momentum
fluxes ``F``, the inlet velocity prescribed and either a wall (closed) or a
zero-pressure ghost cell (open) at the outlet.

With a Dirichlet interface the wall geometry is imposed and ``q = 0``.  The
Robin interface lets fluid cross the wall with the penalty closure
``u_wall,f = wdot + (p - h)/alpha``, which gives
``q_i = -2 pi (R0 + w_i) (p_i - h_i) / alpha``.
"""

from dataclasses import dataclass

import numpy as np

from ..errors import IncompressibilityDilemma, NonPhysical, ParameterError, SolverDiverged
from ..interface import DIRICHLET, NEUMANN, ROBIN, SolverAdapter
from .ring import hoop_stiffness, ring_step

OPEN = "open"
CLOSED = "closed"


@dataclass
class TubeConfig:
    L: float = 0.05
    N: int = 32
    R0: float = 0.005
    s: float = 0.001
    rho_f: float = 1000.0
    rho_s: float = 1000.0
    mu_f: float = 0.003
    E_s: float = 3.0e5
    nu_s: float = 0.3  # kept for reference; unused by the ring law
    outlet: str = CLOSED
    pulse_amplitude: float = 3.75
    pulse_period: float = 0.003
    newton_max_iterations: int = 50
    newton_damping: float = 0.5

    def __post_init__(self):
        if int(self.N) != self.N or self.N < 4:
            raise ParameterError("N must be an integer >= 4")
        self.N = int(self.N)
        for name in ("L", "R0", "s", "rho_f", "rho_s", "mu_f", "E_s"):
            if not getattr(self, name) > 0.0:
                raise ParameterError(f"{name} must be positive")
        if self.outlet not in (OPEN, CLOSED):
            raise ParameterError(f"outlet must be 'open' or 'closed', got {self.outlet!r}")

    @property
    def dx(self):
        return self.L / self.N

    @property
    def k_s(self):
        return hoop_stiffness(self.E_s, self.s, self.R0)

    @property
    def wall_mass(self):
        return self.rho_s * self.s

    def u_pulse(self, t):
        if t <= self.pulse_period:
            return self.pulse_amplitude * (1.0 - np.cos(2.0 * np.pi * t / self.pulse_period))
        return 0.0

    def inlet_velocity(self, t):
        """Section mean of the parabolic inlet profile."""
        return 0.5 * self.u_pulse(t)

    def area(self, w):
        return np.pi * (self.R0 + np.asarray(w, dtype=float)) ** 2


@dataclass
class TubeState:
    w: np.ndarray
    wdot: np.ndarray
    u: np.ndarray  # N+1 face velocities
    p: np.ndarray
    a: np.ndarray

    @classmethod
    def at_rest(cls, config):
        n = config.N
        return cls(np.zeros(n), np.zeros(n), np.zeros(n + 1), np.zeros(n), config.area(np.zeros(n)))


def face_areas(a):
    """Inlet face takes the first cell, outlet face the last, interior faces the mean."""
    out = np.empty(a.size + 1)
    out[0] = a[0]
    out[-1] = a[-1]
    out[1:-1] = 0.5 * (a[:-1] + a[1:])
    return out


def tube_structure_solve(config, p, prev_state, dt):
    if not dt > 0.0:
        raise ParameterError("dt must be positive")
    w, wdot = ring_step(p, prev_state.w, prev_state.wdot, config.wall_mass, config.k_s, dt)
    if np.any(config.R0 + w <= 0.0):
        raise NonPhysical("tube wall collapsed (R0 + w <= 0)")
    return w, wdot


class _TubeSystem:
    """Residual and Jacobian of one backward-Euler fluid step."""

    def __init__(self, config, prev, w, t, dt, robin_coeff, h):
        self.cfg = config
        self.n = config.N
        self.open = config.outlet == OPEN
        self.n_u = self.n if self.open else self.n - 1
        self.dt = dt
        self.dx = config.dx
        self.nu = config.mu_f / config.rho_f
        self.rho = config.rho_f
        self.a = config.area(w)
        self.a_n = prev.a
        self.A = face_areas(self.a)
        self.Au_n = face_areas(prev.a) * prev.u
        self.u_in = config.inlet_velocity(t)
        self.c = robin_coeff  # zero for Dirichlet
        self.h = h

    def unpack(self, z):
        p = z[: self.n]
        u = np.zeros(self.n + 1)
        u[0] = self.u_in
        u[1 : 1 + self.n_u] = z[self.n :]
        return p, u

    def pack(self, p, u):
        return np.concatenate([p, u[1 : 1 + self.n_u]])

    def wall_flux(self, p):
        return -self.c * (p - self.h)

    def cell_momentum_flux(self, u):
        """Upwind F_i = phi_i * u_up for cells, and the outlet ghost flux."""
        phi = 0.5 * self.a * (u[:-1] + u[1:])
        up = np.where(phi >= 0.0, u[:-1], u[1:])
        return phi, phi * up

    def residual(self, z):
        p, u = self.unpack(z)
        dx, dt = self.dx, self.dt
        cont = (self.a - self.a_n) / dt + (self.A[1:] * u[1:] - self.A[:-1] * u[:-1]) / dx - self.wall_flux(p)
        cont_scale = np.abs(self.a - self.a_n) / dt + (np.abs(self.A[1:] * u[1:]) + np.abs(self.A[:-1] * u[:-1])) / dx
        cont_scale += np.abs(self.wall_flux(p))

        _, F = self.cell_momentum_flux(u)
        j = np.arange(1, 1 + self.n_u)
        Aj = self.A[j]
        p_right = np.append(p, 0.0)[j]  # ghost pressure 0 beyond an open outlet
        F_right = np.append(F, self.A[-1] * u[-1] * u[-1])[j]
        terms = (
            (Aj * u[j] - self.Au_n[j]) / dt,
            (F_right - F[j - 1]) / dx,
            Aj / self.rho * (p_right - p[j - 1]) / dx,
            8.0 * np.pi * self.nu * u[j],
        )
        mom = sum(terms)
        mom_scale = (
            (np.abs(Aj * u[j]) + np.abs(self.Au_n[j])) / dt
            + (np.abs(F_right) + np.abs(F[j - 1])) / dx
            + Aj / self.rho * (np.abs(p_right) + np.abs(p[j - 1])) / dx
            + np.abs(terms[3])
        )
        return np.concatenate([cont, mom]), np.concatenate([cont_scale, mom_scale])

    def jacobian(self, z):
        p, u = self.unpack(z)
        n, n_u, dx, dt = self.n, self.n_u, self.dx, self.dt
        size = n + n_u
        J = np.zeros((size, size))

        def ucol(jf):
            """Column of face velocity ``jf`` or None when it is prescribed."""
            return n + jf - 1 if 1 <= jf <= n_u else None

        # continuity rows
        for i in range(n):
            J[i, i] = self.c[i] if np.ndim(self.c) else self.c
            col = ucol(i + 1)
            if col is not None:
                J[i, col] += self.A[i + 1] / dx
            col = ucol(i)
            if col is not None:
                J[i, col] -= self.A[i] / dx

        # d F_i / d u_i and d F_i / d u_{i+1}
        phi = 0.5 * self.a * (u[:-1] + u[1:])
        fwd = phi >= 0.0
        dF_left = np.where(fwd, 0.5 * self.a * (2.0 * u[:-1] + u[1:]), 0.5 * self.a * u[1:])
        dF_right = np.where(fwd, 0.5 * self.a * u[:-1], 0.5 * self.a * (u[:-1] + 2.0 * u[1:]))

        for jf in range(1, n_u + 1):
            row = n + jf - 1
            Aj = self.A[jf]
            J[row, row] += Aj / dt + 8.0 * np.pi * self.nu
            # + F_jf / dx  (cell jf to the right, or outlet ghost)
            if jf < n:
                J[row, row] += dF_left[jf] / dx
                col = ucol(jf + 1)
                if col is not None:
                    J[row, col] += dF_right[jf] / dx
                J[row, jf] += Aj / (self.rho * dx)
            else:
                J[row, row] += 2.0 * self.A[-1] * u[-1] / dx
            # - F_{jf-1} / dx  (cell jf-1 to the left)
            J[row, row] -= dF_right[jf - 1] / dx
            col = ucol(jf - 1)
            if col is not None:
                J[row, col] -= dF_left[jf - 1] / dx
            J[row, jf - 1] -= Aj / (self.rho * dx)
        return J


def _scaled_norm(res, scale):
    ref = scale.max()
    if ref == 0.0:
        return 0.0 if not np.any(res) else np.inf
    return float(np.abs(res).max() / ref)


def tube_fluid_solve(config, boundary, prev_state, t, dt, eps_problem=1e-10):
    """
    Damped Newton solve of the fluid step.

    Returns ``(u, p, traction, info)`` where ``u`` holds the N+1 face
    velocities, ``traction`` equals ``p`` and ``info`` carries the wall flux,
    the fluid wall-normal velocity and the Newton statistics.
    """
    n = config.N
    boundary.check_size(n)
    w = np.asarray(boundary.displacement, dtype=float)
    if np.any(config.R0 + w <= 0.0):
        raise NonPhysical("wall geometry with R0 + w <= 0")
    if boundary.kind == DIRICHLET:
        coeff = np.zeros(n)
        h = np.zeros(n)
    elif boundary.kind == ROBIN:
        coeff = 2.0 * np.pi * (config.R0 + w) / boundary.robin_parameter
        h = np.asarray(boundary.traction, dtype=float)
    else:
        raise ParameterError(f"tube fluid takes Dirichlet or Robin input, got {boundary.kind}")

    system = _TubeSystem(config, prev_state, w, t, dt, coeff, h)
    z = system.pack(prev_state.p, prev_state.u)
    res, scale = system.residual(z)
    norm = _scaled_norm(res, scale)
    stalled = 0
    J = None
    for it in range(config.newton_max_iterations + 1):
        if norm <= eps_problem:
            break
        if it == config.newton_max_iterations or stalled >= 3:
            _raise_failure(J, norm, boundary.kind, config.outlet)
        J = system.jacobian(z)
        try:
            step = np.linalg.solve(J, -res)
        except np.linalg.LinAlgError:
            _raise_failure(J, norm, boundary.kind, config.outlet)
        lam = 1.0
        while True:
            z_try = z + lam * step
            res_try, scale_try = system.residual(z_try)
            norm_try = _scaled_norm(res_try, scale_try)
            if np.isfinite(norm_try) and (norm_try < norm or lam < 1e-3):
                break
            lam *= config.newton_damping
        stalled = stalled + 1 if not norm_try < 0.5 * norm else 0
        z, res, scale, norm = z_try, res_try, scale_try, norm_try
    newton_iterations = it

    p, u = system.unpack(z)
    q = system.wall_flux(p)
    if boundary.kind == ROBIN:
        u_wall = np.asarray(boundary.velocity, dtype=float) + (p - h) / boundary.robin_parameter
    else:
        u_wall = (w - prev_state.w) / dt
    info = {
        "q_wall": q,
        "u_wall": u_wall,
        "newton_iterations": newton_iterations,
        "residual": norm,
        "a": system.a,
        "A": system.A,
    }
    return u, p, p.copy(), info


def _raise_failure(J, norm, kind, outlet):
    singular = J is None or not np.all(np.isfinite(J))
    if not singular:
        singular = np.linalg.cond(J) > 1e12
    if singular and kind == DIRICHLET and outlet == CLOSED:
        raise IncompressibilityDilemma(
            f"fluid step incompatible with the imposed wall motion (residual {norm:.2e}, singular linearization)"
        )
    raise SolverDiverged(f"tube Newton solve stalled at scaled residual {norm:.2e}")


def mass_balance_defect(config, prev_a, a, A, u, q, dt):
    """Relative defect of ``sum (a - a^n) dx = dt (Q_in - Q_out + sum q dx)``."""
    dx = config.dx
    lhs = np.sum(a - prev_a) * dx
    q_in = A[0] * u[0]
    q_out = A[-1] * u[-1]
    rhs = dt * (q_in - q_out + np.sum(q) * dx)
    scale = np.sum(np.abs(a - prev_a)) * dx + dt * (abs(q_in) + abs(q_out) + np.sum(np.abs(q)) * dx)
    if scale == 0.0:
        return 0.0
    return float(abs(lhs - rhs) / scale)


class TubeStructure(SolverAdapter):
    def __init__(self, config, state=None):
        self.config = config
        self.interface_size = config.N
        self.state = state or TubeState.at_rest(config)
        self._trial = (self.state.w, self.state.wdot)
        self.velocity = self.state.wdot.copy()

    def solve(self, boundary):
        if boundary.kind != NEUMANN:
            raise ParameterError(f"tube structure takes Neumann input, got {boundary.kind}")
        boundary.check_size(self.interface_size)
        w, wdot = tube_structure_solve(self.config, boundary.traction, self.state, self.dt)
        self._trial = (w, wdot)
        self.velocity = wdot.copy()
        self.subproblem_converged = True
        return w.copy()

    def commit(self):
        w, wdot = self._trial
        self.state = TubeState(w, wdot, self.state.u, self.state.p, self.config.area(w))


class TubeFluid(SolverAdapter):
    def __init__(self, config, eps_problem=1e-10, state=None):
        self.config = config
        self.eps_problem = eps_problem
        self.interface_size = config.N
        self.state = state or TubeState.at_rest(config)
        self.interface_velocity = np.zeros(config.N)
        self._trial = None
        self.last_info = {}
        self.committed_info = {}

    def solve(self, boundary):
        u, p, traction, info = tube_fluid_solve(self.config, boundary, self.state, self.t, self.dt, self.eps_problem)
        w = np.asarray(boundary.displacement, dtype=float)
        self._trial = TubeState(w.copy(), (w - self.state.w) / self.dt, u, p, info["a"])
        info["mass_defect"] = mass_balance_defect(self.config, self.state.a, info["a"], info["A"], u, info["q_wall"], self.dt)
        self.last_info = info
        self.interface_velocity = info["u_wall"]
        self.subproblem_converged = info["residual"] <= self.eps_problem
        return traction

    def commit(self):
        self.state = self._trial
        self.committed_info = self.last_info
