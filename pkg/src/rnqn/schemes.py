"""
Partitioned coupling loops.

Three per-step loops share one convergence test:

* ``run_dn_step`` iterates on the displacement (fluid first, then structure);
  with a quasi-Newton update this is the DN-QN(S) scheme.
* ``run_dn_forces_step`` swaps the solver order and iterates on the fluid
  traction, giving DN-QN(F).
* ``run_rn_step`` feeds the traction back into a Robin condition for the
  fluid.  Without an update this is plain RN; with one it is RN-QN.

``run_simulation`` wraps one of them in a time loop and records failures
instead of raising them.
"""

import time
from dataclasses import dataclass, field

import numpy as np

from .accel import NoUpdate
from .errors import (
    CouplingError,
    IncompressibilityDilemma,
    MaxIterationsExceeded,
    ParameterError,
)
from .interface import BoundaryData
from .metrics import FluxAccumulator, IterationStats, accumulate_eps_rel

SCHEMES = ("dn", "dn_qn_s", "dn_qn_f", "rn", "rn_qn")
NORM_FLOOR = 1e-12

COMPLETED = "completed"
DIVERGED = "diverged"
DILEMMA = "dilemma"


@dataclass(frozen=True)
class ConvergenceConfig:
    eps_coupling: float = 1e-6
    eps_problem: float = 1e-10
    max_coupling_iterations: int = 500

    def __post_init__(self):
        if not self.eps_coupling > 0.0 or not self.eps_problem > 0.0:
            raise ParameterError("tolerances must be positive")
        if int(self.max_coupling_iterations) != self.max_coupling_iterations or self.max_coupling_iterations < 1:
            raise ParameterError("max_coupling_iterations must be an integer >= 1")


def relative_norm(diff, ref):
    return float(np.linalg.norm(diff) / max(np.linalg.norm(ref), NORM_FLOOR))


@dataclass
class CouplingState:
    """Loop state after the latest coupling iteration."""

    k: int = 0
    x_in: np.ndarray = None
    x_out_raw: np.ndarray = None
    residual_norm_rel: float = np.inf
    secondary_change_rel: float = np.inf
    eps_coupling: float = 1e-6

    @property
    def criterion_I_met(self):
        return self.residual_norm_rel <= self.eps_coupling and self.secondary_change_rel <= self.eps_coupling


def check_convergence(state, config, fluid_flag, structure_flag):
    """Both coupled fields settled and both subproblems solved to tolerance."""
    return bool(
        state.residual_norm_rel <= config.eps_coupling
        and state.secondary_change_rel <= config.eps_coupling
        and fluid_flag
        and structure_flag
    )


@dataclass
class TimeStepReport:
    iterations: int
    displacement: np.ndarray
    traction: np.ndarray
    seed_displacement: np.ndarray
    seed_traction: np.ndarray
    residual_norms: list = field(default_factory=list)


def _iterate(first, second, make_first_input, make_second_input, x0, secondary0, update, config, primary_is_displacement):
    """
    Generic loop: ``x`` feeds ``first``, whose output feeds ``second``, whose
    output ``x_tilde`` is updated into the next ``x``.
    """
    update.start_step()
    state = CouplingState(eps_coupling=config.eps_coupling)
    x = np.array(x0, dtype=float)
    secondary_prev = np.array(secondary0, dtype=float)
    norms = []
    for k in range(1, config.max_coupling_iterations + 1):
        y = first.solve(make_first_input(x))
        x_tilde = second.solve(make_second_input(y, x))
        state.k = k
        state.x_in = x
        state.x_out_raw = x_tilde
        state.residual_norm_rel = relative_norm(x_tilde - x, x_tilde)
        state.secondary_change_rel = relative_norm(y - secondary_prev, y)
        norms.append(float(np.linalg.norm(x_tilde - x)))
        x_next = update.update(x, x_tilde)
        if check_convergence(state, config, first.subproblem_converged, second.subproblem_converged):
            update.end_step()
            first.commit()
            second.commit()
            if primary_is_displacement:
                return TimeStepReport(k, x_tilde, y, x_next, y, norms)
            return TimeStepReport(k, y, x_tilde, y, x_next, norms)
        x = x_next
        secondary_prev = y
    raise MaxIterationsExceeded(
        f"no convergence within {config.max_coupling_iterations} coupling iterations", config.max_coupling_iterations
    )


def run_dn_step(fluid, structure, update, state, config):
    """
    Dirichlet-Neumann step iterating on the displacement.

    ``state`` is the ``(displacement, traction)`` seed from the previous step.
    """
    d0, h0 = state
    return _iterate(
        fluid,
        structure,
        lambda d: BoundaryData.dirichlet(d),
        lambda h, d: BoundaryData.neumann(h),
        d0,
        h0,
        update or NoUpdate(),
        config,
        primary_is_displacement=True,
    )


def run_dn_forces_step(fluid, structure, update, state, config):
    """Dirichlet-Neumann step with the structure first, iterating on the traction."""
    d0, h0 = state
    return _iterate(
        structure,
        fluid,
        lambda h: BoundaryData.neumann(h),
        lambda d, h: BoundaryData.dirichlet(d),
        h0,
        d0,
        update or NoUpdate(),
        config,
        primary_is_displacement=False,
    )


def run_rn_step(fluid, structure, robin_parameter, update, state, config):
    """
    Robin-Neumann step.

    The structure takes the current traction ``h``; the fluid takes a Robin
    condition built from the new wall position and velocity, the same ``h``
    and the Robin parameter.  The updated traction drives the next
    iteration and seeds the next time step.
    """
    if robin_parameter is None or not robin_parameter > 0.0:
        raise ParameterError(f"Robin parameter must be positive, got {robin_parameter}")
    d0, h0 = state
    return _iterate(
        structure,
        fluid,
        lambda h: BoundaryData.neumann(h),
        lambda d, h: BoundaryData.robin(d, structure.velocity, h, robin_parameter),
        h0,
        d0,
        update or NoUpdate(),
        config,
        primary_is_displacement=False,
    )


@dataclass
class RunReport:
    problem: str
    scheme: str
    update: dict
    robin_parameter: float
    n_steps: int
    dt: float
    iterations: list = field(default_factory=list)
    eps_rel: float = 0.0
    termination: str = COMPLETED
    failed_step: int = None
    message: str = ""
    samples: list = field(default_factory=list)
    diagnostics: list = field(default_factory=list)
    first_step_iterates: list = field(default_factory=list)
    wall_clock_seconds: float = 0.0
    config: dict = None

    @property
    def mean_iterations(self):
        return float(np.mean(self.iterations)) if self.iterations else float("nan")

    @property
    def completed(self):
        return self.termination == COMPLETED

    @property
    def termination_label(self):
        if self.termination == COMPLETED:
            return COMPLETED
        return f"{self.termination}({self.failed_step})"

    def to_dict(self):
        return {
            "problem": self.problem,
            "scheme": self.scheme,
            "update": self.update,
            "robin_parameter": self.robin_parameter,
            "n_steps": self.n_steps,
            "dt": self.dt,
            "iterations": list(self.iterations),
            "mean_iterations": None if not self.iterations else self.mean_iterations,
            "eps_rel": self.eps_rel,
            "termination": self.termination,
            "failed_step": self.failed_step,
            "message": self.message,
            "samples": self.samples,
            "diagnostics": self.diagnostics,
            "wall_clock_seconds": self.wall_clock_seconds,
            "config": self.config,
        }


class _Recorder:
    """Wraps an update strategy to keep the loop inputs of the first step."""

    def __init__(self, inner, sink):
        self.inner = inner
        self.sink = sink

    def start_step(self):
        self.inner.start_step()

    def end_step(self):
        self.inner.end_step()

    def update(self, x, x_tilde):
        x_next = self.inner.update(x, x_tilde)
        self.sink.append(np.array(x_next))
        return x_next


def run_simulation(
    problem,
    scheme,
    update=None,
    config=None,
    n_steps=1,
    dt=0.01,
    robin_parameter=None,
    sample_stride=1,
    record_first_step=False,
):
    """
    Advance ``problem`` over ``n_steps`` coupled time steps.

    Parameters
    ----------
    problem : rnqn.models.Problem
    scheme : str
        ``dn``, ``dn_qn_s``, ``dn_qn_f``, ``rn`` or ``rn_qn``.
    update : UpdateStrategy, optional
        Defaults to no update.
    config : ConvergenceConfig, optional
    n_steps : int
    dt : float
    robin_parameter : float, optional
        Required by the Robin schemes.
    sample_stride : int
        Keep a trajectory sample every ``sample_stride`` steps (0 disables).
    record_first_step : bool
        Keep the update outputs of every coupling iteration of step 1.

    Returns
    -------
    RunReport
        Failures inside a step end the run and are recorded, not raised.
    """
    if scheme not in SCHEMES:
        raise ParameterError(f"unknown scheme {scheme!r}")
    if int(n_steps) != n_steps or n_steps < 1:
        raise ParameterError("n_steps must be an integer >= 1")
    if not dt > 0.0:
        raise ParameterError("dt must be positive")
    config = config or ConvergenceConfig()
    update = update or NoUpdate()

    report = RunReport(
        problem=problem.name,
        scheme=scheme,
        update=update.describe(),
        robin_parameter=robin_parameter,
        n_steps=int(n_steps),
        dt=dt,
    )
    stats = IterationStats()
    acc = FluxAccumulator(problem.V0)
    seed = problem.initial_fields()
    clock = time.perf_counter()

    for n in range(1, int(n_steps) + 1):
        t = n * dt
        problem.fluid.begin_step(t, dt)
        problem.structure.begin_step(t, dt)
        step_update = _Recorder(update, report.first_step_iterates) if (record_first_step and n == 1) else update
        try:
            if scheme in ("dn", "dn_qn_s"):
                result = run_dn_step(problem.fluid, problem.structure, step_update, seed, config)
            elif scheme == "dn_qn_f":
                result = run_dn_forces_step(problem.fluid, problem.structure, step_update, seed, config)
            else:
                result = run_rn_step(problem.fluid, problem.structure, robin_parameter, step_update, seed, config)
            acc = accumulate_eps_rel(acc, problem.artificial_flux_rate(), problem.volume_rate_total(t), dt)
        except IncompressibilityDilemma as exc:
            report.termination, report.failed_step, report.message = DILEMMA, n, str(exc)
            break
        except (CouplingError, ArithmeticError, np.linalg.LinAlgError) as exc:
            report.termination, report.failed_step, report.message = DIVERGED, n, f"{type(exc).__name__}: {exc}"
            break
        stats.add(result.iterations)
        seed = (result.seed_displacement, result.seed_traction)
        if scheme in ("dn", "dn_qn_s"):
            # Displacement iterations start from the velocity extrapolation of the converged wall.
            seed = (seed[0] + dt * problem.structure.velocity, seed[1])
        diag = problem.step_diagnostics()
        if diag:
            report.diagnostics.append(diag)
        if sample_stride and (n % sample_stride == 0 or n == n_steps):
            report.samples.append(problem.sample(t))

    report.iterations = stats.per_step
    report.eps_rel = acc.eps_rel
    report.wall_clock_seconds = time.perf_counter() - clock
    return report
