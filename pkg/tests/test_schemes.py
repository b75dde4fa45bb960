import numpy as np
import pytest

from rnqn.accel import IQNILS, IQNIMVLS, ConstantRelaxation
from rnqn.errors import IncompressibilityDilemma, MaxIterationsExceeded, ParameterError
from rnqn.models import build_problem
from rnqn.models.affine import AffineProblemConfig
from rnqn.schemes import (
    ConvergenceConfig,
    CouplingState,
    check_convergence,
    run_dn_forces_step,
    run_dn_step,
    run_rn_step,
    run_simulation,
)

DT_TUBE = 2.5e-5


def affine_problem(m=3, contraction=0.5, seed=0):
    rng = np.random.default_rng(seed)
    q, _ = np.linalg.qr(rng.standard_normal((m, m)))
    A_s = contraction * q
    params = {"A_s": A_s, "A_f": np.eye(m), "b_s": rng.standard_normal(m), "b_f": rng.standard_normal(m)}
    return build_problem("affine", params), AffineProblemConfig(**params)


def started(problem, t=1.0, dt=1.0):
    problem.fluid.begin_step(t, dt)
    problem.structure.begin_step(t, dt)
    return problem


class CountingUpdate:
    """Pass-through wrapper that records what the inner strategy reports."""

    def __init__(self, inner):
        self.inner = inner
        self.infos = []

    def start_step(self):
        self.inner.start_step()

    def end_step(self):
        self.inner.end_step()

    def update(self, x, x_tilde):
        out = self.inner.update(x, x_tilde)
        self.infos.append(dict(self.inner.last_info))
        return out


# --- convergence test ---------------------------------------------------------------------


def test_check_convergence_examples():
    cfg = ConvergenceConfig(eps_coupling=1e-6)
    done = CouplingState(residual_norm_rel=0.0, secondary_change_rel=0.0)
    assert check_convergence(done, cfg, True, True)
    assert not check_convergence(CouplingState(residual_norm_rel=1e-9, secondary_change_rel=0.0), cfg, False, True)
    assert not check_convergence(CouplingState(residual_norm_rel=1e-5, secondary_change_rel=0.0), cfg, True, True)
    assert not check_convergence(CouplingState(residual_norm_rel=1e-9, secondary_change_rel=1e-3), cfg, True, True)


def test_convergence_config_validation():
    with pytest.raises(ParameterError):
        ConvergenceConfig(eps_coupling=0.0)
    with pytest.raises(ParameterError):
        ConvergenceConfig(max_coupling_iterations=0)


# --- Dirichlet-Neumann ------------------------------------------------------------------------


def test_dn_plain_iteration_on_contraction():
    problem, _ = affine_problem()
    report = run_dn_step(*_adapters(problem), ConstantRelaxation(1.0), problem.initial_fields(), ConvergenceConfig())
    assert report.iterations <= 45


def _adapters(problem):
    started(problem)
    return problem.fluid, problem.structure


@pytest.mark.parametrize("m", [2, 5])
def test_dn_ils_reaches_fixed_point_in_m_plus_two(m):
    problem, cfg = affine_problem(m=m, contraction=0.5, seed=m)
    with pytest.raises(MaxIterationsExceeded):
        # A relative tolerance below round-off cannot be met; the residual trace is what matters.
        run_dn_step(*_adapters(problem), IQNILS(), problem.initial_fields(), ConvergenceConfig(1e-30, 1e-10, m + 2))
    problem, cfg = affine_problem(m=m, contraction=0.5, seed=m)
    report = run_dn_step(*_adapters(problem), IQNILS(), problem.initial_fields(), ConvergenceConfig(1e-13))
    assert min(report.residual_norms[: m + 2]) <= 1e-12
    d, _ = cfg.fixed_point()
    assert np.allclose(report.displacement, d, atol=1e-11)


def test_dn_kinematic_continuity_on_exit():
    problem, _ = affine_problem()
    cfg = ConvergenceConfig(1e-6)
    report = run_dn_step(*_adapters(problem), IQNILS(), problem.initial_fields(), cfg)
    assert report.residual_norms[-1] <= cfg.eps_coupling * np.linalg.norm(report.displacement)


def test_dn_forces_reaches_same_fixed_point():
    p1, cfg = affine_problem(m=4)
    p2, _ = affine_problem(m=4)
    conv = ConvergenceConfig(1e-10)
    a = run_dn_step(*_adapters(p1), IQNILS(), p1.initial_fields(), conv)
    counter = CountingUpdate(IQNILS())
    b = run_dn_forces_step(*_adapters(p2), counter, p2.initial_fields(), conv)
    assert np.allclose(a.displacement, b.displacement, atol=1e-8)
    assert np.allclose(a.traction, b.traction, atol=1e-8)
    assert counter.infos[0]["omega"] == 0.1  # first iteration is a relaxation step


@pytest.mark.parametrize("step", [run_dn_step, run_dn_forces_step])
def test_dn_variants_hit_the_dilemma_on_the_balloon(step):
    problem = started(build_problem("balloon0d"), 0.01, 0.01)
    with pytest.raises(IncompressibilityDilemma):
        step(problem.fluid, problem.structure, IQNILS(), problem.initial_fields(), ConvergenceConfig())


def test_iterations_equal_fluid_calls():
    problem, _ = affine_problem()
    calls = []
    solve = problem.fluid.solve
    problem.fluid.solve = lambda b: calls.append(1) or solve(b)
    report = run_dn_step(*_adapters(problem), IQNILS(), problem.initial_fields(), ConvergenceConfig())
    assert report.iterations == len(calls)


# --- Robin-Neumann ----------------------------------------------------------------------------------


def test_rn_qn_balloon_robin_closure():
    problem = build_problem("balloon0d", {"mu_f": 0.0})
    alpha = 1e4
    cfg = ConvergenceConfig()
    update = IQNIMVLS()
    seed = problem.initial_fields()
    for n in range(1, 40):
        started(problem, n * 0.01, 0.01)
        report = run_rn_step(problem.fluid, problem.structure, alpha, update, seed, cfg)
        seed = (report.seed_displacement, report.seed_traction)
        mismatch = abs(problem.structure.velocity[0] - problem.fluid.interface_velocity[0])
        assert mismatch <= report.residual_norms[-1] / alpha * (1 + 1e-9) + 1e-15
        assert report.residual_norms[-1] <= cfg.eps_coupling * np.linalg.norm(report.traction)


def test_rn_large_alpha_matches_dn_forces_on_open_tube():
    cfg = ConvergenceConfig(eps_coupling=1e-8)
    p1 = started(build_problem("tube1d_open"), DT_TUBE, DT_TUBE)
    p2 = started(build_problem("tube1d_open"), DT_TUBE, DT_TUBE)
    ref = run_dn_forces_step(p1.fluid, p1.structure, IQNILS(), p1.initial_fields(), cfg)
    rob = run_rn_step(p2.fluid, p2.structure, 1e12, IQNILS(), p2.initial_fields(), cfg)
    assert np.linalg.norm(rob.traction - ref.traction) <= 1e-6 * np.linalg.norm(ref.traction)
    assert np.linalg.norm(rob.displacement - ref.displacement) <= 1e-6 * np.linalg.norm(ref.displacement)


def test_plain_rn_slows_down_as_alpha_shrinks():
    means = []
    for alpha in (3e3, 1e3, 3e2):
        report = run_simulation(build_problem("balloon0d"), "rn", None, ConvergenceConfig(), 20, 0.01, alpha)
        assert report.completed
        means.append(report.mean_iterations)
    assert means[0] < means[1] < means[2]


def test_rn_rejects_bad_robin_parameter():
    problem = started(build_problem("balloon0d"), 0.01, 0.01)
    with pytest.raises(ParameterError):
        run_rn_step(problem.fluid, problem.structure, 0.0, None, problem.initial_fields(), ConvergenceConfig())


# --- time loop -----------------------------------------------------------------------------------------


def test_run_simulation_rejects_bad_input():
    with pytest.raises(ParameterError):
        run_simulation(build_problem("balloon0d"), "rn_qn", IQNIMVLS(), None, 0, 0.01, 1e4)
    with pytest.raises(ParameterError):
        run_simulation(build_problem("balloon0d"), "rn_qn", IQNIMVLS(), None, 1, -0.01, 1e4)
    with pytest.raises(ParameterError):
        run_simulation(build_problem("balloon0d"), "xx", IQNIMVLS(), None, 1, 0.01, 1e4)


def test_balloon_rn_qn_full_run():
    report = run_simulation(build_problem("balloon0d"), "rn_qn", IQNIMVLS(), ConvergenceConfig(), 500, 0.01, 1e4)
    assert report.completed and len(report.iterations) == 500
    assert np.isfinite(report.mean_iterations) and min(report.iterations) >= 1
    assert len(report.samples) == 500


def test_failures_are_recorded_not_raised():
    report = run_simulation(build_problem("balloon0d"), "dn_qn_s", IQNILS(), ConvergenceConfig(), 5, 0.01)
    assert report.termination == "dilemma" and report.failed_step == 1 and report.iterations == []
    report = run_simulation(build_problem("balloon0d"), "rn", None, ConvergenceConfig(max_coupling_iterations=5), 5, 0.01, 1e2)
    assert report.termination == "diverged" and report.failed_step == 1


def test_runs_are_deterministic():
    a = run_simulation(build_problem("tube1d_closed"), "rn_qn", IQNIMVLS(), ConvergenceConfig(), 20, DT_TUBE, 1e6)
    b = run_simulation(build_problem("tube1d_closed"), "rn_qn", IQNIMVLS(), ConvergenceConfig(), 20, DT_TUBE, 1e6)
    da, db = a.to_dict(), b.to_dict()
    da.pop("wall_clock_seconds")
    db.pop("wall_clock_seconds")
    assert da == db


def test_dn_schemes_agree_on_affine_fixed_point():
    p1, cfg = affine_problem(m=5, contraction=1.3, seed=7)
    p2, _ = affine_problem(m=5, contraction=1.3, seed=7)
    conv = ConvergenceConfig(1e-6)
    a = run_simulation(p1, "dn_qn_s", IQNILS(), conv, 1, 1.0)
    b = run_simulation(p2, "dn_qn_f", IQNILS(), conv, 1, 1.0)
    d_s, d_f = np.array(a.samples[-1]["d"]), np.array(b.samples[-1]["d"])
    assert np.linalg.norm(d_s - d_f) <= 10 * conv.eps_coupling * np.linalg.norm(d_f)
