"""
Coupling schemes on the one-dimensional flexible tube.

With an open outlet every scheme has something to compare against: both
Dirichlet-Neumann variants converge to the same interface state, and
Robin-Neumann with quasi-Newton is swept over the Robin parameter.  With a
closed outlet the fluid volume is fixed by the wall alone and only the
Robin-Neumann scheme survives; there the update strategies are compared.

Run with ``python3 demos/tube_scheme_comparison.py`` (under a minute on
one core).
"""

import numpy as np

from rnqn.accel import IQNILS, IQNIMVLS, AitkenRelaxation
from rnqn.models import build_problem
from rnqn.schemes import ConvergenceConfig, run_simulation

DT, N_STEPS = 2.5e-5, 300


def run(problem, scheme, update, alpha=None):
    return run_simulation(build_problem(problem), scheme, update, ConvergenceConfig(), N_STEPS, DT, alpha)


def line(label, report):
    if report.completed:
        extra = f"mean {report.mean_iterations:6.2f}  max {max(report.iterations):3d}  eps_rel {report.eps_rel:.2e}"
    else:
        extra = f"{report.termination} at step {report.failed_step}"
    print(f"  {label:<28}{extra}")


def main():
    print("open outlet")
    structure_first = run("tube1d_open", "dn_qn_s", IQNIMVLS())
    forces_first = run("tube1d_open", "dn_qn_f", IQNIMVLS())
    line("dn_qn_s imvls", structure_first)
    line("dn_qn_f imvls", forces_first)
    w_s = np.array(structure_first.samples[-1]["w"])
    w_f = np.array(forces_first.samples[-1]["w"])
    print(f"  final wall difference between the two: {np.linalg.norm(w_s - w_f) / np.linalg.norm(w_f):.1e} (relative)")
    for alpha in (1e4, 1e5, 1e6):
        line(f"rn_qn imvls alpha={alpha:.0e}", run("tube1d_open", "rn_qn", IQNIMVLS(), alpha))

    print("\nclosed outlet")
    line("dn_qn_s imvls", run("tube1d_closed", "dn_qn_s", IQNIMVLS()))
    for name, update in (("imvls", IQNIMVLS), ("ils", IQNILS), ("aitken", AitkenRelaxation)):
        line(f"rn_qn {name} alpha=1e+06", run("tube1d_closed", "rn_qn", update(), 1e6))


if __name__ == "__main__":
    main()
