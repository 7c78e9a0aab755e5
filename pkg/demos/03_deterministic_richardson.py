"""
Richardson acceleration of the deterministic scheme
===================================================

A second-order lattice solution whose error expands in even powers of h can
be upgraded to fourth order by mixing it with the solution on the half mesh:
with weights (-1/3, 4/3) the h^2 terms cancel and the h^4 remainder leads.

This script runs the mesh ladder study on a variable-coefficient heat
problem, prints both convergence tables, and shows that the wrong mixture
spacing (as if the expansion stepped in h^4) fails to accelerate.
"""

import os

import numpy as np

from femspde import build_element, compute_reference_tensors, parse_problem_text
from femspde.richardson import write_loglog_svg
from femspde.study import StudyConfig, run_convergence_study

PROBLEM = """
a.1.1 = "1 + 0.25*cos(x1)"
b.1 = "0.1"
c = "-0.2"
f = "sin(x1)"
phi = "sin(x1)"
"""

element = build_element("hat1d")
tensors = compute_reference_tensors(element)
problem = parse_problem_text(PROBLEM)

cfg = StudyConfig(
    L=2 * np.pi,
    ladder_n=[16, 32, 64, 128],
    ref_n=512,
    T=0.5,
    jbar=1,
    ratio=0.25,  # per-halving factor of the leading (h^2) error term
)
result = run_convergence_study(element, tensors, problem, cfg)

print(f"time grid: {result.steps} steps of dt = {result.dt:.3e} shared by all meshes\n")
for report in result.reports():
    print(f"--- {report.label} (fitted order {report.fitted_order:.3f}) ---")
    print(report.to_csv())

# One extra level buys two orders: the base scheme fits ~2, the mixture ~4.

# The mixture spacing is a config parameter; the 1/16 spacing would only be
# right if the error stepped in h^4, and the measured order shows it is not:
wrong = run_convergence_study(
    element, tensors, problem,
    StudyConfig(L=2 * np.pi, ladder_n=[16, 32, 64, 128], ref_n=512, T=0.5,
                jbar=1, ratio=0.0625),
)
print(f"mixture with 1/16 spacing: fitted order {wrong.mixture.fitted_order:.3f} "
      "(the h^2 term survives)")

os.makedirs("demo_output", exist_ok=True)
write_loglog_svg("demo_output/richardson.svg", result.reports())
print("\nlog-log plot written to demo_output/richardson.svg")
