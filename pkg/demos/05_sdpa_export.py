"""
Exporting the synthesis LMI for external SDP solvers
====================================================

The synthesis inequality is a standard semidefinite feasibility problem,
so it can be handed to any solver that reads the SDPA sparse format.
The export has two PSD blocks (the rate inequality and X >= margin I)
and variable order: upper triangle of X row-major, then Y row-major.
"""

import numpy as np

from stochlyap import assemble, factorize, second_moment_analytic, solve_feasibility
from stochlyap import sdpa
from stochlyap.dist import Constant, DistributionSpec
from stochlyap.sysmodel import AffineForm

A = np.array([[1.1, 0.3], [0.0, 0.7]])
B = np.array([[0.0], [1.0]])
dist = DistributionSpec((Constant(0.0),))
model = AffineForm((A, np.zeros((2, 2))), dist, (B, np.zeros((2, 1))))

data = second_moment_analytic(model)
problem = assemble(factorize(data), lam=0.9, margin=1e-6)
print(f"LMI block: {problem.dim} x {problem.dim}, "
      f"{problem.num_vars} scalar variables")

sdpa.write_problem(problem, "demo_problem.dat-s")
print("wrote demo_problem.dat-s")
with open("demo_problem.dat-s") as f:
    for line in list(f)[:6]:
        print("  " + line.rstrip())
print("  ...")

# the reference backend solves the same problem in-process
res = solve_feasibility(problem)
print(f"\nreference backend: {res.status} after {res.iterations} iterations")
if res.feasible:
    F = res.Y @ np.linalg.inv(res.X)
    print("gain F =", np.round(F, 4),
          " closed-loop eigenvalues:", np.round(np.linalg.eigvals(A + B @ F), 4))

# an externally produced solution file (xVec = {...}) can be re-imported:
v = np.concatenate([[res.X[0, 0], res.X[0, 1], res.X[1, 1]], res.Y.ravel()])
with open("demo_solution.out", "w") as f:
    f.write("xVec = {" + ",".join(f"{x:.17g}" for x in v) + "}\n")
res2 = solve_feasibility(problem, backend="sdpa-export:demo_problem.dat-s:demo_solution.out")
print("re-imported solution status:", res2.status)
