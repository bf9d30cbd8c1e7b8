"""Numerical tolerances used across the package.

The dual solver targets ~1e-9, feasibility checks run two orders looser,
and KKT verdicts sit in between. Tie detection is relative to the
valuation cap so that tie sets stay closed under solver noise.
"""

# absolute tolerance (currency units) for budget / RoS satisfaction checks
TOL_FEAS = 1e-7

# absolute tolerance for KKT residuals and binding-constraint labels
TOL_KKT = 1e-6

# relative tolerance of the LP kernel (feasibility, duality gap)
TOL_LP = 1e-9

# two bids within TIE_REL * v_bar of the item price are treated as tied
TIE_REL = 1e-8

# default relative stopping tolerance of the dual solver
TOL_SOLVER = 1e-9
