"""
Finite elements and their reference tensors
===========================================

Each built-in element is one symmetric mother function psi stored as exact
piecewise polynomials, together with its shift set.  Everything the lattice
scheme needs is derived from inner products of psi against shifted copies of
itself, computed by Gauss rules that are exact for the polynomial integrands.
"""

import numpy as np

from femspde import build_element, compute_reference_tensors, evaluate_psi

# -- the classical 1-D hat ---------------------------------------------------

hat = build_element("hat1d")
print("hat1d")
print("  neighbor set Gamma:", hat.gamma)
print("  psi(0) =", evaluate_psi(hat, (0.0,)), "  psi(0.5) =", evaluate_psi(hat, (0.5,)))

tensors = compute_reference_tensors(hat)
print("  mass row      R_0, R_1   =", tensors.r((0,)), ",", tensors.r((1,)))
print("  stiffness     R11_0, R11_1 =", tensors.rab((0,), 1, 1), ",", tensors.rab((1,), 1, 1))
print("  first deriv   R1_{+1}    =", tensors.rbeta((1,), 1))

# The mass row sums to one and the stiffness row to zero; these are the
# zeroth compatibility identities that make the scheme consistent.
print("  sum R  =", sum(tensors.r(lam) for lam in tensors.gamma))
print("  sum R11 =", sum(tensors.rab(lam, 1, 1) for lam in tensors.gamma))

# -- the P1 element on the criss-cross triangulation -------------------------

tri = build_element("triangle2d")
tri_tensors = compute_reference_tensors(tri)
print("\ntriangle2d")
print("  |Gamma| =", len(tri.gamma), "(six neighbors plus the origin)")
print("  (psi, psi) =", tri_tensors.r((0, 0)), " neighbor overlap =", tri_tensors.r((1, 0)))

# -- products of hats in any dimension ---------------------------------------

ten = build_element("tensor(2)")
ten_tensors = compute_reference_tensors(ten)
print("\ntensor(2)")
print("  |Gamma| =", len(ten.gamma), "(the full 3x3 neighborhood)")
print("  R factorizes:", ten_tensors.r((1, 0)), "=", 1 / 6 * 2 / 3)

# Evaluating psi anywhere is exact piecewise-polynomial evaluation:
pts = np.array([[0.25, 0.25], [0.75, -0.25], [1.5, 0.0]])
print("  psi at", pts.tolist(), "->", ten.evaluate_many(pts))
