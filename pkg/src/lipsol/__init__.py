"""
lipsol: Lipschitz-continuous solution maps for parametric QPs.

The polyhedral feasible set K(x) of a parametric QP is replaced by the ball
inscribed around a feasible selection pi_f(x), which gives a closed-form,
Lipschitz solution map. The package also ships the exact QP oracle, the QCQP
variant, feasible-point providers and a regularity-analysis harness.
"""

__version__ = "0.1.0"
