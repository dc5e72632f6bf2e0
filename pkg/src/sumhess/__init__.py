"""Numerical toolkit for Neumann problems of sum Hessian equations.

``S_k(D^2 u) = sigma_k(D^2 u) + alpha sigma_{k-1}(D^2 u) = f`` with
``u_nu = phi(x, u)``: elliptic Newton/continuation solvers, the parabolic
flow, and property suites for the underlying cone inequalities.
"""

from .symfun import SumHessianParams

__version__ = "0.1.0"

__all__ = ["SumHessianParams", "__version__"]
