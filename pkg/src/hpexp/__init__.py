"""p-version approximation on tensor-product elements.

Legendre expansion machinery, L2/H1 projections onto full tensor-product,
total-degree and serendipity spaces, the Gamma-ratio error-bound toolbox, and
conforming/discontinuous Galerkin Poisson solvers for exponential-convergence
experiments under p-refinement.
"""

__version__ = "0.1.0"
