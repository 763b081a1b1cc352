"""One-dimensional Legendre kernels, their antiderivatives, and Gauss quadrature.

Everything on this module works on the reference interval [-1, 1].  The
antiderivative functions ``psi_j`` (with ``psi_j(x) = int_{-1}^x L_j``) are the
building blocks of the hierarchical C0 bases used by the projection and FEM
modules; ``psi_j`` vanishes at both endpoints for j >= 1.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "QuadratureRule",
    "GradedRule",
    "legendre_eval",
    "legendre_table",
    "legendre_deriv_eval",
    "legendre_deriv_table",
    "psi_eval",
    "psi_table",
    "gauss_rule",
    "graded_rule",
]


def legendre_table(nmax: int, x) -> np.ndarray:
    """Table L[n, m] = L_n(x_m) for n = 0..nmax, by the three-term recurrence."""
    x = np.atleast_1d(np.asarray(x, dtype=float))
    table = np.empty((nmax + 1,) + x.shape)
    table[0] = 1.0
    if nmax >= 1:
        table[1] = x
    for n in range(2, nmax + 1):
        table[n] = ((2 * n - 1) * x * table[n - 1] - (n - 1) * table[n - 2]) / n
    return table


def legendre_eval(n: int, x):
    """Evaluate the Legendre polynomial L_n at x (scalar or array)."""
    if n < 0:
        raise ValueError("degree must be non-negative")
    scalar = np.isscalar(x)
    out = legendre_table(n, x)[n]
    return float(out.reshape(-1)[0]) if scalar else out


def legendre_deriv_table(nmax: int, k: int, x) -> np.ndarray:
    """Table of k-th derivatives L_n^(k)(x) for n = 0..nmax.

    Uses the recurrence L^(k)_n = (2n-1) L^(k-1)_{n-1} + L^(k)_{n-2}, applied
    k times starting from the value table.
    """
    x = np.atleast_1d(np.asarray(x, dtype=float))
    table = legendre_table(nmax, x)
    for _ in range(k):
        prev = table
        table = np.zeros_like(prev)
        for n in range(1, nmax + 1):
            table[n] = (2 * n - 1) * prev[n - 1]
            if n >= 2:
                table[n] += table[n - 2]
    return table


def legendre_deriv_eval(n: int, k: int, x):
    """Evaluate L_n^(k)(x); identically zero once k exceeds n."""
    if n < 0 or k < 0:
        raise ValueError("degree and derivative order must be non-negative")
    scalar = np.isscalar(x)
    if k > n:
        out = np.zeros(np.shape(np.atleast_1d(x)))
    else:
        out = legendre_deriv_table(n, k, x)[n]
    return float(out.reshape(-1)[0]) if scalar else out


def psi_table(jmax: int, x) -> np.ndarray:
    """Table psi_j(x) for j = 0..jmax.

    psi_0(x) = x + 1 and, for j >= 1,
    psi_j(x) = -(1 - x^2) L_j'(x) / (j (j+1)), which equals int_{-1}^x L_j.
    """
    x = np.atleast_1d(np.asarray(x, dtype=float))
    table = np.empty((jmax + 1,) + x.shape)
    table[0] = x + 1.0
    if jmax >= 1:
        dtab = legendre_deriv_table(jmax, 1, x)
        for j in range(1, jmax + 1):
            table[j] = -(1.0 - x * x) * dtab[j] / (j * (j + 1))
    return table


def psi_eval(j: int, x):
    """Evaluate the Legendre antiderivative psi_j at x."""
    if j < 0:
        raise ValueError("index must be non-negative")
    scalar = np.isscalar(x)
    out = psi_table(j, x)[j]
    return float(out.reshape(-1)[0]) if scalar else out


@dataclass(frozen=True)
class QuadratureRule:
    """Nodes/weights on [-1, 1], exact for polynomials up to exactness_degree."""

    nodes: np.ndarray
    weights: np.ndarray
    exactness_degree: int

    def __post_init__(self):
        self.nodes.flags.writeable = False
        self.weights.flags.writeable = False

    def integrate(self, f) -> float:
        return float(np.dot(self.weights, f(self.nodes)))


def gauss_rule(n: int) -> QuadratureRule:
    """Gauss-Legendre rule with n nodes (the roots of L_n), exact to degree 2n-1.

    Nodes are found by Newton iteration from Chebyshev initial guesses,
    tolerance 1e-15, at most 100 sweeps; weights are 2 / ((1-x^2) L_n'(x)^2).
    """
    if n < 1:
        raise ValueError("node count must be >= 1")
    i = np.arange(n)
    x = np.cos(np.pi * (4 * i + 3) / (4 * n + 2))
    for _ in range(100):
        tab = legendre_deriv_table(n, 1, x)
        val = legendre_table(n, x)[n]
        dx = val / tab[n]
        x = x - dx
        if np.max(np.abs(dx)) < 1e-15:
            break
    x = 0.5 * (x - x[::-1])  # enforce symmetry exactly
    dL = legendre_deriv_table(n, 1, x)[n]
    w = 2.0 / ((1.0 - x * x) * dL * dL)
    order = np.argsort(x)
    return QuadratureRule(nodes=x[order], weights=w[order], exactness_degree=2 * n - 1)


@dataclass(frozen=True)
class GradedRule:
    """Composite Gauss rule on [-1, 1], geometrically refined toward one endpoint.

    ``layers`` geometric splits produce ``layers + 1`` cells whose widths shrink
    by the ratio toward ``marked_end``; the per-cell rule is ``base``.  The
    flattened composite nodes/weights are exposed for tensorization.
    """

    base: QuadratureRule
    breakpoints: np.ndarray
    ratio: float
    layers: int
    marked_end: int
    nodes: np.ndarray = field(init=False)
    weights: np.ndarray = field(init=False)

    def __post_init__(self):
        xs, ws = [], []
        for a, b in zip(self.breakpoints[:-1], self.breakpoints[1:]):
            half = 0.5 * (b - a)
            xs.append(0.5 * (a + b) + half * self.base.nodes)
            ws.append(half * self.base.weights)
        object.__setattr__(self, "nodes", np.concatenate(xs))
        object.__setattr__(self, "weights", np.concatenate(ws))
        for arr in (self.nodes, self.weights, self.breakpoints):
            arr.flags.writeable = False

    def integrate(self, f) -> float:
        return float(np.dot(self.weights, f(self.nodes)))


def graded_rule(sigma: float, layers: int, per_cell_order: int,
                marked_end: int = -1) -> GradedRule:
    """Composite rule with breakpoints at marked_end + 2*sigma^j, j = layers..1.

    One layer with sigma = 1/2 is the plain per-cell rule on the two halves.
    Layers beyond floating-point resolution (innermost width below ~2e-12,
    where high-order nodes would round onto the marked endpoint) are clamped.
    """
    if not 0.0 < sigma < 1.0:
        raise ValueError("grading ratio must lie in (0, 1)")
    if layers < 1:
        raise ValueError("layers must be >= 1")
    if marked_end not in (-1, 1):
        raise ValueError("marked_end must be -1 or +1")
    layers = min(layers, max(1, int(np.floor(np.log(1e-12) / np.log(sigma)))))
    offsets = np.concatenate(([0.0], 2.0 * sigma ** np.arange(layers, 0, -1), [2.0]))
    if marked_end == -1:
        pts = -1.0 + offsets
    else:
        pts = (1.0 - offsets)[::-1].copy()
    return GradedRule(base=gauss_rule(per_cell_order), breakpoints=pts,
                      ratio=sigma, layers=layers, marked_end=marked_end)
