"""Tensorized Legendre expansions on the reference element (-1,1)^d.

A function is represented by its Legendre coefficient tensor a_i, with
a_i = prod_k (2 i_k + 1)/2 * int u(x) prod_k L_{i_k}(x_k) dx.  Differentiation,
L2 norms, Sobolev seminorms and the weighted seminorms

    |u|_{V^s}^2 = sum_{|alpha| = s} sum_{i >= alpha} a_i^2
                  prod_k 2/(2 i_k + 1) * Gamma(i_k + alpha_k + 1)/Gamma(i_k - alpha_k + 1)

are all exact operations in coefficient space; quadrature only enters when a
function oracle is expanded.
"""

from __future__ import annotations

from dataclasses import dataclass
from itertools import product
from typing import Callable, Optional

import numpy as np
from scipy.special import gammaln

from .orthopoly import gauss_rule, legendre_table

__all__ = [
    "CoeffTensor",
    "FunctionOracle",
    "InsufficientQuadratureError",
    "expand",
    "reference_expansion",
    "evaluate",
    "differentiate",
    "l2_norm",
    "mode_energy_norm",
    "sobolev_seminorm",
    "weighted_seminorm",
    "compositions",
    "named_function",
]

DEFAULT_REFERENCE_MARGIN = 20
TAIL_ENERGY_TOLERANCE = 1e-14


class InsufficientQuadratureError(ValueError):
    """Raised when a quadrature order cannot resolve the requested degrees."""


@dataclass(frozen=True)
class CoeffTensor:
    """Legendre coefficient tensor of a function on (-1,1)^d.

    ``coeffs[i1, ..., id]`` multiplies prod_k L_{i_k}; ``tail_trusted`` records
    whether the outermost coefficient band was verified negligible, so that
    truncation-based error measurements against this tensor are defensible.
    """

    coeffs: np.ndarray
    tail_trusted: bool = True

    def __post_init__(self):
        self.coeffs.flags.writeable = False

    @property
    def dim(self) -> int:
        return self.coeffs.ndim

    @property
    def degrees(self) -> tuple[int, ...]:
        return tuple(n - 1 for n in self.coeffs.shape)


@dataclass(frozen=True)
class FunctionOracle:
    """Point evaluator on the closed reference element, plus optional extras.

    ``f`` takes d broadcastable coordinate arrays.  ``gradient`` (optional)
    returns the d partial derivatives, used by solvers for error measurement.
    """

    dim: int
    f: Callable[..., np.ndarray]
    gradient: Optional[Callable[..., tuple[np.ndarray, ...]]] = None
    name: str = ""


def _weight_vectors(shape) -> list[np.ndarray]:
    return [2.0 / (2.0 * np.arange(n) + 1.0) for n in shape]


def _weight_tensor(shape) -> np.ndarray:
    vecs = _weight_vectors(shape)
    out = vecs[0]
    for v in vecs[1:]:
        out = np.multiply.outer(out, v)
    return out


def expand(f: FunctionOracle, degrees, quad_order: int) -> CoeffTensor:
    """Expand an oracle into Legendre coefficients by tensor Gauss quadrature.

    Exact (to roundoff) whenever f is a polynomial within the degree budget and
    quad_order resolves the products f * L_i.
    """
    degrees = tuple(int(m) for m in degrees)
    if len(degrees) != f.dim:
        raise ValueError("degree tuple does not match oracle dimension")
    if quad_order < max(degrees) + 1:
        raise InsufficientQuadratureError(
            f"quad_order {quad_order} cannot resolve degree {max(degrees)}")
    rule = gauss_rule(quad_order)
    grids = np.meshgrid(*([rule.nodes] * f.dim), indexing="ij", sparse=True)
    values = np.asarray(f.f(*grids), dtype=float)
    out = values
    for axis, m in enumerate(degrees):
        tab = legendre_table(m, rule.nodes)          # (m+1, q)
        proj = tab * rule.weights * ((2 * np.arange(m + 1) + 1.0) / 2.0)[:, None]
        out = np.tensordot(proj, out, axes=([1], [axis]))
        out = np.moveaxis(out, 0, axis)
    return CoeffTensor(coeffs=out)


def _outer_band_fraction(coeffs: np.ndarray, band: int = 2) -> float:
    """Energy fraction carried by the outermost coefficient band."""
    w = _weight_tensor(coeffs.shape)
    energy = coeffs * coeffs * w
    total = energy.sum()
    if total == 0.0:
        return 0.0
    inner = energy[tuple(slice(0, n - band) for n in coeffs.shape)].sum()
    return float((total - inner) / total)


def reference_expansion(f: FunctionOracle, p: int,
                        margin: int = DEFAULT_REFERENCE_MARGIN,
                        quad_order: Optional[int] = None) -> CoeffTensor:
    """Overkill expansion used as the reference for degree-p error measurement.

    Uses degree p + margin in every direction and quad_order max degree + 10,
    and flags the tensor untrusted unless the outermost band carries less than
    1e-14 of the total energy.
    """
    m = p + margin
    if quad_order is None:
        quad_order = m + 10
    tensor = expand(f, (m,) * f.dim, quad_order)
    trusted = _outer_band_fraction(tensor.coeffs) < TAIL_ENERGY_TOLERANCE
    return CoeffTensor(coeffs=tensor.coeffs.copy(), tail_trusted=trusted)


def evaluate(u: CoeffTensor, points: np.ndarray) -> np.ndarray:
    """Evaluate the expansion at scattered points of shape (npts, d)."""
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    if pts.shape[1] != u.dim:
        raise ValueError("points dimension mismatch")
    out = u.coeffs
    for axis in range(u.dim):
        tab = legendre_table(u.degrees[axis], pts[:, axis])   # (m+1, npts)
        if axis == 0:
            out = np.einsum("i...,ip->p...", out, tab)
        else:
            out = np.einsum("pi...,ip->p...", out, tab)
    return out


def differentiate(u: CoeffTensor, axis: int) -> CoeffTensor:
    """Exact derivative along one axis via the coefficient recurrence.

    If u = sum a_n L_n then u' = sum b_n L_n with
    b_n = (2n+1) * (a_{n+1} + a_{n+3} + ...); the degree drops by one.
    """
    a = np.moveaxis(u.coeffs, axis, 0)
    m = a.shape[0] - 1
    if m == 0:
        b = np.zeros_like(a)
    else:
        b = np.zeros((m,) + a.shape[1:])
        tail = np.zeros((2,) + a.shape[1:])  # tail[parity] = running sum
        for n in range(m - 1, -1, -1):
            parity = (n + 1) % 2
            tail[parity] = tail[parity] + a[n + 1]
            b[n] = (2 * n + 1) * tail[parity]
    return CoeffTensor(coeffs=np.moveaxis(b, 0, axis).copy(),
                       tail_trusted=u.tail_trusted)


def l2_norm(u: CoeffTensor) -> float:
    """Parseval L2 norm: sqrt(sum a_i^2 prod 2/(2 i_k + 1))."""
    w = _weight_tensor(u.coeffs.shape)
    return float(np.sqrt(np.sum(u.coeffs * u.coeffs * w)))


def mode_energy_norm(u: CoeffTensor, keep) -> float:
    """Parseval norm restricted to the modes selected by ``keep``.

    ``keep`` receives d integer index arrays (vectorized) and returns a boolean
    mask; e.g. ``lambda i, j: i + j >= p + 1``.
    """
    grids = np.indices(u.coeffs.shape)
    mask = np.asarray(keep(*grids), dtype=bool)
    w = _weight_tensor(u.coeffs.shape)
    return float(np.sqrt(np.sum((u.coeffs * u.coeffs * w)[mask])))


def compositions(total: int, parts: int) -> list[tuple[int, ...]]:
    """All tuples of ``parts`` non-negative integers summing to ``total``."""
    if parts == 1:
        return [(total,)]
    out = []
    for head in range(total + 1):
        out.extend((head,) + rest for rest in compositions(total - head, parts - 1))
    return out


def sobolev_seminorm(u: CoeffTensor, s: int, quad_order: Optional[int] = None) -> float:
    """|u|_{H^s} = sqrt(sum_{|alpha|=s} ||D^alpha u||^2), exact in coefficient space.

    quad_order is accepted for interface compatibility and ignored: derivatives
    and norms are computed from the coefficients directly.
    """
    if s < 0:
        raise ValueError("order must be non-negative")
    if s == 0:
        return l2_norm(u)
    total = 0.0
    for alpha in compositions(s, u.dim):
        v = u
        for axis, k in enumerate(alpha):
            for _ in range(k):
                v = differentiate(v, axis)
        total += l2_norm(v) ** 2
    return float(np.sqrt(total))


def _gamma_ratio_factors(m: int, alpha_k: int) -> np.ndarray:
    """Vector over i = 0..m of 2/(2i+1) * Gamma(i+a+1)/Gamma(i-a+1), zero for i < a."""
    i = np.arange(m + 1, dtype=float)
    out = np.zeros(m + 1)
    ok = i >= alpha_k
    out[ok] = (2.0 / (2.0 * i[ok] + 1.0)
               * np.exp(gammaln(i[ok] + alpha_k + 1.0) - gammaln(i[ok] - alpha_k + 1.0)))
    return out


def weighted_seminorm(u: CoeffTensor, s: int) -> float:
    """Weighted Sobolev seminorm |u|_{V^s}, diagonal in the Legendre expansion."""
    if s < 0:
        raise ValueError("order must be non-negative")
    if s == 0:
        return l2_norm(u)
    sq = u.coeffs * u.coeffs
    total = 0.0
    for alpha in compositions(s, u.dim):
        term = sq
        for axis, a_k in enumerate(alpha):
            fac = _gamma_ratio_factors(u.coeffs.shape[axis] - 1, a_k)
            term = term * fac.reshape([-1 if ax == axis else 1
                                       for ax in range(u.dim)])
        total += term.sum()
    return float(np.sqrt(total))


# ---------------------------------------------------------------------------
# Built-in test functions


def named_function(name: str, dim: int, runge_a: float = 0.5) -> FunctionOracle:
    """Built-in analytic test functions: 'sine', 'expsum', 'runge1d-tensor'."""
    if name == "sine":
        def f(*xs):
            out = np.sin(np.pi * xs[0])
            for x in xs[1:]:
                out = out * np.sin(np.pi * x)
            return out

        def grad(*xs):
            outs = []
            for k in range(dim):
                g = np.ones(np.broadcast_shapes(*(np.shape(x) for x in xs)))
                for j, x in enumerate(xs):
                    g = g * (np.pi * np.cos(np.pi * x) if j == k else np.sin(np.pi * x))
                outs.append(g)
            return tuple(outs)

        return FunctionOracle(dim=dim, f=f, gradient=grad, name="sine")
    if name == "expsum":
        def f(*xs):
            return np.exp(sum(xs))

        def grad(*xs):
            v = np.exp(sum(xs)) * np.ones(
                np.broadcast_shapes(*(np.shape(x) for x in xs)))
            return tuple(v for _ in range(dim))

        return FunctionOracle(dim=dim, f=f, gradient=grad, name="expsum")
    if name == "runge1d-tensor":
        def f(*xs):
            out = 1.0 / (1.0 + (xs[0] / runge_a) ** 2)
            for x in xs[1:]:
                out = out / (1.0 + (x / runge_a) ** 2)
            return out

        return FunctionOracle(dim=dim, f=f, name="runge1d-tensor")
    raise ValueError(f"unknown function name {name!r}")
