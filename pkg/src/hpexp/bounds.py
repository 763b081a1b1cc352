"""Closed-form bound machinery for the Q/P/serendipity projection estimates.

Central object is the Gamma-ratio constant

    phi(d, m, n) = (Gamma((m-n)/d + 1) / Gamma((m+n)/d + 1))^d,

computed via log-Gamma differences so that degrees well past p = 30 stay in
range.  The module also provides an exhaustive lattice audit of the
constrained-maximization inequality behind the projection bounds (which is
known to fail on mixed corner points; the audit reports rather than assumes),
the sharp per-mode constant of the total-degree L2 bound, analytic-envelope
fitting, and the exponential slope predictors b1/b2.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import gammaln

from .expansion import compositions

__all__ = [
    "AnalyticEnvelope",
    "SlopePrediction",
    "LemmaAuditReport",
    "phi",
    "stirling_envelope_check",
    "lemma_audit",
    "sharp_l2_ratio",
    "epsilon_min",
    "f1",
    "slope_predict",
    "bound_rhs",
    "estimate_envelope",
    "BOUND_KINDS",
]

LEMMA_AUDIT_CAP = 40


def phi(d: int, m: float, n: float) -> float:
    """Gamma-ratio constant (Gamma((m-n)/d+1)/Gamma((m+n)/d+1))^d."""
    if d < 1:
        raise ValueError("dimension must be >= 1")
    if n > m or n < 0:
        raise ValueError("need 0 <= n <= m")
    return float(np.exp(d * (gammaln((m - n) / d + 1.0) - gammaln((m + n) / d + 1.0))))


def stirling_envelope_check(d: int, m: int, n: int) -> bool:
    """Check phi(d, m, n) <= (e/2)^(2n) * (d/m)^(2n) (the Stirling envelope)."""
    if not 1 <= n <= m:
        raise ValueError("need 1 <= n <= m")
    lhs = d * (gammaln((m - n) / d + 1.0) - gammaln((m + n) / d + 1.0))
    rhs = 2.0 * n * (1.0 - np.log(2.0) + np.log(d) - np.log(m))
    return bool(lhs <= rhs + 1e-12 * abs(rhs))


@dataclass(frozen=True)
class LemmaAuditReport:
    """Exhaustive lattice maximum of F(xi, rho) against the phi bound."""

    d: int
    M: int
    m: int
    lattice_max: float
    argmax_xi: tuple[int, ...]
    argmax_rho: tuple[int, ...]
    phi_value: float
    holds: bool


def _log_f(xi, rho) -> float:
    return float(sum(gammaln(r - x + 1.0) - gammaln(r + x + 1.0)
                     for x, r in zip(xi, rho)))


def lemma_audit(d: int, M: int, m: int) -> LemmaAuditReport:
    """Maximize F(xi, rho) = prod Gamma(rho_k - xi_k + 1)/Gamma(rho_k + xi_k + 1)
    over integer vectors with |xi| = m, |rho| = M, rho >= xi entrywise.

    The enumeration is exhaustive (no pruning); budgets beyond the cap are
    refused rather than sampled.
    """
    if d not in (1, 2, 3):
        raise ValueError("dimension must be 1, 2 or 3")
    if not 0 <= m <= M:
        raise ValueError("need 0 <= m <= M")
    if M > LEMMA_AUDIT_CAP:
        raise ValueError(f"budget exceeds exhaustive enumeration cap {LEMMA_AUDIT_CAP}")
    best = -np.inf
    arg = None
    rhos = compositions(M, d)
    for xi in compositions(m, d):
        for rho in rhos:
            if all(r >= x for x, r in zip(xi, rho)):
                val = _log_f(xi, rho)
                if val > best:
                    best, arg = val, (xi, rho)
    phi_value = phi(d, M, m)
    lattice_max = float(np.exp(best))
    return LemmaAuditReport(
        d=d, M=M, m=m, lattice_max=lattice_max,
        argmax_xi=arg[0], argmax_rho=arg[1], phi_value=phi_value,
        holds=bool(lattice_max <= phi_value * (1.0 + 1e-12)))


def sharp_l2_ratio(d: int, p: int, s: int, shell_buffer: int = 6):
    """Worst single-mode ratio error^2 / |u|_{V^s}^2 for the total-degree
    L2 projection: max over |i| in [p+1, p+1+shell_buffer] of
    1 / sum_{|alpha|=s, alpha<=i} prod Gamma(i_k+alpha_k+1)/Gamma(i_k-alpha_k+1).
    """
    if not 0 <= s <= p + 1:
        raise ValueError("need 0 <= s <= p+1")
    alphas = compositions(s, d)
    best = -np.inf
    arg = None
    for shell in range(p + 1, p + 2 + shell_buffer):
        for i in compositions(shell, d):
            denom = 0.0
            for alpha in alphas:
                if all(ik >= ak for ik, ak in zip(i, alpha)):
                    denom += np.exp(sum(
                        gammaln(ik + ak + 1.0) - gammaln(ik - ak + 1.0)
                        for ik, ak in zip(i, alpha)))
            if denom > 0.0 and 1.0 / denom > best:
                best, arg = 1.0 / denom, i
    return {"max_ratio": float(best), "argmax": arg}


def epsilon_min(R: float) -> float:
    """Minimizer of F1(R, epsilon) over (0, 1): 1/sqrt(1 + R^2)."""
    if R <= 0:
        raise ValueError("growth rate must be positive")
    return 1.0 / np.sqrt(1.0 + R * R)


def f1(R: float, eps: float) -> float:
    """F1(R, eps) = (1-eps)^(1-eps)/(1+eps)^(1+eps) * (eps R)^(2 eps)."""
    return ((1.0 - eps) ** (1.0 - eps) / (1.0 + eps) ** (1.0 + eps)
            * (eps * R) ** (2.0 * eps))


@dataclass(frozen=True)
class SlopePrediction:
    """Predicted exponential slopes: b2 = b1 - eps_min * log d."""

    eps_min: float
    f1_min: float
    b1: float
    b2: float


def slope_predict(R: float, h: float, d: int) -> SlopePrediction:
    """Slope predictors for the full (b1) and reduced-cardinality (b2) bases."""
    if R <= 0 or not 0 < h <= 2:
        raise ValueError("need R > 0 and 0 < h <= 2")
    eps = epsilon_min(R)
    fmin = (R / (np.sqrt(1.0 + R * R) + 1.0)) ** 2
    b1 = 0.5 * abs(np.log(fmin)) + eps * abs(np.log(h))
    b2 = b1 - eps * np.log(d)
    return SlopePrediction(eps_min=eps, f1_min=fmin, b1=b1, b2=b2)


# ---------------------------------------------------------------------------
# Right-hand sides of the projection error bounds

BOUND_KINDS = (
    "l2_q", "l2_p",
    "h1q_l2_2d", "h1q_h1_2d", "h1s_l2_2d", "h1s_h1_2d",
    "h1q_l2_3d", "h1q_h1_3d", "h1s_l2_3d", "h1s_h1_3d",
    "h1p_l2", "h1p_h1",
    "qs_l2_2d", "qs_h1_2d", "t1_l2_3d", "t2_l2_3d", "t1_grad_3d", "t2_grad_3d",
)


def _need(seminorms: dict, keys) -> list[float]:
    missing = [k for k in keys if k not in seminorms]
    if missing:
        raise KeyError(f"missing seminorm keys: {missing}")
    return [float(seminorms[k]) for k in keys]


def bound_rhs(kind: str, p: int, s: int, seminorms: dict, d: int = 2) -> float:
    """Evaluate the right-hand side of one of the squared error bounds.

    Inputs are squared (semi)norm values keyed as documented per kind; the
    returned value bounds the squared L2 (or H1-seminorm) projection error.
    Kinds: l2_q / l2_p for the L2 projections; h1q_*/h1s_* for the H1
    projections in 2D and 3D; h1p_* delegates to h1s at degree p+1-d; the
    qs_* / t*_* kinds are the individually quoted truncation-difference
    bounds (with constants 36/72/24 in 2D, 216/504/36/84 in 3D).
    """
    if kind == "l2_q":
        if not 0 <= s <= p + 1:
            raise ValueError("need 0 <= s <= p+1")
        (h,) = _need(seminorms, ["h_seminorm_sq"])
        return phi(1, p + 1, s) * h
    if kind == "l2_p":
        if not 0 <= s <= p + 1:
            raise ValueError("need 0 <= s <= p+1")
        (v,) = _need(seminorms, ["v_seminorm_sq"])
        return phi(d, p + 1, s) * v

    if kind in ("h1p_l2", "h1p_h1"):
        if p < 3 * d - 1:
            raise ValueError("total-degree H1 bound requires p >= 3d-1")
        sub = {"h1p_l2": {2: "h1s_l2_2d", 3: "h1s_l2_3d"},
               "h1p_h1": {2: "h1s_h1_2d", 3: "h1s_h1_3d"}}[kind][d]
        return bound_rhs(sub, p + 1 - d, s, seminorms, d=d)

    if kind.endswith("2d") or kind in ("qs_l2_2d", "qs_h1_2d"):
        if not 1 <= s <= p:
            raise ValueError("2D H1 bounds require 1 <= s <= p")
    if kind.endswith("3d"):
        if not 2 <= s <= p:
            raise ValueError("3D H1 bounds require 2 <= s <= p")

    if kind == "h1q_l2_2d":
        a, b, c = _need(seminorms, ["d1_sp1_sq", "d2_sp1_sq", "d1_d2s_sq"])
        return (2.0 / (p * (p + 1)) * phi(1, p, s) * (a + 2.0 * b)
                + 4.0 / (p * (p + 1)) ** 2 * phi(1, p, s - 1) * c)
    if kind == "h1q_h1_2d":
        a, b, c, e = _need(seminorms,
                           ["d1_sp1_sq", "d2_sp1_sq", "d1_d2s_sq", "d1s_d2_sq"])
        return (2.0 * phi(1, p, s) * (a + b)
                + 8.0 / (p * (p + 1)) * phi(1, p, s - 1) * (e + c))
    if kind == "qs_l2_2d":
        (vx,) = _need(seminorms, ["mixed_v_sm1_sq"])
        return 36.0 * phi(2, p + 1, s + 1) * vx
    if kind == "qs_h1_2d":
        (vx,) = _need(seminorms, ["mixed_v_sm1_sq"])
        return 12.0 * phi(2, p, s) * vx
    if kind == "h1s_l2_2d":
        a, b, c, vx = _need(seminorms,
                            ["d1_sp1_sq", "d2_sp1_sq", "d1_d2s_sq", "mixed_v_sm1_sq"])
        return (4.0 / (p * (p + 1)) * phi(1, p, s) * (a + 2.0 * b)
                + 8.0 / (p * (p + 1)) ** 2 * phi(1, p, s - 1) * c
                + 72.0 * phi(2, p + 1, s + 1) * vx)
    if kind == "h1s_h1_2d":
        a, b, c, e, vx = _need(seminorms, ["d1_sp1_sq", "d2_sp1_sq", "d1_d2s_sq",
                                           "d1s_d2_sq", "mixed_v_sm1_sq"])
        return (4.0 * phi(1, p, s) * (a + b)
                + 16.0 / (p * (p + 1)) * phi(1, p, s - 1) * (e + c)
                + 24.0 * phi(2, p, s) * vx)

    if kind == "h1q_l2_3d":
        ax = _need(seminorms, ["d1_sp1_sq", "d2_sp1_sq", "d3_sp1_sq"])
        mixed = _need(seminorms, ["d1_d2s_sq", "d1_d3s_sq", "d2_d3s_sq"])
        (triple,) = _need(seminorms, ["d1_d2_d3sm1_sq"])
        return (8.0 / (p * (p + 1)) * phi(1, p, s) * sum(ax)
                + 8.0 / (p * (p + 1)) ** 2 * phi(1, p, s - 1) * sum(mixed)
                + 8.0 / (p * (p + 1)) ** 3 * phi(1, p, s - 2) * triple)
    if kind == "h1q_h1_3d":
        ax = _need(seminorms, ["d1_sp1_sq", "d2_sp1_sq", "d3_sp1_sq"])
        mixed = _need(seminorms, ["d1_d2s_sq", "d2_d3s_sq", "d3_d1s_sq",
                                  "d1_d3s_sq", "d2_d1s_sq", "d3_d2s_sq"])
        (triple,) = _need(seminorms, ["d1_d2_d3sm1_sq"])
        return (2.0 * phi(1, p, s) * sum(ax)
                + 8.0 / (p * (p + 1)) * phi(1, p, s - 1) * sum(mixed)
                + 8.0 / (p * (p + 1)) ** 2 * phi(1, p, s - 2) * 3.0 * triple)
    if kind == "t1_l2_3d":
        (v3,) = _need(seminorms, ["triple_v_sm2_sq"])
        return 216.0 * phi(3, p + 1, s + 1) * v3
    if kind == "t2_l2_3d":
        (h,) = _need(seminorms, ["h_sp1_seminorm_sq"])
        return 504.0 * phi(3, p + 1, s + 1) * h
    if kind == "t1_grad_3d":
        (v3,) = _need(seminorms, ["triple_v_sm2_sq"])
        return 36.0 * phi(3, p, s) * v3
    if kind == "t2_grad_3d":
        (h,) = _need(seminorms, ["h_sp1_seminorm_sq"])
        return 84.0 * phi(3, p, s) * h
    if kind == "h1s_l2_3d":
        # Triangle + term-splitting composition of the quoted pieces:
        # ||u - pi_S u||^2 <= 2||u - pi_Q u||^2 + 2(T1 + T2 + T3 + T4)^2-type,
        # with (sum of 4)^2 <= 4 * sum of squares and T2=T3=T4 bounds equal.
        q = bound_rhs("h1q_l2_3d", p, s, seminorms, d=3)
        t1 = bound_rhs("t1_l2_3d", p, s, seminorms, d=3)
        t2 = bound_rhs("t2_l2_3d", p, s, seminorms, d=3)
        return 2.0 * q + 8.0 * (t1 + 3.0 * t2)
    if kind == "h1s_h1_3d":
        q = bound_rhs("h1q_h1_3d", p, s, seminorms, d=3)
        t1 = bound_rhs("t1_grad_3d", p, s, seminorms, d=3)
        t2 = bound_rhs("t2_grad_3d", p, s, seminorms, d=3)
        return 2.0 * q + 3.0 * 8.0 * (t1 + 3.0 * t2)

    raise ValueError(f"unknown bound kind {kind!r}")


# ---------------------------------------------------------------------------
# Analytic envelope fitting


@dataclass(frozen=True)
class AnalyticEnvelope:
    """Fitted growth model |u|_{H^s} ~= C_u * R^s * s! * |area|^(1/2)."""

    c_u: float
    r_growth: float


def estimate_envelope(seminorms, area: float) -> AnalyticEnvelope:
    """Least-squares fit of log|u|_{H^s} - log Gamma(s+1) - log sqrt(area) vs s.

    ``seminorms`` is a sequence of (s, |u|_{H^s}) pairs with increasing s.
    """
    data = [(int(s), float(v)) for s, v in seminorms]
    if len(data) < 3:
        raise ValueError("need at least 3 seminorm samples")
    svals = np.array([s for s, _ in data], dtype=float)
    if not np.all(np.diff(svals) > 0):
        raise ValueError("orders must be strictly increasing")
    vals = np.array([v for _, v in data])
    if np.any(vals <= 0.0):
        raise ValueError("seminorms must be positive to fit the envelope")
    y = np.log(vals) - gammaln(svals + 1.0) - 0.5 * np.log(area)
    slope, intercept = np.polyfit(svals, y, 1)
    return AnalyticEnvelope(c_u=float(np.exp(intercept)),
                            r_growth=float(np.exp(slope)))
