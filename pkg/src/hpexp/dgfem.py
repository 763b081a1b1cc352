"""Symmetric interior-penalty DG Poisson solver on uniform square meshes.

Each element carries a modal Legendre basis restricted to the Q_p or P_p index
set, so switching family is purely an index filter.  The bilinear form is the
standard SIP one: volume grad-grad, facet terms
-({grad u}.n [v] + {grad v}.n [u]) + sigma_F [u][v] with the penalty
sigma_F = gamma p^2 / h_F, and Dirichlet data enters through the boundary
facets.  The energy norm reported as dg_norm is
sqrt(broken_H1^2 + sum_F sigma_F ||[u - u_h]||_F^2).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .expansion import CoeffTensor
from .indexsets import BasisSpec, dof_count, enumerate_modes
from .orthopoly import gauss_rule, legendre_deriv_table, legendre_table

__all__ = [
    "DgSpec",
    "BrokenSolution",
    "DgSystem",
    "IndefiniteSipError",
    "assemble_sip",
    "dg_solve",
    "dg_errors",
    "broken_interpolant",
    "run_p_sweep",
]


@dataclass(frozen=True)
class DgSpec:
    """Broken-space selector: family P | Q, degree p, penalty factor gamma."""

    family: str
    p: int
    gamma: float = 10.0

    def __post_init__(self):
        if self.family not in ("P", "Q"):
            raise ValueError("DG families are P and Q")
        if self.p < 1:
            raise ValueError("need p >= 1")
        if self.gamma <= 0:
            raise ValueError("penalty factor must be positive")


@dataclass
class BrokenSolution:
    """Per-element Legendre coefficients on the family index set."""

    spec: DgSpec
    n: int
    h: float
    lower: np.ndarray           # (ne, 2) element lower corners
    modes: list
    coeffs: np.ndarray          # (ne, nmodes)

    def element_tensor(self, e: int) -> CoeffTensor:
        p = self.spec.p
        out = np.zeros((p + 1, p + 1))
        for k, (i, j) in enumerate(self.modes):
            out[i, j] = self.coeffs[e, k]
        return CoeffTensor(coeffs=out)


@dataclass
class DgSystem:
    spec: DgSpec
    n: int
    h: float
    lower: np.ndarray
    modes: list
    matrix: sp.csr_matrix
    rhs: np.ndarray


class IndefiniteSipError(RuntimeError):
    pass


def _k1_legendre(p: int) -> np.ndarray:
    """Exact 1D stiffness int L_i' L_j' = min(i,j)(min(i,j)+1) for i+j even."""
    K = np.zeros((p + 1, p + 1))
    for i in range(p + 1):
        for j in range(p + 1):
            if (i + j) % 2 == 0:
                m = min(i, j)
                K[i, j] = m * (m + 1)
    return K


def _volume_stiffness(modes, p: int) -> np.ndarray:
    M1 = np.diag(2.0 / (2.0 * np.arange(p + 1) + 1.0))
    K1 = _k1_legendre(p)
    full = (np.einsum("ab,cd->acbd", K1, M1)
            + np.einsum("ab,cd->acbd", M1, K1)).reshape((p + 1) ** 2, (p + 1) ** 2)
    flat = np.array([i * (p + 1) + j for i, j in modes])
    return full[np.ix_(flat, flat)]


def _trace_tables(modes, p: int, nodes: np.ndarray):
    """Per (axis, side): trace values and reference normal-slope of every mode.

    Returns val[axis][side][mode, q] and der[axis][side][mode, q] with the
    derivative taken along the axis (outward sign applied by the caller).
    """
    L = legendre_table(p, nodes)
    ends = np.array([-1.0, 1.0])
    Lend = legendre_table(p, ends)            # (p+1, 2)
    dLend = legendre_deriv_table(p, 1, ends)
    val = [[None, None] for _ in range(2)]
    der = [[None, None] for _ in range(2)]
    for axis in range(2):
        for sidx, side in enumerate((-1.0, 1.0)):
            v = np.empty((len(modes), nodes.size))
            dv = np.empty((len(modes), nodes.size))
            for k, m in enumerate(modes):
                i_n = m[axis]             # index along the facet normal
                i_t = m[1 - axis]         # index along the facet
                e = 0 if side < 0 else 1
                v[k] = Lend[i_n, e] * L[i_t]
                dv[k] = dLend[i_n, e] * L[i_t]
            val[axis][sidx] = v
            der[axis][sidx] = dv
    return val, der


def assemble_sip(mesh_n: int, spec: DgSpec, f: Callable, g: Callable,
                 domain=(0.0, 1.0)) -> DgSystem:
    """Assemble the SIP system on an n x n uniform square mesh."""
    n, p = mesh_n, spec.p
    lo, hi = float(domain[0]), float(domain[1])
    h = (hi - lo) / n
    a = h / 2.0
    modes = enumerate_modes(BasisSpec(2, p, spec.family))
    nm = len(modes)
    ne = n * n
    lower = np.array([(lo + h * i, lo + h * j)
                      for i in range(n) for j in range(n)])

    K_vol = _volume_stiffness(modes, p)

    frule = gauss_rule(p + 2)
    tval, tder = _trace_tables(modes, p, frule.nodes)
    sigma = spec.gamma * max(p, 1) ** 2 / h
    wfac = frule.weights * a                   # facet jacobian

    rows, cols, data = [], [], []

    def add_block(ea, eb, block):
        rows.append(np.repeat(np.arange(nm) + ea * nm, nm))
        cols.append(np.tile(np.arange(nm) + eb * nm, nm))
        data.append(block.ravel())

    for e in range(ne):
        add_block(e, e, K_vol)

    def facet_pair(eminus, eplus, axis):
        # normal from minus to plus along +axis
        Tm = tval[axis][1]
        Tp = tval[axis][0]
        Dm = tder[axis][1] / a
        Dp = tder[axis][0] / a
        for (ea, Ta, Da, sa) in ((eminus, Tm, Dm, 1.0), (eplus, Tp, Dp, -1.0)):
            for (eb, Tb, Db, sb) in ((eminus, Tm, Dm, 1.0), (eplus, Tp, Dp, -1.0)):
                block = (sigma * sa * sb * (Ta * wfac) @ Tb.T
                         - 0.5 * sb * (Da * wfac) @ Tb.T
                         - 0.5 * sa * (Ta * wfac) @ Db.T)
                add_block(ea, eb, block)

    rhs = np.zeros(ne * nm)

    def facet_boundary(e, axis, side, fixed_coord):
        sidx = 0 if side < 0 else 1
        T = tval[axis][sidx]
        D = tder[axis][sidx] * (side / a)     # outward normal derivative
        block = sigma * (T * wfac) @ T.T - (D * wfac) @ T.T - (T * wfac) @ D.T
        add_block(e, e, block)
        tang = lower[e][1 - axis] + a * (frule.nodes + 1.0)
        pts = (np.full_like(tang, fixed_coord), tang) if axis == 0 \
            else (tang, np.full_like(tang, fixed_coord))
        gv = np.asarray(g(*pts), dtype=float) * np.ones_like(tang)
        rhs[e * nm:(e + 1) * nm] += (sigma * T - D) @ (wfac * gv)

    eid = lambda i, j: i * n + j
    for i in range(n):
        for j in range(n):
            if i + 1 < n:
                facet_pair(eid(i, j), eid(i + 1, j), axis=0)
            if j + 1 < n:
                facet_pair(eid(i, j), eid(i, j + 1), axis=1)
    for j in range(n):
        facet_boundary(eid(0, j), 0, -1.0, lo)
        facet_boundary(eid(n - 1, j), 0, +1.0, hi)
    for i in range(n):
        facet_boundary(eid(i, 0), 1, -1.0, lo)
        facet_boundary(eid(i, n - 1), 1, +1.0, hi)

    # volume load
    vrule = gauss_rule(p + 10)
    Lq = legendre_table(p, vrule.nodes)
    LW = Lq * vrule.weights
    for e in range(ne):
        coords = [lower[e][k] + a * (vrule.nodes + 1.0) for k in range(2)]
        X, Y = np.meshgrid(*coords, indexing="ij", sparse=True)
        fv = np.asarray(f(X, Y), dtype=float) * np.ones((vrule.nodes.size,) * 2)
        proj = LW @ fv @ LW.T * a * a
        rhs[e * nm:(e + 1) * nm] += np.array([proj[i, j] for i, j in modes])

    A = sp.coo_matrix((np.concatenate(data),
                       (np.concatenate(rows), np.concatenate(cols))),
                      shape=(ne * nm, ne * nm)).tocsr()
    return DgSystem(spec=spec, n=n, h=h, lower=lower, modes=modes,
                    matrix=A, rhs=rhs)


def dg_solve(system: DgSystem) -> BrokenSolution:
    """Direct solve with symmetry/definiteness checks (gamma too small raises)."""
    A = system.matrix
    asym = abs(A - A.T).max()
    if asym > 1e-10 * max(abs(A).max(), 1.0):
        raise IndefiniteSipError(f"system not symmetric: {asym:.2e}")
    ndof = A.shape[0]
    if ndof <= 4000:
        try:
            np.linalg.cholesky(A.toarray())
        except np.linalg.LinAlgError as exc:
            raise IndefiniteSipError("SIP matrix not positive definite "
                                     "(penalty too small)") from exc
    else:
        rng = np.random.default_rng(0)
        for _ in range(16):
            v = rng.standard_normal(ndof)
            if float(v @ (A @ v)) <= 0.0:
                raise IndefiniteSipError("SIP matrix not positive definite "
                                         "(penalty too small)")
    u = spla.spsolve(A.tocsc(), system.rhs)
    res = np.linalg.norm(A @ u - system.rhs) / max(np.linalg.norm(system.rhs), 1e-300)
    if res > 1e-8:
        raise IndefiniteSipError(f"direct solve residual too large: {res:.2e}")
    nm = len(system.modes)
    return BrokenSolution(spec=system.spec, n=system.n, h=system.h,
                          lower=system.lower, modes=system.modes,
                          coeffs=u.reshape(-1, nm))


def broken_interpolant(spec: DgSpec, n: int, f: Callable,
                       domain=(0.0, 1.0)) -> BrokenSolution:
    """Elementwise L2 projection of f onto the broken space (test oracle)."""
    lo, hi = float(domain[0]), float(domain[1])
    h = (hi - lo) / n
    a = h / 2.0
    p = spec.p
    modes = enumerate_modes(BasisSpec(2, p, spec.family))
    lower = np.array([(lo + h * i, lo + h * j)
                      for i in range(n) for j in range(n)])
    rule = gauss_rule(p + 10)
    L = legendre_table(p, rule.nodes)
    proj = L * rule.weights * ((2 * np.arange(p + 1) + 1.0) / 2.0)[:, None]
    coeffs = np.zeros((n * n, len(modes)))
    for e in range(n * n):
        coords = [lower[e][k] + a * (rule.nodes + 1.0) for k in range(2)]
        X, Y = np.meshgrid(*coords, indexing="ij", sparse=True)
        fv = np.asarray(f(X, Y), dtype=float) * np.ones((rule.nodes.size,) * 2)
        C = proj @ fv @ proj.T
        coeffs[e] = [C[i, j] for i, j in modes]
    return BrokenSolution(spec=spec, n=n, h=h, lower=lower, modes=modes,
                          coeffs=coeffs)


def dg_errors(sol: BrokenSolution, exact: Callable,
              exact_gradient: Callable) -> dict:
    """L2, broken-H1 and SIP-energy errors against a smooth exact solution."""
    p = sol.spec.p
    n, h, a = sol.n, sol.h, sol.h / 2.0
    rule = gauss_rule(2 * p + 4)
    L = legendre_table(p, rule.nodes)
    dL = legendre_deriv_table(p, 1, rule.nodes)
    nm = len(sol.modes)
    flat = np.array([i * (p + 1) + j for i, j in sol.modes])
    l2_sq = 0.0
    h1_sq = 0.0
    w2 = np.outer(rule.weights, rule.weights) * a * a
    for e in range(n * n):
        C = np.zeros(((p + 1), (p + 1)))
        C.reshape(-1)[flat] = sol.coeffs[e]
        coords = [sol.lower[e][k] + a * (rule.nodes + 1.0) for k in range(2)]
        X, Y = np.meshgrid(*coords, indexing="ij", sparse=True)
        ones = np.ones((rule.nodes.size,) * 2)
        uex = np.asarray(exact(X, Y), dtype=float) * ones
        gx, gy = exact_gradient(X, Y)
        uh = L.T @ C @ L
        uhx = (dL.T @ C @ L) / a
        uhy = (L.T @ C @ dL) / a
        l2_sq += np.sum(w2 * (uex - uh) ** 2)
        h1_sq += np.sum(w2 * ((gx * ones - uhx) ** 2 + (gy * ones - uhy) ** 2))

    # facet jumps of (u - u_h); u is continuous so only u_h jumps interiorly
    frule = gauss_rule(p + 2)
    Lf = legendre_table(p, frule.nodes)
    Lend = legendre_table(p, np.array([-1.0, 1.0]))
    sigma = sol.spec.gamma * max(p, 1) ** 2 / h
    wf = frule.weights * a
    jump_sq = 0.0

    def trace(e, axis, side):
        C = np.zeros(((p + 1), (p + 1)))
        C.reshape(-1)[flat] = sol.coeffs[e]
        eidx = 0 if side < 0 else 1
        if axis == 0:
            return (Lend[:, eidx] @ C) @ Lf
        return (C @ Lend[:, eidx]) @ Lf

    eid = lambda i, j: i * n + j
    for i in range(n):
        for j in range(n):
            if i + 1 < n:
                jump_sq += sigma * np.sum(
                    wf * (trace(eid(i, j), 0, +1) - trace(eid(i + 1, j), 0, -1)) ** 2)
            if j + 1 < n:
                jump_sq += sigma * np.sum(
                    wf * (trace(eid(i, j), 1, +1) - trace(eid(i, j + 1), 1, -1)) ** 2)

    def boundary_jump(e, axis, side, fixed_coord):
        tang = sol.lower[e][1 - axis] + a * (frule.nodes + 1.0)
        pts = (np.full_like(tang, fixed_coord), tang) if axis == 0 \
            else (tang, np.full_like(tang, fixed_coord))
        gv = np.asarray(exact(*pts), dtype=float) * np.ones_like(tang)
        return sigma * np.sum(wf * (gv - trace(e, axis, side)) ** 2)

    lo, hi = sol.lower.min(), sol.lower.max() + h
    for j in range(n):
        jump_sq += boundary_jump(eid(0, j), 0, -1, lo)
        jump_sq += boundary_jump(eid(n - 1, j), 0, +1, hi)
    for i in range(n):
        jump_sq += boundary_jump(eid(i, 0), 1, -1, lo)
        jump_sq += boundary_jump(eid(i, n - 1), 1, +1, hi)

    return {"l2": float(np.sqrt(l2_sq)),
            "broken_h1": float(np.sqrt(h1_sq)),
            "dg_norm": float(np.sqrt(h1_sq + jump_sq))}


def run_p_sweep(n: int, family: str, p_list, gamma: float = 10.0,
                f: Optional[Callable] = None, exact: Optional[Callable] = None,
                exact_gradient: Optional[Callable] = None,
                domain=(0.0, 1.0)) -> list[dict]:
    """SIP sweep over p on the n x n sine benchmark (or a supplied problem)."""
    if f is None:
        f = lambda x, y: 2 * np.pi ** 2 * np.sin(np.pi * x) * np.sin(np.pi * y)
        exact = lambda x, y: np.sin(np.pi * x) * np.sin(np.pi * y)
        exact_gradient = lambda x, y: (np.pi * np.cos(np.pi * x) * np.sin(np.pi * y),
                                       np.pi * np.sin(np.pi * x) * np.cos(np.pi * y))
    records = []
    for p in p_list:
        spec = DgSpec(family=family, p=int(p), gamma=gamma)
        rec = {"method": f"dg_{family.lower()}", "p": int(p), "dim": 2,
               "dof": n * n * dof_count(BasisSpec(2, int(p), family))}
        try:
            system = assemble_sip(n, spec, f, exact)
            sol = dg_solve(system)
            rec["errors"] = dg_errors(sol, exact, exact_gradient)
        except Exception as exc:    # noqa: BLE001 - sweep must continue
            rec["error_message"] = str(exc)
            rec["errors"] = {"l2": float("nan"), "broken_h1": float("nan"),
                             "dg_norm": float("nan")}
        records.append(rec)
    return records
