"""Direct Steklov solver on the physical domain by harmonic-polynomial collocation.

Trial functions are the solid zonal harmonics ``r^l Z_l``. Their values and
exact outward normal derivatives are sampled on the perturbed boundary
``r = 1 + eps rho(theta)`` and the rectangular pencil ``A c = sigma B c`` is
reduced by a QR projection. This module deliberately shares nothing with the
series code except the zonal basis.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .sphere_basis import ZonalFn, make_quadrature, zonal_basis, zonal_basis_dtheta

RESIDUAL_TOL = 1e-8
COND_WARN = 1e10


class OracleError(RuntimeError):
    """The collocation problem is degenerate or yields no trustworthy eigenpairs."""


@dataclass(frozen=True, eq=False)
class CollocationProblem:
    d: int
    rho: ZonalFn
    eps: float
    trial_degree: int
    nodes: int
    theta: np.ndarray
    weights: np.ndarray
    A: np.ndarray
    B: np.ndarray


def build_collocation(d: int, rho: ZonalFn, eps: float, L_t: int, M: int) -> CollocationProblem:
    """Sample Neumann (``A``) and Dirichlet (``B``) data of ``r^l Z_l`` on the boundary.

    Nodes are the ``M``-point Gauss rule; the boundary radius at node ``j`` is
    ``1 + eps rho(theta_j)``. Normal derivatives come from
    :func:`normal_derivative`. Rows are weighted by the square roots of the
    quadrature weights.
    """
    if rho.d != d:
        raise ValueError("rho lives on a different sphere")
    if M < 2 * (L_t + 1):
        raise ValueError(f"need M >= 2(L_t + 1) = {2 * (L_t + 1)} nodes, got {M}")
    rule = make_quadrature(d, M)
    theta = np.asarray(rule.theta)
    rb = 1.0 + eps * rho(theta)
    if np.any(rb <= 0.0):
        raise OracleError("degenerate boundary: 1 + eps rho <= 0 at a node")
    A, B = _trial_data(d, rho, eps, L_t, theta, rb)
    sw = np.sqrt(rule.weights)[:, None]
    return CollocationProblem(
        d=d,
        rho=rho,
        eps=float(eps),
        trial_degree=L_t,
        nodes=M,
        theta=theta,
        weights=np.asarray(rule.weights),
        A=sw * A,
        B=sw * B,
    )


def _trial_data(d, rho, eps, L_t, theta, rb):
    ell = np.arange(L_t + 1)
    Z = zonal_basis(d, L_t, np.cos(theta)).T
    dZ = zonal_basis_dtheta(d, L_t, theta).T
    rpow = rb[:, None] ** ell
    B = rpow * Z
    A = normal_derivative(rho, eps, theta, rb, ell, Z, dZ)
    return A, B


def normal_derivative(rho, eps, theta, rb, ell, Z, dZ):
    """``n . grad(r^l Z_l)`` at ``(rb, theta)`` with the exact unit normal.

    The boundary ``r = 1 + eps rho`` has normal proportional to
    ``(1 + eps rho) e_r - eps rho_theta e_theta``, so
    ``n . grad u = [(1 + eps rho) u_r - eps rho_theta u_theta / r] / sqrt((1 + eps rho)^2 + (eps rho_theta)^2)``.
    """
    rt = eps * rho.dtheta(theta)
    norm = np.sqrt(rb**2 + rt**2)
    r = rb[:, None]
    ur = ell * r ** (ell - 1.0) * Z
    ur[:, 0] = 0.0
    utheta_over_r = r ** (ell - 1.0) * dZ
    return (rb[:, None] * ur - rt[:, None] * utheta_over_r) / norm[:, None]


@dataclass(frozen=True)
class OracleResult:
    values: np.ndarray
    residuals: np.ndarray
    condition: float
    rejected: int
    vectors: np.ndarray | None = None


def oracle_eigs(problem: CollocationProblem, residual_tol: float = RESIDUAL_TOL) -> OracleResult:
    """Eigenvalues of the rectangular pencil ``A c = sigma B c``.

    ``B = QR`` reduces it to the square pencil ``(Q^T A, R)``. An eigenpair is
    kept only when the full rectangular residual
    ``||A c - sigma B c|| / (||c|| ||A||)`` is below ``residual_tol``.
    """
    A, B = problem.A, problem.B
    Q, R = np.linalg.qr(B)
    diag = np.abs(np.diag(R))
    if diag.min() <= 1e-14 * diag.max():
        raise OracleError("rank-deficient Dirichlet matrix; lower the trial degree or add nodes")
    cond = float(np.linalg.cond(R))
    if cond > COND_WARN:
        warnings.warn(f"collocation basis condition number {cond:.2e} > {COND_WARN:.0e}", RuntimeWarning)
    lam, vecs = scipy.linalg.eig(Q.T @ A, R)
    normA = np.linalg.norm(A, 2)
    keep_vals, keep_res, keep_vecs = [], [], []
    rejected = 0
    for k in range(lam.size):
        if not np.isfinite(lam[k]):
            rejected += 1
            continue
        c = vecs[:, k]
        res = np.linalg.norm(A @ c - lam[k] * (B @ c)) / (np.linalg.norm(c) * normA)
        if res < residual_tol:
            keep_vals.append(lam[k])
            keep_res.append(res)
            keep_vecs.append(c)
        else:
            rejected += 1
    if not keep_vals:
        raise OracleError("no eigenpair passed the residual filter")
    keep_vals = np.asarray(keep_vals)
    order = np.argsort(keep_vals.real)
    vecs_out = np.array(keep_vecs).T[:, order]
    return OracleResult(
        values=keep_vals.real[order],
        residuals=np.asarray(keep_res)[order],
        condition=cond,
        rejected=rejected,
        vectors=vecs_out,
    )


def converged_eigs(
    d: int,
    rho: ZonalFn,
    eps: float,
    L_t: int = 16,
    M: int = 40,
    count: int | None = None,
    tol: float = 1e-9,
) -> np.ndarray:
    """Oracle eigenvalues confirmed by a ``(L_t + 4, M + 8)`` refinement.

    Entries that move by more than ``tol`` under refinement are returned as NaN.
    """
    base = oracle_eigs(build_collocation(d, rho, eps, L_t, M)).values
    fine = oracle_eigs(build_collocation(d, rho, eps, L_t + 4, M + 8)).values
    n = base.size if count is None else min(count, base.size)
    out = np.full(n if count is None else count, np.nan)
    for k in range(n):
        if k < fine.size and abs(base[k] - fine[k]) < tol:
            out[k] = base[k]
    return out
