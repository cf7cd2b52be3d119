"""Perturbation series for the harmonic extension and the Dirichlet-to-Neumann map.

The domain ``r <= 1 + eps rho(theta)`` is pulled back to the unit ball. The
pulled-back extension ``u = sum eps^n u_n`` and the unnormalized boundary
flux ``Ghat = sum eps^n Ghat_n`` obey order-by-order recursions; the physical
DNO is ``G = M Ghat`` with the normal-length factor ``M`` expanded node-wise.
"""

from __future__ import annotations

import functools
import logging
import warnings
from dataclasses import dataclass

import numpy as np

from .ball_field import (
    BallField,
    bf_laplacian,
    bf_poisson_dirichlet,
    bf_trace,
    bf_trace_dr,
    op_L1,
    op_L2,
    zero_field,
)
from .sphere_basis import (
    ZonalFn,
    analyze,
    grad_dot,
    make_quadrature,
    multiply,
    sobolev_norm,
    synthesize,
)

log = logging.getLogger(__name__)


@dataclass(frozen=True, eq=False)
class HarmonicSeries:
    rho: ZonalFn
    xi: ZonalFn
    fields: tuple
    reports: tuple = ()

    @property
    def order(self) -> int:
        return len(self.fields) - 1

    @property
    def log_orders(self) -> list:
        """Orders ``n`` whose field ``u_n`` carries log-radial terms."""
        return [n for n, u in enumerate(self.fields) if u.has_log]


def _check_pair(rho: ZonalFn, xi: ZonalFn) -> None:
    if rho.d != xi.d:
        raise ValueError(f"dimension mismatch: rho on S^{rho.d}, xi on S^{xi.d}")


def recursion_rhs(rho: ZonalFn, fields, n: int) -> BallField:
    """``L1 u_{n-1} + L2 u_{n-2}`` (missing orders count as zero)."""
    d = rho.d
    out = zero_field(d)
    if n >= 1:
        out = out + op_L1(rho, fields[n - 1])
    if n >= 2:
        out = out + op_L2(rho, fields[n - 2])
    return out


def harmonic_series(rho: ZonalFn, xi: ZonalFn, N: int) -> HarmonicSeries:
    """Fields ``u_0..u_N`` of the pulled-back harmonic extension of ``xi``."""
    _check_pair(rho, xi)
    if N < 0:
        raise ValueError("order N must be >= 0")
    d = rho.d
    reports: list = []
    fields = [bf_poisson_dirichlet(zero_field(d), xi, report=reports)]
    zero_trace = ZonalFn.zeros(d)
    lam = rho.trimmed().degree
    for n in range(1, N + 1):
        F = recursion_rhs(rho, fields, n)
        u = bf_poisson_dirichlet(F, zero_trace, report=reports)
        bound = xi.degree + n * lam
        if u.degree > bound or u.max_exponent > bound:
            raise AssertionError(
                f"u_{n} has degree {u.degree} / exponent {u.max_exponent} beyond {bound}"
            )
        if u.has_log:
            log.info("order %d of the harmonic series contains log-radial terms", n)
        fields.append(u)
    return HarmonicSeries(rho=rho, xi=xi, fields=tuple(fields), reports=tuple(reports))


def recursion_residuals(series: HarmonicSeries) -> list:
    """Per order: ``(relative Laplacian residual, trace error)`` at coefficient level."""
    out = []
    d = series.rho.d
    for n, u in enumerate(series.fields):
        F = recursion_rhs(series.rho, series.fields, n)
        res = bf_laplacian(u) - F
        scale = max(F.max_abs(), u.max_abs(), 1e-300)
        target = series.xi if n == 0 else ZonalFn.zeros(d)
        tr = bf_trace(u) - target
        out.append((res.max_abs() / scale, float(np.max(np.abs(tr.coeffs)))))
    return out


def op_T1(rho: ZonalFn, u: BallField) -> ZonalFn:
    """``2 rho u_r - grad rho . grad_S u`` at ``r = 1``."""
    ur = bf_trace_dr(u)
    tr = bf_trace(u)
    return 2.0 * multiply(rho, ur) - grad_dot(rho, tr)


def op_T2(rho: ZonalFn, u: BallField) -> ZonalFn:
    """``rho^2 u_r - rho grad rho . grad_S u + |grad rho|^2 u_r`` at ``r = 1``."""
    ur = bf_trace_dr(u)
    tr = bf_trace(u)
    rho2 = multiply(rho, rho)
    g2 = grad_dot(rho, rho)
    return (
        multiply(rho2, ur)
        - multiply(rho, grad_dot(rho, tr))
        + multiply(g2, ur)
    )


def ghat_series(
    rho: ZonalFn, xi: ZonalFn, N: int, series: HarmonicSeries | None = None
) -> list:
    """``Ghat_0 xi .. Ghat_N xi`` from the flux recursion."""
    if series is None:
        series = harmonic_series(rho, xi, N)
    if series.order < N:
        raise ValueError(f"harmonic series has order {series.order} < {N}")
    u = series.fields
    out = []
    for n in range(N + 1):
        g = bf_trace_dr(u[n])
        if n >= 1:
            g = g + op_T1(rho, u[n - 1]) - 2.0 * multiply(rho, out[n - 1])
        if n >= 2:
            g = g + op_T2(rho, u[n - 2]) - multiply(multiply(rho, rho), out[n - 2])
        out.append(g.trimmed())
    return out


def m_factor_series(rho: ZonalFn, N: int, rule) -> np.ndarray:
    """Taylor coefficients ``m_0..m_N`` of ``M(eps) = s(eps)^{-1/2}`` at each node.

    ``s(eps) = 1 + 2 rho eps + (rho^2 + rho_theta^2) eps^2``. The coefficients
    follow from ``s f' = -1/2 s' f`` (the binomial recurrence for a power of a
    series). Shape ``(N + 1, rule.n)``.
    """
    rv = rho(rule.theta)
    rt = rho.dtheta(rule.theta)
    s = [np.ones_like(rv), 2.0 * rv, rv * rv + rt * rt]
    m = np.zeros((N + 1, rule.n))
    m[0] = 1.0
    alpha = -0.5
    for k in range(1, N + 1):
        acc = np.zeros(rule.n)
        for j in range(1, min(k, 2) + 1):
            acc += (alpha * j - (k - j)) * s[j] * m[k - j]
        m[k] = acc / k
    return m


def compose_normalized(rho: ZonalFn, ghats: list, N: int | None = None) -> list:
    """``G_n xi = sum_k m_k Ghat_{n-k} xi``, exact in the zonal basis."""
    if N is None:
        N = len(ghats) - 1
    deg = max(g.degree for g in ghats[: N + 1]) + N * max(rho.degree, 0)
    rule = make_quadrature(rho.d, deg + 1)
    m = m_factor_series(rho, N, rule)
    vals = [synthesize(g, rule) for g in ghats[: N + 1]]
    out = []
    for n in range(N + 1):
        acc = np.zeros(rule.n)
        for k in range(n + 1):
            acc += m[k] * vals[n - k]
        out.append(analyze(rule, acc, deg).trimmed())
    return out


@dataclass(frozen=True, eq=False)
class DnoSeries:
    rho: ZonalFn
    order: int
    cutoff: int
    columns: tuple
    matrices: np.ndarray
    log_orders: tuple = ()

    @property
    def d(self) -> int:
        return self.rho.d

    def matrix(self, eps: float) -> np.ndarray:
        """Truncated sum ``sum_n eps^n G_n``."""
        powers = float(eps) ** np.arange(self.order + 1)
        return np.tensordot(powers, self.matrices, axes=1)


def _rho_key(rho: ZonalFn) -> tuple:
    return (rho.d, tuple(float(c) for c in rho.trimmed().coeffs))


@functools.lru_cache(maxsize=64)
def _g_series_cached(key: tuple, N: int, L: int) -> DnoSeries:
    d, coeffs = key
    rho = ZonalFn(d, np.array(coeffs))
    mats = np.zeros((N + 1, L + 1, L + 1))
    columns = []
    log_orders = set()
    for j in range(L + 1):
        xi = ZonalFn.basis_fn(d, j)
        hs = harmonic_series(rho, xi, N)
        log_orders.update(hs.log_orders)
        gh = ghat_series(rho, xi, N, hs)
        g = compose_normalized(rho, gh, N)
        columns.append(tuple(gh))
        for n in range(N + 1):
            mats[n, :, j] = g[n].padded(L)
    mats.setflags(write=False)
    return DnoSeries(
        rho=rho,
        order=N,
        cutoff=L,
        columns=tuple(columns),
        matrices=mats,
        log_orders=tuple(sorted(log_orders)),
    )


def g_series_matrices(rho: ZonalFn, N: int, L: int) -> DnoSeries:
    """Matrices ``G_0..G_N`` of the DNO series on zonal degrees ``0..L``.

    Column ``j`` of ``G_n`` holds the coefficients of ``G_n Z_j``.
    """
    if N < 0 or L < 0:
        raise ValueError("need N >= 0 and L >= 0")
    return _g_series_cached(_rho_key(rho), int(N), int(L))


@dataclass(frozen=True)
class DecayFit:
    A_est: float
    intercept: float
    fit_residual: float
    residuals: tuple
    orders: tuple

    @property
    def K(self) -> float:
        """Prefactor ``exp(intercept + max residual)`` bounding every fitted point."""
        return float(np.exp(self.intercept + max(0.0, max(self.residuals, default=0.0))))


def decay_estimate(norms, start: int = 2) -> DecayFit:
    """Least-squares fit of ``log norms[n]`` against ``n`` over ``n >= start``.

    Returns the geometric rate ``A_est = exp(slope)``; ``fit_residual`` is the
    largest absolute per-point residual in log space.
    """
    norms = np.asarray(list(norms), dtype=float)
    if norms.size == 0 or not np.any(norms > 0):
        raise ValueError("decay_estimate needs at least one nonzero norm")
    if np.count_nonzero(norms > 0) < 4:
        raise ValueError("decay_estimate needs at least 4 nonzero norms")
    n = np.arange(norms.size)
    sel = (n >= start) & (norms > 0)
    if np.count_nonzero(sel) < 2:
        raise ValueError(f"need at least two nonzero norms at orders >= {start}")
    x = n[sel].astype(float)
    y = np.log(norms[sel])
    slope, intercept = np.polyfit(x, y, 1)
    res = y - (slope * x + intercept)
    return DecayFit(
        A_est=float(np.exp(slope)),
        intercept=float(intercept),
        fit_residual=float(np.max(np.abs(res))),
        residuals=tuple(float(r) for r in res),
        orders=tuple(int(k) for k in x),
    )


@dataclass(frozen=True)
class DecayReport:
    ghat_norms: tuple
    g_norms: tuple
    ghat_fit: DecayFit | None
    g_fit: DecayFit | None
    xi_norm: float


def decay_norms(rho: ZonalFn, xi: ZonalFn, N: int, s: float = 0.5) -> DecayReport:
    """``H^s`` norms of ``Ghat_n xi`` and ``G_n xi`` with fits where possible."""
    gh = ghat_series(rho, xi, N)
    g = compose_normalized(rho, gh, N)
    gh_norms = tuple(sobolev_norm(x, s) for x in gh)
    g_norms = tuple(sobolev_norm(x, s) for x in g)

    def fit(norms):
        try:
            return decay_estimate(norms)
        except ValueError:
            return None

    return DecayReport(
        ghat_norms=gh_norms,
        g_norms=g_norms,
        ghat_fit=fit(gh_norms),
        g_fit=fit(g_norms),
        xi_norm=sobolev_norm(xi, s + 1.0),
    )


def dno_apply(rho: ZonalFn, eps: float, xi: ZonalFn, N: int) -> ZonalFn:
    """Truncated ``sum_{n <= N} eps^n G_n xi``; warns when the series looks divergent."""
    _check_pair(rho, xi)
    gh = ghat_series(rho, xi, N)
    g = compose_normalized(rho, gh, N)
    if eps != 0.0 and N >= 5:
        try:
            A = decay_estimate([sobolev_norm(x, 0.5) for x in gh]).A_est
        except ValueError:
            A = 0.0
        if abs(eps) * A >= 1.0:
            warnings.warn(
                f"|eps| * A_est = {abs(eps) * A:.3g} >= 1; series may not converge",
                RuntimeWarning,
                stacklevel=2,
            )
    L = max(x.degree for x in g)
    acc = np.zeros(L + 1)
    for n, x in enumerate(g):
        acc += float(eps) ** n * x.padded(L)
    return ZonalFn(rho.d, acc)
