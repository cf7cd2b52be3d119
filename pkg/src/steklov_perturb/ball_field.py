"""Semi-symbolic fields on the unit ball.

A :class:`BallField` is a finite sum

    u(r, theta) = sum_{(a, q)} sum_l c[a, q][l] r^a (log r)^q Z_l(theta)

stored as one zonal coefficient vector per radial monomial ``(a, q)``. The
radial calculus, the transformed-Laplacian operators and the Poisson solver
all act exactly on this representation, so Laplacian residuals can be
checked at the coefficient level.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .sphere_basis import (
    ZonalFn,
    apply_lb,
    grad_dot,
    grad_dot_matrix,
    lb_eigenvalues,
    mul_matrix,
)

log = logging.getLogger(__name__)

LOG_POWER_CAP = 4
PRUNE_RTOL = 1e-14
# resonant coefficients below this fraction of max|F| are rounding residue of an exact cancellation
RESONANCE_RTOL = 1e-10


class ExponentUnderflow(ArithmeticError):
    """A radial exponent dropped below ``-1``."""


class LogPowerCapExceeded(ArithmeticError):
    """A resonance cascade needed more log powers than allowed."""


@dataclass(frozen=True, eq=False)
class BallField:
    """Immutable field ``sum c r^a log^q Z_l``; ``terms[(a, q)]`` is a length ``L+1`` vector."""

    d: int
    terms: dict

    @property
    def degree(self) -> int:
        if not self.terms:
            return 0
        return len(next(iter(self.terms.values()))) - 1

    @property
    def is_zero(self) -> bool:
        return not self.terms

    @property
    def is_regular(self) -> bool:
        """Every term has ``a >= 0`` and ``a = 0`` only without logs."""
        return all(a >= 0 and (a > 0 or q == 0) for a, q in self.terms)

    @property
    def has_log(self) -> bool:
        return any(q > 0 for _, q in self.terms)

    @property
    def max_exponent(self) -> int:
        return max((a for a, _ in self.terms), default=0)

    def max_abs(self) -> float:
        return max((float(np.max(np.abs(v))) for v in self.terms.values()), default=0.0)

    def coeff(self, a: int, q: int, ell: int) -> float:
        v = self.terms.get((a, q))
        if v is None or ell >= len(v):
            return 0.0
        return float(v[ell])

    def keys(self) -> list:
        return sorted(self.terms)

    def __add__(self, other: "BallField") -> "BallField":
        return add(self, other)

    def __sub__(self, other: "BallField") -> "BallField":
        return add(self, other, -1.0)

    def __mul__(self, c: float) -> "BallField":
        return _build(self.d, {k: float(c) * v for k, v in self.terms.items()})

    __rmul__ = __mul__

    def __call__(self, r, theta) -> np.ndarray:
        """Pointwise values; ``r`` and ``theta`` broadcast together."""
        r = np.asarray(r, dtype=float)
        theta = np.asarray(theta, dtype=float)
        out = np.zeros(np.broadcast(r, theta).shape)
        for (a, q), v in self.terms.items():
            out = out + r**a * np.log(r) ** q * ZonalFn(self.d, v)(theta)
        return out


def _build(d: int, raw: dict, prune: bool = True) -> BallField:
    """Normalize raw ``{(a, q): vector}`` data: pad, prune tiny entries, trim degrees."""
    raw = {k: np.asarray(v, dtype=float) for k, v in raw.items()}
    if not raw:
        return BallField(d, {})
    scale = max(float(np.max(np.abs(v))) if v.size else 0.0 for v in raw.values())
    tol = PRUNE_RTOL * scale if prune else 0.0
    L = 0
    kept = {}
    for k, v in raw.items():
        v = np.where(np.abs(v) > tol, v, 0.0)
        nz = np.nonzero(v)[0]
        if nz.size:
            kept[k] = v
            L = max(L, int(nz[-1]))
    terms = {}
    for k in sorted(kept):
        v = np.zeros(L + 1)
        m = min(L + 1, len(kept[k]))
        v[:m] = kept[k][:m]
        v.setflags(write=False)
        terms[k] = v
    return BallField(d, terms)


def _accumulate(raw: dict, key: tuple, vec: np.ndarray) -> None:
    cur = raw.get(key)
    if cur is None:
        raw[key] = np.array(vec, dtype=float)
        return
    n = max(len(cur), len(vec))
    out = np.zeros(n)
    out[: len(cur)] += cur
    out[: len(vec)] += vec
    raw[key] = out


def zero_field(d: int) -> BallField:
    return BallField(d, {})


def from_terms(d: int, terms: dict) -> BallField:
    """Public constructor from ``{(a, q): coefficient vector}``."""
    for a, q in terms:
        if q < 0:
            raise ValueError("log power must be >= 0")
    return _build(d, terms)


def solid_harmonic(xi: ZonalFn) -> BallField:
    """Harmonic extension ``sum xi_l r^l Z_l``."""
    raw = {}
    for ell, c in enumerate(xi.coeffs):
        if c != 0.0:
            v = np.zeros(ell + 1)
            v[ell] = c
            _accumulate(raw, (ell, 0), v)
    return _build(xi.d, raw, prune=False)


def add(u: BallField, v: BallField, c: float = 1.0) -> BallField:
    """``u + c v``."""
    if u.d != v.d:
        raise ValueError("dimension mismatch")
    raw = {k: np.array(x) for k, x in u.terms.items()}
    for k, x in v.terms.items():
        _accumulate(raw, k, c * x)
    return _build(u.d, raw)


def _check_underflow(raw: dict) -> None:
    for (a, q), v in raw.items():
        if a < -1 and np.any(v != 0.0):
            raise ExponentUnderflow(f"radial exponent {a} < -1 produced (log power {q})")


def bf_laplacian(u: BallField) -> BallField:
    """Exact Laplacian, mode by mode.

    ``r^a L^q Z_l -> [D L^q + q(2a+d-1) L^{q-1} + q(q-1) L^{q-2}] r^{a-2} Z_l``
    with ``L = log r`` and ``D = a(a+d-1) - l(l+d-1)``.
    """
    d = u.d
    lam = lb_eigenvalues(d, u.degree)
    raw = {}
    for (a, q), c in u.terms.items():
        D = a * (a + d - 1) - lam
        _accumulate(raw, (a - 2, q), D * c)
        if q >= 1:
            _accumulate(raw, (a - 2, q - 1), q * (2 * a + d - 1) * c)
        if q >= 2:
            _accumulate(raw, (a - 2, q - 2), q * (q - 1) * c)
    # exact cancellations (e.g. D = 0 on solid harmonics) must not trip the check
    raw = {k: np.where(v == 0.0, 0.0, v) for k, v in raw.items()}
    raw = {k: v for k, v in raw.items() if np.any(v != 0.0)}
    _check_underflow(raw)
    return _build(d, raw)


def bf_dr(u: BallField) -> BallField:
    """Radial derivative ``d/dr``."""
    raw = {}
    for (a, q), c in u.terms.items():
        if a != 0:
            _accumulate(raw, (a - 1, q), a * c)
        if q >= 1:
            _accumulate(raw, (a - 1, q - 1), q * c)
    _check_underflow(raw)
    return _build(u.d, raw)


def bf_r_inv(u: BallField) -> BallField:
    """Multiplication by ``1/r``."""
    raw = {(a - 1, q): c for (a, q), c in u.terms.items()}
    _check_underflow(raw)
    return _build(u.d, raw, prune=False)


def bf_trace(u: BallField) -> ZonalFn:
    """Boundary values ``u(1, .)``: only log-free terms survive."""
    out = np.zeros(u.degree + 1)
    for (a, q), c in u.terms.items():
        if q == 0:
            out += c
    return ZonalFn(u.d, out)


def bf_trace_dr(u: BallField) -> ZonalFn:
    """Boundary values of ``du/dr`` at ``r = 1``."""
    out = np.zeros(u.degree + 1)
    for (a, q), c in u.terms.items():
        if q == 0:
            out += a * c
        elif q == 1:
            out += c
    return ZonalFn(u.d, out)


def _apply_angular(u: BallField, mat_fn) -> BallField:
    if u.is_zero:
        return u
    M = mat_fn(u.degree)
    return _build(u.d, {k: M @ c for k, c in u.terms.items()})


def bf_mul_zonal(f: ZonalFn, u: BallField) -> BallField:
    """Multiply every angular part by ``f``; radial parts unchanged."""
    return _apply_angular(u, lambda L: mul_matrix(f, L))


def bf_grad_dot_zonal(rho: ZonalFn, u: BallField) -> BallField:
    """Replace each angular part ``g`` by ``(d rho/d theta)(d g/d theta)``."""
    return _apply_angular(u, lambda L: grad_dot_matrix(rho, L))


def op_L1(rho: ZonalFn, u: BallField) -> BallField:
    """``-2 rho Lap u + (LB rho) r^-1 u_r + 2 grad rho . r^-1 grad_S u_r``."""
    _require_regular(u)
    ur_over_r = bf_r_inv(bf_dr(u))
    out = -2.0 * bf_mul_zonal(rho, bf_laplacian(u))
    out = out + bf_mul_zonal(apply_lb(rho), ur_over_r)
    out = out + 2.0 * bf_grad_dot_zonal(rho, ur_over_r)
    return out


def op_L2(rho: ZonalFn, u: BallField) -> BallField:
    """``rho^2 Lap u + rho L1 u - |grad rho|^2 (u_rr + 2 r^-1 u_r)``."""
    _require_regular(u)
    rho2 = bf_mul_zonal(rho, bf_mul_zonal(rho, bf_laplacian(u)))
    ur = bf_dr(u)
    radial = bf_dr(ur) + 2.0 * bf_r_inv(ur)
    grad2 = grad_dot(rho, rho)
    return rho2 + bf_mul_zonal(rho, op_L1(rho, u)) - bf_mul_zonal(grad2, radial)


def _require_regular(u: BallField) -> None:
    if not u.is_regular:
        raise ValueError("operator requires a regular field (a >= 0, no log at a = 0)")


@dataclass(frozen=True)
class PoissonReport:
    resonant_terms: int
    cancelled_resonances: int
    max_cancelled: float
    log_terms: int


def bf_poisson_dirichlet(
    F: BallField,
    xi: ZonalFn,
    log_cap: int = LOG_POWER_CAP,
    resonance_rtol: float = RESONANCE_RTOL,
    report: list | None = None,
) -> BallField:
    """Solve ``Lap w = F`` in the ball with ``w = xi`` on the sphere.

    Each right-hand-side term ``c r^a L^q Z_l`` gets the particular ansatz
    ``sum_j b_j r^{a+2} L^j`` solved from the top log power down. When
    ``a + 2 = l`` the operator is resonant; the ansatz then runs over log
    powers ``1..q+1`` with the log-free coefficient fixed at 0. Resonant
    coefficients smaller than ``resonance_rtol * max|F|`` are treated as an
    exact cancellation and dropped (counted in the report). The Dirichlet data
    is matched with the regular homogeneous solutions ``r^l Z_l`` only.

    If ``report`` is a list, a :class:`PoissonReport` is appended to it.
    """
    if F.d != xi.d:
        raise ValueError("dimension mismatch")
    d = F.d
    L = max(F.degree, xi.degree)
    lam = lb_eigenvalues(d, L)
    ells = np.arange(L + 1)
    raw = {}
    n_res = n_cancel = 0
    max_cancel = 0.0
    res_tol = resonance_rtol * F.max_abs()
    for (a, q), c_in in F.terms.items():
        if a < -1:
            raise ExponentUnderflow(f"right-hand side has r^{a}; need a >= -1")
        c = np.zeros(L + 1)
        c[: len(c_in)] = c_in
        A = a + 2
        D = A * (A + d - 1) - lam
        s = 2 * A + d - 1
        resonant = (ells == A) & (c != 0.0)
        if np.any(resonant) and abs(c[A]) <= res_tol:
            n_cancel += 1
            max_cancel = max(max_cancel, abs(c[A]))
            resonant[:] = False
        plain = ~(ells == A)
        # non-resonant modes
        b = [np.zeros(L + 1) for _ in range(q + 3)]
        Dp = np.where(plain, D, 1.0)
        b[q] = np.where(plain, c / Dp, 0.0)
        for j in range(q - 1, -1, -1):
            b[j] = np.where(plain, -((j + 1) * s * b[j + 1] + (j + 2) * (j + 1) * b[j + 2]) / Dp, 0.0)
        for j in range(q + 1):
            if np.any(b[j] != 0.0):
                _accumulate(raw, (A, j), b[j])
        if np.any(resonant):
            n_res += 1
            if q + 1 > log_cap:
                raise LogPowerCapExceeded(
                    f"resonant term r^{a} log^{q} at degree {A} needs log power {q + 1} > cap {log_cap}"
                )
            ell = A
            top = c[ell] / ((q + 1) * s)
            coef = {q + 1: top}
            for j in range(q, 0, -1):
                coef[j] = -(j + 1) * coef[j + 1] / s
            for j, val in coef.items():
                v = np.zeros(L + 1)
                v[ell] = val
                _accumulate(raw, (A, j), v)
    particular = _build(d, raw, prune=False)
    correction = xi.padded(L) - bf_trace(particular).padded(L)
    hom = solid_harmonic(ZonalFn(d, correction))
    w = add(particular, hom)
    if not w.is_regular:
        raise ValueError("Poisson solution is not regular; invalid right-hand side")
    n_log = sum(1 for _, q in w.terms if q > 0)
    if n_log:
        log.info("Poisson solve produced %d log-radial term group(s)", n_log)
    if report is not None:
        report.append(
            PoissonReport(
                resonant_terms=n_res,
                cancelled_resonances=n_cancel,
                max_cancelled=max_cancel,
                log_terms=n_log,
            )
        )
    return w
