"""Zonal hyperspherical harmonics on S^d.

Functions that depend only on the final colatitude ``theta`` are expanded in
the orthonormal basis

    Z_l(theta) = C_l^lam(cos theta) / ||C_l^lam||,    lam = (d - 1) / 2,

normalized against ``int_0^pi f g sin^{d-1}(theta) dtheta``. The area factor of
the lower-dimensional sphere is dropped; every quantity computed downstream
(DNO matrices, eigenvalues) is invariant under that global rescaling.

All objects are immutable and every function is pure.
"""

from __future__ import annotations

import functools
import math
import os
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import eigh_tridiagonal
from scipy.special import beta as beta_fn

DEFAULT_MAX_QUAD = 2048


class CapacityError(ValueError):
    """A requested degree exceeds what a quadrature rule can resolve."""


def max_quadrature_size() -> int:
    """Node-count cap; ``STEKLOV_MAX_QUAD`` overrides the default of 2048."""
    raw = os.environ.get("STEKLOV_MAX_QUAD")
    if raw is None:
        return DEFAULT_MAX_QUAD
    return int(raw)


def _check_dim(d: int) -> None:
    if int(d) != d or d < 2:
        raise ValueError(f"sphere dimension d must be an integer >= 2, got {d!r}")


def lb_eigenvalue(d: int, ell: int) -> float:
    """Eigenvalue ``ell (ell + d - 1)`` of ``-Laplace-Beltrami`` on degree ``ell``."""
    if ell < 0:
        raise ValueError("ell must be >= 0")
    return float(ell * (ell + d - 1))


def harmonic_dim(d: int, ell: int) -> int:
    """Dimension of the space of degree-``ell`` spherical harmonics on S^d.

    Homogeneous polynomials of degree ``ell`` in ``d + 1`` variables modulo
    ``|x|^2`` times those of degree ``ell - 2``.
    """
    if ell < 0:
        raise ValueError("ell must be >= 0")
    n = d + 1
    total = math.comb(ell + n - 1, n - 1)
    if ell >= 2:
        total -= math.comb(ell - 2 + n - 1, n - 1)
    return total


def sphere_mass(d: int) -> float:
    """``int_0^pi sin^{d-1}(theta) dtheta``."""
    return float(beta_fn(0.5, d / 2.0))


def _recurrence_coeffs(d: int, n: int) -> np.ndarray:
    """Off-diagonal Jacobi-matrix entries ``b_1..b_n`` for the Gegenbauer weight.

    The orthonormal polynomials satisfy ``x p_k = b_{k+1} p_{k+1} + b_k p_{k-1}``.
    """
    lam = (d - 1) / 2.0
    k = np.arange(1, n + 1, dtype=float)
    return np.sqrt(k * (k + 2 * lam - 1) / (4 * (k + lam) * (k + lam - 1)))


def zonal_basis(d: int, L: int, x: np.ndarray) -> np.ndarray:
    """Values of ``Z_0..Z_L`` at ``x = cos(theta)``; shape ``(L + 1, len(x))``."""
    x = np.asarray(x, dtype=float)
    b = _recurrence_coeffs(d, L + 1)
    p = np.empty((L + 1,) + x.shape)
    p[0] = 1.0 / math.sqrt(sphere_mass(d))
    if L >= 1:
        p[1] = x * p[0] / b[0]
    for k in range(1, L):
        p[k + 1] = (x * p[k] - b[k - 1] * p[k - 1]) / b[k]
    return p


def zonal_basis_dx(d: int, L: int, x: np.ndarray) -> np.ndarray:
    """Derivatives ``dZ_l/dx`` at ``x = cos(theta)``, from the differentiated recurrence."""
    x = np.asarray(x, dtype=float)
    b = _recurrence_coeffs(d, L + 1)
    p = zonal_basis(d, L, x)
    dp = np.zeros_like(p)
    if L >= 1:
        dp[1] = p[0] / b[0]
    for k in range(1, L):
        dp[k + 1] = (p[k] + x * dp[k] - b[k - 1] * dp[k - 1]) / b[k]
    return dp


def zonal_basis_dtheta(d: int, L: int, theta: np.ndarray) -> np.ndarray:
    """``dZ_l/dtheta = -sin(theta) dZ_l/dx``; shape ``(L + 1, len(theta))``."""
    theta = np.asarray(theta, dtype=float)
    return -np.sin(theta) * zonal_basis_dx(d, L, np.cos(theta))


@dataclass(frozen=True, eq=False)
class QuadRule:
    """Gauss rule on ``[0, pi]`` for the weight ``sin^{d-1}(theta)``.

    Exact for ``p(cos theta)`` with ``deg p <= 2n - 1``. Nodes are sorted by
    increasing ``theta``. Basis values at the nodes are precomputed lazily.
    """

    d: int
    n: int
    theta: np.ndarray
    weights: np.ndarray
    _cache: dict = field(default_factory=dict, repr=False, compare=False)

    @property
    def x(self) -> np.ndarray:
        return np.cos(self.theta)

    @property
    def capacity(self) -> int:
        """Highest degree this rule can analyze (discrete orthogonality)."""
        return self.n - 1

    @property
    def exactness(self) -> int:
        return 2 * self.n - 1

    def basis(self, L: int) -> np.ndarray:
        """Cached ``Z_l(theta_j)`` for ``l <= L``; shape ``(L + 1, n)``."""
        key = ("Z", L)
        if key not in self._cache:
            vals = zonal_basis(self.d, L, self.x)
            vals.setflags(write=False)
            self._cache[key] = vals
        return self._cache[key]

    def basis_dtheta(self, L: int) -> np.ndarray:
        key = ("dZ", L)
        if key not in self._cache:
            vals = zonal_basis_dtheta(self.d, L, self.theta)
            vals.setflags(write=False)
            self._cache[key] = vals
        return self._cache[key]

    def integrate(self, values: np.ndarray) -> float:
        return float(np.dot(self.weights, values))


def make_quadrature(d: int, n: int) -> QuadRule:
    """Gauss nodes/weights for ``(1 - x^2)^{(d-2)/2}`` mapped through ``x = cos(theta)``.

    Nodes come from the symmetric tridiagonal Jacobi matrix and get one Newton
    polish; weights use the Christoffel formula ``1 / sum_k p_k(x_j)^2``, which
    keeps full relative accuracy near the endpoints.
    """
    _check_dim(d)
    if n < 1:
        raise ValueError("quadrature size n must be >= 1")
    cap = max_quadrature_size()
    if n > cap:
        raise CapacityError(
            f"quadrature size {n} exceeds the configured maximum {cap} "
            "(set STEKLOV_MAX_QUAD to raise it)"
        )
    return _gauss_rule(int(d), int(n))


@functools.lru_cache(maxsize=256)
def _gauss_rule(d: int, n: int) -> QuadRule:
    if n == 1:
        x = np.zeros(1)
    else:
        b = _recurrence_coeffs(d, n - 1)
        x = eigh_tridiagonal(np.zeros(n), b, eigvals_only=True)
        p = zonal_basis(d, n, x)
        dp = zonal_basis_dx(d, n, x)
        x = x - p[n] / dp[n]
    x = np.clip(x, -1.0, 1.0)
    p = zonal_basis(d, n - 1, x)
    w = 1.0 / np.sum(p * p, axis=0)
    theta = np.arccos(x)
    order = np.argsort(theta)
    theta, w = theta[order], w[order]
    theta.setflags(write=False)
    w.setflags(write=False)
    return QuadRule(d=d, n=n, theta=theta, weights=w)


def rule_for_degree(d: int, degree: int) -> QuadRule:
    """Smallest rule integrating polynomials of ``degree`` in ``cos(theta)`` exactly."""
    return make_quadrature(d, max(degree, 0) // 2 + 1)


@dataclass(frozen=True, eq=False)
class ZonalFn:
    """Function on S^d depending on the final colatitude only.

    ``coeffs[l]`` multiplies the orthonormal zonal harmonic ``Z_l``.
    """

    d: int
    coeffs: np.ndarray

    def __post_init__(self):
        _check_dim(self.d)
        c = np.array(self.coeffs, dtype=float).reshape(-1)
        if c.size == 0:
            c = np.zeros(1)
        c.setflags(write=False)
        object.__setattr__(self, "coeffs", c)

    @property
    def degree(self) -> int:
        return self.coeffs.size - 1

    @classmethod
    def zeros(cls, d: int, L: int = 0) -> "ZonalFn":
        return cls(d, np.zeros(L + 1))

    @classmethod
    def basis_fn(cls, d: int, ell: int, scale: float = 1.0) -> "ZonalFn":
        c = np.zeros(ell + 1)
        c[ell] = scale
        return cls(d, c)

    @classmethod
    def from_sparse(cls, d: int, mapping: dict) -> "ZonalFn":
        """Build from ``{degree: coefficient}`` (keys may be strings)."""
        items = {int(k): float(v) for k, v in mapping.items()}
        if any(k < 0 for k in items):
            raise ValueError("zonal degrees must be >= 0")
        L = max(items, default=0)
        c = np.zeros(L + 1)
        for k, v in items.items():
            c[k] = v
        return cls(d, c)

    def padded(self, L: int) -> np.ndarray:
        """Coefficient vector zero-padded (or truncated) to length ``L + 1``."""
        out = np.zeros(L + 1)
        m = min(L, self.degree) + 1
        out[:m] = self.coeffs[:m]
        return out

    def trimmed(self, tol: float = 0.0) -> "ZonalFn":
        """Drop trailing coefficients with magnitude ``<= tol``."""
        nz = np.nonzero(np.abs(self.coeffs) > tol)[0]
        L = int(nz[-1]) if nz.size else 0
        return ZonalFn(self.d, self.coeffs[: L + 1])

    def __call__(self, theta) -> np.ndarray:
        theta = np.asarray(theta, dtype=float)
        return np.tensordot(self.coeffs, zonal_basis(self.d, self.degree, np.cos(theta)), axes=1)

    def dtheta(self, theta) -> np.ndarray:
        basis = zonal_basis_dtheta(self.d, self.degree, theta)
        return np.tensordot(self.coeffs, basis, axes=1)

    def __add__(self, other: "ZonalFn") -> "ZonalFn":
        _same_dim(self, other)
        L = max(self.degree, other.degree)
        return ZonalFn(self.d, self.padded(L) + other.padded(L))

    def __sub__(self, other: "ZonalFn") -> "ZonalFn":
        return self + (-1.0) * other

    def __mul__(self, c: float) -> "ZonalFn":
        return ZonalFn(self.d, float(c) * self.coeffs)

    __rmul__ = __mul__

    def __neg__(self) -> "ZonalFn":
        return (-1.0) * self

    def sup_norm(self, samples: int = 4001) -> float:
        """``max |f|`` over a dense grid in ``cos(theta)`` including both poles."""
        x = np.linspace(-1.0, 1.0, samples)
        return float(np.max(np.abs(self.coeffs @ zonal_basis(self.d, self.degree, x))))


def _same_dim(f: ZonalFn, g: ZonalFn) -> None:
    if f.d != g.d:
        raise ValueError(f"dimension mismatch: d={f.d} vs d={g.d}")


def analyze(rule: QuadRule, values: np.ndarray, L: int | None = None) -> ZonalFn:
    """Zonal coefficients ``a_l = sum_j w_j f(theta_j) Z_l(theta_j)`` for ``l <= L``."""
    if L is None:
        L = rule.capacity
    if L > rule.capacity:
        raise CapacityError(
            f"degree {L} exceeds the capacity {rule.capacity} of an {rule.n}-node rule"
        )
    values = np.asarray(values, dtype=float)
    return ZonalFn(rule.d, rule.basis(L) @ (rule.weights * values))


def synthesize(f: ZonalFn, rule: QuadRule) -> np.ndarray:
    """Values of ``f`` at the nodes of ``rule``."""
    if f.degree > rule.capacity:
        raise CapacityError(
            f"degree {f.degree} exceeds the capacity {rule.capacity} of an {rule.n}-node rule"
        )
    return f.coeffs @ rule.basis(f.degree)


def multiply(f: ZonalFn, g: ZonalFn) -> ZonalFn:
    """Pointwise product, expanded to degree ``f.degree + g.degree``."""
    _same_dim(f, g)
    K = f.degree + g.degree
    rule = make_quadrature(f.d, K + 1)
    return analyze(rule, synthesize(f, rule) * synthesize(g, rule), K)


def _dtheta_at_nodes(f: ZonalFn, rule: QuadRule) -> np.ndarray:
    return f.coeffs @ rule.basis_dtheta(f.degree)


def grad_dot(f: ZonalFn, g: ZonalFn) -> ZonalFn:
    """Coefficients of ``grad f . grad g`` on S^d, i.e. ``(df/dtheta)(dg/dtheta)``.

    For zonal data only the final angle contributes and its scale factor is 1.
    The product is ``sin^2(theta) f'(x) g'(x)``, a polynomial of degree
    ``f.degree + g.degree`` in ``x``.
    """
    _same_dim(f, g)
    K = f.degree + g.degree
    rule = make_quadrature(f.d, K + 1)
    return analyze(rule, _dtheta_at_nodes(f, rule) * _dtheta_at_nodes(g, rule), K)


def mul_matrix(f: ZonalFn, L_in: int) -> np.ndarray:
    """Matrix of ``g -> f g`` from degrees ``<= L_in`` to degrees ``<= L_in + f.degree``."""
    K = L_in + f.degree
    rule = make_quadrature(f.d, K + 1)
    vals = synthesize(f, rule)
    Zout = rule.basis(K)
    Zin = rule.basis(L_in)
    return (Zout * (rule.weights * vals)) @ Zin.T


def grad_dot_matrix(f: ZonalFn, L_in: int) -> np.ndarray:
    """Matrix of ``g -> (df/dtheta)(dg/dtheta)``, same shape as :func:`mul_matrix`."""
    K = L_in + f.degree
    rule = make_quadrature(f.d, K + 1)
    vals = _dtheta_at_nodes(f, rule)
    Zout = rule.basis(K)
    dZin = rule.basis_dtheta(L_in)
    return (Zout * (rule.weights * vals)) @ dZin.T


def lb_eigenvalues(d: int, L: int) -> np.ndarray:
    ell = np.arange(L + 1, dtype=float)
    return ell * (ell + d - 1)


def apply_lb(f: ZonalFn) -> ZonalFn:
    """Laplace-Beltrami operator, diagonal in the zonal basis."""
    return ZonalFn(f.d, -lb_eigenvalues(f.d, f.degree) * f.coeffs)


def sobolev_norm(f: ZonalFn, s: float) -> float:
    """``H^s(S^d)`` norm ``sqrt(sum_l (1 + l(l+d-1))^s a_l^2)``."""
    if s < 0:
        raise ValueError("Sobolev index s must be >= 0")
    w = (1.0 + lb_eigenvalues(f.d, f.degree)) ** s
    return float(np.sqrt(np.sum(w * f.coeffs**2)))
