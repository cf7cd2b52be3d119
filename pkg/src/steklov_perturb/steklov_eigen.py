"""Steklov eigenvalues from truncated DNO series: spectra, branches, slopes at eps = 0."""

from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass

import numpy as np

from .dno_series import DnoSeries, g_series_matrices
from .sphere_basis import ZonalFn, harmonic_dim

log = logging.getLogger(__name__)

IMAG_TOL = 1e-8
AMBIGUITY_TOL = 1e-10


@dataclass(frozen=True)
class EigenResult:
    values: np.ndarray
    max_imag: float
    n_complex: int


def eigs_from_series(series: DnoSeries, eps: float, imag_tol: float = IMAG_TOL) -> EigenResult:
    """Spectrum of ``sum_n eps^n G_n``; real parts sorted ascending."""
    mat = series.matrix(eps)
    try:
        lam = np.linalg.eigvals(mat)
    except np.linalg.LinAlgError as exc:
        raise RuntimeError(f"eigensolver failed at eps={eps}") from exc
    imag = np.abs(lam.imag)
    n_complex = int(np.count_nonzero(imag > imag_tol))
    if n_complex:
        warnings.warn(
            f"{n_complex} eigenvalue(s) with |Im| > {imag_tol:g} at eps={eps} "
            "(basis truncation artifact?)",
            RuntimeWarning,
            stacklevel=2,
        )
    return EigenResult(
        values=np.sort(lam.real),
        max_imag=float(imag.max(initial=0.0)),
        n_complex=n_complex,
    )


def steklov_eigs(rho: ZonalFn, eps: float, N: int, L: int) -> EigenResult:
    """Zonal Steklov eigenvalues of ``r <= 1 + eps rho`` from the order-``N`` series."""
    return eigs_from_series(g_series_matrices(rho, N, L), eps)


@dataclass(frozen=True)
class EigenBranch:
    label: int
    eps: tuple
    sigma: tuple
    imag_residual: float
    multiplicity: int
    ambiguous: bool = False


def _match(prev: np.ndarray, cand: np.ndarray, tol: float) -> tuple[np.ndarray, bool]:
    """Greedy stable matching on ``|prev_i - cand_j|``; returns ``assign[i] = j``."""
    cost = np.abs(prev[:, None] - cand[None, :])
    order = np.argsort(cost, axis=None, kind="stable")
    assign = np.full(prev.size, -1)
    taken = np.zeros(cand.size, dtype=bool)
    for flat in order:
        i, j = divmod(int(flat), cand.size)
        if assign[i] < 0 and not taken[j]:
            assign[i] = j
            taken[j] = True
    ambiguous = False
    if cand.size > 1:
        srt = np.sort(cost, axis=1)
        ambiguous = bool(np.any(srt[:, 1] - srt[:, 0] < tol))
    return assign, ambiguous


def branch_curves(
    rho: ZonalFn, eps_grid, N: int, L: int, ambiguity_tol: float = AMBIGUITY_TOL
) -> list:
    """Continuous eigenvalue curves labelled by their integer value at ``eps = 0``.

    Matching starts at ``eps = 0`` and walks outward in both directions. A
    single-point grid without 0 is labelled by rank.
    """
    grid = np.asarray(list(eps_grid), dtype=float)
    if grid.size == 0:
        raise ValueError("empty eps grid")
    if grid.size > 1 and not (np.all(np.diff(grid) > 0) or np.all(np.diff(grid) < 0)):
        raise ValueError("eps grid must be strictly monotone")
    zero = np.nonzero(grid == 0.0)[0]
    by_rank = grid.size == 1 and zero.size == 0
    if by_rank:
        zero = np.array([0])
    elif zero.size != 1:
        raise ValueError("eps grid must contain 0 exactly once")
    series = g_series_matrices(rho, N, L)
    results = [eigs_from_series(series, e) for e in grid]
    k0 = int(zero[0])
    n = L + 1
    sigma = np.zeros((grid.size, n))
    sigma[k0] = results[k0].values
    ambiguous = np.zeros(n, dtype=bool)
    for path in (range(k0 + 1, grid.size), range(k0 - 1, -1, -1)):
        prev_k = k0
        for k in path:
            assign, amb = _match(sigma[prev_k], results[k].values, ambiguity_tol)
            sigma[k] = results[k].values[assign]
            if amb:
                log.warning("ambiguous branch matching at eps=%g", grid[k])
                ambiguous[:] = True
            prev_k = k
    imag = max(r.max_imag for r in results)
    labels = list(range(n)) if by_rank else [int(round(s)) for s in sigma[k0]]
    return [
        EigenBranch(
            label=labels[b],
            eps=tuple(float(e) for e in grid),
            sigma=tuple(float(s) for s in sigma[:, b]),
            imag_residual=imag,
            multiplicity=harmonic_dim(rho.d, labels[b]),
            ambiguous=bool(ambiguous[b]),
        )
        for b in range(n)
    ]


def first_order(rho: ZonalFn, L: int) -> np.ndarray:
    """``d sigma_l / d eps`` at ``eps = 0`` for the zonal branch through ``sigma = l``.

    ``G_0`` is diagonal with simple eigenvalues on the zonal subspace, so the
    derivative is the diagonal of ``G_1``.
    """
    return np.diag(g_series_matrices(rho, 1, L).matrices[1]).copy()
