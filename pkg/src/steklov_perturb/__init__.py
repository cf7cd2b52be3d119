"""Perturbation series for the Dirichlet-to-Neumann map and Steklov eigenvalues
of nearly-hyperspherical domains ``r <= 1 + eps rho(theta)`` in R^{d+1}."""

__version__ = "0.1.0"

from .sphere_basis import (  # noqa: E402
    CapacityError,
    QuadRule,
    ZonalFn,
    analyze,
    apply_lb,
    grad_dot,
    harmonic_dim,
    lb_eigenvalue,
    make_quadrature,
    multiply,
    sobolev_norm,
    synthesize,
)
from .ball_field import BallField, bf_poisson_dirichlet, op_L1, op_L2  # noqa: E402
from .dno_series import (  # noqa: E402
    decay_estimate,
    dno_apply,
    g_series_matrices,
    ghat_series,
    harmonic_series,
    m_factor_series,
)
from .steklov_eigen import branch_curves, first_order, steklov_eigs  # noqa: E402
from .direct_oracle import build_collocation, oracle_eigs  # noqa: E402
