"""DAG-Wishart prior over (L, d) given a parent-ordered DAG: normalizing
constant, DAG prior, and the conditional samplers and point estimators
used inside the MCMC steps.

All densities are evaluated in log space; per-vertex shapes are
phi_j = nu_j + c for a global offset c > 2.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.linalg import solve_triangular

from .core import OrderedDag, _block_cholesky, _schur_logdet, _require_symmetric
from .errors import CapExceeded, InvalidShape, NotPositiveDefinite, ValidationError

__all__ = [
    "DagWishartParams",
    "log_zeta_j",
    "log_prior_dag",
    "log_parent_set_target",
    "sample_L_column",
    "sample_d_j",
    "posterior_mean_L_column",
    "posterior_mode_d_j",
    "d_shape_rate",
]

_LOG_2 = math.log(2.0)
_LOG_PI = math.log(math.pi)


@dataclass(frozen=True)
class DagWishartParams:
    """Hyperparameters: scale matrix U, shape offset c with phi_j = nu_j + c,
    edge inclusion probability eta2, and optional per-vertex parent caps."""

    U: np.ndarray
    c: float = 10.0
    eta2: float = 0.1
    max_parents: tuple | None = None

    def __post_init__(self):
        U = np.array(self.U, dtype=float)
        _require_symmetric(U, "U")
        try:
            np.linalg.cholesky(U)
        except np.linalg.LinAlgError as exc:
            raise ValidationError("U must be positive definite") from exc
        if not self.c > 2.0:
            raise ValidationError(f"shape offset c must exceed 2, got {self.c}")
        if not 0.0 < self.eta2 < 1.0:
            raise ValidationError(f"eta2 must lie in (0, 1), got {self.eta2}")
        caps = self.max_parents
        if caps is not None:
            caps = tuple(int(x) for x in caps)
            if len(caps) != U.shape[0]:
                raise ValidationError("max_parents must give one cap per vertex")
            if any(x < 0 for x in caps):
                raise ValidationError("parent caps must be nonnegative")
        U.flags.writeable = False
        object.__setattr__(self, "U", U)
        object.__setattr__(self, "max_parents", caps)
        # identity scale admits a closed-form prior normalizer (unit Schur
        # complements and determinants), worth a fast path in the MH target
        object.__setattr__(self, "_u_identity", bool(np.array_equal(U, np.eye(U.shape[0]))))

    @property
    def q(self) -> int:
        return self.U.shape[0]

    @classmethod
    def default(cls, q: int, eta2: float | None = None, c: float = 10.0) -> "DagWishartParams":
        """U = I_q and eta2 = 1/q unless overridden (1/2 for the edgeless q = 1)."""
        if eta2 is None:
            eta2 = 1.0 / q if q > 1 else 0.5
        return cls(np.eye(q), c=c, eta2=eta2)

    def cap_for(self, j: int, q: int) -> int:
        avail = q - 1 - j
        if self.max_parents is None:
            return avail
        return min(avail, self.max_parents[j])


def _log_zeta(A: np.ndarray, phi_j: float, parents, j: int) -> float:
    nu = len(parents)
    if phi_j - nu <= 2.0:
        raise InvalidShape(f"phi_j - nu_j = {phi_j - nu} must exceed 2 at vertex {j + 1}")
    schur, logdet = _schur_logdet(A, parents, j)
    if schur <= 0.0:
        raise NotPositiveDefinite(f"Schur complement {schur:.3e} at vertex {j + 1}")
    a = 0.5 * phi_j - 0.5 * nu - 1.0
    return (
        math.lgamma(a)
        + (0.5 * phi_j - 1.0) * _LOG_2
        + 0.5 * nu * _LOG_PI
        - a * math.log(schur)
        - 0.5 * logdet
    )


def log_zeta_j(A, phi_j: float, dag: OrderedDag, j: int) -> float:
    """Log normalizing constant of the vertex-j factor of the DAG-Wishart
    density with scale A and shape phi_j."""
    A = np.asarray(A, dtype=float)
    return _log_zeta(A, phi_j, dag.parents[j], j)


def log_prior_dag(dag: OrderedDag, params: DagWishartParams) -> float:
    """Log prior of a DAG under independent edge inclusion with probability eta2."""
    q = dag.q
    caps = params.max_parents
    le, l1e = math.log(params.eta2), math.log1p(-params.eta2)
    total = 0.0
    for j in range(q - 1):
        nu = dag.nu(j)
        if caps is not None and nu > caps[j]:
            raise CapExceeded(f"vertex {j + 1} has {nu} parents, cap {caps[j]}")
        total += nu * le + (q - (j + 1) - nu) * l1e
    return total


def _log_parent_set_target(parents, j, n_stilde, params, n) -> float:
    """Unnormalized log posterior of one parent set given the scatter.

    n_stilde is n times the posterior scale (n S + U for the exact sampler,
    n Shat + U for the two-step one).
    """
    nu = len(parents)
    q = params.q
    if nu > params.cap_for(j, q):
        return -math.inf
    phi = nu + params.c
    lz_post = _log_zeta(n_stilde, phi + n, parents, j)
    if params._u_identity:
        lz_prior = (
            math.lgamma(0.5 * params.c - 1.0)
            + (0.5 * phi - 1.0) * _LOG_2
            + 0.5 * nu * _LOG_PI
        )
    else:
        lz_prior = _log_zeta(params.U, phi, parents, j)
    le, l1e = math.log(params.eta2), math.log1p(-params.eta2)
    return lz_post - lz_prior + nu * le + (q - (j + 1) - nu) * l1e


def log_parent_set_target(dag: OrderedDag, j: int, n_stilde, params: DagWishartParams, n: int) -> float:
    """Metropolis-Hastings target over pa_j: the zeta ratio times the edge prior."""
    return _log_parent_set_target(dag.parents[j], j, np.asarray(n_stilde, float), params, n)


def d_shape_rate(n: int, c: float, schur: float):
    """Inverse-gamma shape (c + n)/2 - 1 and rate n * schur / 2 for a
    conditional d_j update."""
    shape = 0.5 * (c + n) - 1.0
    if shape <= 0.0:
        raise InvalidShape(f"inverse-gamma shape {shape} must be positive")
    return shape, 0.5 * n * schur


def sample_d_j(rng: np.random.Generator, Atilde, dag: OrderedDag, j: int, n: int, c: float) -> float:
    """Draw d_j ~ InverseGamma((c + n)/2 - 1, n * Atilde_{j|pa_j} / 2)."""
    A = np.asarray(Atilde, dtype=float)
    schur, _ = _schur_logdet(A, dag.parents[j], j)
    if schur <= 0.0:
        raise NotPositiveDefinite(f"conditional scale {schur:.3e} at vertex {j + 1}")
    shape, rate = d_shape_rate(n, c, schur)
    return rate / rng.gamma(shape)


def posterior_mode_d_j(Atilde, dag: OrderedDag, j: int, n: int, c: float) -> float:
    """Mode rate / (shape + 1) of the inverse-gamma conditional for d_j."""
    A = np.asarray(Atilde, dtype=float)
    schur, _ = _schur_logdet(A, dag.parents[j], j)
    if schur <= 0.0:
        raise NotPositiveDefinite(f"conditional scale {schur:.3e} at vertex {j + 1}")
    shape, rate = d_shape_rate(n, c, schur)
    return rate / (shape + 1.0)


def _L_column_mean_chol(A: np.ndarray, parents, j: int):
    """Mean -(A^{>j})^{-1} A_{.j}^{>} and the block Cholesky factor."""
    idx = np.asarray(parents, dtype=np.intp)
    C = _block_cholesky(A[np.ix_(idx, idx)])
    z = solve_triangular(C, A[idx, j], lower=True)
    mean = -solve_triangular(C.T, z, lower=False)
    return mean, C

def posterior_mean_L_column(Atilde, dag: OrderedDag, j: int) -> np.ndarray:
    """Conditional mean of the vertex-j column of L, in parent order."""
    if dag.nu(j) == 0:
        return np.zeros(0)
    A = np.asarray(Atilde, dtype=float)
    mean, _ = _L_column_mean_chol(A, dag.parents[j], j)
    return mean


def sample_L_column(rng: np.random.Generator, Atilde, d_j: float, dag: OrderedDag, j: int, n: int) -> np.ndarray:
    """Draw the parent entries of column j of L from
    N(-(A^{>j})^{-1} A_{.j}, (d_j / n) (A^{>j})^{-1})."""
    if d_j <= 0.0:
        raise ValidationError(f"d_j must be positive, got {d_j}")
    nu = dag.nu(j)
    if nu == 0:
        return np.zeros(0)
    A = np.asarray(Atilde, dtype=float)
    mean, C = _L_column_mean_chol(A, dag.parents[j], j)
    noise = solve_triangular(C.T, rng.standard_normal(nu), lower=False)
    return mean + math.sqrt(d_j / n) * noise
