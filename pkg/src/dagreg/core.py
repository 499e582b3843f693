"""Core model types, the modified Cholesky decomposition, and DAG-indexed
submatrix operations.

Conventions
-----------
Responses are ordered so that every edge of the error DAG points from a
larger vertex to a smaller one.  Vertices are 0-based everywhere in code;
serialized files (CSV matrices, DAG JSON) use 1-based labels.

All types below are immutable values: arrays are defensively copied and
marked read-only, so instances are safe to share across threads.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np
from scipy.linalg import solve_triangular

from .errors import NotPositiveDefinite, SingularBlock, ValidationError

__all__ = [
    "RegressionData",
    "SparseCoefState",
    "OrderedDag",
    "CholeskyPair",
    "ErrorEstimate",
    "mcd_compose",
    "mcd_decompose",
    "dag_submatrices",
    "save_matrix_csv",
    "load_matrix_csv",
]


def _frozen(a, dtype=float) -> np.ndarray:
    out = np.array(a, dtype=dtype)
    out.flags.writeable = False
    return out


def _require_finite(a, name):
    if not np.isfinite(a).all():
        raise ValidationError(f"{name} contains non-finite entries")


def _require_symmetric(a, name, tol=1e-8):
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValidationError(f"{name} must be a square matrix, got shape {a.shape}")
    scale = max(float(np.abs(a).max(initial=0.0)), 1.0)
    if float(np.abs(a - a.T).max(initial=0.0)) > tol * scale:
        raise ValidationError(f"{name} is not symmetric")


@dataclass(frozen=True)
class RegressionData:
    """Observed design matrix X (n x p) and response matrix Y (n x q)."""

    X: np.ndarray
    Y: np.ndarray

    def __post_init__(self):
        X = _frozen(self.X)
        Y = _frozen(self.Y)
        if X.ndim != 2 or Y.ndim != 2:
            raise ValidationError("X and Y must be 2-d arrays")
        if X.shape[0] != Y.shape[0]:
            raise ValidationError(
                f"X has {X.shape[0]} rows but Y has {Y.shape[0]}"
            )
        if min(X.shape) < 1 or Y.shape[1] < 1:
            raise ValidationError("X and Y must be non-empty")
        _require_finite(X, "X")
        _require_finite(Y, "Y")
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "Y", Y)

    @property
    def n(self) -> int:
        return self.X.shape[0]

    @property
    def p(self) -> int:
        return self.X.shape[1]

    @property
    def q(self) -> int:
        return self.Y.shape[1]


@dataclass(frozen=True)
class SparseCoefState:
    """Coefficient matrix B (p x q) with its binary support indicator Gamma.

    Gamma[k, j] == 0 forces B[k, j] == 0; an included entry may still carry
    the value zero (a zero slab draw).
    """

    B: np.ndarray
    Gamma: np.ndarray

    def __post_init__(self):
        B = _frozen(self.B)
        G = _frozen(self.Gamma, dtype=np.uint8)
        if B.shape != G.shape or B.ndim != 2:
            raise ValidationError("B and Gamma must be 2-d arrays of equal shape")
        _require_finite(B, "B")
        if not np.isin(G, (0, 1)).all():
            raise ValidationError("Gamma entries must be 0 or 1")
        if np.any(B[G == 0] != 0.0):
            raise ValidationError("B must vanish wherever Gamma is 0")
        object.__setattr__(self, "B", B)
        object.__setattr__(self, "Gamma", G)

    @classmethod
    def zeros(cls, p: int, q: int) -> "SparseCoefState":
        return cls(np.zeros((p, q)), np.zeros((p, q), dtype=np.uint8))

    @classmethod
    def from_dense(cls, B) -> "SparseCoefState":
        B = np.asarray(B, dtype=float)
        return cls(B, (B != 0.0).astype(np.uint8))


@dataclass(frozen=True)
class OrderedDag:
    """Parent sets of a DAG whose edges all point from larger to smaller
    vertices under the fixed response ordering.

    parents[j] is a sorted tuple of vertices strictly greater than j; the
    last vertex always has an empty parent set.  Acyclicity is structural.
    """

    q: int
    parents: tuple

    def __post_init__(self):
        if self.q < 1:
            raise ValidationError("q must be positive")
        if len(self.parents) != self.q:
            raise ValidationError(f"expected {self.q} parent sets, got {len(self.parents)}")
        norm = []
        for j, pa in enumerate(self.parents):
            pa = tuple(sorted(int(i) for i in pa))
            if len(set(pa)) != len(pa):
                raise ValidationError(f"duplicate parent for vertex {j + 1}")
            if pa and (pa[0] <= j or pa[-1] >= self.q):
                raise ValidationError(
                    f"parents of vertex {j + 1} must lie strictly above it"
                )
            norm.append(pa)
        if norm and norm[-1]:
            raise ValidationError("the largest vertex cannot have parents")
        object.__setattr__(self, "parents", tuple(norm))

    @classmethod
    def empty(cls, q: int) -> "OrderedDag":
        return cls(q, tuple(() for _ in range(q)))

    @classmethod
    def from_edge_matrix(cls, m) -> "OrderedDag":
        m = np.asarray(m)
        q = m.shape[0]
        parents = tuple(tuple(np.nonzero(m[:, j])[0].tolist()) for j in range(q))
        return cls(q, parents)

    def nu(self, j: int) -> int:
        """Parent-set size of vertex j."""
        return len(self.parents[j])

    @property
    def n_edges(self) -> int:
        return sum(len(pa) for pa in self.parents)

    def edge_matrix(self) -> np.ndarray:
        """Strictly lower-triangular indicator, m[i, j] = 1 iff i is a parent of j."""
        m = np.zeros((self.q, self.q), dtype=np.uint8)
        for j, pa in enumerate(self.parents):
            m[list(pa), j] = 1
        return m

    def to_json(self) -> str:
        d = {
            "q": self.q,
            "parents": {str(j + 1): [i + 1 for i in pa] for j, pa in enumerate(self.parents)},
        }
        return json.dumps(d, indent=1, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "OrderedDag":
        d = json.loads(text)
        q = int(d["q"])
        parents = [()] * q
        for key, vals in d.get("parents", {}).items():
            j = int(key) - 1
            if not 0 <= j < q:
                raise ValidationError(f"vertex label {key} out of range 1..{q}")
            parents[j] = tuple(int(v) - 1 for v in vals)
        return cls(q, tuple(parents))


@dataclass(frozen=True)
class CholeskyPair:
    """Unit lower-triangular factor L and positive diagonal d with
    precision L diag(1/d) L^T.

    When tied to an OrderedDag, L[i, j] may be nonzero for i > j only if
    i is a parent of j.
    """

    L: np.ndarray
    d: np.ndarray

    def __post_init__(self):
        L = _frozen(self.L)
        d = _frozen(self.d).ravel()
        if L.ndim != 2 or L.shape[0] != L.shape[1] or d.shape[0] != L.shape[0]:
            raise ValidationError("L must be square with a matching diagonal vector")
        _require_finite(L, "L")
        _require_finite(d, "d")
        if np.any(np.abs(np.diag(L) - 1.0) > 1e-12):
            raise ValidationError("L must have a unit diagonal")
        if np.any(np.triu(L, 1) != 0.0):
            raise ValidationError("L must be lower triangular")
        if np.any(d <= 0.0):
            raise ValidationError("all diagonal entries d must be positive")
        object.__setattr__(self, "L", L)
        object.__setattr__(self, "d", _frozen(d))

    @property
    def q(self) -> int:
        return self.d.shape[0]

    @classmethod
    def identity(cls, q: int) -> "CholeskyPair":
        return cls(np.eye(q), np.ones(q))

    def support(self, tol: float = 0.0) -> OrderedDag:
        """DAG whose edges are the below-diagonal entries with |L| > tol."""
        mask = (np.abs(np.tril(self.L, -1)) > tol).astype(np.uint8)
        return OrderedDag.from_edge_matrix(mask)


@dataclass(frozen=True)
class ErrorEstimate:
    """Estimated error matrix Ehat (n x q) and its scatter Shat = Ehat'Ehat / n."""

    Ehat: np.ndarray
    Shat: np.ndarray

    def __post_init__(self):
        E = _frozen(self.Ehat)
        S = _frozen(self.Shat)
        if E.ndim != 2:
            raise ValidationError("Ehat must be 2-d")
        _require_finite(E, "Ehat")
        _require_symmetric(S, "Shat")
        if S.shape[0] != E.shape[1]:
            raise ValidationError("Shat dimension must match Ehat columns")
        recon = E.T @ E / E.shape[0]
        scale = max(float(np.abs(S).max(initial=0.0)), 1.0)
        if float(np.abs(S - recon).max(initial=0.0)) > 1e-8 * scale:
            raise ValidationError("Shat is not Ehat'Ehat / n")
        object.__setattr__(self, "Ehat", E)
        object.__setattr__(self, "Shat", S)

    @classmethod
    def from_errors(cls, Ehat) -> "ErrorEstimate":
        E = np.asarray(Ehat, dtype=float)
        S = E.T @ E / E.shape[0]
        return cls(E, 0.5 * (S + S.T))

    @property
    def n(self) -> int:
        return self.Ehat.shape[0]

    @property
    def q(self) -> int:
        return self.Ehat.shape[1]


def mcd_compose(chol: CholeskyPair) -> np.ndarray:
    """Precision matrix L diag(1/d) L^T of a modified Cholesky pair."""
    m = (chol.L / chol.d) @ chol.L.T
    return 0.5 * (m + m.T)


def mcd_decompose(omega, pivot_eps: float | None = None) -> CholeskyPair:
    """Modified Cholesky decomposition of a symmetric positive definite matrix.

    Returns the unique (L, d) with omega = L diag(1/d) L^T.  A pivot at or
    below ``pivot_eps`` (default 1e-12 times the largest diagonal entry)
    raises NotPositiveDefinite.
    """
    A = np.array(omega, dtype=float)
    _require_symmetric(A, "omega")
    _require_finite(A, "omega")
    q = A.shape[0]
    if pivot_eps is None:
        pivot_eps = 1e-12 * float(A.diagonal().max(initial=0.0))
    L = np.eye(q)
    w = np.zeros(q)
    for j in range(q):
        wj = A[j, j] - (L[j, :j] ** 2) @ w[:j]
        if wj <= pivot_eps:
            raise NotPositiveDefinite(
                f"pivot {wj:.3e} at column {j + 1} is <= epsilon {pivot_eps:.3e}"
            )
        w[j] = wj
        if j + 1 < q:
            L[j + 1:, j] = (A[j + 1:, j] - L[j + 1:, :j] @ (L[j, :j] * w[:j])) / wj
    return CholeskyPair(L, 1.0 / w)


def _block_cholesky(block: np.ndarray) -> np.ndarray:
    """Lower Cholesky factor of a parent block, or SingularBlock."""
    try:
        C = np.linalg.cholesky(block)
    except np.linalg.LinAlgError as exc:
        raise SingularBlock(f"parent block is not positive definite: {exc}") from exc
    dmax = float(block.diagonal().max(initial=0.0))
    if float(np.diag(C).min()) ** 2 <= 1e-14 * max(dmax, 1e-300):
        raise SingularBlock("parent block is numerically singular")
    return C


def _schur_logdet(A: np.ndarray, parents, j: int):
    """Schur complement A[j,j] - A[pa,j]' A[pa,pa]^{-1} A[pa,j] and the
    log-determinant of the parent block, via one triangular solve."""
    ajj = float(A[j, j])
    if len(parents) == 0:
        return ajj, 0.0
    idx = np.asarray(parents, dtype=np.intp)
    C = _block_cholesky(A[np.ix_(idx, idx)])
    z = solve_triangular(C, A[idx, j], lower=True)
    return ajj - float(z @ z), 2.0 * float(np.log(np.diag(C)).sum())


def dag_submatrices(A, dag: OrderedDag, j: int):
    """Extract the vertex-j submatrices of a symmetric matrix A.

    Returns (A[j,j], A[pa,j], A[pa,pa], schur) with rows and columns taken
    in ascending parent order; for an empty parent set the column and block
    are empty and the Schur complement equals A[j,j].
    """
    A = np.asarray(A, dtype=float)
    _require_symmetric(A, "A")
    if not 0 <= j < dag.q:
        raise ValidationError(f"vertex {j} out of range 0..{dag.q - 1}")
    if A.shape[0] != dag.q:
        raise ValidationError("matrix dimension does not match the DAG")
    pa = dag.parents[j]
    idx = np.asarray(pa, dtype=np.intp)
    acol = A[idx, j].copy()
    ablock = A[np.ix_(idx, idx)].copy()
    schur, _ = _schur_logdet(A, pa, j)
    return float(A[j, j]), acol, ablock, schur


def save_matrix_csv(path, a) -> None:
    """Write a matrix (or vector, as one column) as headerless CSV."""
    arr = np.asarray(a, dtype=float)
    if arr.ndim == 1:
        arr = arr.reshape(-1, 1)
    np.savetxt(path, arr, delimiter=",", fmt="%.17g")


def load_matrix_csv(path) -> np.ndarray:
    """Read a headerless CSV matrix; always returns a 2-d array."""
    return np.loadtxt(path, delimiter=",", ndmin=2)
