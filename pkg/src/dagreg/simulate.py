"""Synthetic benchmark generator.

Five scenarios fix (n, p, q) and the sparsity of the coefficient matrix
and the error DAG; four signal settings fix the law of the nonzero
coefficients.  Scenario 4 swaps the DAG-structured error covariance for a
banded matrix with shuffled columns (misspecified ordering); Scenario 5
mixes strong, moderate and extremely small signals.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.linalg import solve_triangular, toeplitz

from .core import (
    CholeskyPair,
    OrderedDag,
    RegressionData,
    SparseCoefState,
    load_matrix_csv,
    mcd_decompose,
    save_matrix_csv,
)
from .errors import CountTooLarge, ValidationError
from .rng import stream

__all__ = ["SimSpec", "GroundTruth", "generate", "place_support", "save_bundle", "load_bundle"]

# (n, p, q), support count for B0, edge count for the DAG, covariance kind
_SCENARIOS = {
    1: dict(n=100, p=100, q=50, gamma=lambda p, q: p // 5, edges=lambda p, q: q // 5, cov="dag"),
    2: dict(n=100, p=200, q=200, gamma=lambda p, q: p // 5, edges=lambda p, q: q // 5, cov="dag"),
    3: dict(n=150, p=300, q=200, gamma=lambda p, q: p // 30, edges=lambda p, q: q // 20, cov="dag"),
    4: dict(n=100, p=150, q=100, gamma=lambda p, q: p // 10, edges=None, cov="banded"),
    5: dict(n=100, p=100, q=50, gamma=lambda p, q: 20, edges=lambda p, q: q // 5, cov="dag"),
}


@dataclass(frozen=True)
class SimSpec:
    """Scenario/setting selector with optional dimension overrides."""

    scenario: int
    setting: int = 1
    seed: int = 0
    n: int | None = None
    p: int | None = None
    q: int | None = None

    def __post_init__(self):
        if self.scenario not in _SCENARIOS:
            raise ValidationError(f"scenario must be one of {sorted(_SCENARIOS)}")
        if self.setting not in (1, 2, 3, 4):
            raise ValidationError("setting must be in 1..4")
        for name in ("n", "p", "q"):
            v = getattr(self, name)
            if v is not None and v < 1:
                raise ValidationError(f"{name} override must be positive")

    def dims(self):
        base = _SCENARIOS[self.scenario]
        return (self.n or base["n"], self.p or base["p"], self.q or base["q"])

    def to_dict(self) -> dict:
        n, p, q = self.dims()
        return {"scenario": self.scenario, "setting": self.setting, "seed": self.seed,
                "n": n, "p": p, "q": q}


@dataclass(frozen=True)
class GroundTruth:
    """Everything the generator knows: true coefficients, Cholesky pair,
    DAG, error covariance and predictor covariance."""

    B0: SparseCoefState
    L0D0: CholeskyPair
    dag0: OrderedDag
    Sigma0: np.ndarray
    C0: np.ndarray


def place_support(rng: np.random.Generator, p: int, q: int, count: int):
    """Choose ``count`` distinct cells of a p x q grid uniformly at random;
    returned in row-major order."""
    if count < 0 or count > p * q:
        raise CountTooLarge(f"cannot place {count} cells on a {p}x{q} grid")
    flat = np.sort(rng.choice(p * q, size=count, replace=False))
    return [(int(f) // q, int(f) % q) for f in flat]


def _uniform_union(rng: np.random.Generator, count: int, intervals) -> np.ndarray:
    """Uniform draws from a union of intervals (density proportional to length)."""
    lo = np.array([a for a, _ in intervals])
    hi = np.array([b for _, b in intervals])
    lengths = hi - lo
    which = rng.choice(len(intervals), size=count, p=lengths / lengths.sum())
    return lo[which] + rng.random(count) * lengths[which]


def _signal_values(rng: np.random.Generator, count: int, setting: int) -> np.ndarray:
    if setting == 1:
        return rng.uniform(1.5, 3.0, count)
    if setting == 2:
        return _uniform_union(rng, count, [(-3.0, -1.5), (1.5, 3.0)])
    if setting == 3:
        return _uniform_union(rng, count, [(-1.5, -0.5), (0.5, 1.5)])
    return _uniform_union(rng, count, [(-1.5, -0.5), (1.5, 3.0)])


def _scenario5_values(rng: np.random.Generator, count: int) -> np.ndarray:
    # five entries at 1.5, five at 1, the rest extremely small
    vals = np.concatenate([np.full(5, 1.5), np.full(5, 1.0), rng.uniform(0.0, 0.3, count - 10)])
    return vals[rng.permutation(count)]


def _random_dag(rng: np.random.Generator, q: int, n_edges: int) -> OrderedDag:
    """n_edges edges placed uniformly among the q(q-1)/2 ordered pairs."""
    pairs = [(i, j) for j in range(q - 1) for i in range(j + 1, q)]
    if n_edges > len(pairs):
        raise CountTooLarge(f"cannot place {n_edges} edges among {len(pairs)} pairs")
    chosen = np.sort(rng.choice(len(pairs), size=n_edges, replace=False))
    parents = [[] for _ in range(q)]
    for c in chosen:
        i, j = pairs[int(c)]
        parents[j].append(i)
    return OrderedDag(q, tuple(tuple(pa) for pa in parents))


def generate(spec: SimSpec):
    """Draw one (data, ground truth) pair; deterministic given spec.seed."""
    n, p, q = spec.dims()
    base = _SCENARIOS[spec.scenario]

    c0 = toeplitz(0.6 ** np.arange(p))
    x = stream(spec.seed, "sim", "x").standard_normal((n, p)) @ np.linalg.cholesky(c0).T

    count = base["gamma"](p, q)
    cells = place_support(stream(spec.seed, "sim", "support"), p, q, count)
    rng_b = stream(spec.seed, "sim", "bvals")
    if spec.scenario == 5:
        if count < 10:
            raise ValidationError("scenario 5 needs at least 10 nonzero coefficients")
        values = _scenario5_values(rng_b, count)
    else:
        values = _signal_values(rng_b, count, spec.setting)
    b0 = np.zeros((p, q))
    for (k, j), v in zip(cells, values):
        b0[k, j] = v

    rng_e = stream(spec.seed, "sim", "noise")
    if base["cov"] == "dag":
        dag0 = _random_dag(stream(spec.seed, "sim", "dag"), q, base["edges"](p, q))
        rng_ld = stream(spec.seed, "sim", "ld")
        l0 = np.eye(q)
        for j in range(q - 1):
            pa = dag0.parents[j]
            if pa:
                l0[np.asarray(pa, dtype=np.intp), j] = _uniform_union(
                    rng_ld, len(pa), [(-0.7, -0.3), (0.3, 0.7)]
                )
        d0 = rng_ld.uniform(2.0, 5.0, q)
        chol0 = CholeskyPair(l0, d0)
        linv = solve_triangular(l0, np.eye(q), lower=True)
        sigma0 = linv.T @ (d0[:, None] * linv)
        sigma0 = 0.5 * (sigma0 + sigma0.T)
        e = rng_e.standard_normal((n, q)) @ (np.sqrt(d0)[:, None] * linv)
    else:
        offsets = np.abs(np.subtract.outer(np.arange(q), np.arange(q)))
        sig_banded = 2.0 * (1.0 - offsets / 10.0) * (offsets <= 5)
        lam_min = float(np.linalg.eigvalsh(sig_banded).min())
        sig_pre = sig_banded + (0.01 - lam_min) * np.eye(q)
        e_pre = rng_e.standard_normal((n, q)) @ np.linalg.cholesky(sig_pre).T
        perm = stream(spec.seed, "sim", "perm").permutation(q)
        e = e_pre[:, perm]
        sigma0 = sig_pre[np.ix_(perm, perm)]
        chol0 = mcd_decompose(np.linalg.inv(sigma0))
        dag0 = chol0.support()

    data = RegressionData(x, x @ b0 + e)
    truth = GroundTruth(
        B0=SparseCoefState.from_dense(b0),
        L0D0=chol0,
        dag0=dag0,
        Sigma0=sigma0,
        C0=c0,
    )
    return data, truth


def spec_sha256(spec: SimSpec) -> str:
    return hashlib.sha256(json.dumps(spec.to_dict(), sort_keys=True).encode()).hexdigest()


def bundle_name(spec: SimSpec) -> str:
    return f"{spec.scenario}_{spec.setting}_{spec.seed}"


def save_bundle(out_dir, spec: SimSpec, data: RegressionData, truth: GroundTruth) -> Path:
    """Write one data + ground truth bundle under out_dir/{scenario}_{setting}_{seed}/."""
    from . import __version__

    root = Path(out_dir) / bundle_name(spec)
    root.mkdir(parents=True, exist_ok=True)
    save_matrix_csv(root / "X.csv", data.X)
    save_matrix_csv(root / "Y.csv", data.Y)
    save_matrix_csv(root / "B0.csv", truth.B0.B)
    save_matrix_csv(root / "Gamma0.csv", truth.B0.Gamma)
    save_matrix_csv(root / "L0.csv", truth.L0D0.L)
    save_matrix_csv(root / "D0.csv", truth.L0D0.d)
    save_matrix_csv(root / "Sigma0.csv", truth.Sigma0)
    save_matrix_csv(root / "C0.csv", truth.C0)
    (root / "dag0.json").write_text(truth.dag0.to_json())
    manifest = dict(spec.to_dict())
    manifest["spec_sha256"] = spec_sha256(spec)
    manifest["artifact_version"] = __version__
    (root / "manifest.json").write_text(json.dumps(manifest, indent=1, sort_keys=True))
    return root


def load_bundle(bundle_dir):
    """Read a bundle back as (RegressionData, GroundTruth, manifest dict)."""
    root = Path(bundle_dir)
    manifest = json.loads((root / "manifest.json").read_text())
    data = RegressionData(load_matrix_csv(root / "X.csv"), load_matrix_csv(root / "Y.csv"))
    truth = GroundTruth(
        B0=SparseCoefState(load_matrix_csv(root / "B0.csv"), load_matrix_csv(root / "Gamma0.csv")),
        L0D0=CholeskyPair(load_matrix_csv(root / "L0.csv"), load_matrix_csv(root / "D0.csv").ravel()),
        dag0=OrderedDag.from_json((root / "dag0.json").read_text()),
        Sigma0=load_matrix_csv(root / "Sigma0.csv"),
        C0=load_matrix_csv(root / "C0.csv"),
    )
    return data, truth, manifest
