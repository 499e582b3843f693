"""Chain storage and post-processing: median probability model selection
and point estimation of B, L, d from recorded MCMC draws.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .core import CholeskyPair, OrderedDag, SparseCoefState
from .dag_wishart import posterior_mean_L_column
from .errors import EmptyChain, UndefinedEstimate, ValidationError

__all__ = [
    "ChainRecord",
    "mpm_select_gamma",
    "mpm_select_dag",
    "estimate_B_from_chain",
    "estimate_L_from_chain",
    "estimate_L_posterior_mean",
]

_KINDS = ("ess", "tes-step1", "tes-step2")


def config_sha256(config: dict) -> str:
    return hashlib.sha256(json.dumps(config, sort_keys=True).encode()).hexdigest()


@dataclass
class ChainRecord:
    """Stored draws of one chain plus its configuration snapshot.

    Coefficient chains carry ``gammas`` (and ``betas`` for the exact
    sampler); DAG chains carry strictly lower-triangular edge indicator
    matrices in ``edges``; the exact sampler also records ``L`` and ``d``.
    """

    kind: str
    config: dict
    seed: int
    gammas: np.ndarray | None = None
    betas: np.ndarray | None = None
    edges: np.ndarray | None = None
    L: np.ndarray | None = None
    d: np.ndarray | None = None
    timings: dict | None = None

    def __post_init__(self):
        if self.kind not in _KINDS:
            raise ValidationError(f"unknown chain kind {self.kind!r}")
        counts = {a.shape[0] for a in (self.gammas, self.betas, self.edges, self.L, self.d)
                  if a is not None}
        if len(counts) > 1:
            raise ValidationError(f"inconsistent draw counts across arrays: {counts}")

    @property
    def n_draws(self) -> int:
        for a in (self.gammas, self.betas, self.edges, self.L, self.d):
            if a is not None:
                return a.shape[0]
        return 0

    def save(self, base) -> None:
        """Write <base>.npz plus a JSON sidecar manifest."""
        base = Path(base)
        arrays = {}
        for name in ("gammas", "betas", "edges", "L", "d"):
            a = getattr(self, name)
            if a is not None:
                arrays[name] = a
        np.savez_compressed(base.with_suffix(".npz"), **arrays)
        manifest = {
            "kind": self.kind,
            "seed": self.seed,
            "config": self.config,
            "config_sha256": config_sha256(self.config),
            "n_draws": self.n_draws,
            "timings": self.timings,
        }
        base.with_suffix(".manifest.json").write_text(json.dumps(manifest, indent=1, sort_keys=True))

    @classmethod
    def load(cls, base) -> "ChainRecord":
        base = Path(base)
        manifest = json.loads(base.with_suffix(".manifest.json").read_text())
        with np.load(base.with_suffix(".npz")) as z:
            arrays = {name: z[name] for name in z.files}
        return cls(
            kind=manifest["kind"],
            config=manifest["config"],
            seed=manifest["seed"],
            timings=manifest.get("timings"),
            **arrays,
        )


def _require_draws(chain: ChainRecord, *names):
    for name in names:
        a = getattr(chain, name)
        if a is None:
            raise ValidationError(f"chain of kind {chain.kind!r} carries no {name!r} draws")
        if a.shape[0] == 0:
            raise EmptyChain(f"chain has zero stored draws of {name!r}")


def mpm_select_gamma(chain: ChainRecord) -> np.ndarray:
    """Median probability model over coefficient indicators: include (k, j)
    iff its inclusion frequency across draws is at least one half."""
    _require_draws(chain, "gammas")
    freq = chain.gammas.mean(axis=0)
    return (freq >= 0.5).astype(np.uint8)


def mpm_select_dag(chain: ChainRecord) -> OrderedDag:
    """Edgewise median probability DAG: keep every edge with inclusion
    frequency at least one half."""
    _require_draws(chain, "edges")
    freq = chain.edges.mean(axis=0)
    return OrderedDag.from_edge_matrix(freq >= 0.5)


def estimate_B_from_chain(chain: ChainRecord, gamma_hat: np.ndarray) -> SparseCoefState:
    """Average each selected coefficient over the draws where it was
    included; zero elsewhere."""
    _require_draws(chain, "gammas", "betas")
    gamma_hat = np.asarray(gamma_hat, dtype=np.uint8)
    if gamma_hat.shape != chain.gammas.shape[1:]:
        raise ValidationError("gamma_hat shape does not match the chain")
    counts = chain.gammas.sum(axis=0, dtype=np.int64)
    sel = gamma_hat == 1
    if np.any(counts[sel] == 0):
        raise UndefinedEstimate(
            "a selected entry was never included in any stored draw"
        )
    sums = np.einsum("ikj,ikj->kj", chain.betas, chain.gammas.astype(float))
    b_hat = np.zeros_like(sums)
    b_hat[sel] = sums[sel] / counts[sel]
    return SparseCoefState(b_hat, gamma_hat)


def estimate_L_from_chain(chain: ChainRecord, dag_hat: OrderedDag) -> CholeskyPair:
    """Entrywise included-draw average of L on the selected DAG's edges.

    The diagonal part d is the plain chain average (always included).
    """
    _require_draws(chain, "L", "edges", "d")
    mask = dag_hat.edge_matrix()
    if mask.shape != chain.L.shape[1:]:
        raise ValidationError("dag_hat dimension does not match the chain")
    counts = chain.edges.sum(axis=0, dtype=np.int64)
    sel = mask == 1
    if np.any(counts[sel] == 0):
        raise UndefinedEstimate("a selected edge never appears in the stored draws")
    sums = np.einsum("ikj,ikj->kj", chain.L, chain.edges.astype(float))
    l_hat = np.eye(mask.shape[0])
    l_hat[sel] = sums[sel] / counts[sel]
    return CholeskyPair(l_hat, chain.d.mean(axis=0))


def estimate_L_posterior_mean(stilde, dag_hat: OrderedDag) -> np.ndarray:
    """Closed-form alternative: conditional posterior mean of each column
    of L given the DAG, evaluated on the scatter matrix stilde."""
    stilde = np.asarray(stilde, dtype=float)
    q = dag_hat.q
    l_hat = np.eye(q)
    for j in range(q - 1):
        pa = dag_hat.parents[j]
        if pa:
            l_hat[np.asarray(pa, dtype=np.intp), j] = posterior_mean_L_column(stilde, dag_hat, j)
    return l_hat
