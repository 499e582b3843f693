"""Selection and estimation scores, and a chain-efficiency diagnostic.

Undefined ratios (zero denominators) propagate as NaN rather than being
silently reported as zero; aggregation helpers skip NaNs and count them.
"""

from __future__ import annotations

import math
from collections import namedtuple
from dataclasses import dataclass

import numpy as np

from .core import OrderedDag
from .errors import TooShort, ValidationError, ZeroReference

__all__ = [
    "ConfusionCounts",
    "SelectionScores",
    "RelativeErrors",
    "selection_metrics",
    "relative_errors",
    "effective_sample_size",
    "dag_edge_vector",
    "nanmean_with_count",
]

SelectionScores = namedtuple("SelectionScores", ["precision", "sensitivity", "specificity", "mcc"])
RelativeErrors = namedtuple("RelativeErrors", ["e1", "e2", "e3", "e4"])


@dataclass(frozen=True)
class ConfusionCounts:
    """Binary classification counts; tp + tn + fp + fn equals the number of
    compared entries."""

    tp: int
    tn: int
    fp: int
    fn: int

    @classmethod
    def from_arrays(cls, est, truth) -> "ConfusionCounts":
        est = np.asarray(est).ravel()
        truth = np.asarray(truth).ravel()
        if est.shape != truth.shape:
            raise ValidationError("estimate and truth must have the same shape")
        for name, a in (("estimate", est), ("truth", truth)):
            if not np.isin(a, (0, 1)).all():
                raise ValidationError(f"{name} must be binary")
        est = est.astype(bool)
        truth = truth.astype(bool)
        return cls(
            tp=int(np.sum(est & truth)),
            tn=int(np.sum(~est & ~truth)),
            fp=int(np.sum(est & ~truth)),
            fn=int(np.sum(~est & truth)),
        )

    @property
    def total(self) -> int:
        return self.tp + self.tn + self.fp + self.fn


def _ratio(num: float, den: float) -> float:
    return num / den if den > 0 else math.nan


def selection_metrics(est, truth) -> SelectionScores:
    """Precision, sensitivity, specificity and Matthews correlation of a
    binary structure estimate against the truth.

    Any score whose denominator vanishes is NaN (undefined), never zero.
    """
    c = ConfusionCounts.from_arrays(est, truth)
    tp, tn, fp, fn = float(c.tp), float(c.tn), float(c.fp), float(c.fn)
    denom = (tp + fp) * (tp + fn) * (tn + fp) * (tn + fn)
    mcc = (tp * tn - fp * fn) / math.sqrt(denom) if denom > 0 else math.nan
    return SelectionScores(
        precision=_ratio(tp, tp + fp),
        sensitivity=_ratio(tp, tp + fn),
        specificity=_ratio(tn, tn + fp),
        mcc=mcc,
    )


def dag_edge_vector(dag: OrderedDag) -> np.ndarray:
    """The q(q-1)/2 ordered-pair indicators of a DAG, in a fixed order, for
    use with selection_metrics."""
    m = dag.edge_matrix()
    return m[np.tril_indices(dag.q, k=-1)]


def relative_errors(omega_hat, omega0) -> RelativeErrors:
    """Relative errors of a matrix estimate under the matrix l1 norm, the
    spectral norm, the Frobenius norm and the entrywise max norm."""
    a = np.asarray(omega_hat, dtype=float)
    b = np.asarray(omega0, dtype=float)
    if a.shape != b.shape or a.ndim != 2:
        raise ValidationError("matrices must be 2-d with equal shapes")
    diff = a - b
    out = []
    for ord_ in (1, 2, "fro"):
        ref = np.linalg.norm(b, ord_)
        if ref == 0.0:
            raise ZeroReference("reference matrix has zero norm")
        out.append(float(np.linalg.norm(diff, ord_) / ref))
    ref = float(np.abs(b).max())
    if ref == 0.0:
        raise ZeroReference("reference matrix has zero norm")
    out.append(float(np.abs(diff).max() / ref))
    return RelativeErrors(*out)


def effective_sample_size(series) -> float:
    """Single-chain effective sample size via the initial monotone sequence
    truncation of the autocorrelation sum.

    A constant series counts as fully independent (ESS = length); runs of
    super-efficient antithetic chains are truncated at 1.25 * length.
    """
    x = np.asarray(series, dtype=float).ravel()
    n = x.size
    if n < 8:
        raise TooShort(f"need at least 8 points, got {n}")
    if not np.isfinite(x).all():
        raise ValidationError("series contains non-finite values")
    x = x - x.mean()
    var0 = float(x @ x) / n
    if var0 <= 0.0:
        return float(n)
    nfft = 1 << (2 * n - 1).bit_length()
    f = np.fft.rfft(x, nfft)
    acov = np.fft.irfft(f * np.conj(f))[:n] / n
    rho = acov / acov[0]
    # sum autocorrelations over lag pairs while the pair sums stay positive
    n_pairs = n // 2
    pair = rho[0:2 * n_pairs:2] + rho[1:2 * n_pairs:2]
    nonpos = np.nonzero(pair <= 0.0)[0]
    stop = int(nonpos[0]) if nonpos.size else n_pairs
    tau = 2.0 * np.minimum.accumulate(pair[:stop]).sum() - 1.0 if stop else -1.0
    tau = max(tau, 0.8)
    return float(n / tau)


def nanmean_with_count(values):
    """(mean of the defined entries, number skipped); mean is NaN when every
    entry is undefined."""
    a = np.asarray(values, dtype=float)
    skipped = int(np.isnan(a).sum())
    if skipped == a.size:
        return math.nan, skipped
    return float(np.nanmean(a)), skipped
