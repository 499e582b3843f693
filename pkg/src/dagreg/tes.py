"""Two-step sampler: per-response coefficient selection under an
alpha-fractional posterior with an empirical g-prior, followed by
DAG-Wishart inference on the estimated errors.

Step 1 runs q independent single-flip Metropolis-Hastings chains over the
per-response support sets; the selected supports give least-squares
coefficients, hence estimated errors.  Step 2 runs the parent-set chains
of the exact sampler against the fixed error scatter, then reads (L, d)
off in closed form.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass

import numpy as np
from scipy.linalg import solve_triangular

from .core import (
    CholeskyPair,
    ErrorEstimate,
    OrderedDag,
    RegressionData,
    SparseCoefState,
    _block_cholesky,
)
from .dag_wishart import DagWishartParams, _log_parent_set_target, posterior_mean_L_column, posterior_mode_d_j
from .errors import DegenerateVariance, RankDeficient, SingularBlock, ValidationError
from .moves import mh_flip_step
from .rng import stream
from .selection import ChainRecord, mpm_select_dag, mpm_select_gamma

__all__ = [
    "TesConfig",
    "GammaChain",
    "TesResult",
    "log_post_gamma",
    "mh_gamma_step",
    "sample_sigma_b",
    "compute_B_hat",
    "compute_error_estimate",
    "tes_dag_run",
    "tes_estimate_LD",
    "tes_run",
    "theory_cap",
    "theory_c3",
]


def theory_cap(n: int, p: int, c3: float) -> int:
    """Model-size cap floor(c3 * n / log p) from the consistency theory."""
    if p < 2:
        raise ValidationError("theory cap needs p >= 2")
    return int(math.floor(c3 * n / math.log(p)))


def theory_c3(alpha: float, eps0: float) -> float:
    """The cap constant from the regularity conditions: with
    eps' = ((1 - alpha) / 10)^2, returns eps'^2 eps0^2 / (128 (1 + 2 eps0)^2)."""
    if not 0.0 < alpha < 1.0 or not 0.0 < eps0 < 0.5:
        raise ValidationError("need 0 < alpha < 1 and 0 < eps0 < 1/2")
    eps_prime = ((1.0 - alpha) / 10.0) ** 2
    return eps_prime**2 * eps0**2 / (128.0 * (1.0 + 2.0 * eps0) ** 2)


@dataclass
class TesConfig:
    """Two-step sampler settings.

    R caps every per-response model size and defaults to min(p, n - 1);
    the theory regime is available by passing R = theory_cap(n, p, c3).
    """

    iterations: int
    burn_in: int = 0
    thin: int = 1
    seed: int = 0
    alpha: float = 0.999
    kappa: float = 0.1
    nu0: float = 0.0
    c1: float = 2.0
    R: int | None = None
    dag: DagWishartParams | None = None

    def __post_init__(self):
        if self.iterations < 1:
            raise ValidationError("iterations must be at least 1")
        if not 0 <= self.burn_in <= self.iterations:
            raise ValidationError("burn_in must lie in [0, iterations]")
        if self.thin < 1:
            raise ValidationError("thin must be at least 1")
        if not 0.0 < self.alpha < 1.0:
            raise ValidationError("alpha must lie in (0, 1)")
        if self.kappa <= 0.0:
            raise ValidationError("kappa must be positive")
        if self.nu0 < 0.0:
            raise ValidationError("nu0 must be nonnegative")
        if self.c1 < 2.0:
            raise ValidationError("c1 must be at least 2")
        if self.R is not None and self.R < 1:
            raise ValidationError("R must be a positive cap")

    def cap(self, data: RegressionData) -> int:
        bound = min(data.p, data.n - 1)
        if self.R is None:
            return bound
        if self.R > bound:
            raise ValidationError(f"R = {self.R} exceeds min(p, n - 1) = {bound}")
        return self.R

    def dag_params(self, q: int) -> DagWishartParams:
        if self.dag is None:
            self.dag = DagWishartParams.default(q)
        if self.dag.q != q:
            raise ValidationError("DAG-Wishart scale dimension does not match q")
        return self.dag

    def snapshot(self, data: RegressionData) -> dict:
        dagp = self.dag_params(data.q)
        return {
            "method": "tes",
            "iterations": self.iterations,
            "burn_in": self.burn_in,
            "thin": self.thin,
            "seed": self.seed,
            "alpha": self.alpha,
            "kappa": self.kappa,
            "nu0": self.nu0,
            "c1": self.c1,
            "R": self.cap(data),
            "eta2": dagp.eta2,
            "c": dagp.c,
            "n": data.n,
            "p": data.p,
            "q": data.q,
        }


class _Grams:
    """Precomputed Y'Y diagonal, X'Y and X'X, shared by every subset score."""

    __slots__ = ("G", "XtY", "yty")

    def __init__(self, data: RegressionData):
        self.G = data.X.T @ data.X
        self.XtY = data.X.T @ data.Y
        self.yty = np.einsum("ij,ij->j", data.Y, data.Y)


def _sigma2_hat(grams: _Grams, j: int, gamma, n: int):
    """Residual variance of response j on the active columns, floored at
    1e-12 * (y'y / n); None signals a numerically singular Gram block."""
    yty = float(grams.yty[j])
    if len(gamma) == 0:
        s2 = yty / n
    else:
        idx = np.asarray(gamma, dtype=np.intp)
        try:
            C = _block_cholesky(grams.G[np.ix_(idx, idx)])
        except SingularBlock:
            return None
        z = solve_triangular(C, grams.XtY[idx, j], lower=True)
        s2 = (yty - float(z @ z)) / n
    floor = 1e-12 * yty / n
    if floor <= 0.0:
        raise DegenerateVariance(f"response {j + 1} is identically zero")
    return max(s2, floor)


def log_post_gamma(data: RegressionData, j: int, gamma_j, cfg: TesConfig,
                   _grams: _Grams | None = None) -> float:
    """Unnormalized log alpha-fractional posterior of one support set.

    Sets over the cap R, and sets whose Gram block is numerically
    singular, score -inf (excluded models).
    """
    gamma = tuple(sorted(int(k) for k in gamma_j))
    if len(set(gamma)) != len(gamma) or (gamma and not 0 <= gamma[0] <= gamma[-1] < data.p):
        raise ValidationError("gamma_j must be distinct predictor indices in range")
    if len(gamma) > cfg.cap(data):
        return -math.inf
    grams = _Grams(data) if _grams is None else _grams
    s2 = _sigma2_hat(grams, j, gamma, data.n)
    if s2 is None:
        return -math.inf
    m = len(gamma)
    p, n = data.p, data.n
    log_prior = -(math.lgamma(p + 1) - math.lgamma(m + 1) - math.lgamma(p - m + 1)) \
        - cfg.c1 * m * math.log(p)
    return log_prior - 0.5 * m * math.log1p(cfg.alpha / cfg.kappa) \
        - 0.5 * (cfg.alpha * n + cfg.nu0) * math.log(s2)


@dataclass
class GammaChain:
    """Step-1 chain state: per-response current support, cached log
    posterior, recorded draws, and acceptance counts."""

    gamma: list
    logpost: list
    draws: list
    accepts: np.ndarray
    steps: np.ndarray

    @classmethod
    def start(cls, data: RegressionData, cfg: TesConfig, grams: _Grams | None = None,
              init_sets=None) -> "GammaChain":
        grams = _Grams(data) if grams is None else grams
        q = data.q
        sets = [() for _ in range(q)] if init_sets is None else [tuple(sorted(s)) for s in init_sets]
        lps = [log_post_gamma(data, j, sets[j], cfg, grams) for j in range(q)]
        return cls(gamma=sets, logpost=lps, draws=[[] for _ in range(q)],
                   accepts=np.zeros(q, dtype=np.int64), steps=np.zeros(q, dtype=np.int64))


def mh_gamma_step(chain: GammaChain, data: RegressionData, j: int, cfg: TesConfig,
                  rng: np.random.Generator, _grams: _Grams | None = None) -> GammaChain:
    """One add/delete move on response j's support set."""
    grams = _Grams(data) if _grams is None else _grams
    cap = cfg.cap(data)

    def log_target(members):
        return log_post_gamma(data, j, members, cfg, grams)

    new, lp, accepted = mh_flip_step(
        rng, chain.gamma[j], range(data.p), cap, log_target, chain.logpost[j]
    )
    chain.gamma[j] = new
    chain.logpost[j] = lp
    chain.steps[j] += 1
    if accepted:
        chain.accepts[j] += 1
    return chain


def sample_sigma_b(rng: np.random.Generator, data: RegressionData, j: int, gamma_j,
                   cfg: TesConfig):
    """Draw (sigma_j^2, b_gamma) from their conditional posterior given the
    support; used only when coefficient uncertainty is requested."""
    gamma = tuple(sorted(int(k) for k in gamma_j))
    grams = _Grams(data)
    n = data.n
    yty = float(grams.yty[j])
    if len(gamma) == 0:
        s2_hat = yty / n
        if s2_hat <= 1e-12 * yty / n or s2_hat <= 0.0:
            raise DegenerateVariance("residual variance is numerically zero")
        shape = 0.5 * (cfg.alpha * n + cfg.nu0)
        rate = 0.5 * cfg.alpha * n * s2_hat
        return rate / rng.gamma(shape), np.zeros(0)
    idx = np.asarray(gamma, dtype=np.intp)
    try:
        C = _block_cholesky(grams.G[np.ix_(idx, idx)])
    except SingularBlock as exc:
        raise RankDeficient(f"Gram block for response {j + 1} is singular") from exc
    z = solve_triangular(C, grams.XtY[idx, j], lower=True)
    s2_hat = (yty - float(z @ z)) / n
    if s2_hat <= 1e-12 * yty / n:
        raise DegenerateVariance("residual variance is numerically zero")
    b_ls = solve_triangular(C.T, z, lower=False)
    shape = 0.5 * (cfg.alpha * n + cfg.nu0)
    rate = 0.5 * cfg.alpha * n * s2_hat
    sigma_sq = rate / rng.gamma(shape)
    noise = solve_triangular(C.T, rng.standard_normal(len(gamma)), lower=False)
    b = b_ls + math.sqrt(sigma_sq / (cfg.alpha + cfg.kappa)) * noise
    return sigma_sq, b


def compute_B_hat(data: RegressionData, gamma_hat_sets) -> SparseCoefState:
    """Least-squares fit on each selected support; zeros elsewhere."""
    grams = _Grams(data)
    p, q = data.p, data.q
    if len(gamma_hat_sets) != q:
        raise ValidationError("need one support set per response")
    B = np.zeros((p, q))
    G = np.zeros((p, q), dtype=np.uint8)
    for j, gamma in enumerate(gamma_hat_sets):
        gamma = tuple(sorted(int(k) for k in gamma))
        if not gamma:
            continue
        idx = np.asarray(gamma, dtype=np.intp)
        try:
            C = _block_cholesky(grams.G[np.ix_(idx, idx)])
        except SingularBlock as exc:
            raise RankDeficient(f"Gram block for response {j + 1} is singular") from exc
        z = solve_triangular(C, grams.XtY[idx, j], lower=True)
        B[idx, j] = solve_triangular(C.T, z, lower=False)
        G[idx, j] = 1
    return SparseCoefState(B, G)


def compute_error_estimate(data: RegressionData, B_hat) -> ErrorEstimate:
    """Residual matrix Y - X B_hat and its scatter."""
    B = B_hat.B if isinstance(B_hat, SparseCoefState) else np.asarray(B_hat, dtype=float)
    return ErrorEstimate.from_errors(data.Y - data.X @ B)


def _gamma_matrix(sets, p: int, q: int) -> np.ndarray:
    m = np.zeros((p, q), dtype=np.uint8)
    for j, gamma in enumerate(sets):
        if gamma:
            m[np.asarray(gamma, dtype=np.intp), j] = 1
    return m


def tes_dag_run(error_est: ErrorEstimate, cfg: TesConfig) -> ChainRecord:
    """Parent-set chains against the fixed scatter of the estimated errors.

    No (L, d) draws happen inside the chain; those are read off in closed
    form afterwards.
    """
    n, q = error_est.n, error_est.q
    dagp = cfg.dag_params(q)
    n_stilde = n * error_est.Shat + dagp.U
    n_stilde = 0.5 * (n_stilde + n_stilde.T)

    parents = [() for _ in range(q)]
    lps = [0.0] * max(q - 1, 0)
    targets = []
    for j in range(q - 1):
        def log_target(members, j=j):
            return _log_parent_set_target(members, j, n_stilde, dagp, n)
        targets.append(log_target)
        lps[j] = log_target(())
    rngs = [stream(cfg.seed, "tes", "dag", j) for j in range(q - 1)]

    n_keep = (cfg.iterations - cfg.burn_in) // cfg.thin
    edge_draws = np.zeros((n_keep, q, q), dtype=np.uint8)
    accepts = 0
    kept = 0
    t0 = time.perf_counter()
    for t in range(1, cfg.iterations + 1):
        for j in range(q - 1):
            new, lp, acc = mh_flip_step(
                rngs[j], parents[j], range(j + 1, q), dagp.cap_for(j, q), targets[j], lps[j]
            )
            parents[j] = new
            lps[j] = lp
            accepts += acc
        if t > cfg.burn_in and (t - cfg.burn_in) % cfg.thin == 0 and kept < n_keep:
            m = edge_draws[kept]
            for j, pa in enumerate(parents):
                if pa:
                    m[np.asarray(pa, dtype=np.intp), j] = 1
            kept += 1
    elapsed = time.perf_counter() - t0

    config = {"method": "tes-step2", "iterations": cfg.iterations, "burn_in": cfg.burn_in,
              "thin": cfg.thin, "seed": cfg.seed, "eta2": dagp.eta2, "c": dagp.c,
              "n": n, "q": q}
    timings = {"iterations": cfg.iterations, "total_s": elapsed,
               "accept_rate": accepts / max(cfg.iterations * max(q - 1, 1), 1)}
    return ChainRecord(kind="tes-step2", config=config, seed=cfg.seed,
                       edges=edge_draws, timings=timings)


def tes_estimate_LD(error_est: ErrorEstimate, dag_hat: OrderedDag, cfg: TesConfig) -> CholeskyPair:
    """Closed-form estimates: posterior-mean columns of L and posterior-mode
    diagonal d, both on the error scatter."""
    n, q = error_est.n, error_est.q
    dagp = cfg.dag_params(q)
    stilde = (n * error_est.Shat + dagp.U) / n
    stilde = 0.5 * (stilde + stilde.T)
    L = np.eye(q)
    d = np.ones(q)
    for j in range(q):
        pa = dag_hat.parents[j]
        if pa:
            L[np.asarray(pa, dtype=np.intp), j] = posterior_mean_L_column(stilde, dag_hat, j)
        d[j] = posterior_mode_d_j(stilde, dag_hat, j, n, dagp.c)
    return CholeskyPair(L, d)


@dataclass
class TesResult:
    """Everything the two-step pipeline produces."""

    step1: ChainRecord
    step2: ChainRecord
    gamma_hat: np.ndarray
    B_hat: SparseCoefState
    error: ErrorEstimate
    dag_hat: OrderedDag
    chol_hat: CholeskyPair
    timings: dict


def tes_run(data: RegressionData, cfg: TesConfig, warm_start=None) -> TesResult:
    """Full two-step pipeline.

    Step 1: per-response support chains (independent streams), median
    probability supports, least-squares B_hat.  Step 2: error scatter,
    parent-set chains, median probability DAG, closed-form (L, d).
    """
    n, p, q = data.n, data.p, data.q
    grams = _Grams(data)
    init_sets = None
    if warm_start is not None:
        gm = warm_start.Gamma if isinstance(warm_start, SparseCoefState) else np.asarray(warm_start)
        if gm.shape != (p, q):
            raise ValidationError("warm start shape does not match the data")
        init_sets = [tuple(np.nonzero(gm[:, j])[0].tolist()) for j in range(q)]
    chain = GammaChain.start(data, cfg, grams, init_sets)
    rngs = [stream(cfg.seed, "tes", "gamma", j) for j in range(q)]

    n_keep = (cfg.iterations - cfg.burn_in) // cfg.thin
    gamma_draws = np.zeros((n_keep, p, q), dtype=np.uint8)
    kept = 0
    t0 = time.perf_counter()
    for t in range(1, cfg.iterations + 1):
        for j in range(q):
            mh_gamma_step(chain, data, j, cfg, rngs[j], grams)
        if t > cfg.burn_in and (t - cfg.burn_in) % cfg.thin == 0 and kept < n_keep:
            gamma_draws[kept] = _gamma_matrix(chain.gamma, p, q)
            for j in range(q):
                chain.draws[j].append(chain.gamma[j])
            kept += 1
    step1_s = time.perf_counter() - t0

    step1 = ChainRecord(kind="tes-step1", config=cfg.snapshot(data), seed=cfg.seed,
                        gammas=gamma_draws,
                        timings={"iterations": cfg.iterations, "total_s": step1_s,
                                 "accept_rate": float(chain.accepts.sum()) / max(int(chain.steps.sum()), 1)})

    t1 = time.perf_counter()
    gamma_hat = mpm_select_gamma(step1)
    sets = [tuple(np.nonzero(gamma_hat[:, j])[0].tolist()) for j in range(q)]
    B_hat = compute_B_hat(data, sets)
    error = compute_error_estimate(data, B_hat)
    post_s = time.perf_counter() - t1

    step2 = tes_dag_run(error, cfg)
    dag_hat = mpm_select_dag(step2)
    chol_hat = tes_estimate_LD(error, dag_hat, cfg)

    timings = {
        "iterations": cfg.iterations,
        "step1_s": step1_s,
        "step2_s": step2.timings["total_s"],
        "post_s": post_s,
        "total_s": step1_s + step2.timings["total_s"] + post_s,
    }
    return TesResult(step1=step1, step2=step2, gamma_hat=gamma_hat, B_hat=B_hat,
                     error=error, dag_hat=dag_hat, chol_hat=chol_hat, timings=timings)
