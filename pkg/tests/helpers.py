"""Shared brute-force oracles for the test suite.

Everything here is deliberately written the slow, literal way (explicit
loops, explicit inverses, densities from scipy) so it stays independent of
the implementation paths it checks.
"""

from __future__ import annotations

import itertools
import math

import numpy as np
from scipy import stats


def random_spd(rng, q, cond=10.0):
    """Random SPD matrix with eigenvalues spread over roughly [1, cond]."""
    a = rng.standard_normal((q, q))
    qmat, _ = np.linalg.qr(a)
    eigs = rng.uniform(1.0, cond, q)
    return (qmat * eigs) @ qmat.T


def brute_submatrices(A, parents, j):
    """Index-by-index extraction and explicit-inverse Schur complement."""
    pa = sorted(parents)
    acol = np.array([A[i][j] for i in pa])
    ablock = np.array([[A[r][s] for s in pa] for r in pa])
    if pa:
        schur = A[j][j] - acol @ np.linalg.inv(ablock) @ acol
    else:
        schur = A[j][j]
    return A[j][j], acol, ablock, schur


def tv_distance(p, q_dist):
    return 0.5 * float(np.abs(np.asarray(p) - np.asarray(q_dist)).sum())


def all_subsets(items):
    items = list(items)
    out = []
    for r in range(len(items) + 1):
        out.extend(itertools.combinations(items, r))
    return out


def normalized_from_log(logs):
    logs = np.asarray(logs, dtype=float)
    m = logs.max()
    w = np.exp(logs - m)
    return w / w.sum()


def brute_c1_c2(X, Y, B, Omega, tau1_sq, k, j):
    """The coefficient-update constants, written as the literal triple sums."""
    n, p = X.shape
    q = Y.shape[1]
    c1 = Omega[j, j] * sum(X[i, k] ** 2 for i in range(n)) + 1.0 / tau1_sq
    c2 = 0.0
    for i in range(n):
        inner = sum(Y[i, r] * Omega[j, r] for r in range(q))
        inner -= sum((B[:, l] @ X[i]) * Omega[j, l] for l in range(q) if l != j)
        inner -= Omega[j, j] * sum(B[s, j] * X[i, s] for s in range(p) if s != k)
        c2 += X[i, k] * inner
    return c1, c2


def two_model_inclusion_prob(x, y, sigma_sq, tau1_sq, eta1):
    """Closed-form posterior inclusion probability of the single coefficient
    in a 1-predictor, 1-response model with known error variance.

    Marginal likelihoods are evaluated as Gaussian densities in covariance
    form, independent of the sampler's precision-form algebra.
    """
    n = len(y)
    cov0 = sigma_sq * np.eye(n)
    cov1 = cov0 + tau1_sq * np.outer(x, x)
    log_m0 = stats.multivariate_normal(mean=np.zeros(n), cov=cov0).logpdf(y)
    log_m1 = stats.multivariate_normal(mean=np.zeros(n), cov=cov1).logpdf(y)
    log_odds = math.log(eta1) - math.log1p(-eta1) + log_m1 - log_m0
    return 1.0 / (1.0 + math.exp(-log_odds))


def zeta_importance_sample(rng, U, phi_j, parents, j, n_samples):
    """Monte Carlo estimate of log zeta via importance sampling built from
    the conditional structure, with deliberately overdispersed proposals.

    The integrand is the bare density kernel
        exp(-(Lcol' U Lcol) / (2 d)) * d^(-phi_j / 2)
    over (L_parents, d), with Lcol the full column vector (unit at j).
    """
    U = np.asarray(U, dtype=float)
    pa = sorted(parents)
    nu = len(pa)
    schur = brute_submatrices(U, pa, j)[3]

    # proposal for d: fatter-tailed inverse gamma around the true conditional
    a_true = 0.5 * phi_j - 0.5 * nu - 1.0
    a_prop = max(a_true - 0.5, 0.75)
    b_prop = 0.5 * schur
    d = b_prop / rng.gamma(a_prop, size=n_samples)
    log_g_d = stats.invgamma.logpdf(d, a_prop, scale=b_prop)

    if nu:
        block = U[np.ix_(pa, pa)]
        ucol = U[pa, j]
        block_inv = np.linalg.inv(block)
        mean = -block_inv @ ucol
        chol = np.linalg.cholesky(block_inv)
        scale = 1.5 * d
        z = rng.standard_normal((n_samples, nu))
        x = mean + np.sqrt(scale)[:, None] * (z @ chol.T)
        dev = x - mean
        quad_prop = np.einsum("si,ij,sj->s", dev, block, dev)
        sign, logdet_binv = np.linalg.slogdet(block_inv)
        log_g_x = (
            -0.5 * nu * np.log(2.0 * math.pi * scale)
            - 0.5 * logdet_binv
            - 0.5 * quad_prop / scale
        )
        quad = (
            U[j, j]
            + 2.0 * x @ ucol
            + np.einsum("si,ij,sj->s", x, block, x)
        )
    else:
        quad = np.full(n_samples, U[j, j])
        log_g_x = np.zeros(n_samples)

    log_f = -0.5 * quad / d - 0.5 * phi_j * np.log(d)
    log_w = log_f - log_g_d - log_g_x
    m = log_w.max()
    return m + math.log(np.exp(log_w - m).mean())
