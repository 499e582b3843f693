"""Single-flip add/delete proposals over index sets, shared by the
parent-set and coefficient-support Metropolis-Hastings steps.

A move deletes a member with probability 0.5 or adds a non-member with
probability 0.5, choosing uniformly among candidates.  At the boundaries
(empty set, or set at its cap) the only feasible move is proposed with
probability 1, and the Hastings correction accounts for that exactly.
"""

from __future__ import annotations

import math

import numpy as np

__all__ = ["propose_single_flip", "mh_flip_step"]


def _move_probs(size: int, limit: int):
    """(P(delete), P(add)) from a state of the given size."""
    can_del = size > 0
    can_add = size < limit
    if can_del and can_add:
        return 0.5, 0.5
    if can_del:
        return 1.0, 0.0
    if can_add:
        return 0.0, 1.0
    return 0.0, 0.0


def propose_single_flip(rng: np.random.Generator, members: tuple, pool, cap: int | None = None):
    """Propose a one-element change of ``members`` within ``pool``.

    Returns (new_members, log_hastings) where log_hastings is
    log q(old | new) - log q(new | old), or None when no move exists.
    Consumes one uniform plus one integer draw from ``rng``.
    """
    pool = list(pool)
    n_pool = len(pool)
    m = len(members)
    limit = n_pool if cap is None else min(cap, n_pool)
    p_del, p_add = _move_probs(m, limit)
    if p_del == 0.0 and p_add == 0.0:
        return None
    if rng.random() < p_del:
        drop = members[int(rng.integers(m))]
        new = tuple(v for v in members if v != drop)
        log_fwd = math.log(p_del) - math.log(m)
        p_add_rev = _move_probs(m - 1, limit)[1]
        log_rev = math.log(p_add_rev) - math.log(n_pool - (m - 1))
    else:
        member_set = set(members)
        avail = [v for v in pool if v not in member_set]
        added = avail[int(rng.integers(len(avail)))]
        new = tuple(sorted(members + (added,)))
        log_fwd = math.log(p_add) - math.log(len(avail))
        p_del_rev = _move_probs(m + 1, limit)[0]
        log_rev = math.log(p_del_rev) - math.log(m + 1)
    return new, log_rev - log_fwd


def mh_flip_step(rng, members, pool, cap, log_target, current_lp):
    """One Metropolis-Hastings step; returns (members, lp, accepted).

    ``log_target`` is called once, on the proposed set only.
    """
    prop = propose_single_flip(rng, members, pool, cap)
    if prop is None:
        return members, current_lp, False
    new, log_h = prop
    new_lp = log_target(new)
    log_alpha = new_lp - current_lp + log_h
    if log_alpha >= 0.0 or math.log(rng.random()) < log_alpha:
        return new, new_lp, True
    return members, current_lp, False
