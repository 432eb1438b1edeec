"""Expected improvement, constrained EI, and pool batch selection (maximization)."""

from __future__ import annotations

from typing import Collection, Sequence

import numpy as np
from scipy.special import ndtr

from .errors import NegativeSigmaError, PoolExhaustedError

_INV_SQRT_2PI = 1.0 / np.sqrt(2.0 * np.pi)


def expected_improvement(mu, sigma, f_best):
    """E[max(Y - f_best, 0)] for Y ~ N(mu, sigma^2); sigma = 0 gives max(mu - f_best, 0)."""
    mu = np.asarray(mu, dtype=float)
    sigma = np.asarray(sigma, dtype=float)
    if np.any(sigma < 0):
        raise NegativeSigmaError("sigma must be non-negative")
    diff = mu - f_best
    pos = sigma > 0
    safe = np.where(pos, sigma, 1.0)
    # subnormal sigma overflows z to inf, where the limits below are still exact
    with np.errstate(over="ignore"):
        z = diff / safe
        ei = diff * ndtr(z) + safe * _INV_SQRT_2PI * np.exp(-0.5 * z * z)
    ei = np.where(pos, ei, np.maximum(diff, 0.0))
    # rounding can push the closed form a hair below the hinge lower bound
    ei = np.maximum(ei, np.maximum(diff, 0.0))
    return float(ei) if ei.ndim == 0 else ei


def constrained_ei(ei, p_feasible):
    ei = np.asarray(ei, dtype=float)
    p = np.asarray(p_feasible, dtype=float)
    if np.any(ei < 0) or np.any((p < 0) | (p > 1)):
        raise ValueError("ei must be >= 0 and p_feasible in [0, 1]")
    out = p * ei
    return float(out) if out.ndim == 0 else out


def select_batch(
    ids: Sequence[str],
    scores,
    observed: Collection[str],
    q: int,
    tie_seed: int | np.random.Generator | None = 0,
) -> list[str]:
    """Top-``q`` unobserved ids by descending score; ties broken by a seeded random draw."""
    scores = np.asarray(scores, dtype=float)
    if len(ids) != len(scores):
        raise ValueError("ids and scores differ in length")
    observed = set(observed)
    cand = np.array([i for i, cid in enumerate(ids) if cid not in observed], dtype=np.intp)
    if len(cand) < q:
        raise PoolExhaustedError(f"{len(cand)} unobserved candidates, {q} requested")
    rng = tie_seed if isinstance(tie_seed, np.random.Generator) else np.random.default_rng(tie_seed)
    tiebreak = rng.random(len(cand))
    order = np.lexsort((tiebreak, -scores[cand]))
    return [ids[i] for i in cand[order[:q]]]
