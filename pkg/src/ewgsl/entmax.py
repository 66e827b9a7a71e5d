#!/usr/bin/env python3
"""
EWGSL: alpha-entmax normalization

p_j = [(alpha - 1) e_j - tau]_+ ^ (1 / (alpha - 1)), with tau chosen so that
sum(p) = 1. alpha = 1 is softmax, alpha = 2 is sparsemax.

Two solvers are provided: bisection on tau (any alpha) and an exact sort-based
closed form (alpha in {1.5, 2}). The torch function ``entmax_rows`` runs the
bisection for every row of a CSR-ordered score vector at once.
"""

from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np
import torch
from scipy.special import logsumexp

from .constants import (
    DEFAULT_ALPHA,
    ENTMAX_MAX_ALPHA,
    ENTMAX_MAX_ITER,
    ENTMAX_MIN_ALPHA,
    ENTMAX_TOL,
    SORTED_ORACLE_ALPHAS,
)
from .exceptions import DimensionMismatchError, EntmaxError


@dataclass(frozen=True)
class EntmaxResult:
    """Normalized vector with its threshold and support"""

    p: np.ndarray
    tau: float
    alpha: float
    iterations: int = 0

    @property
    def support(self) -> np.ndarray:
        return np.flatnonzero(self.p > 0)

    @property
    def support_size(self) -> int:
        return int(np.count_nonzero(self.p))


def _check_input(e: np.ndarray, alpha: float) -> np.ndarray:
    e = np.asarray(e, dtype=np.float64)
    if e.ndim != 1 or e.size == 0:
        raise EntmaxError("entmax input must be a non-empty vector", e.shape)
    if not np.all(np.isfinite(e)):
        raise EntmaxError("entmax input contains non-finite values")
    if not ENTMAX_MIN_ALPHA <= alpha <= ENTMAX_MAX_ALPHA:
        raise EntmaxError(
            f"alpha must be in [{ENTMAX_MIN_ALPHA}, {ENTMAX_MAX_ALPHA}]", alpha
        )
    return e


def softmax(e: np.ndarray) -> EntmaxResult:
    """alpha = 1; tau is the log-partition"""
    e = _check_input(e, 1.0)
    tau = float(logsumexp(e))
    return EntmaxResult(p=np.exp(e - tau), tau=tau, alpha=1.0)


def entmax(
    e: np.ndarray,
    alpha: float = DEFAULT_ALPHA,
    tol: float = ENTMAX_TOL,
    max_iter: int = ENTMAX_MAX_ITER,
) -> EntmaxResult:
    """
    alpha-entmax by bisection on tau in [max(z) - 1, max(z)], z = (alpha - 1) e

    Args:
        e: score vector
        alpha: in [1, 2]; 1 routes to softmax
        tol: stop once |sum(p) - 1| <= tol
        max_iter: bisection step limit

    Returns:
        EntmaxResult; p is rescaled to sum to one after the search

    Raises:
        EntmaxError: empty or non-finite input, alpha out of range, tol <= 0
    """
    e = _check_input(e, alpha)
    if tol <= 0:
        raise EntmaxError("tol must be positive", tol)
    if alpha == 1.0:
        return softmax(e)

    inv = 1.0 / (alpha - 1.0)
    z = (alpha - 1.0) * e
    hi = float(z.max())
    lo = hi - 1.0

    tau = lo
    iterations = 0
    for iterations in range(1, max_iter + 1):
        tau = 0.5 * (lo + hi)
        p = np.clip(z - tau, 0.0, None) ** inv
        mass = p.sum()
        if abs(mass - 1.0) <= tol:
            break
        if mass > 1.0:
            lo = tau
        else:
            hi = tau

    p = np.clip(z - tau, 0.0, None) ** inv
    return EntmaxResult(p=p / p.sum(), tau=tau, alpha=alpha, iterations=iterations)


def entmax_sorted_oracle(e: np.ndarray, alpha: float) -> EntmaxResult:
    """
    Exact entmax via descending sort and closed-form tau per support size

    Raises:
        EntmaxError: alpha not in {1.5, 2}
    """
    e = _check_input(e, alpha)
    if alpha not in SORTED_ORACLE_ALPHAS:
        raise EntmaxError(f"sorted solver supports alpha in {SORTED_ORACLE_ALPHAS}", alpha)

    z = (alpha - 1.0) * e
    z_sorted = np.sort(z)[::-1]
    k = np.arange(1, z.size + 1, dtype=np.float64)

    if alpha == 2.0:
        cumsum = np.cumsum(z_sorted)
        support_size = int(np.count_nonzero(1.0 + k * z_sorted > cumsum))
        tau = (cumsum[support_size - 1] - 1.0) / support_size
        p = np.clip(z - tau, 0.0, None)
    else:
        mean = np.cumsum(z_sorted) / k
        mean_sq = np.cumsum(z_sorted**2) / k
        ss = k * (mean_sq - mean**2)
        delta = np.clip((1.0 - ss) / k, 0.0, None)
        taus = mean - np.sqrt(delta)
        support_size = int(np.count_nonzero(taus <= z_sorted))
        tau = float(taus[support_size - 1])
        p = np.clip(z - tau, 0.0, None) ** 2

    return EntmaxResult(p=p, tau=float(tau), alpha=alpha)


def entmax_vjp(result: EntmaxResult, upstream: np.ndarray) -> np.ndarray:
    """
    J^T g with J = diag(s) - s s^T / sum(s), s = p^(2 - alpha) on the support

    Raises:
        DimensionMismatchError: upstream length differs from p
    """
    upstream = np.asarray(upstream, dtype=np.float64)
    if upstream.shape != result.p.shape:
        raise DimensionMismatchError("entmax_vjp", result.p.shape, upstream.shape)
    s = np.where(result.p > 0, result.p ** (2.0 - result.alpha), 0.0)
    ds = s * upstream
    return ds - s * (ds.sum() / s.sum())


# =============================================================================
# BATCHED ROWS (TORCH)
# =============================================================================


def _segment_sum(values: torch.Tensor, rows: torch.Tensor, n_rows: int) -> torch.Tensor:
    return torch.zeros(n_rows, dtype=values.dtype).index_add_(0, rows, values)


def _segment_max(values: torch.Tensor, rows: torch.Tensor, n_rows: int) -> torch.Tensor:
    out = torch.full((n_rows,), -float("inf"), dtype=values.dtype)
    return out.scatter_reduce(0, rows, values, reduce="amax", include_self=True)


class EntmaxRows(torch.autograd.Function):
    """Row-wise entmax over a flat score vector grouped by ``rows``"""

    @staticmethod
    def forward(  # type: ignore[override]
        ctx,
        scores: torch.Tensor,
        rows: torch.Tensor,
        n_rows: int,
        alpha: float,
        tol: float,
        max_iter: int,
    ) -> Tuple[torch.Tensor, torch.Tensor]:
        if alpha == 1.0:
            row_max = _segment_max(scores, rows, n_rows)
            unnormalized = torch.exp(scores - row_max[rows])
            total = _segment_sum(unnormalized, rows, n_rows)
            p = unnormalized / total[rows]
            tau = row_max + torch.log(total)
        else:
            inv = 1.0 / (alpha - 1.0)
            z = (alpha - 1.0) * scores
            hi = _segment_max(z, rows, n_rows)
            lo = hi - 1.0
            tau = 0.5 * (lo + hi)
            for _ in range(max_iter):
                mass = _segment_sum(torch.clamp(z - tau[rows], min=0.0) ** inv, rows, n_rows)
                active = (mass - 1.0).abs() > tol
                if not bool(active.any()):
                    break
                lo = torch.where(active & (mass > 1.0), tau, lo)
                hi = torch.where(active & (mass < 1.0), tau, hi)
                tau = torch.where(active, 0.5 * (lo + hi), tau)
            p = torch.clamp(z - tau[rows], min=0.0) ** inv
            p = p / _segment_sum(p, rows, n_rows)[rows]

        s = torch.where(p > 0, p ** (2.0 - alpha), torch.zeros_like(p))
        ctx.save_for_backward(s, rows)
        ctx.n_rows = n_rows
        ctx.mark_non_differentiable(tau)
        return p, tau

    @staticmethod
    def backward(ctx, grad_p: torch.Tensor, grad_tau: Optional[torch.Tensor]):  # type: ignore[override]
        s, rows = ctx.saved_tensors
        ds = s * grad_p
        ratio = _segment_sum(ds, rows, ctx.n_rows) / _segment_sum(s, rows, ctx.n_rows)
        return ds - s * ratio[rows], None, None, None, None, None


def entmax_rows(
    scores: torch.Tensor,
    rows: torch.Tensor,
    n_rows: int,
    alpha: float = DEFAULT_ALPHA,
    tol: float = ENTMAX_TOL,
    max_iter: int = ENTMAX_MAX_ITER,
) -> Tuple[torch.Tensor, torch.Tensor]:
    """
    Entmax applied independently to each row of a CSR-ordered score vector

    Args:
        scores: flat scores, one per (row, column) pair
        rows: row id of every score; every row in [0, n_rows) must be present
        n_rows: number of rows
        alpha: in [1, 2]; 1 gives a segment softmax

    Returns:
        (p, tau): normalized scores and per-row thresholds
    """
    if not ENTMAX_MIN_ALPHA <= alpha <= ENTMAX_MAX_ALPHA:
        raise EntmaxError(f"alpha must be in [{ENTMAX_MIN_ALPHA}, {ENTMAX_MAX_ALPHA}]", alpha)
    if scores.shape != rows.shape:
        raise DimensionMismatchError("entmax_rows", tuple(rows.shape), tuple(scores.shape))
    if not bool(torch.isfinite(scores).all()):
        raise EntmaxError("entmax input contains non-finite values")
    return EntmaxRows.apply(scores, rows, n_rows, float(alpha), tol, max_iter)
