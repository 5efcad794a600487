"""Pure-numpy batch kernels; the reference the compiled module must match.

All kernels take log-domain weights logw = log(q * b) (with -inf for
zero-weight candidates) and a matrix of Gumbel draws, and resolve whole
batches of auctions at once.  Ties break toward the lowest index.  Prices
are b_runner * exp(logscore_runner - logscore_winner); the exponent is
nonpositive, so price <= runner bid holds exactly in floats.
"""

import numpy as np


def single_outcomes(logw, b, eps):
    """Winner and second-price payment for each row of draws.

    Returns (winners, prices): winners[d] is -1 with price 0 when no
    candidate has positive weight; prices are per-click, 0 when the winner
    is unrivalled.
    """

    logs = logw[None, :] + eps
    m = logs.shape[0]
    rows = np.arange(m)
    winners = logs.argmax(axis=1)
    wls = logs[rows, winners]
    rest = logs.copy()
    rest[rows, winners] = -np.inf
    rls = rest.max(axis=1) if logs.shape[1] > 1 else np.full(m, -np.inf)
    valid = wls > -np.inf
    prices = np.zeros(m, dtype=np.float64)
    with np.errstate(invalid="ignore"):
        np.multiply(
            b[winners], np.exp(rls - wls), out=prices,
            where=valid & (rls > -np.inf),
        )
    winners = np.where(valid, winners, -1)
    return winners.astype(np.int64), prices


def topk_outcomes(logw, b, eps, k):
    """Top-k winners (score order) and their next-price payments per row.

    prices[d, i] = b[order[d, i]] * exp(logscore of the (k+1)-th candidate
    minus logscore of winner i); zero when there is no (k+1)-th candidate
    with positive weight.
    """

    logs = logw[None, :] + eps
    m, n = logs.shape
    rows = np.arange(m)
    order = np.argsort(-logs, axis=1, kind="stable")[:, : k + 1]
    top = order[:, :k]
    top_ls = logs[rows[:, None], top]
    if k < n:
        kth_ls = logs[rows, order[:, k]]
    else:
        kth_ls = np.full(m, -np.inf)
    prices = np.zeros((m, k), dtype=np.float64)
    with np.errstate(invalid="ignore"):
        np.multiply(
            b[top], np.exp(kth_ls[:, None] - top_ls), out=prices,
            where=(top_ls > -np.inf) & (kth_ls[:, None] > -np.inf),
        )
    return top.astype(np.int64), prices


def session_without_replacement(logw, eps, b):
    """A full T-segment session per row, removing each winner as it is drawn.

    eps has shape (draws, T, n).  Returns (winners, prices) of shape
    (draws, T).
    """

    m, T, n = eps.shape
    winners = np.empty((m, T), dtype=np.int64)
    prices = np.empty((m, T), dtype=np.float64)
    masked = np.broadcast_to(logw, (m, n)).copy()
    rows = np.arange(m)
    for t in range(T):
        w, p = single_outcomes_masked(masked, b, eps[:, t, :])
        winners[:, t] = w
        prices[:, t] = p
        ok = w >= 0
        masked[rows[ok], w[ok]] = -np.inf
    return winners, prices


def single_outcomes_masked(logw_rows, b, eps):
    """single_outcomes with per-row weights (used by the session kernel)."""

    logs = logw_rows + eps
    m = logs.shape[0]
    rows = np.arange(m)
    winners = logs.argmax(axis=1)
    wls = logs[rows, winners]
    rest = logs.copy()
    rest[rows, winners] = -np.inf
    rls = rest.max(axis=1) if logs.shape[1] > 1 else np.full(m, -np.inf)
    valid = wls > -np.inf
    prices = np.zeros(m, dtype=np.float64)
    with np.errstate(invalid="ignore"):
        np.multiply(
            b[winners], np.exp(rls - wls), out=prices,
            where=valid & (rls > -np.inf),
        )
    return np.where(valid, winners, -1).astype(np.int64), prices


def rival_kth_logscore(logw, eps, i, k):
    """Per row, the k-th highest perturbed logscore among candidates != i.

    -inf when fewer than k rivals exist.  This is the log of the bid
    threshold candidate i must clear to take one of k slots.
    """

    logs = logw[None, :] + eps
    logs = np.ascontiguousarray(logs)
    logs[:, i] = -np.inf
    n = logs.shape[1]
    if k > n - 1:
        return np.full(logs.shape[0], -np.inf)
    return np.partition(logs, n - k, axis=1)[:, n - k]


def argmax_scores(logw, eps):
    """Row-wise argmax of logw + eps (first index wins ties)."""

    return (logw[None, :] + eps).argmax(axis=1).astype(np.int64)
