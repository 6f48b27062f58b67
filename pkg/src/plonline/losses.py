"""Partial-label losses and their subgradients.

``aph`` is the average-prediction hinge: the hinge is taken on the mean score
over the candidate set minus the best score outside it.  ``mph`` (max
prediction hinge) uses the best candidate score instead of the mean.  Both
subgradients are applied only when the margin is strictly below 1.
"""
from __future__ import annotations

import numpy as np
from numba import njit

from .model import _argmax, _argmax_where, _as_features, _as_weights, _scores, label_mask

__all__ = [
    "ambiguous_loss",
    "avg_margin",
    "max_margin",
    "aph_loss",
    "mph_loss",
    "aph_subgradient",
    "mph_subgradient",
]


@njit(cache=True, nogil=True)
def _avg_margin(scores, mask):
    total = 0.0
    n = 0
    for k in range(scores.shape[0]):
        if mask[k]:
            total += scores[k]
            n += 1
    return total / n - scores[_argmax_where(scores, mask, False)]


@njit(cache=True, nogil=True)
def _max_margin(scores, mask):
    return scores[_argmax_where(scores, mask, True)] - scores[_argmax_where(scores, mask, False)]


@njit(cache=True, nogil=True)
def _hinge(margin):
    # 1 - margin > 0 exactly when margin < 1, matching the subgradient gate.
    v = 1.0 - margin
    return v if v > 0.0 else 0.0


@njit(cache=True, nogil=True)
def _aph_grad(scores, mask, x, G):
    """Write the APH subgradient into G (zeroed first). Returns the margin."""
    G[:, :] = 0.0
    margin = _avg_margin(scores, mask)
    if margin < 1.0:
        n = 0
        for k in range(mask.shape[0]):
            if mask[k]:
                n += 1
        for k in range(mask.shape[0]):
            if mask[k]:
                for j in range(x.shape[0]):
                    G[j, k] = -(x[j] / n)
        rival = _argmax_where(scores, mask, False)
        for j in range(x.shape[0]):
            G[j, rival] = x[j]
    return margin


@njit(cache=True, nogil=True)
def _mph_grad(scores, mask, x, G):
    G[:, :] = 0.0
    margin = _max_margin(scores, mask)
    if margin < 1.0:
        best_in = _argmax_where(scores, mask, True)
        rival = _argmax_where(scores, mask, False)
        for j in range(x.shape[0]):
            G[j, best_in] = -x[j]
            G[j, rival] = x[j]
    return margin


def _prepare(W, x, Y):
    W = _as_weights(W)
    x = _as_features(W, x)
    mask = label_mask(Y, W.shape[1])
    return W, x, mask, _scores(W, x)


def ambiguous_loss(predicted: int, Y) -> int:
    """1 if the predicted label falls outside the candidate set, else 0."""
    return 0 if int(predicted) in {int(v) for v in Y} else 1


def avg_margin(W, x, Y) -> float:
    """Mean candidate score minus the best non-candidate score (signed)."""
    _, _, mask, s = _prepare(W, x, Y)
    return float(_avg_margin(s, mask))


def max_margin(W, x, Y) -> float:
    _, _, mask, s = _prepare(W, x, Y)
    return float(_max_margin(s, mask))


def aph_loss(W, x, Y) -> float:
    _, _, mask, s = _prepare(W, x, Y)
    return float(_hinge(_avg_margin(s, mask)))


def mph_loss(W, x, Y) -> float:
    _, _, mask, s = _prepare(W, x, Y)
    return float(_hinge(_max_margin(s, mask)))


def aph_subgradient(W, x, Y) -> np.ndarray:
    """(d, K) subgradient of the APH loss with respect to W."""
    W, x, mask, s = _prepare(W, x, Y)
    G = np.empty_like(W)
    _aph_grad(s, mask, x, G)
    return G


def mph_subgradient(W, x, Y) -> np.ndarray:
    W, x, mask, s = _prepare(W, x, Y)
    G = np.empty_like(W)
    _mph_grad(s, mask, x, G)
    return G



@njit(cache=True, nogil=True)
def _batch_avg_margins(W, X, masks):
    out = np.empty(X.shape[0])
    for i in range(X.shape[0]):
        out[i] = _avg_margin(_scores(W, X[i]), masks[i])
    return out


@njit(cache=True, nogil=True)
def _batch_predict(W, X):
    out = np.empty(X.shape[0], dtype=np.int64)
    for i in range(X.shape[0]):
        out[i] = _argmax(_scores(W, X[i]))
    return out
