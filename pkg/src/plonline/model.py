"""Dense linear multiclass model.

The weight matrix ``W`` has shape ``(d, K)``; column ``k`` holds the weight
vector of class ``k + 1``.  Class labels exposed by this package are 1-based
(``1..K``); column indices are 0-based.  Every argmax breaks ties towards the
lowest class index.
"""
from __future__ import annotations

import math
from typing import Iterable

import numpy as np
from numba import njit

__all__ = [
    "zeros",
    "score",
    "predict",
    "argmax_in_set",
    "frobenius_norm",
    "project_to_ball",
    "label_mask",
]


# --- compiled primitives -------------------------------------------------

@njit(cache=True, nogil=True)
def _scores(W, x):
    d, K = W.shape
    out = np.empty(K)
    for k in range(K):
        acc = 0.0
        for j in range(d):
            acc += W[j, k] * x[j]
        out[k] = acc
    return out


@njit(cache=True, nogil=True)
def _argmax(scores):
    best = 0
    for k in range(1, scores.shape[0]):
        if scores[k] > scores[best]:
            best = k
    return best


@njit(cache=True, nogil=True)
def _argmax_where(scores, mask, flag):
    """Lowest index k with mask[k] == flag maximising scores[k]; -1 if none."""
    best = -1
    for k in range(scores.shape[0]):
        if mask[k] == flag and (best < 0 or scores[k] > scores[best]):
            best = k
    return best


@njit(cache=True, nogil=True)
def _sq_norm(W):
    acc = 0.0
    for v in W.ravel():
        acc += v * v
    return acc


@njit(cache=True, nogil=True)
def _project_inplace(W, radius):
    norm = math.sqrt(_sq_norm(W))
    if norm <= radius:
        return
    factor = radius / norm
    flat = W.ravel()
    orig = flat.copy()
    # Shave the factor until the computed norm lands inside the ball, so a
    # second projection is a no-op.
    for _ in range(64):
        for i in range(flat.shape[0]):
            flat[i] = orig[i] * factor
        if math.sqrt(_sq_norm(W)) <= radius:
            return
        factor = np.nextafter(factor, 0.0)


# --- validation helpers --------------------------------------------------

def zeros(dim: int, num_classes: int) -> np.ndarray:
    if dim < 1 or num_classes < 2:
        raise ValueError(f"need dim >= 1 and num_classes >= 2, got d={dim}, K={num_classes}")
    return np.zeros((dim, num_classes))


def _as_weights(W) -> np.ndarray:
    W = np.asarray(W, dtype=np.float64)
    if W.ndim != 2:
        raise ValueError(f"weight matrix must be 2-D (d, K), got shape {W.shape}")
    return W


def _as_features(W: np.ndarray, x) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1 or x.shape[0] != W.shape[0]:
        raise ValueError(
            f"feature dimension mismatch: expected d={W.shape[0]}, got shape {x.shape}"
        )
    if not np.all(np.isfinite(x)):
        raise ValueError("feature vector contains NaN or Inf")
    return x


def label_mask(labels: Iterable[int], num_classes: int, *, allow_full: bool = False) -> np.ndarray:
    """Boolean membership mask for a set of 1-based class labels.

    Raises ``ValueError`` for empty sets, duplicates, out-of-range labels, and
    (unless ``allow_full``) for the full label set, whose complement is empty.
    """
    if isinstance(labels, np.ndarray) and labels.dtype == np.bool_:
        mask = labels.copy()
        if mask.shape != (num_classes,):
            raise ValueError(f"mask must have length {num_classes}, got {mask.shape}")
    else:
        labels = [int(v) for v in labels]
        if len(set(labels)) != len(labels):
            raise ValueError(f"duplicate labels in candidate set {labels}")
        mask = np.zeros(num_classes, dtype=np.bool_)
        for v in labels:
            if not 1 <= v <= num_classes:
                raise ValueError(f"label {v} outside [1, {num_classes}]")
            mask[v - 1] = True
    n = int(mask.sum())
    if n == 0:
        raise ValueError("candidate set is empty")
    if n == num_classes and not allow_full:
        raise ValueError("candidate set covers all classes; its complement is empty")
    return mask


# --- public operations ---------------------------------------------------

def score(W, x) -> np.ndarray:
    """Per-class scores ``<w_k, x>``, a length-K vector."""
    W = _as_weights(W)
    return _scores(W, _as_features(W, x))


def predict(W, x) -> int:
    """Predicted 1-based class label (lowest label wins ties)."""
    return int(_argmax(score(W, x))) + 1


def argmax_in_set(W, x, labels) -> int:
    """Best-scoring 1-based label among ``labels`` (lowest label wins ties)."""
    W = _as_weights(W)
    mask = label_mask(labels, W.shape[1], allow_full=True)
    return int(_argmax_where(score(W, x), mask, True)) + 1


def frobenius_norm(W) -> float:
    return math.sqrt(_sq_norm(np.ascontiguousarray(W, dtype=np.float64)))


def project_to_ball(W, lam: float) -> np.ndarray:
    """Scale ``W`` by ``min(1, (1/sqrt(lam)) / ||W||)``.

    The returned matrix is a copy whose computed Frobenius norm never exceeds
    ``1/sqrt(lam)``, which also makes the projection exactly idempotent.
    """
    if not lam > 0:
        raise ValueError(f"lambda must be > 0, got {lam}")
    out = np.array(W, dtype=np.float64, order="C", copy=True)
    _project_inplace(out, 1.0 / math.sqrt(lam))
    return out
