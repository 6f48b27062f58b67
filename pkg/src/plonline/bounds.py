"""Closed-form mistake and regret bounds, and the empirical quantities they use.

``R`` is the largest instance norm and ``c`` the smallest candidate-set size
of a stream.  In the non-separable bound the constant ``1/c + 1`` is called
``K_const`` to keep it apart from the class count.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np
from numba import njit

from .losses import _batch_avg_margins, avg_margin
from .model import frobenius_norm, project_to_ball

__all__ = [
    "BoundReport",
    "SeparabilityCertificate",
    "stream_radius",
    "min_label_set_size",
    "avg_margin",
    "stream_avg_margins",
    "theorem1_bound",
    "theorem2_bound",
    "theorem3_bound",
    "batch_objective",
    "batch_comparator",
    "empirical_regret",
]

UNIT_NORM_TOL = 1e-9


@dataclass
class BoundReport:
    theorem: str
    bound_value: float
    constants: dict = field(default_factory=dict)

    def to_text(self) -> str:
        """One ``key=value`` per line; floats use repr so they round-trip."""
        lines = [f"theorem={self.theorem}", f"bound_value={self.bound_value!r}"]
        lines += [f"{k}={v!r}" for k, v in self.constants.items()]
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str) -> "BoundReport":
        pairs = [line.split("=", 1) for line in text.splitlines() if line.strip()]
        kv = dict(pairs)
        theorem = kv.pop("theorem")
        bound = float(kv.pop("bound_value"))
        consts = {k: (int(v) if v.lstrip("-").isdigit() else float(v)) for k, v in kv.items()}
        return cls(theorem, bound, consts)


def _stream_X(stream) -> np.ndarray:
    return np.asarray(stream.X if hasattr(stream, "X") else stream, dtype=np.float64)


def _stream_masks(stream) -> np.ndarray:
    return np.asarray(stream.masks if hasattr(stream, "masks") else stream, dtype=np.bool_)


def stream_radius(stream) -> float:
    """Largest Euclidean instance norm in the stream."""
    X = _stream_X(stream)
    if X.size == 0:
        raise ValueError("stream is empty")
    return float(np.sqrt(np.max(np.einsum("ij,ij->i", X, X))))


def min_label_set_size(stream) -> int:
    """Smallest candidate-set size. Accepts a stream, a mask matrix, or a list of label sets."""
    if hasattr(stream, "masks") or isinstance(stream, np.ndarray):
        sizes = _stream_masks(stream).sum(axis=1)
    else:
        sizes = [len(Y) for Y in stream]
    if len(sizes) == 0:
        raise ValueError("stream is empty")
    return int(min(sizes))


def stream_avg_margins(W, stream) -> np.ndarray:
    W = np.ascontiguousarray(W, dtype=np.float64)
    return _batch_avg_margins(W, np.ascontiguousarray(_stream_X(stream)), _stream_masks(stream))


@dataclass
class SeparabilityCertificate:
    """Unit-norm reference weights and the margin they achieve on a stream."""

    W_star: np.ndarray
    gamma: float
    kind: str = "average"

    @classmethod
    def certify(cls, W_star, stream, kind: str = "average") -> "SeparabilityCertificate":
        if kind != "average":
            raise ValueError("only average separability is certified")
        norm = frobenius_norm(W_star)
        if abs(norm - 1.0) > UNIT_NORM_TOL:
            raise ValueError(f"certificate weights must have unit norm, got {norm}")
        gamma = float(np.min(stream_avg_margins(W_star, stream)))
        if not gamma > 0:
            raise ValueError(f"stream is not average separable by W_star (margin {gamma})")
        return cls(np.asarray(W_star, dtype=np.float64), gamma, kind)

    def verify(self, stream, gamma_spec: Optional[float] = None) -> bool:
        margins = stream_avg_margins(self.W_star, stream)
        floor = self.gamma if gamma_spec is None else gamma_spec
        return bool(np.min(margins) >= floor) and abs(frobenius_norm(self.W_star) - 1) <= UNIT_NORM_TOL


def theorem1_bound(gamma: float, R: float, c: int) -> BoundReport:
    """Separable-case mistake bound ``2/gamma^2 + (1/c + 1) R^2/gamma^2``."""
    if not gamma > 0:
        raise ValueError(f"gamma must be > 0, got {gamma}")
    if R < 0 or c < 1:
        raise ValueError(f"need R >= 0 and c >= 1, got R={R}, c={c}")
    k_const = 1.0 / c + 1.0
    value = 2.0 / gamma**2 + k_const * R**2 / gamma**2
    return BoundReport("T1", value, {"gamma": float(gamma), "R": float(R), "c": int(c),
                                     "K_const": k_const})


def theorem2_bound(stream, W_ref, gamma: float) -> BoundReport:
    """Non-separable mistake bound measured against reference weights ``W_ref``.

    Per trial the shortfall is ``d_t = max(0, gamma - avg_margin)`` and
    ``D^2 = sum (|Y_t| d_t)^2``.  When ``D == 0`` the separable bound is
    returned.
    """
    if not gamma > 0:
        raise ValueError(f"gamma must be > 0, got {gamma}")
    norm = frobenius_norm(W_ref)
    if abs(norm - 1.0) > UNIT_NORM_TOL:
        raise ValueError(f"reference weights must have unit norm, got {norm}")
    masks = _stream_masks(stream)
    R = stream_radius(stream)
    c = min_label_set_size(masks)
    shortfall = np.maximum(0.0, gamma - stream_avg_margins(W_ref, stream))
    D2 = float(np.sum((masks.sum(axis=1) * shortfall) ** 2))
    if D2 == 0.0:
        report = theorem1_bound(gamma, R, c)
        report.constants.update(D=0.0)
        return report
    k_const = 1.0 / c + 1.0
    delta = ((D2 + k_const * D2 * R**2) / k_const) ** 0.25
    Z = math.sqrt(1.0 + D2 / delta**2)
    value = 2.0 * Z**2 / gamma**2 + 2.0 * k_const * (R**2 + delta**2) / (gamma / Z) ** 2
    return BoundReport("T2", value, {
        "gamma": float(gamma), "R": R, "c": c, "K_const": k_const,
        "D": math.sqrt(D2), "Delta": delta, "Z": Z,
        "violations": int(np.count_nonzero(shortfall)),
    })


def theorem3_bound(lam: float, R: float, c: int, T: int) -> BoundReport:
    """Average-regret bound ``G^2 ln T / (lam T)`` with ``G = sqrt(lam) + sqrt(1 + 1/c) R``."""
    if not lam > 0:
        raise ValueError(f"lambda must be > 0, got {lam}")
    if T < 2 or c < 1 or R < 0:
        raise ValueError(f"need T >= 2, c >= 1, R >= 0; got T={T}, c={c}, R={R}")
    G = math.sqrt(lam) + math.sqrt(1.0 + 1.0 / c) * R
    rate = math.log(T) / (lam * T)
    return BoundReport("T3", G**2 * rate, {"lambda": float(lam), "R": float(R), "c": int(c),
                                           "T": int(T), "G": G, "lnT_over_lamT": rate})


# --- regret ---------------------------------------------------------------

@njit(cache=True, nogil=True)
def _aph_batch_coef(S, masks, sizes):
    T, K = S.shape
    losses = np.empty(T)
    coef = np.zeros((T, K))
    for i in range(T):
        total = 0.0
        rival = -1
        for k in range(K):
            if masks[i, k]:
                total += S[i, k]
            elif rival < 0 or S[i, k] > S[i, rival]:
                rival = k
        margin = total / sizes[i] - S[i, rival]
        v = 1.0 - margin
        losses[i] = v if v > 0.0 else 0.0
        if margin < 1.0:
            for k in range(K):
                if masks[i, k]:
                    coef[i, k] = -1.0 / sizes[i]
            coef[i, rival] = 1.0
    return losses, coef


def _aph_batch(W: np.ndarray, X: np.ndarray, masks: np.ndarray, sizes: np.ndarray):
    """Per-example APH losses and the mean subgradient over the batch."""
    losses, coef = _aph_batch_coef(X @ W, masks, sizes)
    return losses, X.T @ coef / len(X)


def batch_objective(W, stream, lam: float) -> float:
    """``(lam/2) ||W||^2 + mean_t APH(W; x_t, Y_t)`` over the stream."""
    W = np.asarray(W, dtype=np.float64)
    X, masks = _stream_X(stream), _stream_masks(stream)
    losses, _ = _aph_batch(W, X, masks, masks.sum(axis=1).astype(np.float64))
    return 0.5 * lam * float(np.sum(W * W)) + float(np.mean(losses))


def batch_comparator(stream, lam: float, epochs: int = 500,
                     step_schedule: Optional[Callable[[int], float]] = None,
                     return_trace: bool = False):
    """Approximate ``argmin_{||W|| <= 1/sqrt(lam)}`` of the batch objective.

    Full-batch projected subgradient descent from zero with step
    ``1/(lam * epoch)`` by default.  Subgradient steps are not monotone, so
    the best iterate seen is returned and the trace records the best
    objective so far (non-increasing by construction).
    """
    X, masks = _stream_X(stream), _stream_masks(stream)
    if len(X) == 0:
        raise ValueError("stream is empty")
    if not lam > 0 or epochs < 1:
        raise ValueError(f"need lam > 0 and epochs >= 1, got lam={lam}, epochs={epochs}")
    step_schedule = step_schedule or (lambda e: 1.0 / (lam * e))
    sizes = masks.sum(axis=1).astype(np.float64)
    d, K = X.shape[1], masks.shape[1]
    W = np.zeros((d, K))
    best_W, best = W, None
    trace = []
    for epoch in range(1, epochs + 1):
        losses, grad = _aph_batch(W, X, masks, sizes)
        obj = 0.5 * lam * float(np.sum(W * W)) + float(np.mean(losses))
        if best is None or obj < best:
            best, best_W = obj, W
        trace.append(best)
        W = project_to_ball(W - step_schedule(epoch) * (lam * W + grad), lam)
    obj = batch_objective(W, stream, lam)
    if obj < best:
        best, best_W = obj, W
    trace.append(best)
    return (best_W, trace) if return_trace else best_W


def empirical_regret(records: Sequence, stream, lam: float, W_star) -> float:
    """Mean online objective minus the mean objective of the fixed ``W_star``.

    ``records`` are trial records (or a plain sequence of objective values)
    of an Avg Pegasos run over ``stream``.
    """
    objectives = np.array([r if isinstance(r, (int, float, np.floating)) else r.objective
                           for r in records], dtype=np.float64)
    if len(objectives) != len(_stream_X(stream)):
        raise ValueError(f"{len(objectives)} records for a stream of {len(_stream_X(stream))} trials")
    if len(objectives) == 0:
        raise ValueError("no trials")
    return float(np.mean(objectives)) - batch_objective(W_star, stream, lam)
