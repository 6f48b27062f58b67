"""Online learners for partially labeled streams.

Six learners share one compiled trial loop:

* ``avg-perceptron`` / ``max-perceptron``: ``W <- W - eta * grad`` whenever the
  APH (resp. MPH) loss is positive.
* ``avg-pegasos`` / ``max-pegasos``: step size ``1/(lam*t)``, shrink plus
  subgradient step, then projection onto ``||W|| <= 1/sqrt(lam)``.  On a
  zero-loss trial the weights are left untouched unless ``always_shrink``.
* ``exact-perceptron`` / ``exact-pegasos``: the APH learners fed the singleton
  set ``{y}``.

The prediction for trial ``t`` is taken from ``W^t`` before the update.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Iterable, Optional, Sequence

import numpy as np
from numba import njit

from .losses import _aph_grad, _hinge, _mph_grad
from .model import _argmax, _project_inplace, _scores, _sq_norm, label_mask, zeros

__all__ = [
    "Algorithm",
    "LearnerConfig",
    "LearnerState",
    "TrialRecord",
    "RunResult",
    "learner_init",
    "step",
    "run_arrays",
    "run_sequence",
]


class Algorithm(str, enum.Enum):
    AVG_PERCEPTRON = "avg-perceptron"
    MAX_PERCEPTRON = "max-perceptron"
    AVG_PEGASOS = "avg-pegasos"
    MAX_PEGASOS = "max-pegasos"
    EXACT_PERCEPTRON = "exact-perceptron"
    EXACT_PEGASOS = "exact-pegasos"

    @property
    def is_pegasos(self) -> bool:
        return self in (Algorithm.AVG_PEGASOS, Algorithm.MAX_PEGASOS, Algorithm.EXACT_PEGASOS)

    @property
    def uses_max(self) -> bool:
        return self in (Algorithm.MAX_PERCEPTRON, Algorithm.MAX_PEGASOS)

    @property
    def is_exact(self) -> bool:
        return self in (Algorithm.EXACT_PERCEPTRON, Algorithm.EXACT_PEGASOS)


PARTIAL_LEARNERS = (
    Algorithm.AVG_PERCEPTRON,
    Algorithm.MAX_PERCEPTRON,
    Algorithm.AVG_PEGASOS,
    Algorithm.MAX_PEGASOS,
)


@dataclass(frozen=True)
class LearnerConfig:
    """Hyperparameters of one learner.

    ``eta`` is only used by the Perceptron family and ``lam`` only by the
    Pegasos family.  ``break_update`` reverses the sign of every update; it
    exists as a negative control for the bound checks.
    """

    algorithm: Algorithm
    num_classes: int
    dim: int
    eta: float = 1.0
    lam: Optional[float] = None
    always_shrink: bool = False
    break_update: bool = False

    def __post_init__(self):
        object.__setattr__(self, "algorithm", Algorithm(self.algorithm))
        if self.num_classes < 2 or self.dim < 1:
            raise ValueError(f"need K >= 2 and d >= 1, got K={self.num_classes}, d={self.dim}")
        if self.algorithm.is_pegasos:
            if self.lam is None or not self.lam > 0 or not math.isfinite(self.lam):
                raise ValueError(f"{self.algorithm.value} needs lam > 0, got {self.lam}")
        elif not self.eta > 0 or not math.isfinite(self.eta):
            raise ValueError(f"{self.algorithm.value} needs eta > 0, got {self.eta}")

    @property
    def name(self) -> str:
        return self.algorithm.value


@dataclass
class LearnerState:
    W: np.ndarray
    t: int
    config: LearnerConfig


@dataclass(frozen=True)
class TrialRecord:
    t: int
    predicted: int
    ambiguous_loss: int
    true_loss: Optional[int]
    surrogate_loss: float
    objective: Optional[float]
    update_applied: bool


@dataclass
class RunResult:
    """Array form of a run.

    ``predicted`` holds 1-based labels; ``norms[i]`` is ``||W||`` after
    trial ``i``; ``objective`` (Pegasos only) is evaluated at the weights the
    trial started from.
    """

    predicted: np.ndarray
    surrogate: np.ndarray
    objective: Optional[np.ndarray]
    updated: np.ndarray
    norms: np.ndarray
    W: np.ndarray
    t: int
    weights: Optional[np.ndarray] = field(default=None, repr=False)

    def ambiguous_losses(self, masks: np.ndarray) -> np.ndarray:
        return (~masks[np.arange(len(self.predicted)), self.predicted - 1]).astype(np.int64)

    def true_losses(self, y: np.ndarray) -> np.ndarray:
        return (self.predicted != np.asarray(y)).astype(np.int64)


@njit(cache=True, nogil=True)
def _run_kernel(W, t0, X, masks, use_max, pegasos, eta, lam, always_shrink, sign,
                pred, surr, obj, upd, norms, trace):
    d, K = W.shape
    G = np.empty((d, K))
    radius = 1.0 / math.sqrt(lam) if pegasos else 0.0
    keep = trace.shape[0] > 0
    t = t0
    for i in range(X.shape[0]):
        x = X[i]
        mask = masks[i]
        s = _scores(W, x)
        pred[i] = _argmax(s)
        if use_max:
            margin = _mph_grad(s, mask, x, G)
        else:
            margin = _aph_grad(s, mask, x, G)
        loss = _hinge(margin)
        surr[i] = loss
        upd[i] = loss > 0.0
        if pegasos:
            obj[i] = 0.5 * lam * _sq_norm(W) + loss
            eta_t = 1.0 / (lam * t)
            shrink = 1.0 - eta_t * lam
            if loss > 0.0:
                step_ = sign * eta_t
                for j in range(d):
                    for k in range(K):
                        W[j, k] = shrink * W[j, k] - step_ * G[j, k]
                _project_inplace(W, radius)
            elif always_shrink:
                for j in range(d):
                    for k in range(K):
                        W[j, k] = shrink * W[j, k]
                _project_inplace(W, radius)
        elif loss > 0.0:
            step_ = sign * eta
            for j in range(d):
                for k in range(K):
                    W[j, k] = W[j, k] - step_ * G[j, k]
        norms[i] = math.sqrt(_sq_norm(W))
        if keep:
            trace[i] = W
        t += 1
    return t


def learner_init(config: LearnerConfig) -> LearnerState:
    """Zero weights at trial 1 (zero also lies in every Pegasos ball)."""
    return LearnerState(W=zeros(config.dim, config.num_classes), t=1, config=config)


def _singleton_masks(y: np.ndarray, num_classes: int) -> np.ndarray:
    masks = np.zeros((len(y), num_classes), dtype=np.bool_)
    masks[np.arange(len(y)), np.asarray(y) - 1] = True
    return masks


def run_arrays(
    config: LearnerConfig,
    X: np.ndarray,
    masks: Optional[np.ndarray] = None,
    y: Optional[np.ndarray] = None,
    state: Optional[LearnerState] = None,
    keep_weights: bool = False,
) -> RunResult:
    """Run a learner over a whole stream given as arrays.

    ``X`` is ``(T, d)``; ``masks`` is the ``(T, K)`` candidate-membership
    matrix.  Exact learners train on ``{y}`` and ignore ``masks``.
    """
    X = np.ascontiguousarray(X, dtype=np.float64)
    T = X.shape[0]
    K, d = config.num_classes, config.dim
    if X.ndim != 2 or (T and X.shape[1] != d):
        raise ValueError(f"stream feature dimension mismatch: expected d={d}, got shape {X.shape}")
    if config.algorithm.is_exact:
        if y is None:
            raise ValueError(f"{config.name} needs the true labels")
        train_masks = _singleton_masks(y, K)
    else:
        if masks is None:
            raise ValueError(f"{config.name} needs candidate masks")
        train_masks = np.ascontiguousarray(masks, dtype=np.bool_)
        if train_masks.shape != (T, K):
            raise ValueError(f"candidate masks must be ({T}, {K}), got {train_masks.shape}")
        sizes = train_masks.sum(axis=1)
        if T and (sizes.min() < 1 or sizes.max() > K - 1):
            raise ValueError("every candidate set needs 1 <= |Y| <= K-1")
    if T and not np.all(np.isfinite(X)):
        raise ValueError("stream contains NaN or Inf features")

    state = state or learner_init(config)
    W = np.array(state.W, dtype=np.float64, order="C", copy=True)
    pred = np.empty(T, dtype=np.int64)
    surr = np.empty(T)
    obj = np.empty(T)
    upd = np.empty(T, dtype=np.bool_)
    norms = np.empty(T)
    trace = np.empty((T if keep_weights else 0, d, K))
    lam = float(config.lam) if config.algorithm.is_pegasos else 1.0
    t_end = _run_kernel(
        W, state.t, X, train_masks, config.algorithm.uses_max, config.algorithm.is_pegasos,
        float(config.eta), lam, bool(config.always_shrink),
        -1.0 if config.break_update else 1.0,
        pred, surr, obj, upd, norms, trace,
    )
    return RunResult(
        predicted=pred + 1,
        surrogate=surr,
        objective=obj if config.algorithm.is_pegasos else None,
        updated=upd,
        norms=norms,
        W=W,
        t=int(t_end),
        weights=trace if keep_weights else None,
    )


def step(state: LearnerState, x, Y, y_true: Optional[int] = None) -> tuple[TrialRecord, LearnerState]:
    """Play one trial and return its record with the successor state.

    The input state is not modified.
    """
    config = state.config
    mask = label_mask(Y, config.num_classes)
    if config.algorithm.is_exact and mask.sum() != 1:
        raise ValueError(f"{config.name} takes a singleton label set, got {sorted(Y)}")
    x = np.asarray(x, dtype=np.float64)
    if x.shape != (config.dim,):
        raise ValueError(f"feature dimension mismatch: expected d={config.dim}, got shape {x.shape}")
    if config.algorithm.is_exact:
        label = int(np.flatnonzero(mask)[0]) + 1
        res = run_arrays(config, x[None, :], y=np.array([label]), state=state)
    else:
        res = run_arrays(config, x[None, :], masks=mask[None, :], state=state)
    predicted = int(res.predicted[0])
    record = TrialRecord(
        t=state.t,
        predicted=predicted,
        ambiguous_loss=int(not mask[predicted - 1]),
        true_loss=None if y_true is None else int(predicted != int(y_true)),
        surrogate_loss=float(res.surrogate[0]),
        objective=None if res.objective is None else float(res.objective[0]),
        update_applied=bool(res.updated[0]),
    )
    return record, LearnerState(W=res.W, t=res.t, config=config)


def _stream_arrays(stream, num_classes: int):
    if hasattr(stream, "masks"):
        return stream.X, stream.masks, stream.y
    items = list(stream)
    if not items:
        return None
    X = np.array([np.asarray(x, dtype=np.float64) for x, _, _ in items])
    masks = np.array([label_mask(Y, num_classes) for _, Y, _ in items])
    y = np.array([int(v) for _, _, v in items])
    return X, masks, y


def run_sequence(config: LearnerConfig, stream) -> list[TrialRecord]:
    """Run ``config`` over ``stream`` and return one record per trial.

    ``stream`` is a :class:`~plonline.data.PartialLabelStream` or any iterable
    of ``(x, Y, y_true)`` triples.  Ambiguous losses are measured against the
    set the learner trained on (``{y}`` for exact learners).
    """
    arrays = _stream_arrays(stream, config.num_classes)
    if arrays is None or len(arrays[0]) == 0:
        return []
    X, masks, y = arrays
    res = run_arrays(config, X, masks, y)
    train_masks = _singleton_masks(y, config.num_classes) if config.algorithm.is_exact else masks
    amb = res.ambiguous_losses(train_masks)
    true = res.true_losses(y)
    return [
        TrialRecord(
            t=i + 1,
            predicted=int(res.predicted[i]),
            ambiguous_loss=int(amb[i]),
            true_loss=int(true[i]),
            surrogate_loss=float(res.surrogate[i]),
            objective=None if res.objective is None else float(res.objective[i]),
            update_applied=bool(res.updated[i]),
        )
        for i in range(len(res.predicted))
    ]


def make_config(name: str, num_classes: int, dim: int, eta: float = 1.0,
                lam: Optional[float] = None, **kw) -> LearnerConfig:
    """Build a config from a kebab-case learner name, dropping unused hyperparameters."""
    algo = Algorithm(name)
    if algo.is_pegasos:
        return LearnerConfig(algo, num_classes, dim, lam=lam, **kw)
    return LearnerConfig(algo, num_classes, dim, eta=eta, **kw)


def parse_learners(names: Iterable[str] | str) -> Sequence[Algorithm]:
    if isinstance(names, str):
        names = [n for n in names.split(",") if n.strip()]
    out = []
    for n in names:
        try:
            out.append(Algorithm(n.strip()))
        except ValueError:
            valid = ", ".join(a.value for a in Algorithm)
            raise ValueError(f"unknown learner {n!r}; choose from {valid}") from None
    return out
