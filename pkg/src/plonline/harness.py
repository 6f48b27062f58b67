"""Repeated seeded runs, error-curve averaging and bound-conformance campaigns."""
from __future__ import annotations

import csv
import hashlib
import json
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Iterable, Optional, Sequence, Union

import numpy as np

from .bounds import (
    batch_comparator,
    empirical_regret,
    min_label_set_size,
    stream_radius,
    theorem1_bound,
    theorem2_bound,
    theorem3_bound,
)
from .data import (
    Dataset,
    GenerationError,
    PartialLabelStream,
    SynthesisSpec,
    generate,
    generate_noisy,
    generate_separable,
    synthesize_partial_labels,
)
from .learners import Algorithm, LearnerConfig, make_config, run_arrays

log = logging.getLogger(__name__)

__all__ = [
    "ExperimentConfig",
    "ErrorCurve",
    "run_experiment",
    "mean_curves",
    "emit_curves",
    "MistakeCell",
    "RegretCell",
    "mistake_campaign",
    "noisy_campaign",
    "regret_campaign",
]


# --- experiments -----------------------------------------------------------

@dataclass(frozen=True)
class ExperimentConfig:
    """One experiment: a data source, learners, candidate-set sizes and runs.

    ``source`` is either a :class:`Dataset` (candidate sets are redrawn per
    run) or a :class:`SynthesisSpec` (a fresh stream per run; its set size
    is replaced by each entry of ``set_sizes``).  Run ``r`` uses seed
    ``base_seed + r``.  ``rounds`` defaults to one pass over a dataset; a
    longer horizon cycles through reshuffled passes.
    """

    source: Union[Dataset, SynthesisSpec]
    learners: tuple = tuple(a.value for a in Algorithm)
    set_sizes: tuple = (2,)
    runs: int = 100
    rounds: Optional[int] = None
    base_seed: int = 0
    eta: float = 1.0
    lam: float = 1e-2
    always_shrink: bool = False
    shuffle: bool = False
    threads: int = 1

    def __post_init__(self):
        if self.runs < 1:
            raise ValueError(f"runs must be >= 1, got {self.runs}")
        if self.rounds is not None and self.rounds < 1:
            raise ValueError(f"rounds must be >= 1, got {self.rounds}")
        for s in self.set_sizes:
            if not 1 <= s <= self.num_classes - 1:
                raise ValueError(f"set size {s} outside [1, K-1] = [1, {self.num_classes - 1}]")
        for name in self.learners:
            Algorithm(name)

    @property
    def num_classes(self) -> int:
        return self.source.num_classes

    @property
    def dim(self) -> int:
        return self.source.dim

    @property
    def horizon(self) -> int:
        if self.rounds is not None:
            return self.rounds
        return len(self.source) if isinstance(self.source, Dataset) else self.source.rounds

    @property
    def source_name(self) -> str:
        if isinstance(self.source, Dataset):
            return self.source.name
        spec = self.source
        return (f"{spec.kind}(K={spec.num_classes};d={spec.dim};gamma={spec.gamma};"
                f"noise={spec.noise};radius={spec.effective_radius!r})")

    def describe(self) -> dict:
        return {
            "source": self.source_name,
            "learners": list(self.learners),
            "set_sizes": list(self.set_sizes),
            "runs": self.runs,
            "rounds": self.horizon,
            "base_seed": self.base_seed,
            "eta": self.eta,
            "lam": self.lam,
            "always_shrink": self.always_shrink,
            "shuffle": self.shuffle,
        }

    def fingerprint(self, learner: str, set_size: int) -> str:
        blob = json.dumps({**self.describe(), "learner": learner, "set_size": set_size},
                          sort_keys=True)
        return hashlib.sha256(blob.encode()).hexdigest()[:16]

    def learner_config(self, name: str) -> LearnerConfig:
        return make_config(name, self.num_classes, self.dim, eta=self.eta, lam=self.lam,
                           always_shrink=self.always_shrink)


@dataclass
class ErrorCurve:
    """Per-trial cumulative error rates averaged over runs.

    ``true_error[t-1]`` is the mean over runs of (mistakes against the true
    label in trials ``1..t``)/t; ``ambiguous_error`` counts predictions outside
    the candidate set instead.
    """

    learner: str
    set_size: int
    true_error: np.ndarray
    ambiguous_error: np.ndarray
    runs: int
    fingerprint: str = ""

    @property
    def final_true_error(self) -> float:
        return float(self.true_error[-1])


def _cumulative_rate(indicator: np.ndarray) -> np.ndarray:
    return np.cumsum(indicator) / np.arange(1, len(indicator) + 1)


def _tree_sum(arrays: Sequence[np.ndarray]) -> np.ndarray:
    arrays = list(arrays)
    while len(arrays) > 1:
        paired = [arrays[i] + arrays[i + 1] for i in range(0, len(arrays) - 1, 2)]
        if len(arrays) % 2:
            paired.append(arrays[-1])
        arrays = paired
    return arrays[0]


def mean_curves(curves: Sequence[np.ndarray]) -> np.ndarray:
    """Pointwise mean by pairwise (tree) summation; order of inputs is fixed."""
    if not curves:
        raise ValueError("no curves to average")
    return _tree_sum(curves) / len(curves)


def _dataset_stream(dataset: Dataset, s: int, seed: int, rounds: int,
                    shuffle: bool) -> PartialLabelStream:
    rng = np.random.default_rng(seed)
    parts = [synthesize_partial_labels(dataset, s, rng, shuffle=shuffle)]
    total = len(parts[0])
    while total < rounds:
        parts.append(synthesize_partial_labels(dataset, s, rng, shuffle=True))
        total += len(parts[-1])
    return PartialLabelStream(
        np.concatenate([p.X for p in parts])[:rounds],
        np.concatenate([p.masks for p in parts])[:rounds],
        np.concatenate([p.y for p in parts])[:rounds],
        dataset.num_classes, seed=seed, set_size=s, generator=parts[0].generator,
    )


def experiment_stream(config: ExperimentConfig, s: int, run: int) -> PartialLabelStream:
    seed = config.base_seed + run
    if isinstance(config.source, Dataset):
        return _dataset_stream(config.source, s, seed, config.horizon, config.shuffle)
    spec = replace(config.source, set_size=s, seed=seed, rounds=config.horizon)
    return generate(spec)


def _one_run(config: ExperimentConfig, s: int, run: int) -> dict:
    stream = experiment_stream(config, s, run)
    out = {}
    for name in config.learners:
        res = run_arrays(config.learner_config(name), stream.X, stream.masks, stream.y)
        out[name] = (
            _cumulative_rate(res.true_losses(stream.y)),
            _cumulative_rate(res.ambiguous_losses(stream.masks)),
        )
    return out


def run_experiment(config: ExperimentConfig) -> dict:
    """Map ``(learner, set_size)`` to the :class:`ErrorCurve` averaged over runs.

    Runs are independent and may execute on ``config.threads`` threads; the
    reduction order is fixed, so results do not depend on the thread count.
    """
    curves = {}
    for s in config.set_sizes:
        jobs = range(config.runs)
        if config.threads > 1:
            with ThreadPoolExecutor(config.threads) as pool:
                per_run = list(pool.map(lambda r: _one_run(config, s, r), jobs))
        else:
            per_run = [_one_run(config, s, r) for r in jobs]
        for name in config.learners:
            curves[(name, s)] = ErrorCurve(
                learner=name,
                set_size=s,
                true_error=mean_curves([r[name][0] for r in per_run]),
                ambiguous_error=mean_curves([r[name][1] for r in per_run]),
                runs=config.runs,
                fingerprint=config.fingerprint(name, s),
            )
    return curves


def emit_curves(curves: dict, out_dir, config: Optional[ExperimentConfig] = None,
                extra_config: Optional[dict] = None) -> list[Path]:
    """Write one CSV per curve plus ``manifest.csv``; returns the written paths."""
    out_dir = Path(out_dir)
    try:
        out_dir.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise OSError(f"cannot create output directory {out_dir}: {exc}") from exc
    written = []
    manifest_rows = []
    for (name, s), curve in sorted(curves.items()):
        path = out_dir / f"{name}_s{s}.csv"
        lines = ["trial,avg_true_error,avg_ambiguous_error"]
        lines += [f"{t},{a!r},{b!r}" for t, (a, b) in
                  enumerate(zip(curve.true_error.tolist(), curve.ambiguous_error.tolist()), 1)]
        try:
            path.write_text("\n".join(lines) + "\n")
        except OSError as exc:
            raise OSError(f"cannot write {path}: {exc}") from exc
        written.append(path)
        manifest_rows.append([
            path.name, name, s, curve.runs, len(curve.true_error),
            config.base_seed if config else "", config.source_name if config else "",
            curve.fingerprint,
        ])
    manifest = out_dir / "manifest.csv"
    with manifest.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["file", "learner", "set_size", "runs", "T", "seed", "dataset", "fingerprint"])
        w.writerows(manifest_rows)
    written.append(manifest)
    if config is not None or extra_config:
        effective = {**(config.describe() if config else {}), **(extra_config or {})}
        cfg_path = out_dir / "config.txt"
        cfg_path.write_text("".join(f"{k}={v}\n" for k, v in sorted(effective.items())))
        written.append(cfg_path)
    return written


# --- bound campaigns -------------------------------------------------------

@dataclass(frozen=True)
class MistakeCell:
    num_classes: int
    dim: int
    set_size: int
    gamma: float
    rounds: int = 5000
    noise: float = 0.0


@dataclass
class MistakeRow:
    cell: MistakeCell
    seed: int
    mistakes: int
    updates: int
    bound: float
    passed: bool
    gamma_bound: float = math.nan
    constants: dict = field(default_factory=dict)
    error: str = ""


def _run_avg_perceptron(stream: PartialLabelStream, eta: float, break_update: bool):
    cfg = LearnerConfig(Algorithm.AVG_PERCEPTRON, stream.num_classes, stream.dim, eta=eta,
                        break_update=break_update)
    res = run_arrays(cfg, stream.X, stream.masks, stream.y)
    return int(res.ambiguous_losses(stream.masks).sum()), int(res.updated.sum())


def mistake_campaign(cells: Iterable[MistakeCell], seeds: Iterable[int] = range(20),
                     eta: float = 1.0, break_update: bool = False) -> list[MistakeRow]:
    """Avg Perceptron mistakes against the separable-case bound on certified streams.

    The bound uses the margin recomputed from the emitted stream.
    """
    rows = []
    for cell in cells:
        for seed in seeds:
            spec = SynthesisSpec("separable", cell.num_classes, cell.dim, cell.rounds,
                                 gamma=cell.gamma, set_size=cell.set_size, seed=seed)
            try:
                stream, cert = generate_separable(spec)
            except GenerationError as exc:
                rows.append(MistakeRow(cell, seed, -1, -1, math.nan, False, error=str(exc)))
                continue
            mistakes, updates = _run_avg_perceptron(stream, eta, break_update)
            report = theorem1_bound(cert.gamma, stream_radius(stream), min_label_set_size(stream))
            rows.append(MistakeRow(cell, seed, mistakes, updates, report.bound_value,
                                   mistakes <= report.bound_value, cert.gamma, report.constants))
    return rows


def noisy_campaign(cells: Iterable[MistakeCell], seeds: Iterable[int] = range(20),
                   gammas: Sequence[float] = (0.1, 0.5, 1.0), eta: float = 1.0,
                   break_update: bool = False) -> list[MistakeRow]:
    """Avg Perceptron mistakes against the non-separable bound, one row per bound margin.

    The bound is measured against the unit-norm weights that generated the
    stream before label corruption.
    """
    rows = []
    for cell in cells:
        for seed in seeds:
            spec = SynthesisSpec("noisy", cell.num_classes, cell.dim, cell.rounds,
                                 gamma=cell.gamma, set_size=cell.set_size, noise=cell.noise,
                                 seed=seed)
            try:
                stream = generate_noisy(spec)
            except GenerationError as exc:
                rows.append(MistakeRow(cell, seed, -1, -1, math.nan, False, error=str(exc)))
                continue
            mistakes, updates = _run_avg_perceptron(stream, eta, break_update)
            for g in gammas:
                report = theorem2_bound(stream, stream.reference_weights, g)
                rows.append(MistakeRow(cell, seed, mistakes, updates, report.bound_value,
                                       mistakes <= report.bound_value, g, report.constants))
    return rows


@dataclass(frozen=True)
class RegretCell:
    num_classes: int
    dim: int
    set_size: int
    lam: float
    rounds: int
    kind: str = "separable"
    gamma: float = 0.1
    noise: float = 0.0


@dataclass
class RegretRow:
    cell: RegretCell
    seed: int
    regret: float
    bound: float
    passed: bool
    G: float = math.nan
    rate: float = math.nan
    max_norm_excess: float = math.nan
    comparator_objective: float = math.nan
    error: str = ""


def regret_campaign(cells: Iterable[RegretCell], seeds: Iterable[int] = range(10),
                    epochs: int = 500, always_shrink: bool = False) -> list[RegretRow]:
    """Avg Pegasos average regret against ``G^2 ln T/(lam T)``.

    The comparator is the projected full-batch subgradient minimiser; an
    inexact minimiser can only make the measured regret smaller.
    ``max_norm_excess`` is ``max_t ||W^t|| - 1/sqrt(lam)`` over the run.
    """
    rows = []
    for cell in cells:
        for seed in seeds:
            spec = SynthesisSpec(cell.kind, cell.num_classes, cell.dim, cell.rounds,
                                 gamma=cell.gamma, set_size=cell.set_size, noise=cell.noise,
                                 seed=seed)
            try:
                stream = generate(spec)
            except GenerationError as exc:
                rows.append(RegretRow(cell, seed, math.nan, math.nan, False, error=str(exc)))
                continue
            cfg = LearnerConfig(Algorithm.AVG_PEGASOS, stream.num_classes, stream.dim,
                                lam=cell.lam, always_shrink=always_shrink)
            res = run_arrays(cfg, stream.X, stream.masks, stream.y)
            W_star, trace = batch_comparator(stream, cell.lam, epochs=epochs, return_trace=True)
            regret = empirical_regret(res.objective, stream, cell.lam, W_star)
            report = theorem3_bound(cell.lam, stream_radius(stream), min_label_set_size(stream),
                                    len(stream))
            rows.append(RegretRow(
                cell, seed, regret, report.bound_value, regret <= report.bound_value,
                G=report.constants["G"], rate=report.constants["lnT_over_lamT"],
                max_norm_excess=float(np.max(res.norms) - 1.0 / math.sqrt(cell.lam)),
                comparator_objective=trace[-1],
            ))
    return rows


# --- default grids ---------------------------------------------------------

def default_mistake_cells(classes=(3, 5, 10), dims=(5, 20), gammas=(0.1, 0.5),
                          set_sizes: Optional[Sequence] = None, rounds: int = 5000,
                          noise: float = 0.0) -> list[MistakeCell]:
    """Grid over K, d, gamma and set sizes ``{1, 2, K-1}`` (duplicates dropped).

    ``set_sizes`` entries may be ints or the string ``"K-1"``.
    """
    cells = []
    for K in classes:
        sizes = set_sizes or (1, 2, "K-1")
        resolved = sorted({K - 1 if s == "K-1" else int(s) for s in sizes})
        for d in dims:
            for s in resolved:
                for g in gammas:
                    cells.append(MistakeCell(K, d, s, g, rounds, noise))
    return cells


def default_regret_cells(lams=(0.1, 1.0), rounds=(1000, 10000), classes=(3, 5), dims=(5,),
                         set_sizes=(1, 2), kinds=("separable", "noisy"),
                         noise: float = 0.1) -> list[RegretCell]:
    """Grid over stream kind, K, d, s, lambda and T (the regret-check defaults)."""
    cells = []
    shapes = [(K, d, s) for K in classes for d in dims for s in set_sizes]
    for kind in kinds:
        for K, d, s in shapes:
            for lam in lams:
                for T in rounds:
                    cells.append(RegretCell(K, d, s, lam, T, kind=kind,
                                            noise=noise if kind == "noisy" else 0.0))
    return cells
