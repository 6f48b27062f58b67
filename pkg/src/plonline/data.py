"""Dataset ingestion, partial-label synthesis and synthetic stream generators.

Random draws use numpy's PCG64 generator (``numpy.random.default_rng``),
seeded from a single integer so streams reproduce across platforms.  Run
``r`` of an experiment uses seed ``base_seed + r``.
"""
from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterator, Optional, Sequence, Union

import numpy as np

from .bounds import SeparabilityCertificate
from .losses import _batch_avg_margins, _batch_predict

__all__ = [
    "Dataset",
    "PartialLabelStream",
    "SynthesisSpec",
    "GenerationError",
    "parse_libsvm",
    "parse_csv",
    "load_dataset",
    "load_uci",
    "UCI_LAYOUTS",
    "synthesize_partial_labels",
    "generate_separable",
    "generate_noisy",
    "generate",
]

SeedLike = Union[int, np.random.Generator]

# Rejection sampling gives up when fewer than MIN_ACCEPT_RATE of the attempts
# are accepted, checked every ATTEMPT_CHECKPOINT attempts.
ATTEMPT_CHECKPOINT = 1_000_000
MIN_ACCEPT_RATE = 1e-4
_BATCH = 4096


class GenerationError(ValueError):
    pass


def _rng(seed: SeedLike) -> np.random.Generator:
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(int(seed))


# --- datasets ------------------------------------------------------------

@dataclass
class Dataset:
    """Dense features with labels remapped to ``1..K``.

    ``label_names[k - 1]`` is the original label of class ``k``.
    """

    name: str
    X: np.ndarray
    y: np.ndarray
    label_names: tuple
    provenance: str = ""

    @property
    def num_classes(self) -> int:
        return len(self.label_names)

    @property
    def dim(self) -> int:
        return self.X.shape[1]

    def __len__(self) -> int:
        return self.X.shape[0]

    def scaled(self) -> "Dataset":
        """Per-feature min-max scaling to [0, 1]; constant features become 0."""
        lo = self.X.min(axis=0)
        span = self.X.max(axis=0) - lo
        span[span == 0] = 1.0
        return Dataset(self.name, (self.X - lo) / span, self.y.copy(), self.label_names,
                       self.provenance + " | minmax-scaled")

    def subsample(self, max_rows: int, seed: int = 0) -> "Dataset":
        """Seeded row subset of at most ``max_rows`` rows, original order kept."""
        if len(self) <= max_rows:
            return self
        keep = np.sort(np.random.default_rng(seed).choice(len(self), max_rows, replace=False))
        return Dataset(self.name, self.X[keep], self.y[keep], self.label_names,
                       self.provenance + f" | subsample({max_rows}, seed={seed})")

    def snapshot(self) -> str:
        """Canonical text form, used for golden-file comparison."""
        lines = [
            f"name={self.name}",
            f"n={len(self)}",
            f"d={self.dim}",
            f"K={self.num_classes}",
            "labels=" + ",".join(f"{orig}->{k}" for k, orig in enumerate(self.label_names, 1)),
        ]
        for xi, yi in zip(self.X, self.y):
            lines.append(f"{int(yi)}|" + ",".join(repr(float(v)) for v in xi))
        return "\n".join(lines) + "\n"


def _label_key(token: str):
    try:
        v = float(token)
    except ValueError:
        return None
    return int(v) if v.is_integer() else v


def _remap(tokens: Sequence[str]) -> tuple[np.ndarray, tuple]:
    keys = [_label_key(t) for t in tokens]
    if any(k is None for k in keys):
        keys = list(tokens)
    names = tuple(sorted(set(keys)))
    if len(names) < 2:
        raise ValueError(f"need at least 2 classes, found {len(names)}: {names}")
    index = {name: k for k, name in enumerate(names, 1)}
    return np.array([index[k] for k in keys], dtype=np.int64), names


def parse_libsvm(text: str, name: str = "libsvm") -> Dataset:
    """Parse ``label idx:val ...`` lines (1-based sparse indices) into a dense Dataset.

    The dimension is the largest index seen; absent entries are 0.  Blank
    lines and ``#`` comments are skipped.
    """
    labels, rows = [], []
    dim = 0
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        entries = {}
        for tok in parts[1:]:
            idx, sep, val = tok.partition(":")
            if not sep:
                raise ValueError(f"line {lineno}: expected idx:val, got {tok!r}")
            try:
                j = int(idx)
                v = float(val)
            except ValueError:
                raise ValueError(f"line {lineno}: non-numeric entry {tok!r}") from None
            if j < 1:
                raise ValueError(f"line {lineno}: feature index {j} is not 1-based")
            if not math.isfinite(v):
                raise ValueError(f"line {lineno}: non-finite value {tok!r}")
            if j in entries:
                raise ValueError(f"line {lineno}: duplicate feature index {j}")
            entries[j] = v
            dim = max(dim, j)
        labels.append(parts[0])
        rows.append(entries)
    if not rows:
        raise ValueError("empty libsvm input")
    if dim == 0:
        raise ValueError("libsvm input has no features")
    X = np.zeros((len(rows), dim))
    for i, entries in enumerate(rows):
        for j, v in entries.items():
            X[i, j - 1] = v
    y, names = _remap(labels)
    return Dataset(name, X, y, names, provenance="libsvm")


def _is_number(token: str) -> bool:
    try:
        float(token)
    except ValueError:
        return False
    return True


def _split_rows(text: str, delimiter: Optional[str]):
    if delimiter is None:
        lines = (line.split() for line in text.splitlines())
    else:
        lines = csv.reader(io.StringIO(text), delimiter=delimiter)
    return [(n, r) for n, r in enumerate(lines, 1) if r and any(c.strip() for c in r)]


def parse_csv(text: str, label_column: Union[int, str] = -1, delimiter: Optional[str] = ",",
              name: str = "csv", drop_columns: Sequence[int] = (),
              missing: Optional[str] = None) -> Dataset:
    """Parse a delimited table with one label column and numeric features.

    ``delimiter=None`` splits on runs of whitespace.  A first row whose
    feature fields are not all numeric is treated as a header.
    ``label_column`` is a (possibly negative) column index or, when a header
    is present, a column name.  ``drop_columns`` are ignored (e.g. an id
    column).  Rows containing the ``missing`` token are skipped.
    """
    rows = _split_rows(text, delimiter)
    if not rows:
        raise ValueError("empty CSV input")
    width = len(rows[0][1])
    dropped = {j % width for j in drop_columns}
    if width - len(dropped) < 2:
        raise ValueError("CSV needs at least one feature column and a label column")
    header = None
    if isinstance(label_column, str):
        header = [c.strip() for c in rows[0][1]]
        if label_column not in header:
            raise ValueError(f"label column {label_column!r} not in header {header}")
        col = header.index(label_column)
        rows = rows[1:]
    else:
        col = label_column % width if -width <= label_column < width else None
        if col is None:
            raise ValueError(f"label column {label_column} out of range for {width} columns")
        first = [c for j, c in enumerate(rows[0][1]) if j != col and j not in dropped]
        if not all(_is_number(c.strip()) or c.strip() == missing for c in first):
            header = rows[0][1]
            rows = rows[1:]
    if col in dropped:
        raise ValueError("label column cannot also be dropped")
    if not rows:
        raise ValueError("CSV has a header but no data rows")
    labels, feats = [], []
    skipped = 0
    for lineno, r in rows:
        if len(r) != width:
            raise ValueError(f"row {lineno}: expected {width} fields, got {len(r)}")
        if missing is not None and any(c.strip() == missing for c in r):
            skipped += 1
            continue
        vals = []
        for j, c in enumerate(r):
            if j == col or j in dropped:
                continue
            try:
                v = float(c)
            except ValueError:
                raise ValueError(f"row {lineno}: non-numeric feature {c!r} in column {j + 1}") from None
            if not math.isfinite(v):
                raise ValueError(f"row {lineno}: non-finite feature in column {j + 1}")
            vals.append(v)
        labels.append(r[col].strip())
        feats.append(vals)
    if not labels:
        raise ValueError("no complete rows")
    y, names = _remap(labels)
    note = "csv" + (" (header skipped)" if header is not None else "")
    if skipped:
        note += f" ({skipped} rows with missing values skipped)"
    return Dataset(name, np.array(feats, dtype=np.float64), y, names, provenance=note)


def load_dataset(path, fmt: Optional[str] = None, label_column: Union[int, str] = -1,
                 delimiter: Optional[str] = ",", drop_columns: Sequence[int] = (),
                 missing: Optional[str] = None) -> Dataset:
    """Read a libsvm or CSV file; ``fmt`` defaults from the file suffix."""
    path = Path(path)
    text = path.read_text()
    if fmt is None:
        fmt = "csv" if path.suffix.lower() in (".csv", ".tsv", ".data", ".txt") else "libsvm"
    if fmt == "libsvm":
        ds = parse_libsvm(text, name=path.stem)
    elif fmt == "csv":
        ds = parse_csv(text, label_column, "\t" if path.suffix.lower() == ".tsv" else delimiter,
                       name=path.stem, drop_columns=drop_columns, missing=missing)
    else:
        raise ValueError(f"unknown format {fmt!r}; use libsvm or csv")
    ds.provenance = f"{path.name}: {ds.provenance}"
    return ds


# Layouts of the UCI distribution files: ecoli.data is whitespace separated
# with a sequence name first; dermatology.data has '?' for missing ages.
UCI_LAYOUTS = {
    "ecoli": dict(fmt="csv", label_column=-1, delimiter=None, drop_columns=(0,)),
    "dermatology": dict(fmt="csv", label_column=-1, delimiter=",", missing="?"),
}


def load_uci(name: str, data_dir) -> Dataset:
    """Load ``<data_dir>/<name>.data`` using its known UCI layout."""
    if name not in UCI_LAYOUTS:
        raise ValueError(f"no known layout for {name!r}; known: {sorted(UCI_LAYOUTS)}")
    path = Path(data_dir) / f"{name}.data"
    if not path.is_file():
        raise FileNotFoundError(f"{path} not found (UCI {name} distribution file)")
    ds = load_dataset(path, **UCI_LAYOUTS[name])
    ds.name = name
    return ds


# --- partial-label streams -----------------------------------------------

@dataclass
class PartialLabelStream:
    """Ordered ``(x, Y, y)`` trials; ``masks[t, k]`` is True iff label ``k+1`` is in ``Y^t``."""

    X: np.ndarray
    masks: np.ndarray
    y: np.ndarray
    num_classes: int
    seed: Optional[int] = None
    set_size: Optional[int] = None
    generator: str = ""
    reference_weights: Optional[np.ndarray] = field(default=None, repr=False)
    corrupted: Optional[np.ndarray] = field(default=None, repr=False)
    acceptance_rate: Optional[float] = None

    def __post_init__(self):
        if self.masks.shape != (len(self.y), self.num_classes) or self.X.shape[0] != len(self.y):
            raise ValueError("stream arrays are misaligned")

    def __len__(self) -> int:
        return len(self.y)

    def __iter__(self) -> Iterator[tuple[np.ndarray, tuple, int]]:
        for x, Y, y in zip(self.X, self.candidate_sets, self.y):
            yield x, Y, int(y)

    @property
    def dim(self) -> int:
        return self.X.shape[1]

    @property
    def candidate_sets(self) -> list[tuple]:
        return [tuple(int(k) + 1 for k in np.flatnonzero(m)) for m in self.masks]

    def to_csv(self) -> str:
        out = [
            f"# seed={self.seed} set_size={self.set_size} num_classes={self.num_classes} "
            f"dim={self.dim} generator={self.generator or 'unknown'}",
            "t,y_true,Y,x",
        ]
        for t, (x, Y, y) in enumerate(self, 1):
            out.append(f"{t},{y},{';'.join(map(str, Y))},{';'.join(repr(float(v)) for v in x)}")
        return "\n".join(out) + "\n"

    def write_csv(self, path) -> Path:
        path = Path(path)
        path.write_text(self.to_csv())
        return path

    @classmethod
    def from_csv(cls, text: str) -> "PartialLabelStream":
        lines = text.splitlines()
        if len(lines) < 2 or not lines[0].startswith("#"):
            raise ValueError("stream file needs a '# key=value' metadata line and a column header")
        meta = dict(tok.split("=", 1) for tok in lines[0][1:].split() if "=" in tok)
        try:
            K = int(meta["num_classes"])
            d = int(meta["dim"])
        except (KeyError, ValueError):
            raise ValueError("stream metadata must carry num_classes and dim") from None
        rows = lines[2:]
        if not rows:
            raise ValueError("stream file has no trials")
        X = np.empty((len(rows), d))
        masks = np.zeros((len(rows), K), dtype=np.bool_)
        y = np.empty(len(rows), dtype=np.int64)
        for i, line in enumerate(rows):
            try:
                _, yt, Ys, xs = line.split(",")
                y[i] = int(yt)
                labels = [int(v) for v in Ys.split(";")]
                x = [float(v) for v in xs.split(";")]
            except ValueError as exc:
                raise ValueError(f"line {i + 3}: malformed trial ({exc})") from None
            if len(x) != d:
                raise ValueError(f"line {i + 3}: expected {d} features, got {len(x)}")
            if not all(1 <= v <= K for v in labels) or not 1 <= y[i] <= K:
                raise ValueError(f"line {i + 3}: label outside [1, {K}]")
            X[i] = x
            masks[i, [v - 1 for v in labels]] = True

        def opt_int(key):
            v = meta.get(key, "None")
            return None if v == "None" else int(v)

        return cls(X, masks, y, K, seed=opt_int("seed"), set_size=opt_int("set_size"),
                   generator=meta.get("generator", ""))


def _draw_masks(rng: np.random.Generator, y0: np.ndarray, K: int, s: int) -> np.ndarray:
    """Candidate masks holding the 0-based true label plus s-1 uniform distractors."""
    n = len(y0)
    rows = np.arange(n)
    masks = np.zeros((n, K), dtype=np.bool_)
    masks[rows, y0] = True
    if s > 1:
        keys = rng.random((n, K))
        keys[rows, y0] = np.inf
        picks = np.argsort(keys, axis=1, kind="stable")[:, : s - 1]
        masks[rows[:, None], picks] = True
    return masks


def _check_set_size(s: int, K: int):
    if not 1 <= s <= K - 1:
        raise ValueError(f"set size must satisfy 1 <= s <= K-1 = {K - 1}, got {s}")


def synthesize_partial_labels(dataset: Dataset, s: int, seed: SeedLike,
                              shuffle: bool = False) -> PartialLabelStream:
    """Candidate sets ``{y}`` plus ``s-1`` labels drawn uniformly without replacement.

    With ``shuffle`` the example order is permuted first, from the same
    generator.
    """
    K = dataset.num_classes
    _check_set_size(s, K)
    rng = _rng(seed)
    order = rng.permutation(len(dataset)) if shuffle else np.arange(len(dataset))
    y = dataset.y[order]
    masks = _draw_masks(rng, y - 1, K, s)
    return PartialLabelStream(
        dataset.X[order], masks, y, K,
        seed=seed if isinstance(seed, int) else None, set_size=s,
        generator=f"dataset({dataset.name};shuffle={shuffle})",
    )


# --- synthetic streams ---------------------------------------------------

@dataclass(frozen=True)
class SynthesisSpec:
    """Parameters of a synthetic stream.

    Instances are drawn uniformly on the sphere of radius ``radius``; when
    unset it defaults to ``sqrt(d*K)``, which puts per-class scores of a
    unit-norm ``W*`` on an O(1) scale so margins like 0.1 or 0.5 are
    reachable by rejection sampling.
    """

    kind: str
    num_classes: int
    dim: int
    rounds: int
    gamma: float = 0.1
    set_size: int = 1
    noise: float = 0.0
    seed: int = 0
    radius: Optional[float] = None

    def __post_init__(self):
        if self.kind not in ("separable", "noisy"):
            raise ValueError(f"unknown synthetic kind {self.kind!r}")
        if self.num_classes < 2 or self.dim < 1 or self.rounds < 1:
            raise ValueError("need K >= 2, d >= 1, T >= 1")
        if not self.gamma > 0:
            raise ValueError(f"gamma must be > 0, got {self.gamma}")
        if not 0 <= self.noise < 1:
            raise ValueError(f"noise rate must lie in [0, 1), got {self.noise}")
        if self.radius is not None and not self.radius > 0:
            raise ValueError(f"radius must be > 0, got {self.radius}")
        _check_set_size(self.set_size, self.num_classes)

    @property
    def effective_radius(self) -> float:
        return self.radius if self.radius is not None else math.sqrt(self.dim * self.num_classes)

    def describe(self) -> str:
        return (f"{self.kind}(K={self.num_classes};d={self.dim};T={self.rounds};"
                f"gamma={self.gamma};s={self.set_size};noise={self.noise};"
                f"radius={self.effective_radius!r};seed={self.seed})")


def generate_separable(spec: SynthesisSpec) -> tuple[PartialLabelStream, SeparabilityCertificate]:
    """Average-separable stream by rejection sampling.

    ``W*`` is a Gaussian matrix scaled to unit Frobenius norm; ``y`` is its
    prediction and a candidate draw is kept only if its average margin under
    ``W*`` is at least ``spec.gamma``.
    """
    K, d, T, s = spec.num_classes, spec.dim, spec.rounds, spec.set_size
    rng = np.random.default_rng(spec.seed)
    W_star = rng.standard_normal((d, K))
    W_star /= math.sqrt(float(np.sum(W_star * W_star)))
    radius = spec.effective_radius

    xs, ms, ys = [], [], []
    accepted = attempts = 0
    checkpoint = ATTEMPT_CHECKPOINT
    while accepted < T:
        Z = rng.standard_normal((_BATCH, d))
        X = radius * Z / np.linalg.norm(Z, axis=1, keepdims=True)
        y0 = _batch_predict(W_star, X)
        masks = _draw_masks(rng, y0, K, s)
        keep = _batch_avg_margins(W_star, X, masks) >= spec.gamma
        xs.append(X[keep])
        ms.append(masks[keep])
        ys.append(y0[keep] + 1)
        accepted += int(keep.sum())
        attempts += _BATCH
        if attempts >= checkpoint and accepted < T:
            if accepted / attempts < MIN_ACCEPT_RATE:
                raise GenerationError(
                    f"acceptance rate {accepted / attempts:.2e} after {attempts} attempts is below "
                    f"{MIN_ACCEPT_RATE:g}; use a smaller gamma or set size"
                )
            checkpoint += ATTEMPT_CHECKPOINT
    stream = PartialLabelStream(
        np.concatenate(xs)[:T], np.concatenate(ms)[:T], np.concatenate(ys)[:T], K,
        seed=spec.seed, set_size=s, generator=spec.describe(), reference_weights=W_star,
        acceptance_rate=accepted / attempts,
    )
    return stream, SeparabilityCertificate.certify(W_star, stream)


def generate_noisy(spec: SynthesisSpec) -> PartialLabelStream:
    """Separable stream with a ``spec.noise`` fraction of labels replaced.

    Each trial is corrupted independently with probability ``spec.noise``:
    its label moves to a uniformly chosen other class and its candidate set
    is redrawn around the new label.  The corruption draws come from a
    generator separate from the base stream, so ``noise=0`` reproduces
    :func:`generate_separable` exactly.
    """
    stream, _ = generate_separable(spec)
    K, s = spec.num_classes, spec.set_size
    rng = np.random.default_rng([spec.seed, 1])
    flip = rng.random(len(stream)) < spec.noise
    offsets = rng.integers(1, K, size=len(stream))
    y = stream.y.copy()
    y[flip] = (y[flip] - 1 + offsets[flip]) % K + 1
    masks = stream.masks.copy()
    masks[flip] = _draw_masks(rng, y[flip] - 1, K, s)
    return PartialLabelStream(
        stream.X, masks, y, K, seed=spec.seed, set_size=s, generator=spec.describe(),
        reference_weights=stream.reference_weights, corrupted=flip,
        acceptance_rate=stream.acceptance_rate,
    )


def generate(spec: SynthesisSpec) -> PartialLabelStream:
    return generate_separable(spec)[0] if spec.kind == "separable" else generate_noisy(spec)
