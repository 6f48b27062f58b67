"""Command-line front end: ``plonline {run,synth,bounds-check,regret-check,inspect}``.

Exit codes: 0 success, 1 runtime or check failure, 2 usage or config error.
Every subcommand accepts ``--config FILE`` with flat ``key=value`` lines
(keys are flag names without the leading dashes); explicit flags win.
"""
from __future__ import annotations

import argparse
import logging
import os
import sys
from dataclasses import replace
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from . import harness
from .bounds import min_label_set_size, stream_avg_margins, stream_radius
from .data import GenerationError, PartialLabelStream, SynthesisSpec, generate, load_dataset
from .learners import Algorithm, PARTIAL_LEARNERS, parse_learners

log = logging.getLogger("plonline")

EXIT_OK, EXIT_FAIL, EXIT_USAGE = 0, 1, 2


class UsageError(Exception):
    """Bad flags or config values; maps to exit code 2."""


# --- flag helpers ----------------------------------------------------------

def _int_list(text: str) -> list[int]:
    try:
        return [int(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


def _float_list(text: str) -> list[float]:
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def _size_list(text: str) -> list:
    """Set sizes; the token ``K-1`` stands for one less than the class count."""
    out = []
    for v in text.split(","):
        v = v.strip()
        if not v:
            continue
        if v.upper() == "K-1":
            out.append("K-1")
            continue
        try:
            out.append(int(v))
        except ValueError:
            raise argparse.ArgumentTypeError(f"bad set size {v!r}") from None
    return out


def _bool(text: str) -> bool:
    low = text.strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise argparse.ArgumentTypeError(f"expected a boolean, got {text!r}")


def read_config(path) -> dict:
    """Parse a flat ``key=value`` file; ``#`` starts a comment."""
    out = {}
    for n, line in enumerate(Path(path).read_text().splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise UsageError(f"{path}:{n}: expected key=value, got {line!r}")
        key, value = (p.strip() for p in line.split("=", 1))
        out[key.replace("-", "_")] = value
    return out


def _apply_config(parser: argparse.ArgumentParser, argv: Sequence[str], cfg: dict):
    """Turn config values into parser defaults so explicit flags override them."""
    actions = {a.dest: a for a in parser._actions if a.dest not in ("help", "config")}
    defaults = {}
    for key, raw in cfg.items():
        action = actions.get(key)
        if action is None:
            raise UsageError(f"unknown config key {key!r}")
        if isinstance(action, (argparse._StoreTrueAction, argparse._StoreFalseAction)):
            try:
                defaults[key] = _bool(raw)
            except argparse.ArgumentTypeError as exc:
                raise UsageError(f"config key {key}: {exc}") from None
        else:
            conv = action.type or str
            try:
                defaults[key] = conv(raw)
            except (argparse.ArgumentTypeError, ValueError) as exc:
                raise UsageError(f"config key {key}: {exc}") from None
            if action.choices is not None and defaults[key] not in action.choices:
                raise UsageError(f"config key {key}: {raw!r} not in {sorted(action.choices)}")
    parser.set_defaults(**defaults)
    return parser.parse_args(argv)


def _positive(name: str, value: Optional[float]):
    if value is not None and not value > 0:
        raise UsageError(f"--{name} must be > 0, got {value}")


# --- subcommands -----------------------------------------------------------

def _experiment_from_args(args) -> harness.ExperimentConfig:
    if args.out is None:
        raise UsageError("missing required flag --out")
    if (args.data is None) == (args.synthetic is None):
        raise UsageError("give exactly one data source: --data FILE or --synthetic KIND")
    learners = tuple(a.value for a in parse_learners(args.learners))
    _positive("eta", args.eta)
    _positive("lambda", args.lam)
    if args.data is not None:
        try:
            source = load_dataset(args.data, args.format, args.label_col,
                                  None if args.delimiter == "whitespace" else args.delimiter,
                                  drop_columns=args.drop_cols or (), missing=args.missing)
        except OSError as exc:
            raise RuntimeError(f"cannot read {args.data}: {exc}") from exc
        if args.scale:
            source = source.scaled()
        if args.max_rows:
            source = source.subsample(args.max_rows, args.seed)
    else:
        if args.k is None or args.d is None:
            raise UsageError("--synthetic needs --k and --d")
        source = SynthesisSpec(args.synthetic, args.k, args.d, args.rounds or 1000,
                               gamma=args.gamma, noise=args.noise, seed=args.seed,
                               radius=args.radius)
    sizes = tuple(source.num_classes - 1 if s == "K-1" else s for s in args.set_sizes)
    return harness.ExperimentConfig(
        source=source, learners=learners, set_sizes=sizes, runs=args.runs,
        rounds=args.rounds, base_seed=args.seed, eta=args.eta, lam=args.lam,
        always_shrink=args.always_shrink, shuffle=args.shuffle, threads=args.threads,
    )


def cmd_run(args) -> int:
    try:
        config = _experiment_from_args(args)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    curves = harness.run_experiment(config)
    extra = {"config_file": args.config or "", "threads": args.threads}
    paths = harness.emit_curves(curves, args.out, config, extra_config=extra)
    for (name, s), curve in sorted(curves.items()):
        print(f"{name} s={s}: final true error {curve.final_true_error:.4f}, "
              f"ambiguous {float(curve.ambiguous_error[-1]):.4f}")
    print(f"wrote {len(paths)} files to {args.out}")
    return EXIT_OK


def cmd_synth(args) -> int:
    if args.out is None:
        raise UsageError("missing required flag --out")
    try:
        spec = SynthesisSpec(args.kind, args.k, args.d, args.rounds, gamma=args.gamma,
                             set_size=args.set_size, noise=args.noise, seed=args.seed,
                             radius=args.radius)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    stream = generate(spec)
    stream.write_csv(args.out)
    if args.wstar_out:
        np.savetxt(args.wstar_out, stream.reference_weights, fmt="%.17g")
    print(f"wrote {len(stream)} trials to {args.out}")
    return EXIT_OK


def _print_table(header: Sequence[str], rows: Sequence[Sequence], out=None):
    out = out or sys.stdout
    cells = [[str(h) for h in header]] + [[str(v) for v in r] for r in rows]
    widths = [max(len(r[j]) for r in cells) for j in range(len(header))]
    for r in cells:
        print("  ".join(v.rjust(w) for v, w in zip(r, widths)), file=out)


def _fmt(v: float) -> str:
    return f"{v:.6g}"


def cmd_bounds_check(args) -> int:
    for g in args.gamma:
        _positive("gamma", g)
    _positive("eta", args.eta)
    noisy = args.noise is not None
    if noisy and not 0 < args.noise < 1:
        raise UsageError(f"--noise must lie in (0, 1), got {args.noise}")
    for g in args.bound_gammas:
        _positive("bound-gammas", g)
    cells = harness.default_mistake_cells(args.k, args.d, args.gamma, args.set_sizes,
                                          args.rounds, args.noise or 0.0)
    for c in cells:
        if not 1 <= c.set_size <= c.num_classes - 1:
            raise UsageError(f"set size {c.set_size} outside [1, K-1] for K={c.num_classes}")
    seeds = range(args.seed, args.seed + args.seeds)
    rows, table = [], []
    for i, cell in enumerate(cells, 1):
        print(f"[{i}/{len(cells)}] K={cell.num_classes} d={cell.dim} s={cell.set_size} "
              f"gamma={cell.gamma}", file=sys.stderr)
        if noisy:
            part = harness.noisy_campaign([cell], seeds, args.bound_gammas, args.eta,
                                          args.break_update)
        else:
            part = harness.mistake_campaign([cell], seeds, args.eta, args.break_update)
        rows += part
        groups = {}
        for r in part:
            groups.setdefault(r.gamma_bound if noisy else cell.gamma, []).append(r)
        for g, rs in groups.items():
            ok = sum(r.passed for r in rs)
            errors = [r.error for r in rs if r.error]
            table.append([cell.num_classes, cell.dim, cell.set_size, cell.gamma,
                          _fmt(g) if noisy else _fmt(min(r.gamma_bound for r in rs)),
                          max(r.mistakes for r in rs), max(r.updates for r in rs),
                          _fmt(min(r.bound for r in rs)), f"{ok}/{len(rs)}",
                          "PASS" if ok == len(rs) else "FAIL" + (f" ({errors[0]})" if errors else "")])
    header = ["K", "d", "s", "gamma_gen", "gamma_bound" if noisy else "gamma_cert",
              "max_mistakes", "max_updates", "min_bound", "passed", "status"]
    _print_table(header, table)
    if args.csv:
        _write_rows(args.csv, ["K", "d", "s", "gamma_gen", "noise", "seed", "gamma_bound",
                               "mistakes", "updates", "bound", "passed"],
                    [[r.cell.num_classes, r.cell.dim, r.cell.set_size, r.cell.gamma, r.cell.noise,
                      r.seed, repr(r.gamma_bound), r.mistakes, r.updates, repr(r.bound),
                      int(r.passed)] for r in rows])
    failed = sum(not r.passed for r in rows)
    print(f"{len(rows) - failed}/{len(rows)} runs within the bound")
    return EXIT_OK if failed == 0 else EXIT_FAIL


def cmd_regret_check(args) -> int:
    for lam in args.lam:
        _positive("lambda", lam)
    if args.noise is not None and not 0 < args.noise < 1:
        raise UsageError(f"--noise must lie in (0, 1), got {args.noise}")
    if any(T < 2 for T in args.rounds):
        raise UsageError("--rounds entries must be >= 2")
    if args.epochs < 1:
        raise UsageError("--epochs must be >= 1")
    for K in args.k:
        for s in args.set_sizes:
            if not 1 <= (K - 1 if s == "K-1" else s) <= K - 1:
                raise UsageError(f"set size {s} outside [1, K-1] for K={K}")
    cells = [
        replace(c, set_size=c.num_classes - 1 if c.set_size == "K-1" else c.set_size,
                gamma=args.gamma)
        for c in harness.default_regret_cells(args.lam, args.rounds, args.k, args.d,
                                              args.set_sizes, args.kinds,
                                              args.noise if args.noise is not None else 0.1)
    ]
    seeds = range(args.seed, args.seed + args.seeds)
    rows, table = [], []
    for i, cell in enumerate(cells, 1):
        print(f"[{i}/{len(cells)}] {cell.kind} K={cell.num_classes} d={cell.dim} "
              f"s={cell.set_size} lambda={cell.lam} T={cell.rounds}", file=sys.stderr)
        part = harness.regret_campaign([cell], seeds, args.epochs, args.always_shrink)
        rows += part
        ok = sum(r.passed for r in part)
        errors = [r.error for r in part if r.error]
        table.append([cell.kind, cell.num_classes, cell.dim, cell.set_size, cell.lam, cell.rounds,
                      _fmt(max(r.regret for r in part)), _fmt(part[0].G), _fmt(part[0].rate),
                      _fmt(min(r.bound for r in part)),
                      _fmt(max(r.regret / r.bound for r in part)),
                      _fmt(max(r.max_norm_excess for r in part)), f"{ok}/{len(part)}",
                      "PASS" if ok == len(part) else "FAIL" + (f" ({errors[0]})" if errors else "")])
    _print_table(["kind", "K", "d", "s", "lambda", "T", "max_regret", "G", "lnT/(lam*T)",
                  "bound", "max_ratio", "max_norm_excess", "passed", "status"], table)
    if args.csv:
        _write_rows(args.csv, ["kind", "K", "d", "s", "lambda", "T", "seed", "regret", "bound",
                               "G", "lnT_over_lamT", "max_norm_excess", "passed"],
                    [[r.cell.kind, r.cell.num_classes, r.cell.dim, r.cell.set_size, r.cell.lam,
                      r.cell.rounds, r.seed, repr(r.regret), repr(r.bound), repr(r.G),
                      repr(r.rate), repr(r.max_norm_excess), int(r.passed)] for r in rows])
    failed = sum(not r.passed for r in rows)
    print(f"{len(rows) - failed}/{len(rows)} runs within the bound")
    return EXIT_OK if failed == 0 else EXIT_FAIL


def _write_rows(path, header, rows):
    import csv

    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)


def cmd_inspect(args) -> int:
    try:
        text = Path(args.stream).read_text()
    except OSError as exc:
        raise RuntimeError(f"cannot read {args.stream}: {exc}") from exc
    try:
        stream = PartialLabelStream.from_csv(text)
    except ValueError as exc:
        raise RuntimeError(f"{args.stream}: {exc}") from exc
    sizes = stream.masks.sum(axis=1)
    print(f"K={stream.num_classes}")
    print(f"d={stream.dim}")
    print(f"T={len(stream)}")
    print(f"c={min_label_set_size(stream)}")
    print(f"max_set_size={int(sizes.max())}")
    print(f"R={stream_radius(stream)!r}")
    hist = np.bincount(stream.y - 1, minlength=stream.num_classes)
    print("label_histogram=" + ",".join(f"{k + 1}:{n}" for k, n in enumerate(hist)))
    if args.wstar:
        try:
            W = np.atleast_2d(np.loadtxt(args.wstar, dtype=np.float64))
        except (OSError, ValueError) as exc:
            raise RuntimeError(f"cannot read {args.wstar}: {exc}") from exc
        if W.shape != (stream.dim, stream.num_classes):
            raise RuntimeError(f"weights have shape {W.shape}, expected "
                               f"({stream.dim}, {stream.num_classes})")
        m = stream_avg_margins(W, stream)
        print(f"wstar_norm={float(np.linalg.norm(W))!r}")
        print(f"margin_min={float(m.min())!r}")
        print(f"margin_mean={float(m.mean())!r}")
        print(f"margin_max={float(m.max())!r}")
        print(f"margin_negative={int(np.count_nonzero(m <= 0))}")
    return EXIT_OK


# --- parser ----------------------------------------------------------------

def _default_threads() -> int:
    return os.cpu_count() or 1


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="plonline",
                                description="Online multiclass learning from partial labels.")
    p.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    sub = p.add_subparsers(dest="command", required=True, metavar="COMMAND")

    def common(sp):
        sp.add_argument("--config", metavar="FILE", help="key=value file; flags override it")
        return sp

    r = common(sub.add_parser("run", help="average error curves over repeated runs"))
    src = r.add_argument_group("data source (exactly one of --data, --synthetic)")
    src.add_argument("--data", metavar="FILE", help="libsvm or delimited dataset file")
    src.add_argument("--format", choices=("libsvm", "csv"), help="default: from the suffix")
    src.add_argument("--label-col", type=int, default=-1, help="label column for csv (default -1)")
    src.add_argument("--delimiter", default=",", help="csv delimiter, or 'whitespace'")
    src.add_argument("--drop-cols", type=_int_list, help="csv columns to ignore, e.g. 0")
    src.add_argument("--missing", help="csv token marking a missing value; such rows are skipped")
    src.add_argument("--scale", action="store_true", help="min-max scale features to [0, 1]")
    src.add_argument("--max-rows", type=int, help="use a seeded subset of this many rows")
    src.add_argument("--synthetic", choices=("separable", "noisy"))
    src.add_argument("--k", type=int, help="classes (synthetic)")
    src.add_argument("--d", type=int, help="dimension (synthetic)")
    src.add_argument("--gamma", type=float, default=0.1, help="margin (synthetic)")
    src.add_argument("--noise", type=float, default=0.0, help="label noise rate (synthetic)")
    src.add_argument("--radius", type=float, help="instance norm (synthetic; default sqrt(d*K))")
    r.add_argument("--learners", default=",".join(a.value for a in PARTIAL_LEARNERS),
                   help="comma-separated: " + ", ".join(a.value for a in Algorithm))
    r.add_argument("--set-sizes", type=_size_list, default=[2], help="e.g. 2,4 or K-1")
    r.add_argument("--runs", type=int, default=100)
    r.add_argument("--rounds", type=int, help="trials per run (dataset default: one pass)")
    r.add_argument("--eta", type=float, default=1.0, help="Perceptron step size")
    r.add_argument("--lambda", dest="lam", type=float, default=0.01, help="Pegasos regulariser")
    r.add_argument("--always-shrink", action="store_true",
                   help="Pegasos: shrink W on zero-loss trials too")
    r.add_argument("--shuffle", action="store_true", help="shuffle dataset order per run")
    r.add_argument("--seed", type=int, default=0, help="base seed; run r uses seed+r")
    r.add_argument("--threads", type=int, default=_default_threads())
    r.add_argument("--out", metavar="DIR", help="output directory (required)")
    r.set_defaults(func=cmd_run)

    s = common(sub.add_parser("synth", help="write a synthetic partial-label stream"))
    s.add_argument("--kind", choices=("separable", "noisy"), default="separable")
    s.add_argument("--k", type=int, default=5)
    s.add_argument("--d", type=int, default=10)
    s.add_argument("--rounds", type=int, default=1000)
    s.add_argument("--gamma", type=float, default=0.1)
    s.add_argument("--set-size", type=int, default=1)
    s.add_argument("--noise", type=float, default=0.0)
    s.add_argument("--radius", type=float)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--out", metavar="FILE", help="stream CSV path (required)")
    s.add_argument("--wstar-out", metavar="FILE", help="also save the generating weights")
    s.set_defaults(func=cmd_synth)

    b = common(sub.add_parser("bounds-check", help="Avg Perceptron mistakes against the bound"))
    b.add_argument("--k", type=_int_list, default=[3, 5, 10])
    b.add_argument("--d", type=_int_list, default=[5, 20])
    b.add_argument("--set-sizes", type=_size_list, default=[1, 2, "K-1"])
    b.add_argument("--gamma", type=_float_list, default=[0.1, 0.5], help="generation margins")
    b.add_argument("--rounds", type=int, default=5000)
    b.add_argument("--seeds", type=int, default=20, help="seeds per cell")
    b.add_argument("--seed", type=int, default=0, help="first seed")
    b.add_argument("--eta", type=float, default=1.0)
    b.add_argument("--noise", type=float,
                   help="label noise rate; switches to the non-separable bound")
    b.add_argument("--bound-gammas", type=_float_list, default=[0.1, 0.5, 1.0],
                   help="margins at which the non-separable bound is evaluated")
    b.add_argument("--break-update", action="store_true",
                   help="test hook: flip the update sign (negative control)")
    b.add_argument("--csv", metavar="FILE", help="write per-run rows")
    b.set_defaults(func=cmd_bounds_check)

    g = common(sub.add_parser("regret-check", help="Avg Pegasos regret against the bound"))
    g.add_argument("--k", type=_int_list, default=[3, 5])
    g.add_argument("--d", type=_int_list, default=[5])
    g.add_argument("--set-sizes", type=_size_list, default=[1, 2])
    g.add_argument("--lambda", dest="lam", type=_float_list, default=[0.1, 1.0])
    g.add_argument("--rounds", type=_int_list, default=[1000, 10000])
    g.add_argument("--kinds", type=lambda t: [v for v in t.split(",") if v],
                   default=["separable", "noisy"])
    g.add_argument("--gamma", type=float, default=0.1, help="generation margin")
    g.add_argument("--noise", type=float, help="noise rate for noisy streams (default 0.1)")
    g.add_argument("--seeds", type=int, default=10)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--epochs", type=int, default=500, help="batch comparator epochs")
    g.add_argument("--always-shrink", action="store_true",
                   help="shrink W on zero-loss trials too")
    g.add_argument("--csv", metavar="FILE", help="write per-run rows")
    g.set_defaults(func=cmd_regret_check)

    i = common(sub.add_parser("inspect", help="summarise a stream CSV"))
    i.add_argument("stream", metavar="STREAM")
    i.add_argument("--wstar", metavar="FILE", help="weights (d rows, K columns) for margin stats")
    i.set_defaults(func=cmd_inspect)
    return p


def main(argv: Optional[Sequence[str]] = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.config:
            subparser = parser._subparsers._group_actions[0].choices[args.command]
            try:
                cfg = read_config(args.config)
            except OSError as exc:
                raise UsageError(f"cannot read config {args.config}: {exc}") from None
            sub_argv = argv[argv.index(args.command) + 1:]
            merged = _apply_config(subparser, sub_argv, cfg)
            merged.verbose = args.verbose
            args = merged
        if getattr(args, "threads", 1) is not None and getattr(args, "threads", 1) < 1:
            raise UsageError("--threads must be >= 1")
        return args.func(args)
    except UsageError as exc:
        print(f"plonline {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (GenerationError, RuntimeError, OSError, ValueError) as exc:
        print(f"plonline {args.command}: {exc}", file=sys.stderr)
        return EXIT_FAIL


if __name__ == "__main__":
    sys.exit(main())
