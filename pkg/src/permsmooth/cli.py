"""Command line entry point: ``permsmooth <subcommand> ...``.

Failures exit nonzero and print one JSON line ``{"error": <category>,
"message": ...}`` to stderr.  Categories and exit codes: ``usage`` 2,
``config`` 3, ``input`` 4, ``domain`` 5, ``internal`` 1.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from . import models as sm
from .baselines import SpectralConfig, constant_block_lse, exhaustive_lse, spectral_usvt
from .blockpoly import save_model
from .borda import borda_denoise, cross_validate
from .experiments import (
    ConfigError,
    ExperimentConfig,
    IngestError,
    emit_cells,
    emit_report,
    ingest_csv,
    run_simulation,
)
from .tensor import DenseTensor, ShapeError, read_pstn, write_pstn

EXIT_CODES = {"internal": 1, "usage": 2, "config": 3, "input": 4, "domain": 5}


class CLIError(Exception):
    def __init__(self, category: str, message: str):
        super().__init__(message)
        self.category = category


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise CLIError("usage", message)


def parse_int_list(text: str) -> list[int]:
    """``"6,4,10"`` or ``"2:12"`` (inclusive range) to a list of ints."""
    out = []
    for part in text.split(","):
        part = part.strip()
        if ":" in part:
            lo, hi = part.split(":")
            out.extend(range(int(lo), int(hi) + 1))
        elif part:
            out.append(int(part))
    if not out:
        raise CLIError("usage", f"empty integer list {text!r}")
    return out


def parse_block_grid(text: str) -> list:
    """Grid entries separated by commas; ``6x4x10`` is one per-mode entry."""
    out = []
    for part in text.split(","):
        if "x" in part:
            out.append(tuple(int(v) for v in part.split("x")))
        else:
            out.extend(parse_int_list(part))
    return out


def _blocks(text: str, order: int):
    ks = parse_int_list(text)
    if len(ks) == 1:
        return ks * order
    if len(ks) != order:
        raise CLIError("usage", f"--k needs 1 or {order} values")
    return ks


def _symmetric_flag(args):
    return getattr(args, "symmetric", None)


def _write_perms(perms, path):
    if path:
        Path(path).write_text(json.dumps({"perms": perms.tolist(), "indexing": "1-based"}))


def _load(args) -> DenseTensor:
    try:
        return read_pstn(args.input)
    except FileNotFoundError as exc:
        raise CLIError("input", str(exc)) from None


def cmd_denoise(args):
    Y = _load(args)
    res = borda_denoise(Y, _blocks(args.k, Y.order), args.degree, _symmetric_flag(args))
    write_pstn(res.theta if args.sorted else res.estimate, args.out)
    _write_perms(res.perms, args.perm_out)
    if args.model_out:
        save_model(res.model, args.model_out)


def cmd_cv(args):
    Y = _load(args)
    plan, table = cross_validate(Y, parse_block_grid(args.kgrid), parse_int_list(args.lgrid),
                                 args.holdout, args.folds, sm.derive_rng(args.seed, sm.STREAM_HOLDOUT),
                                 _symmetric_flag(args))
    payload = {"best": {"k": list(plan.blocks_star), "l": plan.degree_star}, "seed": args.seed,
               "holdout": args.holdout, "folds": args.folds,
               "table": [{**r, "k": list(r["k"])} for r in table]}
    text = json.dumps(payload, indent=1)
    if args.out:
        Path(args.out).write_text(text)
    else:
        print(text)


def cmd_oracle(args):
    Y = _load(args)
    try:
        res = exhaustive_lse(Y, _blocks(args.k, Y.order), args.degree, threads=args.threads)
    except ValueError as exc:
        raise CLIError("domain", str(exc)) from None
    write_pstn(res.estimate, args.out)
    _write_perms(res.perms, args.perm_out)
    print(json.dumps({"objective": res.objective}))


def cmd_baseline(args):
    Y = _load(args)
    if args.method == "spectral":
        th = None if args.threshold is None else [float(v) for v in args.threshold.split(",")]
        if th is not None and len(th) > 1:
            raise CLIError("usage", "threshold grids need a known truth; pass one threshold")
        est = spectral_usvt(Y, SpectralConfig(args.mode, None if th is None else th[0]))
    else:
        if args.k is None:
            raise CLIError("usage", "--k is required for blocklse")
        est = constant_block_lse(Y, _blocks(args.k, Y.order), seed=args.seed, n_init=args.restarts)
    write_pstn(est, args.out)


def cmd_ingest(args):
    T = ingest_csv(args.csv, args.columns.split(","), args.value, parse_int_list(args.dims),
                   args.transform, args.missing)
    write_pstn(T, args.out)


def _config_from_args(args) -> ExperimentConfig:
    if args.config:
        try:
            data = json.loads(Path(args.config).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise CLIError("config", str(exc)) from None
    else:
        data = {}
    overrides = {
        "model_id": args.model, "expression": args.expr,
        "dims": parse_int_list(args.dims) if args.dims else None,
        "methods": args.methods.split(",") if args.methods else None,
        "k_grid": parse_block_grid(args.kgrid) if args.kgrid else None,
        "l_grid": parse_int_list(args.lgrid) if args.lgrid else None,
        "replicates": args.replicates, "master_seed": args.seed, "threads": args.threads,
    }
    if args.symmetric is not None:
        overrides["symmetric"] = args.symmetric
    if args.per_mode:
        overrides["per_mode_grid"] = True
    if args.noise or args.sigma is not None:
        noise = dict(data.get("noise", {}))
        if args.noise:
            noise["kind"] = args.noise
        if args.sigma is not None:
            noise["sigma"] = args.sigma
        overrides["noise"] = noise
    data.update({k: v for k, v in overrides.items() if v is not None})
    return ExperimentConfig.from_dict(data)


def cmd_simulate(args):
    cfg = _config_from_args(args)
    report = run_simulation(cfg)
    out = args.out or cfg.output
    if out:
        emit_report(report, out, args.format)
    else:
        for row in report.summary:
            print(json.dumps(row))
    if args.cells_out:
        emit_cells(report, args.cells_out)


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="permsmooth", description="Permuted smooth tensor estimation")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(sp, needs_input=True):
        sp.add_argument("--seed", type=int, default=0)
        sp.add_argument("--threads", type=int, default=1)
        sp.add_argument("--out")
        if needs_input:
            sp.add_argument("--input", required=True, help="PSTN tensor file")

    def symmetry(sp):
        g = sp.add_mutually_exclusive_group()
        g.add_argument("--symmetric", dest="symmetric", action="store_true", default=None)
        g.add_argument("--nonsymmetric", dest="symmetric", action="store_false")

    sp = sub.add_parser("simulate", help="run a simulation sweep")
    common(sp, needs_input=False)
    sp.add_argument("--config", help="JSON experiment config")
    sp.add_argument("--model", type=int)
    sp.add_argument("--expr", help="custom generative function, e.g. 'x*y+z'")
    symmetry(sp)
    sp.add_argument("--dims")
    sp.add_argument("--noise", choices=["gaussian", "bernoulli", "none"])
    sp.add_argument("--sigma", type=float)
    sp.add_argument("--methods", help="comma list of borda,blocklse,spectral,oracle")
    sp.add_argument("--kgrid")
    sp.add_argument("--lgrid")
    sp.add_argument("--per-mode", action="store_true", help="expand kgrid over modes")
    sp.add_argument("--replicates", type=int)
    sp.add_argument("--format", choices=["csv", "json"], default="csv")
    sp.add_argument("--cells-out", help="CSV of every grid cell")
    sp.set_defaults(func=cmd_simulate)

    sp = sub.add_parser("denoise", help="Borda count estimate of a tensor")
    common(sp)
    sp.add_argument("--k", required=True, help="block counts, e.g. 6,4,10")
    sp.add_argument("--degree", type=int, default=2)
    sp.add_argument("--perm-out")
    sp.add_argument("--model-out", help="JSON block-polynomial model")
    sp.add_argument("--sorted", action="store_true", help="write the estimate on the sorted grid")
    symmetry(sp)
    sp.set_defaults(func=cmd_denoise)

    sp = sub.add_parser("cv", help="cross-validate (k, l) for Borda count")
    common(sp)
    sp.add_argument("--kgrid", default="1:15")
    sp.add_argument("--lgrid", default="0:3")
    sp.add_argument("--holdout", type=float, default=0.2)
    sp.add_argument("--folds", type=int, default=5)
    symmetry(sp)
    sp.set_defaults(func=cmd_cv)

    sp = sub.add_parser("oracle", help="exhaustive least squares (d <= 8)")
    common(sp)
    sp.add_argument("--k", required=True)
    sp.add_argument("--degree", type=int, default=0)
    sp.add_argument("--perm-out")
    sp.set_defaults(func=cmd_oracle)

    sp = sub.add_parser("baseline", help="spectral USVT or constant-block LSE")
    common(sp)
    sp.add_argument("--method", choices=["spectral", "blocklse"], required=True)
    sp.add_argument("--mode", type=int, default=1)
    sp.add_argument("--threshold")
    sp.add_argument("--k")
    sp.add_argument("--restarts", type=int, default=50)
    sp.set_defaults(func=cmd_baseline)

    sp = sub.add_parser("ingest", help="CSV records to a PSTN tensor")
    common(sp, needs_input=False)
    sp.add_argument("--csv", required=True)
    sp.add_argument("--columns", required=True, help="comma list of index columns")
    sp.add_argument("--value", required=True)
    sp.add_argument("--dims", required=True)
    sp.add_argument("--transform", choices=["none", "log1p"], default="none")
    sp.add_argument("--missing", choices=["mask", "zero"], default="mask")
    sp.set_defaults(func=cmd_ingest)
    return p


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
        if getattr(args, "out", None) is None and args.command in ("denoise", "oracle", "baseline", "ingest"):
            raise CLIError("usage", "--out is required")
        args.func(args)
        return 0
    except CLIError as exc:
        category, message = exc.category, str(exc)
    except ConfigError as exc:
        category, message = "config", str(exc)
    except (IngestError, OSError) as exc:
        category, message = "input", str(exc)
    except (ShapeError, sm.DomainError, ValueError) as exc:
        category, message = "domain", str(exc)
    except Exception as exc:  # noqa: BLE001
        category, message = "internal", f"{type(exc).__name__}: {exc}"
    print(json.dumps({"error": category, "message": message}), file=sys.stderr)
    return EXIT_CODES[category]


if __name__ == "__main__":
    sys.exit(main())
