"""Command-line interface.

    destructor-it fit data.csv --model flow.gflw --report fit.json
    destructor-it transform flow.gflw data.csv -o latent.csv --logdet
    destructor-it invert flow.gflw latent.csv -o data.csv
    destructor-it sample --family circles -n 50000 -o circles.csv
    destructor-it estimate tc data.csv -o tc.json
    destructor-it estimate mi x.csv y.csv -o mi.json
    destructor-it benchmark --dims 3 10 --nu gauss 2 3 5 -o bench.json --series bench.csv

Exit status: 0 on success, 2 on usage or input errors, 3 when a fit or other
numeric procedure fails. Outputs are written atomically, so a failed run
leaves nothing at the output paths.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import os
import sys
import time

import numpy as np

from . import __version__
from . import benchmark as bench
from .data import DataMatrix, format_row, load_csv, make_rng
from .errors import CorruptModel, InputError, NumericError, VersionMismatch
from .flow import FitConfig, Head, fit, forward, inverse
from .itmeasures import Quantity, estimate
from .modelfile import dumps, load_model
from .rotation import RotationKind
from .synth import (
    CirclesSpec,
    GaussianSpec,
    StudentSpec,
    equicorrelation,
    sample_circles,
    sample_gaussian,
    sample_student,
)

REPORT_FORMAT_VERSION = "1"
EXIT_OK, EXIT_INPUT, EXIT_NUMERIC = 0, 2, 3

QUANTITY_TOKENS = {
    "tc": Quantity.TOTAL_CORRELATION,
    "mi": Quantity.MUTUAL_INFORMATION,
    "entropy": Quantity.ENTROPY,
    "negentropy": Quantity.NEGENTROPY,
}


def _positive_int(text: str) -> int:
    try:
        value = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected an integer, got {text!r}") from None
    if value < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {value}")
    return value


def _seed(text: str) -> int:
    value = int(text, 0)
    if not 0 <= value < 2**64:
        raise argparse.ArgumentTypeError("seed must be an unsigned 64-bit integer")
    return value


# ---- atomic output -------------------------------------------------------

class _Outputs:
    """Stage every output in memory and publish them together."""

    def __init__(self):
        self.staged = []

    def add(self, path, payload):
        if isinstance(payload, str):
            payload = payload.encode()
        self.staged.append((path, payload))

    def commit(self):
        tmps = []
        try:
            for path, payload in self.staged:
                tmp = f"{path}.tmp{os.getpid()}"
                with open(tmp, "wb") as fh:
                    fh.write(payload)
                tmps.append((tmp, path))
        except OSError:
            for tmp, _ in tmps:
                os.unlink(tmp)
            raise
        for tmp, path in tmps:
            os.replace(tmp, path)


def _json_text(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True) + "\n"


def _csv_text(values: np.ndarray, names=None) -> str:
    lines = [",".join(names)] if names else []
    lines.extend(format_row(row) for row in values)
    return "\n".join(lines) + "\n"


def _emit_json(out: _Outputs, path, obj):
    if path is None or path == "-":
        sys.stdout.write(_json_text(obj))
    else:
        out.add(path, _json_text(obj))


# ---- shared option groups -----------------------------------------------

def _add_fit_options(p: argparse.ArgumentParser):
    g = p.add_argument_group("fit options")
    g.add_argument("--seed", type=_seed, default=0)
    g.add_argument("--max-layers", type=_positive_int, default=FitConfig.max_layers)
    g.add_argument("--rotation", choices=[k.value for k in RotationKind], default="pca")
    g.add_argument("--n-bins", type=int, default=None,
                   help="histogram bins for entropy estimates (default: ceil(sqrt(N)), max 1000)")
    g.add_argument("--stop-window", type=_positive_int, default=FitConfig.stop_window)
    g.add_argument("--stop-significance", type=float, default=FitConfig.stop_significance)


def _fit_config(args) -> FitConfig:
    return FitConfig(
        max_layers=args.max_layers,
        rotation_kind=args.rotation,
        seed=args.seed,
        n_bins=args.n_bins,
        stop_window=args.stop_window,
        stop_significance=args.stop_significance,
    )


def _run_config(args, **extra) -> dict:
    out = {"subcommand": args.command, "format_version": REPORT_FORMAT_VERSION}
    out.update(extra)
    return out


def _envelope(args, run_config: dict, start: float, body: dict) -> dict:
    body = dict(body)
    body.update({
        "format_version": REPORT_FORMAT_VERSION,
        "package_version": __version__,
        "run_config": run_config,
        "seed": args.seed,
        "wall_time": time.perf_counter() - start,
    })
    return body


def _load(path, has_header) -> DataMatrix:
    return load_csv(path, has_header=has_header)


# ---- subcommands ---------------------------------------------------------

def cmd_fit(args) -> int:
    start = time.perf_counter()
    config = _fit_config(args)
    data = _load(args.input, args.header)
    flow = fit(data, config, head=args.head)
    run_config = _run_config(
        args, input_paths=[args.input], model_path=args.model, output_path=args.report,
        head=args.head, fit_config=config.to_dict(),
    )
    report = _envelope(args, run_config, start, {
        "n_samples": data.n,
        "d": data.d,
        "n_layers": flow.n_layers,
        "stop_reason": flow.stop_reason.value,
        "total_delta_t": flow.total_delta_t,
        "raw_total_delta_t": flow.raw_total_delta_t,
        "delta_t": flow.delta_ts,
        "raw_delta_t": flow.raw_delta_ts,
        "cumulative_delta_t": [float(v) for v in flow.cumulative_delta_t()],
        "noise_floor": {
            "std": flow.noise.std,
            "threshold": flow.noise.threshold,
            "surrogate_delta_t": list(flow.noise.samples),
        },
    })
    out = _Outputs()
    out.add(args.model, dumps(flow))
    _emit_json(out, args.report, report)
    out.commit()
    return EXIT_OK


def cmd_transform(args) -> int:
    flow = load_model(args.model)
    data = _load(args.input, args.header)
    z, logdet = forward(flow, data)
    names = list(data.column_names) if data.column_names else None
    if args.logdet:
        z = np.column_stack([z, logdet])
        if names:
            names.append("logdet")
    out = _Outputs()
    out.add(args.output, _csv_text(z, names))
    out.commit()
    return EXIT_OK


def cmd_invert(args) -> int:
    flow = load_model(args.model)
    data = _load(args.input, args.header)
    x = inverse(flow, data)
    out = _Outputs()
    out.add(args.output, _csv_text(x, data.column_names))
    out.commit()
    return EXIT_OK


def cmd_sample(args) -> int:
    n = args.n
    if args.family == "model":
        if not args.model:
            raise InputError("--family model needs --model")
        flow = load_model(args.model)
        rng = make_rng(args.seed)
        if flow.head is Head.UNIFORM:
            base = rng.uniform(size=(n, flow.d))
            base = np.clip(base, np.nextafter(0.0, 1.0), np.nextafter(1.0, 0.0))
        else:
            base = rng.standard_normal((n, flow.d))
        x = inverse(flow, base)
    elif args.family == "gaussian":
        x = sample_gaussian(GaussianSpec(equicorrelation(args.d, args.rho)), n, args.seed).values
    elif args.family == "student":
        x = sample_student(StudentSpec(args.nu, equicorrelation(args.d, args.rho)), n, args.seed).values
    elif args.family == "circles":
        x = sample_circles(CirclesSpec(radial_noise=args.noise), n, args.seed).values
    else:
        x = make_rng(args.seed).uniform(size=(n, args.d))
    out = _Outputs()
    if args.split is not None:
        if not 1 <= args.split < x.shape[1]:
            raise InputError(f"--split must lie in [1, {x.shape[1] - 1}]")
        if not args.output_y:
            raise InputError("--split needs --output-y")
        out.add(args.output, _csv_text(x[:, :args.split]))
        out.add(args.output_y, _csv_text(x[:, args.split:]))
    else:
        out.add(args.output, _csv_text(x))
    out.commit()
    return EXIT_OK


def cmd_estimate(args) -> int:
    start = time.perf_counter()
    quantity = QUANTITY_TOKENS[args.quantity]
    config = _fit_config(args)
    paths = [args.input] + ([args.input_y] if args.input_y else [])
    if quantity is Quantity.MUTUAL_INFORMATION and not args.input_y:
        raise InputError("mi needs two row-aligned CSV files")
    if quantity is not Quantity.MUTUAL_INFORMATION and args.input_y:
        raise InputError(f"{args.quantity} takes a single CSV file")
    x = _load(args.input, args.header)
    y = _load(args.input_y, args.header) if args.input_y else None
    report = estimate(quantity, x, config, other=y)
    run_config = _run_config(
        args, quantity=args.quantity, input_paths=paths, output_path=args.output,
        fit_config=config.to_dict(),
    )
    body = report.to_dict()
    body.pop("wall_time")
    out = _Outputs()
    _emit_json(out, args.output, _envelope(args, run_config, start, body))
    out.commit()
    return EXIT_OK


def cmd_benchmark(args) -> int:
    start = time.perf_counter()
    config = _fit_config(args)
    cells = bench.build_cells(args.dims, args.nu, args.quantities, large=args.large)
    checkpoint = args.checkpoint or (f"{args.output}.checkpoint.jsonl" if args.output else None)
    if args.resume and not checkpoint:
        raise InputError("--resume needs --checkpoint or --output")

    def progress(row):
        if not args.quiet:
            print(f"{row['quantity']} d={row['d']} {row['family']} nu={row['nu']} "
                  f"N={row['N']} trial={row['trial']}: {row['estimate']:.4f} "
                  f"({row['wall_time']:.1f}s)", file=sys.stderr)

    rows = bench.run_sweep(
        cells, args.sample_sizes, args.trials, args.seed, config, rho=args.rho,
        checkpoint=checkpoint, resume=args.resume, progress=progress,
    )
    aggregates = bench.aggregate(rows)
    run_config = _run_config(
        args, dims=args.dims, nu=args.nu, quantities=args.quantities,
        sample_sizes=args.sample_sizes, trials=args.trials, rho=args.rho,
        large=args.large, output_path=args.output, series_path=args.series,
        fit_config=config.to_dict(),
    )
    report = _envelope(args, run_config, start, {"rows": rows, "aggregates": aggregates})
    out = _Outputs()
    _emit_json(out, args.output, report)
    if args.series:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(bench.SERIES_COLUMNS)
        writer.writerows(bench.series_rows(aggregates))
        out.add(args.series, buf.getvalue())
    out.commit()
    if checkpoint and os.path.exists(checkpoint):
        os.unlink(checkpoint)
    return EXIT_OK


# ---- parser --------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="destructor-it",
        description="Gaussianization flows and information-theoretic estimates.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("fit", help="fit a flow to a CSV and save it")
    p.add_argument("input")
    p.add_argument("--model", required=True, help="output model file")
    p.add_argument("--report", help="fit report JSON (default: stdout)")
    p.add_argument("--head", choices=[h.value for h in Head], default="none")
    p.add_argument("--header", action="store_true", help="first CSV row holds column names")
    _add_fit_options(p)
    p.set_defaults(func=cmd_fit)

    for name, func, helptext in (
        ("transform", cmd_transform, "map data to the latent space"),
        ("invert", cmd_invert, "map latent points back to data space"),
    ):
        p = sub.add_parser(name, help=helptext)
        p.add_argument("model")
        p.add_argument("input")
        p.add_argument("-o", "--output", required=True)
        p.add_argument("--header", action="store_true")
        if name == "transform":
            p.add_argument("--logdet", action="store_true",
                           help="append the per-row log|det J| as a last column")
        p.set_defaults(func=func)

    p = sub.add_parser("sample", help="draw synthetic data or samples from a fitted flow")
    p.add_argument("--family", choices=["gaussian", "student", "circles", "uniform", "model"],
                   default="gaussian")
    p.add_argument("--model", help="model file for --family model")
    p.add_argument("-n", type=_positive_int, required=True)
    p.add_argument("--d", type=_positive_int, default=2)
    p.add_argument("--rho", type=float, default=0.0, help="equicorrelation coefficient")
    p.add_argument("--nu", type=float, default=3.0)
    p.add_argument("--noise", type=float, default=0.1, help="radial noise for circles")
    p.add_argument("--seed", type=_seed, default=0)
    p.add_argument("--split", type=int, help="write columns [:split] to -o, the rest to --output-y")
    p.add_argument("-o", "--output", required=True)
    p.add_argument("--output-y")
    p.set_defaults(func=cmd_sample)

    p = sub.add_parser("estimate", help="estimate an information-theoretic quantity")
    p.add_argument("quantity", choices=sorted(QUANTITY_TOKENS))
    p.add_argument("input")
    p.add_argument("input_y", nargs="?", help="second variable (mi only)")
    p.add_argument("-o", "--output", help="report JSON (default: stdout)")
    p.add_argument("--header", action="store_true")
    _add_fit_options(p)
    p.set_defaults(func=cmd_estimate)

    p = sub.add_parser("benchmark", help="sweep estimation error over synthetic data")
    p.add_argument("--dims", type=_positive_int, nargs="+", default=[3, 10])
    p.add_argument("--nu", nargs="+", default=["gauss", "2", "3", "5"],
                   help="degrees of freedom; 'gauss' selects the Gaussian family")
    p.add_argument("--quantities", nargs="+", choices=list(bench.QUANTITIES),
                   default=list(bench.QUANTITIES))
    p.add_argument("--sample-sizes", type=_positive_int, nargs="+", default=[500, 5000, 50000])
    p.add_argument("--trials", type=_positive_int, default=5)
    p.add_argument("--rho", type=float, default=0.5)
    p.add_argument("-o", "--output", help="report JSON (default: stdout)")
    p.add_argument("--series", help="plot-series CSV")
    p.add_argument("--checkpoint", help="JSON-lines checkpoint (default: OUTPUT.checkpoint.jsonl)")
    p.add_argument("--resume", action="store_true", help="skip rows already in the checkpoint")
    p.add_argument("--large", action="store_true", help=f"allow d >= {bench.LARGE_D}")
    p.add_argument("--quiet", action="store_true")
    _add_fit_options(p)
    p.set_defaults(func=cmd_benchmark)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return exc.code if isinstance(exc.code, int) else EXIT_INPUT
    try:
        return args.func(args)
    except (InputError, VersionMismatch, CorruptModel, OSError) as exc:
        print(f"destructor-it: error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except NumericError as exc:
        print(f"destructor-it: fit failed: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
