"""Command-line interface.

Exit codes: 0 success, 1 usage error, 2 data error, 3 numerical failure.
Logs go to stderr; results go to files.
"""

from __future__ import annotations

import argparse
import logging
import sys

import numpy as np

from ilsurrogate import pipeline
from ilsurrogate.data import (
    DEFAULT_NOISE_SD,
    DESIGN_COLUMNS,
    DesignParams,
    SplitSpec,
    group_curves,
    load_csv,
    parse_frequency_grid,
)
from ilsurrogate.deeponet import POSITIVITY_MODES
from ilsurrogate.errors import DataError, NumericalError, TrainingDivergence
from ilsurrogate.evaluation import frequency_profile
from ilsurrogate.nn import TrainConfig
from ilsurrogate.polynomial import FIT_METHODS
from ilsurrogate.surrogate import METHODS, load_model

log = logging.getLogger("ilsurrogate")

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 1, 2, 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _grid(text):
    try:
        return parse_frequency_grid(text)
    except ValueError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from None


def _add_design_flags(p):
    for col in DESIGN_COLUMNS:
        flag = "--" + col.removesuffix("_mm").replace("_", "-")
        p.add_argument(flag, dest=col, type=float, required=True, help=col)


def _design_from(args) -> DesignParams:
    return DesignParams.from_array([getattr(args, c) for c in DESIGN_COLUMNS])


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="ilsurrogate", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("gen-data", help="write a synthetic dataset CSV")
    p.add_argument("--designs", type=int, required=True)
    p.add_argument("--freqs", type=_grid, required=True, help="start:stop:count in GHz, inclusive")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--noise-sd", type=float, default=DEFAULT_NOISE_SD, help="label noise, dB")
    p.add_argument("-o", "--output", required=True)

    p = sub.add_parser("train", help="train nn, pdnn or pdeeponet")
    p.add_argument("data")
    p.add_argument("--method", choices=METHODS, required=True)
    p.add_argument("--lambda", dest="lambda_penalty", type=float, default=1.0, help="penalty weight (pdnn)")
    p.add_argument("--epochs", type=int, help="default 200 (2000 for pdeeponet)")
    p.add_argument("--lr", type=float, default=1e-3)
    p.add_argument("--batch", type=int, default=128)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--split-seed", type=int, default=0)
    p.add_argument("--split-fraction", type=float, default=0.8)
    p.add_argument("--fit", choices=FIT_METHODS, default="nnls")
    p.add_argument("--positivity", choices=POSITIVITY_MODES, default="softplus_head")
    p.add_argument("-o", "--output", required=True)

    p = sub.add_parser("evaluate", help="score a model on its test split")
    p.add_argument("data")
    p.add_argument("--model", required=True)
    p.add_argument("--scaler", help="scaler JSON to check against the model's")
    p.add_argument("-o", "--output", required=True)

    p = sub.add_parser("compare", help="join report JSON files into one table")
    p.add_argument("reports", nargs="+")
    p.add_argument("-o", "--output", default="comparison", help="prefix for .txt/.csv/.json")

    p = sub.add_parser("predict", help="predict insertion loss for one design")
    p.add_argument("--model", required=True)
    _add_design_flags(p)
    group = p.add_mutually_exclusive_group(required=True)
    group.add_argument("--frequency", type=float)
    group.add_argument("--freqs", type=_grid)
    p.add_argument("-o", "--output", help="CSV file; printed to stdout when omitted")

    p = sub.add_parser("fit-poly", help="per-curve cubic fits to a coefficient CSV")
    p.add_argument("data")
    p.add_argument("--method", choices=FIT_METHODS, default="nnls")
    p.add_argument("-o", "--output", default="coefficients.csv")

    p = sub.add_parser("profile", help="per-frequency prediction/violation CSV for one design")
    p.add_argument("--model", required=True)
    _add_design_flags(p)
    p.add_argument("--freqs", type=_grid, required=True)
    p.add_argument("--truth", help="dataset CSV to take this design's ground-truth sweep from")
    p.add_argument("-o", "--output", required=True)

    p = sub.add_parser("bench", help="run the seeded three-method benchmark")
    p.add_argument("--workdir", default="bench")
    return parser


def _cmd_gen_data(args):
    pipeline.gen_data(args.output, args.designs, args.freqs, args.seed, args.noise_sd)


def _cmd_train(args):
    epochs = args.epochs if args.epochs is not None else pipeline.DEFAULT_EPOCHS[args.method]
    try:
        config = TrainConfig(
            learning_rate=args.lr,
            epochs=epochs,
            batch_size=args.batch,
            seed=args.seed,
            lambda_penalty=args.lambda_penalty if args.method == "pdnn" else 0.0,
        )
        split_spec = SplitSpec(args.split_fraction, args.split_seed)
    except (ValueError, DataError) as exc:
        raise UsageError(str(exc)) from None
    pipeline.train_model(args.data, args.output, args.method, config, split_spec, args.fit, args.positivity)


def _cmd_evaluate(args):
    report = pipeline.evaluate_model(args.model, args.data, args.output, args.scaler)
    log.info("test mse %.6g, %d negative prediction(s)", report.test_mse, report.n_negative)


def _cmd_compare(args):
    comparison = pipeline.compare_reports(args.reports, args.output)
    sys.stderr.write(comparison.text)


def _cmd_predict(args):
    model = load_model(args.model)
    design = _design_from(args)
    freqs = np.array([args.frequency]) if args.frequency is not None else args.freqs
    if np.any(freqs < 0):
        raise UsageError("frequency must be >= 0")
    rows = np.column_stack([np.tile(design.as_array(), (len(freqs), 1)), freqs])
    il = model.predict_rows(rows)
    lines = ["frequency_ghz,insertion_loss_db"] + [f"{f!r},{v!r}" for f, v in zip(freqs.tolist(), il.tolist())]
    if args.output:
        with open(args.output, "w", encoding="utf-8") as fh:
            fh.write("\n".join(lines) + "\n")
    elif len(freqs) == 1:
        print(repr(float(il[0])))
    else:
        print("\n".join(lines))


def _cmd_fit_poly(args):
    result = pipeline.fit_poly(args.data, args.method, args.output)
    log.info("%d curve(s) fitted, max residual %.4g dB", len(result.fits), result.max_epsilon)


def _cmd_profile(args):
    model = load_model(args.model)
    design = _design_from(args)
    truth = None
    if args.truth:
        groups, _ = group_curves(load_csv(args.truth))
        matches = [g for g in groups if g.params == design]
        if not matches:
            raise DataError(f"design not found in {args.truth}")
        truth = matches[0]
    with open(args.output, "w", encoding="utf-8") as fh:
        fh.write(frequency_profile(model, design, args.freqs, truth))


def _cmd_bench(args):
    result = pipeline.run_benchmark(args.workdir)
    sys.stderr.write(result["comparison"].text)


COMMANDS = {
    "gen-data": _cmd_gen_data,
    "train": _cmd_train,
    "evaluate": _cmd_evaluate,
    "compare": _cmd_compare,
    "predict": _cmd_predict,
    "fit-poly": _cmd_fit_poly,
    "profile": _cmd_profile,
    "bench": _cmd_bench,
}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.INFO,
        format="%(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )
    try:
        COMMANDS[args.command](args)
    except UsageError as exc:
        log.error("%s", exc)
        return EXIT_USAGE
    except TrainingDivergence as exc:
        where = f" (epoch {exc.epoch})" if exc.epoch is not None else ""
        log.error("training diverged%s: %s", where, exc)
        return EXIT_NUMERIC
    except NumericalError as exc:
        log.error("numerical failure: %s", exc)
        return EXIT_NUMERIC
    except DataError as exc:
        log.error("data error: %s", exc)
        return EXIT_DATA
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
