"""softread command-line interface."""
import argparse
import logging
import sys

from .config import CALIBRATION_HEADER, ESTIMATION_HEADER, REPETITION_HEADER
from .display import format_rows, write_rows
from .estimation import UninformativeReadoutError
from .experiment import RUNNERS, ConfigError, ExperimentConfig
from .numerics import NumericalError
from .readout import ReadoutFormatError

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERICAL = 3

# Experiments that only make sense for the peak-signal readout
PEAK_ONLY = ("calibrate", "tabulate")

HEADERS = {
    "repetition": REPETITION_HEADER,
    "estimation": ESTIMATION_HEADER,
    "calibrate": CALIBRATION_HEADER,
    "tabulate": CALIBRATION_HEADER,
}

EPILOG = """\
Examples:
  softread repetition --snr 2 --seed 1                 Table of error rates, n = 1..9
  softread repetition --eta 0.01 --trials 10000000 --seed 7 --workers 0
  softread estimation --snr-grid 0.25,1,4,16 --s0 0 --seed 3 --format json
  softread calibrate --readout peak-signal --snr 2 --seed 5 --out peak_r2.json
  softread tabulate --readout peak-signal --meas-time 6 --bin-time 0.4 --seed 5 --out t.json

Peak-signal times are in units of the mean turn-on time <t_i>.
Exit codes: 0 success, 2 configuration error, 3 numerical failure.
"""


def float_list(text: str) -> list[float]:
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="softread",
        description="softread - soft vs thresholded decoding of qubit readout",
        epilog=EPILOG,
        formatter_class=argparse.RawDescriptionHelpFormatter,
    )
    parser.add_argument("experiment", choices=list(RUNNERS), help="Experiment to run")
    parser.add_argument("--config", type=str, default=None, metavar="PATH",
                        help="JSON experiment config; flags override its keys")
    parser.add_argument("--readout", type=str, default=None,
                        choices=["gaussian", "peak-signal", "tabulated-file"],
                        help="Readout model (default: gaussian, or peak-signal for "
                             "calibrate and tabulate)")
    parser.add_argument("--snr", type=float, default=None, help="Signal-to-noise ratio r")
    parser.add_argument("--snr-grid", type=float_list, default=None, metavar="LIST",
                        help="SNR sweep for estimation, e.g. 0.25,1,4")
    parser.add_argument("--eta", type=float, default=None, help="Encoding bit-flip probability")
    parser.add_argument("--n-min", type=int, default=None, help="Smallest code size")
    parser.add_argument("--n-max", type=int, default=None, help="Largest code size")
    parser.add_argument("--trials", type=int, default=None, help="Monte Carlo trials per cell")
    parser.add_argument("--records", type=int, default=None, help="Records per MSE estimate")
    parser.add_argument("--n-per-record", type=int, default=None, help="Qubits per record")
    parser.add_argument("--s0", type=float_list, default=None, metavar="LIST",
                        help="Expectation values, e.g. -0.5,0,0.5")
    parser.add_argument("--seed", type=int, default=None, help="64-bit seed (required)")
    parser.add_argument("--workers", type=int, default=None,
                        help="Worker processes, 0 for one per CPU (default: 1)")
    parser.add_argument("--out", type=str, default=None, metavar="PATH",
                        help="Output file (stdout if omitted for tables)")
    parser.add_argument("--format", type=str, default=None, choices=["csv", "json"],
                        help="Table format (default: csv)")
    parser.add_argument("--tabulated", type=str, default=None, metavar="PATH",
                        help="Tabulation JSON for --readout tabulated-file")
    parser.add_argument("--n-samples", type=int, default=None,
                        help="Samples per state when tabulating")
    parser.add_argument("--grid-size", type=int, default=None, help="Histogram bins")
    parser.add_argument("--meas-time", type=float, default=None, help="tau_M for tabulate")
    parser.add_argument("--bin-time", type=float, default=None, help="tau_b for tabulate")
    parser.add_argument("--duration-ratio", type=float, default=None,
                        help="<t_f - t_i> / <t_i> (default: 4)")
    parser.add_argument("-v", "--verbose", action="store_true", help="Debug logging")
    return parser


def config_from_args(args: argparse.Namespace) -> ExperimentConfig:
    config = ExperimentConfig.load(args.config) if args.config else ExperimentConfig()
    readout = args.readout
    if readout is None and args.experiment in PEAK_ONLY:
        readout = "peak-signal"
    return config.with_overrides(
        experiment=args.experiment,
        readout=readout,
        snr=args.snr,
        snr_grid=args.snr_grid,
        eta=args.eta,
        n_min=args.n_min,
        n_max=args.n_max,
        trials=args.trials,
        records=args.records,
        n_per_record=args.n_per_record,
        s0_grid=args.s0,
        seed=args.seed,
        workers=args.workers,
        output_path=args.out,
        format=args.format,
        tabulated_path=args.tabulated,
        n_samples=args.n_samples,
        grid_size=args.grid_size,
        meas_time=args.meas_time,
        bin_time=args.bin_time,
        duration_ratio=args.duration_ratio,
    )


def main(argv=None) -> int:
    """Main entry point for the softread command."""
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.INFO,
        format="%(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )

    try:
        config = config_from_args(args).check()
        rows = RUNNERS[config.experiment](config)
    except (ConfigError, ReadoutFormatError) as e:
        print(f"Error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except (NumericalError, UninformativeReadoutError) as e:
        print(f"Error: {e}", file=sys.stderr)
        return EXIT_NUMERICAL

    header = HEADERS[config.experiment]
    if config.experiment in PEAK_ONLY:
        # Tabulation and report were written by the runner
        print(format_rows(rows, header, config.format), end="")
    else:
        write_rows(rows, header, config.format, config.output_path or None)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
