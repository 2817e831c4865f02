"""Command-line interface.

Subcommands:

* ``generate --config FILE --out data.csv`` - draw a synthetic dataset
  (optionally contaminated) and write it as CSV.
* ``fit --data data.csv --config FILE --out report.json [--trace]`` - run
  the full estimation pipeline and write the JSON report.
* ``gatekeeper --data data.csv --config FILE`` - print the regime decision
  as JSON.
* ``benchmark --config FILE --out-dir DIR`` - run the Monte Carlo
  comparison grid.

Exit codes: 0 success, 2 configuration error, 3 data error, 4 numeric
failure. All outputs are deterministic given the config and seed.
"""

from __future__ import annotations

import argparse
import json
import sys
from typing import Optional, Sequence

from .benchmark import run_benchmark
from .config_io import (
    load_config,
    parse_benchmark_config,
    parse_generate_config,
    parse_pipeline_config,
)
from .data import contaminate, generate_dataset, load_csv, write_csv
from .errors import ConfigError, DataError, NumericError
from .pipeline import cross_fit, estimate_ato

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DATA = 3
EXIT_NUMERIC = 4


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="robato",
        description="Outlier-robust estimation of the average treatment effect on the overlap.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_gen = sub.add_parser("generate", help="draw a synthetic dataset and write CSV")
    p_gen.add_argument("--config", required=True, help="TOML config file")
    p_gen.add_argument("--out", required=True, help="output CSV path")

    p_fit = sub.add_parser("fit", help="estimate the treatment effect from a CSV")
    p_fit.add_argument("--data", required=True, help="input CSV path")
    p_fit.add_argument("--config", required=True, help="TOML config file")
    p_fit.add_argument("--out", required=True, help="output JSON report path")
    p_fit.add_argument(
        "--trace", action="store_true", help="include the solver trace in the report"
    )

    p_gate = sub.add_parser("gatekeeper", help="print the regime decision as JSON")
    p_gate.add_argument("--data", required=True, help="input CSV path")
    p_gate.add_argument("--config", required=True, help="TOML config file")

    p_bench = sub.add_parser("benchmark", help="run the Monte Carlo comparison grid")
    p_bench.add_argument("--config", required=True, help="TOML config file")
    p_bench.add_argument("--out-dir", required=True, help="output directory")
    return parser


def _cmd_generate(args) -> int:
    dgp, spec = parse_generate_config(load_config(args.config))
    data = generate_dataset(dgp)
    if spec is not None:
        data = contaminate(data, spec)
    write_csv(data, args.out)
    print(f"wrote {data.n} rows x {data.p} covariates to {args.out}")
    return EXIT_OK


def _cmd_fit(args) -> int:
    config = parse_pipeline_config(load_config(args.config))
    data = load_csv(args.data)
    report = estimate_ato(data, config)
    payload = report.to_dict(include_trace=args.trace)
    with open(args.out, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")
    print(
        f"theta_hat={report.theta_hat!r} std_error={report.std_error!r} "
        f"mode={report.gatekeeper.mode.value}"
    )
    return EXIT_OK


def _cmd_gatekeeper(args) -> int:
    config = parse_pipeline_config(load_config(args.config))
    data = load_csv(args.data)
    nuis = cross_fit(data, config)
    decision = nuis.decision.to_dict()
    decision["alpha"] = nuis.decision.alpha
    print(json.dumps(decision, indent=2, sort_keys=True))
    return EXIT_OK


def _cmd_benchmark(args) -> int:
    config = parse_benchmark_config(load_config(args.config))
    report = run_benchmark(config, args.out_dir)
    sys.stdout.write(report.summary)
    return EXIT_OK


_COMMANDS = {
    "generate": _cmd_generate,
    "fit": _cmd_fit,
    "gatekeeper": _cmd_gatekeeper,
    "benchmark": _cmd_benchmark,
}


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return _COMMANDS[args.command](args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except NumericError as exc:
        print(f"numeric error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


def console_main() -> None:
    raise SystemExit(main())


if __name__ == "__main__":
    console_main()
