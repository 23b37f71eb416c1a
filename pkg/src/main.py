"""
Command line entry point.

    python src/main.py analyze pvalues.csv --method kr-admissible --queries sets.txt
    python src/main.py calibrate --alpha 0.05 --m-list 1,2,10 --samples 100000 --seed 7
    python src/main.py simulate --m1 8 --gamma 4 --reps 10000 --sets 5,10
    python src/main.py verify --scale 8 --trials 100

Exit codes: 0 success, 1 invalid input, 2 counterexample found by verify,
3 file system error, 4 unexpected failure inside a pipeline step (the
RuntimeError raised by handle_errors).
"""

import argparse
import io
import itertools
import json
import logging
import sys
from pathlib import Path
from typing import Iterable, TextIO
import pandas as pd
from calibration import Calibrator
from closed_testing import shortcut_d
from local_tests import load_c_table, load_custom_family
from procedures import build_procedure
from simulation import Table2Simulation
from utils.core import IndexSet, PValueVector, tdg_to_fdp
from utils.errors import CalibrationError, InputFileError
from utils.inputs import AnalysisInput, CalibrationInput, Method, SimulationConfig, VerifyInput, default_threads
from utils.paths import get_data_folder
from verify import ShortcutEvaluator, Verifier


logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_INVALID = 1
EXIT_COUNTEREXAMPLE = 2
EXIT_IO = 3
EXIT_FAILURE = 4

class ArgumentParser(argparse.ArgumentParser):
    """Reports usage errors as invalid input (exit 1) instead of exiting with 2."""

    def error(self, message: str):
        self.print_usage(sys.stderr)
        raise ValueError(message)

def parse_list(text: str, kind: type = int) -> tuple:
    """Parse a comma separated list such as '1,2,10'."""
    try:
        return tuple(kind(item) for item in text.split(",") if item.strip())
    except ValueError as e:
        raise ValueError(f"Cannot parse list '{text}'") from e

def parse_method(text: str) -> tuple[Method, Path | None]:
    """'kr-closed' or 'custom:<file>'."""
    if text.startswith("custom:"):
        return Method.CUSTOM, Path(text.removeprefix("custom:"))
    try:
        return Method(text), None
    except ValueError as e:
        raise ValueError(f"Unknown method '{text}'") from e

def read_pvalues(path: Path) -> PValueVector:
    """
    Read a CSV with header `id,p` holding ids 1..m (any order) and p-values in [0, 1].

    Raises:
        InputFileError: With the offending line number if the file is malformed.
    """
    try:
        frame = pd.read_csv(path, dtype=str, keep_default_na=False)
    except (pd.errors.ParserError, pd.errors.EmptyDataError) as e:
        raise InputFileError(f"{path}: {e}") from e
    if list(frame.columns) != ["id", "p"]:
        raise InputFileError(f"{path}, line 1: expected header 'id,p'")

    values = {}
    for row, (raw_id, raw_p) in enumerate(zip(frame["id"], frame["p"])):
        line = row + 2
        try:
            hypothesis, p = int(raw_id), float(raw_p)
        except ValueError as e:
            raise InputFileError(f"{path}, line {line}: cannot parse '{raw_id},{raw_p}'") from e
        if not 0 <= p <= 1:
            raise InputFileError(f"{path}, line {line}: p-value {raw_p} outside [0, 1]")
        if not 1 <= hypothesis <= len(frame):
            raise InputFileError(f"{path}, line {line}: id {hypothesis} outside 1..{len(frame)}")
        if hypothesis in values:
            raise InputFileError(f"{path}, line {line}: duplicate id {hypothesis}")
        values[hypothesis] = p

    return PValueVector([values[i] for i in range(1, len(values) + 1)])

def parse_query(text: str, line: int, m: int) -> IndexSet:
    """
    Whitespace separated ids; 'a-b' expands to a..b.

    Raises:
        InputFileError: If an id is malformed, unknown or repeated.
    """
    ids = []
    try:
        for token in text.split():
            if "-" in token:
                first, last = (int(part) for part in token.split("-", 1))
                if first > last:
                    raise InputFileError(f"empty range {token}")
                ids.extend(range(first, last + 1))
            else:
                ids.append(int(token))
        unknown = [i for i in ids if not 1 <= i <= m]
        if unknown:
            raise InputFileError(f"unknown id {unknown[0]}")
        return IndexSet.of(ids)
    except ValueError as e:
        raise InputFileError(f"Query line {line}: {e}") from e

def analyze(analysis_input: AnalysisInput, queries: Iterable[str], out: TextIO) -> int:
    """
    Answer every query with a JSON line {set, size, d, fdp_bound}. Shortcut
    methods build their state once and reuse it for all queries.

    Returns:
        int: Number of queries answered.
    """
    p = read_pvalues(analysis_input.pvalue_path)
    c_table = load_c_table(analysis_input.c_table_path) if analysis_input.c_table_path else None
    custom_family = (
        load_custom_family(analysis_input.custom_table_path, analysis_input.alpha)
        if analysis_input.method is Method.CUSTOM else None)
    procedure = build_procedure(analysis_input.method, p, analysis_input.alpha, c_table=c_table, custom_family=custom_family)

    answered = 0
    for line, text in enumerate(queries, start=1):
        S = parse_query(text, line, p.m)
        bound = tdg_to_fdp(procedure, S)
        record = {"set": list(S.members), "size": len(S), "d": procedure.bound(S), "fdp_bound": round(bound.q, 6)}
        out.write(json.dumps(record) + "\n")
        answered += 1

    logger.info("Answered %d queries with %s", answered, analysis_input.method.value)
    return answered

def cmd_analyze(args: argparse.Namespace) -> int:
    method, custom_path = parse_method(args.method)
    analysis_input = AnalysisInput(
        pvalue_path = args.pvalues,
        alpha = args.alpha,
        method = method,
        custom_table_path = custom_path,
        c_table_path = args.c_table,
        query_path = args.queries)

    # --out is only written once every query has been answered
    buffer = io.StringIO()
    if analysis_input.query_path is None:
        analyze(analysis_input, (line.rstrip("\n") for line in sys.stdin), buffer)
    else:
        with open(analysis_input.query_path) as queries:
            analyze(analysis_input, (line.rstrip("\n") for line in queries), buffer)

    if args.out:
        Path(args.out).write_text(buffer.getvalue())
    else:
        sys.stdout.write(buffer.getvalue())
    return EXIT_OK

def cmd_calibrate(args: argparse.Namespace) -> int:
    calibration_input = CalibrationInput(
        alpha = args.alpha,
        m_list = parse_list(args.m_list),
        samples = args.samples,
        seed = args.seed,
        tol = args.tol,
        threads = args.threads)
    output_path = args.out or get_data_folder("calibration") / f"c_table_alpha_{args.alpha}.csv"

    Calibrator(calibration_input, output_path).run(overwrite=True)
    return EXIT_OK

def cmd_simulate(args: argparse.Namespace) -> int:
    c_table = load_c_table(args.c_table) if args.c_table else None
    configs = [
        SimulationConfig(
            m = args.m,
            m1 = m1,
            gamma = gamma,
            reps = args.reps,
            seed = args.seed,
            report_sets = parse_list(args.sets),
            alpha = args.alpha,
            threads = args.threads,
            c_table = c_table)
        for m1, gamma in itertools.product(parse_list(args.m1), parse_list(args.gamma, float))]
    output_folder = args.out or get_data_folder("simulation")

    Table2Simulation(configs, output_folder).run(overwrite=True)
    return EXIT_OK

def cmd_verify(args: argparse.Namespace, shortcut: ShortcutEvaluator = shortcut_d) -> int:
    verify_input = VerifyInput(scale=args.scale, trials=args.trials, seed=args.seed)
    report = Verifier(verify_input, shortcut).run()

    for counterexample in report.counterexamples:
        print(counterexample)
    if not report.passed:
        return EXIT_COUNTEREXAMPLE
    print(f"verify: {report.checks} checks passed over {report.trials} trials")
    return EXIT_OK

def build_parser() -> ArgumentParser:
    parser = ArgumentParser(description="Simultaneous true discovery bounds by closed testing.")
    commands = parser.add_subparsers(dest="command", required=True)

    analyze_parser = commands.add_parser("analyze", help="Bound true discoveries in query sets.")
    analyze_parser.add_argument("pvalues", type=Path, help="CSV file with header id,p.")
    analyze_parser.add_argument("--alpha", type=float, default=0.05)
    analyze_parser.add_argument(
        "--method", default=Method.KR_ADMISSIBLE.value,
        help="kr-original, kr-coherent, kr-closed, kr-admissible, simes-closed or custom:<file>.")
    analyze_parser.add_argument("--queries", type=Path, default=None, help="One set per line; standard input if omitted.")
    analyze_parser.add_argument("--c-table", type=Path, default=None, help="Calibrated c_m table for kr-admissible.")
    analyze_parser.add_argument("--out", type=Path, default=None, help="JSON lines output; standard output if omitted.")
    analyze_parser.set_defaults(handler=cmd_analyze)

    calibrate_parser = commands.add_parser("calibrate", help="Monte Carlo calibration of c_m.")
    calibrate_parser.add_argument("--alpha", type=float, default=0.05)
    calibrate_parser.add_argument("--m-list", default="1,2,3,4,5,7,10,15,20,50,100")
    calibrate_parser.add_argument("--samples", type=int, default=100_000)
    calibrate_parser.add_argument("--seed", type=int, default=7)
    calibrate_parser.add_argument("--tol", type=float, default=1e-4)
    calibrate_parser.add_argument("--threads", type=int, default=default_threads())
    calibrate_parser.add_argument("--out", type=Path, default=None)
    calibrate_parser.set_defaults(handler=cmd_calibrate)

    simulate_parser = commands.add_parser("simulate", help="Simulation study of the KR chain.")
    simulate_parser.add_argument("--m", type=int, default=1000)
    simulate_parser.add_argument("--m1", default="8", help="Comma separated numbers of false nulls.")
    simulate_parser.add_argument("--gamma", default="2", help="Comma separated effect sizes.")
    simulate_parser.add_argument("--reps", type=int, default=10_000)
    simulate_parser.add_argument("--seed", type=int, default=1)
    simulate_parser.add_argument("--sets", default="5,10,20,50,200")
    simulate_parser.add_argument("--alpha", type=float, default=0.05)
    simulate_parser.add_argument("--threads", type=int, default=default_threads())
    simulate_parser.add_argument("--c-table", type=Path, default=None)
    simulate_parser.add_argument("--out", type=Path, default=None, help="Output folder.")
    simulate_parser.set_defaults(handler=cmd_simulate)

    verify_parser = commands.add_parser("verify", help="Randomized property checks at oracle scale.")
    verify_parser.add_argument("--scale", type=int, default=8)
    verify_parser.add_argument("--trials", type=int, default=100)
    verify_parser.add_argument("--seed", type=int, default=0)
    verify_parser.set_defaults(handler=cmd_verify)

    return parser

def main(argv: list[str] | None = None) -> int:
    """Parse arguments, run the command and map failures to exit codes."""
    try:
        args = build_parser().parse_args(argv)
        return args.handler(args)
    except (ValueError, CalibrationError) as e:
        logger.error("%s", e)
        print(f"error: {e}", file=sys.stderr)
        return EXIT_INVALID
    except OSError as e:
        logger.error("%s", e)
        print(f"error: {e}", file=sys.stderr)
        return EXIT_IO
    except RuntimeError as e:
        logger.error("%s", e)
        print(f"error: {e}", file=sys.stderr)
        return EXIT_FAILURE

if __name__ == "__main__":
    sys.exit(main())
