"""
Monte Carlo calibration of the admissible KR constants c_m and empirical
size checks of Simes-like local tests under independent uniform p-values.

Run as a script to regenerate the c_m table at alpha = 0.05.
"""

import logging
import math
from dataclasses import asdict, dataclass
from pathlib import Path
import numpy as np
import pandas as pd
from local_tests import CriticalValueFamily, analytic_c_values, kr_c_constant, thresholds
from utils.errors import CalibrationError, DomainError, handle_errors
from utils.inputs import CalibrationInput, calibration_input
from utils.parallel import RNG_NAME, apply_pool, stream_rng
from utils.paths import get_data_folder, process_step


logger = logging.getLogger(__name__)

BATCH_ROWS = 10_000
TABLE_COLUMNS = ["m", "c_m", "se", "samples", "seed", "alpha", "rng"]

def _batches(samples: int) -> list[tuple[int, int]]:
    """(batch index, rows) covering `samples` rows in fixed-size batches."""
    full, rest = divmod(samples, BATCH_ROWS)
    sizes = [BATCH_ROWS] * full + ([rest] if rest else [])
    return list(enumerate(sizes))

def _sorted_uniforms(seed: int, m: int, batch: int, rows: int) -> np.ndarray:
    return np.sort(stream_rng(seed, m, batch).random((rows, m)), axis=1)

def _batch_rejections(task: tuple) -> int:
    fam, m, seed, batch, rows = task
    uniforms = _sorted_uniforms(seed, m, batch, rows)
    return int(np.any(uniforms <= thresholds(fam, m, m), axis=1).sum())

def _batch_kr_statistics(task: tuple) -> np.ndarray:
    m, seed, batch, rows = task
    uniforms = _sorted_uniforms(seed, m, batch, rows)
    return (np.arange(1, m + 1) / (1 + m * uniforms)).max(axis=1)

def estimate_size(fam: CriticalValueFamily, m: int, samples: int, seed: int, threads: int = 1) -> float:
    """
    Fraction of independent uniform p-vectors of length m on which the local
    test of `fam` rejects. Deterministic given (m, samples, seed).

    Raises:
        DomainError: If samples < 1 or m < 1.
    """
    if samples < 1 or m < 1:
        raise DomainError("estimate_size needs samples >= 1 and m >= 1")
    tasks = [(fam, m, seed, batch, rows) for batch, rows in _batches(samples)]
    return sum(apply_pool(_batch_rejections, tasks, threads)) / samples

def size_standard_error(size: float, samples: int) -> float:
    """Binomial standard error of a Monte Carlo size estimate."""
    return math.sqrt(size * (1 - size) / samples)

def exhaustion_gap(fam: CriticalValueFamily, m: int, samples: int, seed: int, threads: int = 1) -> float:
    """
    alpha minus the estimated size; a gap clearly above 0 marks a local test
    that does not exhaust its level and can be improved.
    """
    return fam.alpha - estimate_size(fam, m, samples, seed, threads)

def kr_statistics(m: int, samples: int, seed: int, threads: int = 1) -> np.ndarray:
    """
    Per sample, the largest c for which the KR test with constant c rejects:
    max_i i / (1 + m u_(i)). The test rejects iff c <= this value.
    """
    tasks = [(m, seed, batch, rows) for batch, rows in _batches(samples)]
    return np.concatenate(apply_pool(_batch_kr_statistics, tasks, threads))

@dataclass(frozen=True)
class CalibrationResult:
    """Calibrated c_m with its Monte Carlo standard error."""
    alpha: float
    m: int
    c_m: float
    standard_error: float
    samples: int
    seed: int

    def as_row(self) -> dict:
        row = asdict(self)
        row["se"] = row.pop("standard_error")
        row["rng"] = RNG_NAME
        return {column: row[column] for column in TABLE_COLUMNS}

def calibrate_cm(alpha: float, m: int, samples: int = 100_000, seed: int = 7, tol: float = 1e-4, threads: int = 1) -> CalibrationResult:
    """
    Smallest c in [c_1, c] (to within tol) whose KR local test on m independent
    uniforms has estimated size <= alpha.

    One sample set is shared by every bisection step, so the estimated size
    is exactly nonincreasing in c.

    Raises:
        DomainError: If alpha, m or tol is out of range.
        CalibrationError: If even the KR constant c exceeds the level.
    """
    if m < 1:
        raise DomainError(f"Family size m must be >= 1, got {m}")
    if tol <= 0:
        raise DomainError("tol must be positive")
    upper = kr_c_constant(alpha)
    lower = analytic_c_values(alpha)[1]

    statistics = kr_statistics(m, samples, seed, threads)

    def size(c: float) -> float:
        return float(np.mean(statistics >= c))

    if size(upper) > alpha:
        raise CalibrationError(
            f"Estimated size {size(upper):.5f} exceeds alpha={alpha} over the whole interval "
            f"[{lower:.6f}, {upper:.6f}] for m={m}")

    if size(lower) <= alpha:
        c_m = lower
    else:
        while upper - lower > tol:
            middle = (lower + upper) / 2
            if size(middle) <= alpha:
                upper = middle
            else:
                lower = middle
        c_m = upper

    spread = math.sqrt(alpha * (1 - alpha) / samples)
    low_q, high_q = np.quantile(statistics, np.clip([1 - alpha - spread, 1 - alpha + spread], 0, 1))
    standard_error = float(high_q - low_q) / 2

    logger.info("Calibration finished for m=%d: c_m=%.4f (se %.4f)", m, c_m, standard_error)
    return CalibrationResult(alpha=alpha, m=m, c_m=c_m, standard_error=standard_error, samples=samples, seed=seed)

def calibrate_table(alpha: float, m_list: tuple[int, ...], samples: int = 100_000, seed: int = 7, tol: float = 1e-4, threads: int = 1) -> list[CalibrationResult]:
    """
    Calibrate c_m for every m in m_list. The table is made nondecreasing in m
    by raising any value below its predecessor, which keeps every entry valid.
    """
    results = []
    for m in sorted(set(m_list)):
        result = calibrate_cm(alpha, m, samples, seed, tol, threads)
        if results and result.c_m < results[-1].c_m:
            logger.info("Raising c_m for m=%d from %.4f to %.4f", m, result.c_m, results[-1].c_m)
            result = CalibrationResult(alpha, m, results[-1].c_m, result.standard_error, samples, seed)
        results.append(result)
    return results

def results_frame(results: list[CalibrationResult]) -> pd.DataFrame:
    return pd.DataFrame([result.as_row() for result in results], columns=TABLE_COLUMNS)

class Calibrator:
    """
    Calibration pipeline: computes the c_m table and writes it as CSV with
    columns m, c_m, se, samples, seed, alpha, rng.
    """

    def __init__(self, calibration_input: CalibrationInput, output_path: Path) -> None:
        """
        Args:
            calibration_input (CalibrationInput): alpha, family sizes and Monte Carlo settings.
            output_path (Path): CSV file the table is written to.
        """
        self.calibration_input: CalibrationInput = calibration_input
        self.output_path: Path = output_path
        self.results: list[CalibrationResult] = []

    @handle_errors
    def calibrate(self) -> None:
        """Run the Monte Carlo calibration for every requested m."""
        cfg = self.calibration_input
        self.results = calibrate_table(cfg.alpha, cfg.m_list, cfg.samples, cfg.seed, cfg.tol, cfg.threads)

    @handle_errors
    def write_table(self) -> None:
        """Write the calibrated table to the output CSV."""
        results_frame(self.results).to_csv(self.output_path, index=False)
        logger.info("Calibration table written: %s", self.output_path)

    def _calibrate_and_write(self) -> None:
        self.calibrate()
        self.write_table()

    def run(self, overwrite: bool = False) -> Path:
        """Calibrate and write the table, skipping the work if the file exists."""
        process_step(self.output_path, self._calibrate_and_write, "Calibration table", overwrite)
        return self.output_path

if __name__ == "__main__":
    calibration_input = calibration_input()
    output_path = get_data_folder("calibration") / f"c_table_alpha_{calibration_input.alpha}.csv"

    calibrator = Calibrator(calibration_input, output_path)
    calibrator.run(overwrite=False)
