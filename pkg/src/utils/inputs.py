"""
Provides the user-defined configuration for analysis, calibration,
simulation and verification runs. Defines the method choices, one
dataclass per workflow, and functions constructing the default
configurations used when a pipeline module is run as a script.
"""

import logging
import os
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path


logging.basicConfig(
    level=logging.INFO,
    format="%(asctime)s [%(levelname)s] %(message)s"
)
logger = logging.getLogger(__name__)

KR_ALPHA_MAX = 0.31
ORACLE_VERIFY_MAX_SCALE = 12

class Method(Enum):
    """Available discovery procedures."""
    KR_ORIGINAL = "kr-original"
    KR_COHERENT = "kr-coherent"
    KR_CLOSED = "kr-closed"
    KR_ADMISSIBLE = "kr-admissible"
    SIMES_CLOSED = "simes-closed"
    CUSTOM = "custom"

    @property
    def short_name(self) -> str:
        """Label used in simulation tables (e.g. 'admissible')."""
        return self.value.removeprefix("kr-")

    @classmethod
    def from_short_name(cls, name: str) -> "Method":
        for method in cls:
            if method.short_name == name or method.value == name:
                return method
        raise ValueError(f"Unknown method: {name}")

KR_CHAIN = (Method.KR_ORIGINAL, Method.KR_COHERENT, Method.KR_CLOSED, Method.KR_ADMISSIBLE)

def default_threads() -> int:
    """Use all cores by default."""
    return os.cpu_count() or 1

@dataclass
class AnalysisInput:
    """Parameters of a post hoc analysis run on an observed p-value file."""
    pvalue_path: Path
    alpha: float = 0.05
    method: Method = Method.KR_ADMISSIBLE
    custom_table_path: Path | None = None
    c_table_path: Path | None = None
    query_path: Path | None = None

    def __post_init__(self):
        """Validate input values immediately after object creation."""
        if self.pvalue_path is None:
            raise ValueError("Missing p-value input file")
        if not 0 < self.alpha < 1:
            raise ValueError("alpha must lie in (0, 1)")
        if self.method is Method.CUSTOM and self.custom_table_path is None:
            raise ValueError("Method custom requires a critical value table file")
        if self.method in KR_CHAIN and self.alpha > KR_ALPHA_MAX:
            raise ValueError(f"KR methods require alpha <= {KR_ALPHA_MAX}")

@dataclass
class CalibrationInput:
    """Parameters of a Monte Carlo calibration of the admissible KR constants."""
    alpha: float = 0.05
    m_list: tuple[int, ...] = (1, 2, 3, 4, 5, 7, 10, 15, 20, 50, 100)
    samples: int = 100_000
    seed: int = 7
    tol: float = 1e-4
    threads: int = 1

    def __post_init__(self):
        """Validate input values immediately after object creation."""
        if not 0 < self.alpha <= KR_ALPHA_MAX:
            raise ValueError(f"alpha must lie in (0, {KR_ALPHA_MAX}]")
        if not self.m_list:
            raise ValueError("At least one family size m is required")
        if any(m < 1 for m in self.m_list):
            raise ValueError("Family sizes m must be >= 1")
        if self.samples < 1:
            raise ValueError("samples must be >= 1")
        if self.tol <= 0:
            raise ValueError("tol must be positive")
        if self.threads < 1:
            raise ValueError("threads must be >= 1")

@dataclass
class SimulationConfig:
    """Parameters of one cell of the KR-chain simulation study."""
    m: int = 1000
    m1: int = 8
    gamma: float = 2.0
    reps: int = 10_000
    seed: int = 1
    report_sets: tuple[int, ...] = (5, 10, 20, 50, 200)
    methods: tuple[Method, ...] = KR_CHAIN
    alpha: float = 0.05
    threads: int = 1
    c_table: dict[int, float] | None = field(default=None, repr=False)

    def __post_init__(self):
        """Validate input values immediately after object creation."""
        if self.m < 1:
            raise ValueError("Family size m must be >= 1")
        if not 0 <= self.m1 <= self.m:
            raise ValueError("Number of false nulls m1 must lie in [0, m]")
        if self.reps < 1:
            raise ValueError("reps must be >= 1")
        if not self.report_sets:
            raise ValueError("At least one report set K_i is required")
        if any(not 1 <= i <= self.m for i in self.report_sets):
            raise ValueError("Report sets must lie in 1..m")
        if not self.methods:
            raise ValueError("At least one method is required")
        if any(method not in KR_CHAIN for method in self.methods):
            raise ValueError("Simulation methods must be KR chain methods")
        if not 0 < self.alpha <= KR_ALPHA_MAX:
            raise ValueError(f"alpha must lie in (0, {KR_ALPHA_MAX}]")
        if self.threads < 1:
            raise ValueError("threads must be >= 1")

@dataclass
class VerifyInput:
    """Parameters of a randomized run of the oracle property suites."""
    scale: int = 8
    trials: int = 100
    seed: int = 0

    def __post_init__(self):
        """Validate input values immediately after object creation."""
        if not 1 <= self.scale <= ORACLE_VERIFY_MAX_SCALE:
            raise ValueError(f"Verification scale must lie in 1..{ORACLE_VERIFY_MAX_SCALE}")
        if self.trials < 1:
            raise ValueError("trials must be >= 1")

def calibration_input() -> CalibrationInput:
    """
    Build and return the CalibrationInput reproducing the tabulated c_m values.
    """
    # USER INPUT:
    # alpha, family sizes, Monte Carlo samples, seed
    alpha = 0.05
    m_list = (1, 2, 3, 4, 5, 7, 10, 15, 20, 50, 100)
    samples = 100_000
    seed = 7

    logger.info("Calibration input created: alpha=%s, %d sizes", alpha, len(m_list))

    return CalibrationInput(
        alpha = alpha,
        m_list = m_list,
        samples = samples,
        seed = seed,
        threads = default_threads()
        )

def simulation_input() -> list[SimulationConfig]:
    """
    Build and return the simulation cells of the KR-chain study.
    """
    # USER INPUT:
    # (m1, gamma) grid, replicates, seed
    cells = [(8, 2.0), (8, 3.0), (8, 4.0), (40, 2.0), (40, 3.0), (40, 4.0), (200, 1.0), (200, 2.0), (200, 3.0)]
    reps = 10_000
    seed = 1

    logger.info("Simulation input created: %d cells, %d replicates each", len(cells), reps)

    return [
        SimulationConfig(
            m1 = m1,
            gamma = gamma,
            reps = reps,
            seed = seed,
            threads = default_threads())
        for m1, gamma in cells]
