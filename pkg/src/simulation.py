"""
Simulation study of the KR chain (original, coherent, closed, admissible).

Each replicate draws m p-values with the first m1 hypotheses false,
p_i = Phi(Z_i - gamma) for false nulls and uniform otherwise, forms the sets
K_i of the i smallest p-values, and evaluates every method on them.
Replicates are split into chunks with their own random streams, so results
do not depend on the number of processes.
"""

import logging
from dataclasses import dataclass
from pathlib import Path
import numpy as np
import pandas as pd
from scipy.stats import norm
from procedures import build_procedure
from utils.core import IndexSet, PValueVector
from utils.errors import handle_errors
from utils.inputs import KR_CHAIN, SimulationConfig, simulation_input
from utils.parallel import RNG_NAME, apply_pool, stream_rng
from utils.paths import get_data_folder, process_step


logger = logging.getLogger(__name__)

CHUNK_REPS = 250

@dataclass(frozen=True)
class TruthAssignment:
    """The false null hypotheses of a simulated family."""
    false_ids: IndexSet

    def true_discoveries(self, S: IndexSet) -> int:
        """|S & false_ids|, the number of true discoveries in S."""
        return len(S.intersection(self.false_ids))

def generate_pvalues(cfg: SimulationConfig, rep: int) -> tuple[PValueVector, TruthAssignment]:
    """
    p-values of replicate `rep`: ids 1..m1 are false nulls with
    p = Phi(Z - gamma), the rest are uniform. Deterministic given (seed, rep).
    """
    rng = stream_rng(cfg.seed, rep)
    signal = norm.cdf(rng.standard_normal(cfg.m1) - cfg.gamma)
    noise = rng.random(cfg.m - cfg.m1)
    return PValueVector(np.concatenate([signal, noise])), TruthAssignment(IndexSet.full(cfg.m1))

def report_sets(p: PValueVector, sizes: tuple[int, ...]) -> list[IndexSet]:
    """K_i, the ids of the i smallest p-values (ties by id), for each i in sizes."""
    ordered = p.ordered_ids()
    return [IndexSet(tuple(sorted(ordered[:i].tolist()))) for i in sizes]

def replicate_bounds(cfg: SimulationConfig, rep: int) -> tuple[np.ndarray, np.ndarray]:
    """
    Bounds of every method (rows) on every report set (columns) for one
    replicate, together with the true discovery counts of the report sets.
    """
    p, truth = generate_pvalues(cfg, rep)
    sets = report_sets(p, cfg.report_sets)
    bounds = np.empty((len(cfg.methods), len(sets)), dtype=np.int64)
    for row, method in enumerate(cfg.methods):
        procedure = build_procedure(method, p, cfg.alpha, c_table=cfg.c_table)
        bounds[row] = [procedure.bound(K) for K in sets]
    return bounds, np.array([truth.true_discoveries(K) for K in sets])

def _chain_rows(cfg: SimulationConfig) -> list[int]:
    """Rows of cfg.methods in chain order."""
    return [cfg.methods.index(method) for method in KR_CHAIN if method in cfg.methods]

def _run_chunk(task: tuple[SimulationConfig, int, int]) -> tuple[np.ndarray, np.ndarray, int]:
    cfg, start, stop = task
    chain = _chain_rows(cfg)
    totals = np.zeros((len(cfg.methods), len(cfg.report_sets)), dtype=np.int64)
    violations = np.zeros(len(cfg.methods), dtype=np.int64)
    chain_violations = 0
    for rep in range(start, stop):
        bounds, truth = replicate_bounds(cfg, rep)
        totals += bounds
        violations += (bounds > truth).any(axis=1)
        ordered = bounds[chain]
        if (np.diff(ordered, axis=0) < 0).any():
            chain_violations += 1
            logger.warning("Chain ordering fails in replicate %d: %s", rep, ordered.tolist())
    return totals, violations, chain_violations

@dataclass(frozen=True)
class Table2Result:
    """Averages of d(K_i), violation rates and chain ordering failures of one cell."""
    config: SimulationConfig
    averages: pd.DataFrame
    violation_rates: pd.Series
    chain_violations: int

    @property
    def label(self) -> str:
        return f"m1={self.config.m1},gamma={self.config.gamma:g}"

def run_table2(cfg: SimulationConfig) -> Table2Result:
    """
    Run all replicates of one simulation cell.

    Returns:
        Table2Result: averages indexed by report set (rows) and method
        (columns), per-method fraction of replicates in which some bound
        exceeded the true discoveries, and the number of replicates breaking
        original <= coherent <= closed <= admissible.
    """
    tasks = [(cfg, start, min(start + CHUNK_REPS, cfg.reps)) for start in range(0, cfg.reps, CHUNK_REPS)]
    outputs = apply_pool(_run_chunk, tasks, cfg.threads)

    totals = sum(output[0] for output in outputs)
    violations = sum(output[1] for output in outputs)
    chain_violations = sum(output[2] for output in outputs)

    methods = [method.short_name for method in cfg.methods]
    averages = pd.DataFrame((totals / cfg.reps).T, index=[f"K_{i}" for i in cfg.report_sets], columns=methods)
    rates = pd.Series(violations / cfg.reps, index=methods)

    logger.info("Simulation cell m1=%d, gamma=%g finished: %d replicates, %d chain violations",
                cfg.m1, cfg.gamma, cfg.reps, chain_violations)
    return Table2Result(config=cfg, averages=averages, violation_rates=rates, chain_violations=chain_violations)

def table2_frame(results: list[Table2Result]) -> pd.DataFrame:
    """Rows (set, method), one column per simulation cell."""
    columns = {}
    for result in results:
        columns[result.label] = result.averages.stack()
    frame = pd.DataFrame(columns)
    frame.index.names = ["set", "method"]
    return frame

def violations_frame(results: list[Table2Result]) -> pd.DataFrame:
    """One row per (cell, method) with the violation rate and run metadata."""
    rows = []
    for result in results:
        cfg = result.config
        for method, rate in result.violation_rates.items():
            rows.append({
                "cell": result.label, "method": method, "violation_rate": rate,
                "se": float(np.sqrt(rate * (1 - rate) / cfg.reps)),
                "chain_violations": result.chain_violations,
                "reps": cfg.reps, "seed": cfg.seed, "alpha": cfg.alpha, "rng": RNG_NAME})
    return pd.DataFrame(rows)

class Table2Simulation:
    """
    Simulation pipeline: runs every cell and writes the averages table and
    the violations table as CSV.
    """

    def __init__(self, configs: list[SimulationConfig], output_folder: Path) -> None:
        """
        Args:
            configs (list[SimulationConfig]): One configuration per (m1, gamma) cell.
            output_folder (Path): Folder receiving table2.csv and violations.csv.
        """
        self.configs: list[SimulationConfig] = configs
        self.output_folder: Path = output_folder
        self.results: list[Table2Result] = []

    @property
    def table_path(self) -> Path:
        return self.output_folder / "table2.csv"

    @property
    def violations_path(self) -> Path:
        return self.output_folder / "violations.csv"

    @handle_errors
    def simulate(self) -> None:
        """Run every configured cell."""
        self.results = [run_table2(cfg) for cfg in self.configs]

    @handle_errors
    def write_tables(self) -> None:
        """Write the averages and violations tables."""
        self.output_folder.mkdir(parents=True, exist_ok=True)
        table2_frame(self.results).to_csv(self.table_path)
        violations_frame(self.results).to_csv(self.violations_path, index=False)
        logger.info("Simulation tables written: %s, %s", self.table_path, self.violations_path)

    def _simulate_and_write(self) -> None:
        self.simulate()
        self.write_tables()

    def run(self, overwrite: bool = False) -> Path:
        """Simulate and write, skipping the work if the table already exists."""
        process_step(self.table_path, self._simulate_and_write, "Simulation table", overwrite)
        return self.table_path

if __name__ == "__main__":
    configs = simulation_input()
    output_folder = get_data_folder("simulation")

    simulation = Table2Simulation(configs, output_folder)
    simulation.run(overwrite=False)
