"""
Randomized property suites run by the `verify` command: oracle equivalence
of the shortcut, coherence, monotonicity across scales, idempotence of
interpolation and the ordering of the KR chain.
"""

import logging
from dataclasses import dataclass, field
from typing import Callable
import numpy as np
from scipy.stats import norm
from closed_testing import ClosedTestingOracle, ShortcutState, compute_shortcut_state, shortcut_d, simes_like_suite
from local_tests import CriticalValueFamily, kr_admissible, kr_original, simes
from procedures import (
    MONOTONE_STACK_MAX_SIZE, interpolate, kr_coherent_procedure, kr_original_procedure,
    monotone_stack_violation)
from utils.core import FunctionProcedure, IndexSet, Provenance, PValueVector, TableProcedure
from utils.inputs import VerifyInput
from utils.lattice import SubsetLattice, materialize
from utils.parallel import stream_rng


logger = logging.getLogger(__name__)

VERIFY_ALPHA = 0.05
ShortcutEvaluator = Callable[[ShortcutState, PValueVector, IndexSet], int]

@dataclass(frozen=True)
class Counterexample:
    """A failed property together with the instance that broke it."""
    suite: str
    trial: int
    family: str
    pvalues: tuple[float, ...]
    detail: str

    def __str__(self) -> str:
        values = ", ".join(f"{p:.6g}" for p in self.pvalues)
        return f"[{self.suite}] trial {self.trial}, {self.family}: {self.detail}\n  p = ({values})"

@dataclass
class VerifyReport:
    trials: int
    checks: int = 0
    counterexamples: list[Counterexample] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return not self.counterexamples

def random_instance(scale: int, rng: np.random.Generator) -> PValueVector:
    """
    p-values with a random number of signals at random positions; a quarter
    of the instances are rounded to two decimals to produce ties.
    """
    signals = int(rng.integers(0, scale + 1))
    gamma = rng.uniform(1.0, 4.0)
    values = np.concatenate([norm.cdf(rng.standard_normal(signals) - gamma), rng.random(scale - signals)])
    values = rng.permutation(values)
    if rng.random() < 0.25:
        values = np.round(values, 2)
    return PValueVector(values)

def _families() -> list[CriticalValueFamily]:
    return [simes(VERIFY_ALPHA), kr_original(VERIFY_ALPHA), kr_admissible(VERIFY_ALPHA)]

def _shortcut_table(fam: CriticalValueFamily, p: PValueVector, family: IndexSet, shortcut: ShortcutEvaluator) -> FunctionProcedure:
    state = compute_shortcut_state(fam, p, family)
    return FunctionProcedure(family, lambda S: shortcut(state, p, S), Provenance.CLOSED_TESTING, structure=state)

class Verifier:
    """
    Runs every property suite on `trials` random instances of size `scale`.
    The shortcut evaluator can be replaced to check that the suites catch
    a broken implementation.
    """

    def __init__(self, verify_input: VerifyInput, shortcut: ShortcutEvaluator = shortcut_d) -> None:
        self.verify_input: VerifyInput = verify_input
        self.shortcut: ShortcutEvaluator = shortcut
        self.report = VerifyReport(trials=verify_input.trials)

    def _fail(self, suite: str, trial: int, fam: CriticalValueFamily | None, p: PValueVector, detail: str) -> None:
        name = fam.kind.value if fam is not None else "kr chain"
        example = Counterexample(suite, trial, name, tuple(float(v) for v in p.values), detail)
        logger.error("Counterexample found: %s", example)
        self.report.counterexamples.append(example)

    def oracle_equivalence(self, trial: int, fam: CriticalValueFamily, p: PValueVector) -> None:
        """shortcut d = brute force d = g on every subset."""
        family = p.family()
        oracle = ClosedTestingOracle(simes_like_suite(fam, p), family)
        fast = materialize(_shortcut_table(fam, p, family, self.shortcut), oracle.lattice)
        self.report.checks += 1
        mismatch = np.flatnonzero(fast != oracle.d)
        if len(mismatch):
            S = oracle.lattice.set_of(mismatch[0])
            self._fail("oracle-equivalence", trial, fam, p,
                       f"S={S}: shortcut {fast[mismatch[0]]} vs closed testing {oracle.d[mismatch[0]]}")
            return
        for mask, S in enumerate(oracle.lattice.sets):
            if oracle.g(S) != oracle.d[mask]:
                self._fail("oracle-equivalence", trial, fam, p, f"S={S}: g {oracle.g(S)} vs d {oracle.d[mask]}")
                return

    def coherence(self, trial: int, fam: CriticalValueFamily, p: PValueVector) -> None:
        """The shortcut procedure is coherent."""
        lattice = SubsetLattice(p.family())
        procedure = _shortcut_table(fam, p, p.family(), self.shortcut)
        self.report.checks += 1
        violation = lattice.coherence_violation(materialize(procedure, lattice))
        if violation is not None:
            V, W = (lattice.set_of(mask) for mask in violation)
            self._fail("coherence", trial, fam, p, f"V={V}, W={W}")

    def monotone_stack(self, trial: int, fam: CriticalValueFamily, p: PValueVector) -> None:
        """Shortcut bounds never increase when the family grows."""
        J = IndexSet.full(min(p.m, MONOTONE_STACK_MAX_SIZE))
        self.report.checks += 1
        violation = monotone_stack_violation(lambda I: _shortcut_table(fam, p, I, self.shortcut), J)
        if violation is not None:
            self._fail("monotone-stack", trial, fam, p, "S={}, I={}, J={}".format(*violation))

    def interpolation(self, trial: int, p: PValueVector) -> None:
        """Generic interpolation of KR is idempotent and matches the closed form."""
        original = kr_original_procedure(p, VERIFY_ALPHA)
        generic = interpolate(TableProcedure(original.family, original.table))
        once = materialize(generic)
        self.report.checks += 1
        if not np.array_equal(once, materialize(interpolate(generic))):
            self._fail("interpolation", trial, None, p, "interpolation is not idempotent")
        elif not np.array_equal(once, materialize(kr_coherent_procedure(p, VERIFY_ALPHA))):
            self._fail("interpolation", trial, None, p, "closed form differs from generic interpolation")

    def chain_ordering(self, trial: int, p: PValueVector) -> None:
        """original <= coherent <= closed <= admissible on every subset."""
        family = p.family()
        chain = [
            materialize(kr_original_procedure(p, VERIFY_ALPHA)),
            materialize(kr_coherent_procedure(p, VERIFY_ALPHA)),
            materialize(_shortcut_table(kr_original(VERIFY_ALPHA), p, family, self.shortcut)),
            materialize(_shortcut_table(kr_admissible(VERIFY_ALPHA), p, family, self.shortcut))]
        self.report.checks += 1
        for lower, upper, name in zip(chain, chain[1:], ["original/coherent", "coherent/closed", "closed/admissible"]):
            broken = np.flatnonzero(lower > upper)
            if len(broken):
                self._fail("chain-ordering", trial, None, p, f"{name} at mask {broken[0]}")
                return

    def run(self) -> VerifyReport:
        """Run every suite on every trial and return the report."""
        cfg = self.verify_input
        for trial in range(cfg.trials):
            p = random_instance(cfg.scale, stream_rng(cfg.seed, trial))
            for fam in _families():
                self.oracle_equivalence(trial, fam, p)
                self.coherence(trial, fam, p)
                self.monotone_stack(trial, fam, p)
            self.interpolation(trial, p)
            self.chain_ordering(trial, p)

        logger.info("Verification finished: %d checks, %d counterexamples",
                    self.report.checks, len(self.report.counterexamples))
        return self.report
