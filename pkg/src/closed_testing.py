"""
Closed testing: the exhaustive oracle over the subset lattice, effective
local tests, the h_I shortcut for Simes-like suites, FWER rejections,
consonance and the FWER projection.

The oracle enumerates 2^|I| subsets and is meant for |I| <= 12 or so
(hard limit 20). The shortcut answers queries at any scale in
O(|S| log |S|) once its state is built in O(|I|^2).
"""

import logging
from dataclasses import dataclass
from functools import cached_property
from typing import Callable
import numpy as np
from local_tests import AlphaSchedule, CriticalValueFamily, local_test, thresholds
from utils.core import (
    DiscoveryProcedure, FunctionProcedure, IndexSet, KFwerStructure,
    Provenance, PValueVector, TableProcedure)
from utils.errors import DomainError, ProcedureError
from utils.lattice import ORACLE_MAX_SIZE, SubsetLattice, materialize


logger = logging.getLogger(__name__)

@dataclass(frozen=True)
class LocalTestSuite:
    """
    The local tests phi_S as a function of S. The empty set is never rejected.
    """
    test: Callable[[IndexSet], int]
    description: str = ""

    def __call__(self, S: IndexSet) -> int:
        if not len(S):
            return 0
        return int(self.test(S))

def simes_like_suite(fam: CriticalValueFamily, p: PValueVector) -> LocalTestSuite:
    """Local tests phi_S = 1{p_(i:S) <= l_{i:|S|} for some i}."""
    return LocalTestSuite(lambda S: local_test(fam, p, S), f"{fam.kind.value} (alpha={fam.alpha})")

def bonferroni_suite(p: PValueVector, alpha: float) -> LocalTestSuite:
    """Local tests phi_S = 1{min p_S <= alpha/|S|}; closed testing gives Holm."""
    return LocalTestSuite(lambda S: int(p.of(S).min() <= alpha / len(S)), f"bonferroni (alpha={alpha})")

def fixed_sequence_suite(p: PValueVector, alpha: float, family: IndexSet, schedule: AlphaSchedule | None = None) -> LocalTestSuite:
    """
    Fixed-sequence local tests testing the family in id order.

    Without a schedule: phi_S = 1{p_min(S) <= alpha}. With a schedule, the
    locally improved test psi_S = 1{p_i <= alpha_rank(i) for all i in I with
    i <= min(S)}, where rank(i) is the position of i in the family.

    Raises:
        DomainError: If the schedule has fewer levels than the family.
    """
    if schedule is None:
        return LocalTestSuite(lambda S: int(p.values[S.members[0] - 1] <= alpha), f"fixed sequence (alpha={alpha})")
    if len(schedule.levels) < len(family):
        raise DomainError(f"Schedule has {len(schedule.levels)} levels for a family of size {len(family)}")

    levels = np.asarray(schedule.levels[:len(family)])
    clears = p.of(family) <= levels

    def test(S: IndexSet) -> int:
        leading = np.searchsorted(family.ids, S.members[0], side="right")
        return int(clears[:leading].all())

    return LocalTestSuite(test, f"improved fixed sequence (alpha={alpha})")

class ClosedTestingOracle:
    """
    Exhaustive closed testing on a small family. Tabulates phi, the effective
    tests phi^I and the bounds d over the whole subset lattice.
    """

    def __init__(self, suite: LocalTestSuite, family: IndexSet, limit: int = ORACLE_MAX_SIZE) -> None:
        """
        Raises:
            OracleScaleError: If the family is too large to enumerate.
        """
        self.suite = suite
        self.lattice = SubsetLattice(family, limit)
        self.raw: np.ndarray = self.lattice.tabulate(suite)

    @cached_property
    def effective(self) -> np.ndarray:
        """phi^I_S = min over supersets U of S within I of phi_U."""
        effective = self.raw.copy()
        masks = self.lattice.masks
        for b in range(self.lattice.size):
            bit = 1 << b
            below = masks[(masks & bit) == 0]
            effective[below] = np.minimum(effective[below], effective[below | bit])
        return effective

    @cached_property
    def d(self) -> np.ndarray:
        """d(S) = |S| - max{|U| : U subset of S, phi^I_U = 0}."""
        largest = np.where(self.effective == 0, self.lattice.popcount, -1)
        masks = self.lattice.masks
        for b in range(self.lattice.size):
            bit = 1 << b
            above = masks[(masks & bit) != 0]
            largest[above] = np.maximum(largest[above], largest[above ^ bit])
        return self.lattice.popcount - largest

    def g(self, S: IndexSet) -> int:
        """g(S) = min{|S \\ V| : V subset of I, phi_V = 0}."""
        s = self.lattice.mask_of(S)
        accepted = self.lattice.masks[self.raw == 0]
        return len(S) - int(self.lattice.popcount[accepted & s].max())

    def procedure(self) -> TableProcedure:
        return self.lattice.procedure(self.d, Provenance.CLOSED_TESTING, structure=self.suite)

def _check_within(S: IndexSet, I: IndexSet) -> None:
    if not S.issubset(I):
        raise DomainError(f"Set {S} is not contained in the family {I}")

def effective_local_test(suite: LocalTestSuite, I: IndexSet, S: IndexSet) -> int:
    """
    phi^I_S = min{phi_U : S subset of U subset of I}.

    Raises:
        DomainError: If S is not contained in I.
        OracleScaleError: If I is too large to enumerate.
    """
    _check_within(S, I)
    if not len(S):
        return 0
    lattice = SubsetLattice(I)
    s = lattice.mask_of(S)
    supersets = lattice.masks[(lattice.masks & s) == s]
    return int(min(suite(lattice.set_of(u)) for u in supersets))

def brute_force_d(suite: LocalTestSuite, I: IndexSet, S: IndexSet) -> int:
    """
    Closed testing bound d^I(S) = min{|S \\ U| : U subset of S, phi^I_U = 0}.

    Raises:
        DomainError: If S is not contained in I.
        OracleScaleError: If I is too large to enumerate.
    """
    _check_within(S, I)
    oracle = ClosedTestingOracle(suite, I)
    return int(oracle.d[oracle.lattice.mask_of(S)])

def brute_force_g(suite: LocalTestSuite, I: IndexSet, S: IndexSet) -> int:
    """
    g^I(S) = min{|S \\ V| : V subset of I, phi_V = 0}, computed from the raw
    local tests without forming effective tests.
    """
    _check_within(S, I)
    return ClosedTestingOracle(suite, I).g(S)

def closed_testing_procedure(suite: LocalTestSuite, family: IndexSet) -> TableProcedure:
    """The closed testing procedure of `suite` on `family`, tabulated exhaustively."""
    return ClosedTestingOracle(suite, family).procedure()

@dataclass(frozen=True, eq=False)
class ShortcutState:
    """
    Sorted p-values of the family and h_I, the largest n for which the n
    largest p-values all exceed their thresholds l_{i:n}.
    """
    sorted_p: np.ndarray
    h: int
    fam: CriticalValueFamily
    family: IndexSet

def compute_shortcut_state(fam: CriticalValueFamily, p: PValueVector, family: IndexSet | None = None) -> ShortcutState:
    """
    Build the shortcut state for closed testing with the Simes-like suite of
    `fam` on `family` (default: all hypotheses of p).

    h = max{n : p_(|I|-n+i:I) > l_{i:n} for i = 1..n}; n = 0 always qualifies.
    """
    family = p.family() if family is None else family
    sorted_p = p.sorted_of(family)
    size = len(sorted_p)

    h = 0
    for n in range(size, 0, -1):
        if np.all(sorted_p[size - n:] > thresholds(fam, n, n)):
            h = n
            break

    logger.debug("Shortcut state for |I|=%d: h=%d", size, h)
    return ShortcutState(sorted_p=sorted_p, h=h, fam=fam, family=family)

def shortcut_d(state: ShortcutState, p: PValueVector, S: IndexSet) -> int:
    """
    d^I(S) = max over u = 1..|S| of 1 - u + |{i in S : p_i <= l_{u:h}}|,
    clamped below at 0.

    Raises:
        DomainError: If S is not contained in the state's family.
    """
    _check_within(S, state.family)
    if not len(S):
        return 0
    ordered = p.sorted_of(S)
    levels = thresholds(state.fam, state.h, len(S))
    counts = np.searchsorted(ordered, levels, side="right")
    u = np.arange(1, len(S) + 1)
    return max(0, int((1 - u + counts).max()))

def shortcut_d_reference(state: ShortcutState, p: PValueVector, S: IndexSet) -> int:
    """Direct O(|S|^2) evaluation of the shortcut formula."""
    _check_within(S, state.family)
    values = p.of(S)
    levels = thresholds(state.fam, state.h, len(S))
    best = 0
    for u in range(1, len(S) + 1):
        count = sum(1 for value in values if value <= levels[u - 1])
        best = max(best, 1 - u + count)
    return best

def shortcut_procedure(fam: CriticalValueFamily, p: PValueVector, family: IndexSet | None = None) -> FunctionProcedure:
    """Closed testing with the Simes-like suite of `fam`, answered through the shortcut."""
    state = compute_shortcut_state(fam, p, family)
    return FunctionProcedure(state.family, lambda S: shortcut_d(state, p, S), Provenance.CLOSED_TESTING, structure=state)

def fwer_rejections(d: DiscoveryProcedure) -> IndexSet:
    """R = {i in family : d({i}) = 1}."""
    return IndexSet(tuple(i for i in d.family if d.bound(IndexSet((i,))) == 1))

def is_additive(d: DiscoveryProcedure) -> bool:
    """
    d(V | W) = d(V) + d(W) for every disjoint pair V, W.

    Raises:
        OracleScaleError: If the family is too large to enumerate.
    """
    lattice = SubsetLattice(d.family)
    return lattice.is_additive(materialize(d, lattice))

def is_consonant(d: DiscoveryProcedure) -> bool:
    """
    Every S with d(S) > 0 contains some i with d({i}) = 1. For coherent d the
    answer is cross-checked against additivity.

    Raises:
        OracleScaleError: If the family is too large to enumerate.
        ProcedureError: If a coherent d is consonant but not additive or
            the other way round.
    """
    lattice = SubsetLattice(d.family)
    values = materialize(d, lattice)
    singles = 1 << np.arange(lattice.size, dtype=np.int64)
    rejected = int(np.bitwise_or.reduce(singles[values[singles] == 1], initial=0))
    positive = lattice.masks[values > 0]
    consonant = bool(np.all(positive & rejected))

    if lattice.coherence_violation(values) is None and consonant != lattice.is_additive(values):
        raise ProcedureError("Consonance and additivity disagree on a coherent procedure")
    return consonant

def fwer_projection(d: DiscoveryProcedure) -> FunctionProcedure:
    """r(S) = |S & R| with R the FWER rejections of d."""
    rejected = fwer_rejections(d)
    return FunctionProcedure(
        d.family, lambda S: len(S.intersection(rejected)), Provenance.FWER_PROJECTION,
        structure=KFwerStructure(rejected, 1))
