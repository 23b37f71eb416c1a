"""
Procedure algebra: adapters lifting classical multiple testing outputs into
discovery procedures, the KR chain, interpolation, and checkers for
coherence, monotonicity across scales and uniform improvement.
"""

import logging
from enum import Enum
from pathlib import Path
from typing import Callable, Sequence
import numpy as np
import pandas as pd
from closed_testing import LocalTestSuite, closed_testing_procedure, shortcut_procedure
from local_tests import CriticalValueFamily, kr_admissible, kr_c_constant, kr_original, simes
from utils.core import (
    DiscoveryProcedure, FunctionProcedure, IndexSet, KFwerStructure, KrStructure,
    Provenance, PValueVector, TableProcedure, fdp_to_tdg)
from utils.errors import DomainError, InputFileError, ProcedureError
from utils.inputs import Method
from utils.lattice import SubsetLattice, materialize


logger = logging.getLogger(__name__)

Builder = Callable[[IndexSet], DiscoveryProcedure]
MONOTONE_STACK_MAX_SIZE = 10

class Dominance(Enum):
    """Pointwise comparison of two procedures on the same family."""
    EQUAL = "equal"
    A_DOMINATES = "a-dominates"
    B_DOMINATES = "b-dominates"
    INCOMPARABLE = "incomparable"

def _check_subset(K: IndexSet, I: IndexSet) -> None:
    if not K.issubset(I):
        raise DomainError(f"Set {K} is not contained in the family {I}")

def _single_statement(I: IndexSet, K: IndexSet, value: int, provenance: Provenance, structure: object | None = None) -> TableProcedure:
    _check_subset(K, I)
    table = {K: value} if len(K) and value > 0 else {}
    return TableProcedure(I, table, provenance, structure)

def _statements(I: IndexSet, sets: Sequence[tuple[IndexSet, int]], provenance: Provenance) -> TableProcedure:
    seen = set()
    for K, _ in sets:
        if K in seen:
            raise DomainError(f"Set {K} occurs more than once")
        seen.add(K)
        _check_subset(K, I)
    return TableProcedure(I, {K: value for K, value in sets if len(K) and value > 0}, provenance)

def adapt_kfwer(K: IndexSet, k: int, I: IndexSet) -> TableProcedure:
    """
    k-FWER control on K: at most k - 1 false discoveries, so d(K) = |K| - k + 1.

    Raises:
        DomainError: If k < 1 or K is not contained in I.
    """
    if k < 1:
        raise DomainError(f"k must be >= 1, got {k}")
    return _single_statement(I, K, max(len(K) - k + 1, 0), Provenance.KFWER, KFwerStructure(K, k))

def adapt_fdx(K: IndexSet, gamma: float, I: IndexSet) -> TableProcedure:
    """FDX control at gamma on K: d(K) = ceil((1 - gamma)|K|)."""
    if not 0 <= gamma <= 1:
        raise DomainError(f"gamma must lie in [0, 1], got {gamma}")
    return _single_statement(I, K, fdp_to_tdg(gamma, K), Provenance.FDX)

def adapt_jer(sets: Sequence[tuple[IndexSet, int]], I: IndexSet) -> TableProcedure:
    """
    Joint error rate control over sets K_i with k_i: d(K_i) = |K_i| - k_i + 1.

    Raises:
        DomainError: If some K_i occurs twice or some k_i < 1.
    """
    if any(k < 1 for _, k in sets):
        raise DomainError("Every k_i must be >= 1")
    return _statements(I, [(K, max(len(K) - k + 1, 0)) for K, k in sets], Provenance.JER)

def adapt_intersection_fwer(sets: Sequence[tuple[IndexSet, int]], I: IndexSet) -> TableProcedure:
    """
    FWER control over intersection hypotheses: d(K_i) = k_i with k_i in {0, 1}.

    Raises:
        DomainError: If some K_i occurs twice or some k_i is not a bit.
    """
    if any(k not in (0, 1) for _, k in sets):
        raise DomainError("Intersection rejections must be 0 or 1")
    return _statements(I, list(sets), Provenance.INTERSECTION_FWER)

def adapt_partial_conjunction(delta: int, k: int, I: IndexSet) -> TableProcedure:
    """A test of 'fewer than k false nulls in I': d(I) = delta * k."""
    if delta not in (0, 1):
        raise DomainError("delta must be 0 or 1")
    if not 0 <= k <= len(I):
        raise DomainError(f"k must lie in 0..{len(I)}, got {k}")
    return _single_statement(I, I, delta * k, Provenance.PARTIAL_CONJUNCTION)

def adapt_pi0_interval(u: float, I: IndexSet) -> TableProcedure:
    """Upper confidence limit u for the null proportion of I: d(I) = ceil((1 - u)|I|)."""
    if not 0 <= u <= 1:
        raise DomainError(f"u must lie in [0, 1], got {u}")
    return _single_statement(I, I, fdp_to_tdg(u, I), Provenance.PI0_INTERVAL)

def kr_original_procedure(p: PValueVector, alpha: float, family: IndexSet | None = None) -> TableProcedure:
    """
    KR bounds on the nested sets K_i of the i smallest p-values (ties by id):
    d(K_i) = ceil(i - c(1 + m p_(i))) with m = |I|, zero on every other set.
    """
    family = p.family() if family is None else family
    structure = KrStructure(p=p, family=family, c=kr_c_constant(alpha))
    ordered = p.ordered_ids(family)
    bounds = np.arange(1, len(ordered) + 1) - structure.floors(p.values[ordered - 1])

    table = {
        IndexSet(tuple(sorted(ordered[:i].tolist()))): int(bounds[i - 1])
        for i in np.flatnonzero(bounds > 0) + 1}
    return TableProcedure(family, table, Provenance.KR_ORIGINAL, structure)

def _interpolate_kr(structure: KrStructure) -> FunctionProcedure:
    def rule(S: IndexSet) -> int:
        ordered = structure.p.sorted_of(S)
        values = np.arange(1, len(S) + 1) - structure.floors(ordered)
        return max(0, int(values.max()))

    return FunctionProcedure(structure.family, rule, Provenance.INTERPOLATION, structure)

def _interpolate_kfwer(family: IndexSet, structure: KFwerStructure) -> FunctionProcedure:
    def rule(S: IndexSet) -> int:
        return max(0, len(S.intersection(structure.K)) - structure.k + 1)

    return FunctionProcedure(family, rule, Provenance.INTERPOLATION, structure)

def interpolate(d: DiscoveryProcedure) -> DiscoveryProcedure:
    """
    Interpolation d_bar(S) = max over U subset of I of d(U) - |U \\ S| + d(S \\ U).

    KR and k-FWER procedures use their closed forms at any scale; any other
    procedure is tabulated over the subset lattice.

    Raises:
        OracleScaleError: If d has no closed form and its family is too large.
    """
    if isinstance(d.structure, KrStructure):
        return _interpolate_kr(d.structure)
    if isinstance(d.structure, KFwerStructure):
        return _interpolate_kfwer(d.family, d.structure)

    lattice = SubsetLattice(d.family)
    values = materialize(d, lattice)
    candidates = np.union1d(np.flatnonzero(values), [0])
    interpolated = np.empty_like(values)
    for s in lattice.masks:
        outside = candidates & ~s
        interpolated[s] = (values[candidates] - lattice.popcount[outside] + values[s & ~candidates]).max()
    return lattice.procedure(interpolated, Provenance.INTERPOLATION)

def coherent_closure(d: DiscoveryProcedure, max_rounds: int = 64) -> DiscoveryProcedure:
    """
    Interpolate until nothing changes. One round suffices for KR and k-FWER;
    overlapping statements can need more (d({1,2}) = d({3,4}) = 2 gives
    d_bar({1,3}) = 1 after one round and 2 after the second).

    Raises:
        OracleScaleError: If d has no closed form and its family is too large.
    """
    current = interpolate(d)
    if isinstance(current.structure, (KrStructure, KFwerStructure)):
        return current
    values = materialize(current)
    for _ in range(max_rounds):
        following = interpolate(current)
        following_values = materialize(following)
        if np.array_equal(following_values, values):
            return current
        current, values = following, following_values
    raise ProcedureError(f"Interpolation did not settle within {max_rounds} rounds")

def kr_coherent_procedure(p: PValueVector, alpha: float, family: IndexSet | None = None) -> DiscoveryProcedure:
    """The interpolated KR procedure: 0 or max_k ceil(k - c(1 + m p_(k:S)))."""
    return interpolate(kr_original_procedure(p, alpha, family))

def critical_family(method: Method, alpha: float, c_table: dict[int, float] | None = None, custom_family: CriticalValueFamily | None = None) -> CriticalValueFamily:
    """Threshold family behind a closed testing method."""
    if method is Method.KR_CLOSED:
        return kr_original(alpha)
    if method is Method.KR_ADMISSIBLE:
        return kr_admissible(alpha, c_table)
    if method is Method.SIMES_CLOSED:
        return simes(alpha)
    if method is Method.CUSTOM:
        if custom_family is None:
            raise DomainError("Method custom requires a critical value family")
        return custom_family
    raise DomainError(f"Method {method.value} is not a closed testing method")

def build_procedure(method: Method, p: PValueVector, alpha: float, family: IndexSet | None = None,
                    c_table: dict[int, float] | None = None, custom_family: CriticalValueFamily | None = None) -> DiscoveryProcedure:
    """
    The procedure behind a method name, on `family` (default: all hypotheses).

    Raises:
        DomainError: If alpha is out of range for the method.
        CalibrationRangeError: If an admissible query exceeds the c_m table.
    """
    if method is Method.KR_ORIGINAL:
        return kr_original_procedure(p, alpha, family)
    if method is Method.KR_COHERENT:
        return kr_coherent_procedure(p, alpha, family)
    return shortcut_procedure(critical_family(method, alpha, c_table, custom_family), p, family)

def is_coherent(d: DiscoveryProcedure) -> bool:
    """
    d(V) + d(W) <= d(V | W) <= d(V) + |W| for every disjoint V, W.

    Raises:
        OracleScaleError: If the family is too large to enumerate.
    """
    lattice = SubsetLattice(d.family)
    violation = lattice.coherence_violation(materialize(d, lattice))
    if violation is not None:
        v, w = violation
        logger.debug("Coherence fails at V=%s, W=%s", lattice.set_of(v), lattice.set_of(w))
    return violation is None

def monotone_stack_violation(builder: Builder, J: IndexSet) -> tuple[IndexSet, IndexSet, IndexSet] | None:
    """
    First (S, I, I') with S subset of I subset of I' subset of J and
    builder(I)(S) < builder(I')(S), or None.
    """
    lattice = SubsetLattice(J, MONOTONE_STACK_MAX_SIZE)
    bounds = {}
    for i in lattice.masks[1:]:
        procedure = builder(lattice.set_of(i))
        subsets = lattice.submasks(i)
        bounds[int(i)] = (subsets, np.array([procedure.bound(lattice.set_of(s)) for s in subsets]))

    for i, (subsets, smaller) in bounds.items():
        for wider in lattice.masks[(lattice.masks & i) == i]:
            if wider == i:
                continue
            wider_subsets, larger = bounds[int(wider)]
            larger = larger[np.searchsorted(wider_subsets, subsets)]
            failures = np.flatnonzero(smaller < larger)
            if len(failures):
                s = subsets[failures[0]]
                return lattice.set_of(s), lattice.set_of(i), lattice.set_of(wider)
    return None

def check_monotone_stack(builder: Builder, J: IndexSet) -> bool:
    """
    builder(I).bound(S) >= builder(I').bound(S) for all S subset of I subset of I' subset of J.

    Raises:
        OracleScaleError: If |J| exceeds 10.
    """
    violation = monotone_stack_violation(builder, J)
    if violation is not None:
        logger.debug("Monotonicity fails at S=%s, I=%s, J=%s", *violation)
    return violation is None

def dominates(a: DiscoveryProcedure, b: DiscoveryProcedure) -> Dominance:
    """
    Pointwise comparison of a and b over every subset of their common family.

    Raises:
        DomainError: If the families differ.
    """
    if a.family != b.family:
        raise DomainError("Procedures must share the same family")
    lattice = SubsetLattice(a.family)
    first, second = materialize(a, lattice), materialize(b, lattice)
    higher, lower = bool((first > second).any()), bool((first < second).any())
    if higher and lower:
        return Dominance.INCOMPARABLE
    if higher:
        return Dominance.A_DOMINATES
    if lower:
        return Dominance.B_DOMINATES
    return Dominance.EQUAL

def induce_local_test(builder: Builder, S: IndexSet) -> int:
    """phi_S = 1{d^S(S) > 0}, the local test a monotone procedure implies."""
    if not len(S):
        return 0
    return int(builder(S).bound(S) > 0)

def induced_suite(builder: Builder, description: str = "induced") -> LocalTestSuite:
    """The suite of induced local tests of a monotone procedure."""
    return LocalTestSuite(lambda S: induce_local_test(builder, S), description)

def procedure_suite(d: DiscoveryProcedure) -> LocalTestSuite:
    """phi_S = 1{d(S) > 0} for S in the family of d, zero elsewhere."""
    return induced_suite(trivial_embedding(d), f"from {d.provenance.value}")

def trivial_embedding(d: DiscoveryProcedure) -> Builder:
    """
    Embed a local procedure in a monotone one: d^J(S) = d(S) if S is
    contained in the family of d, otherwise 0.
    """
    def builder(J: IndexSet) -> FunctionProcedure:
        return FunctionProcedure(
            J, lambda S: d.bound(S) if S.issubset(d.family) else 0, Provenance.EMBEDDING)

    return builder

def closed_from_suite(suite: LocalTestSuite) -> Builder:
    """Monotone closed testing stack of a fixed suite, one oracle per family."""
    return lambda I: closed_testing_procedure(suite, I)

def write_table(d: TableProcedure, path: Path) -> None:
    """
    Write the nonzero entries of an extensional procedure as two columns:
    space separated ids and the bound.
    """
    frame = pd.DataFrame({
        "set": [" ".join(map(str, S)) for S in d.table],
        "bound": list(d.table.values())})
    frame.to_csv(path, index=False)
    logger.info("Wrote %d nonzero bounds to %s", len(frame), path)

def read_table(path: Path, family: IndexSet) -> TableProcedure:
    """
    Read a procedure written by `write_table`; absent sets have bound 0.

    Raises:
        InputFileError: If a record cannot be parsed.
    """
    frame = pd.read_csv(path, dtype={"set": str}, keep_default_na=False)
    if list(frame.columns) != ["set", "bound"]:
        raise InputFileError(f"Procedure table {path} needs the columns set,bound")
    table = {}
    for row, (ids, bound) in enumerate(zip(frame["set"], frame["bound"])):
        try:
            table[IndexSet.of(ids.split())] = int(bound)
        except ValueError as e:
            raise InputFileError(f"Procedure table {path}, line {row + 2}: {e}") from e
    return TableProcedure(family, table, Provenance.CUSTOM)
