"""
Domain types shared by every module: p-value vectors, index sets of
hypotheses, discovery procedures and FDP bounds, together with the
conversions between FDP bounds and true discovery guarantees.
"""

import logging
import math
from abc import ABC, abstractmethod
from dataclasses import dataclass, field
from enum import Enum
from types import MappingProxyType
from typing import Callable, Iterable, Iterator, Mapping
import numpy as np
from utils.errors import DomainError, ProcedureError


logger = logging.getLogger(__name__)

CEIL_TOLERANCE = 1e-9

def ceil_int(x: float) -> int:
    """
    Integer ceiling that ignores floating point noise just above an integer,
    so that e.g. (1 - 0.3) * 10 rounds up to 7 and not 8.
    """
    return int(math.ceil(x - CEIL_TOLERANCE))

@dataclass(frozen=True)
class IndexSet:
    """
    A finite set of 1-based hypothesis ids, stored as a strictly increasing tuple.
    """
    members: tuple[int, ...] = ()
    _lookup: frozenset = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        """Validate members immediately after object creation."""
        members = tuple(int(i) for i in self.members)
        if any(i < 1 for i in members):
            raise DomainError("Hypothesis ids must be positive integers")
        if any(a >= b for a, b in zip(members, members[1:])):
            raise DomainError("Index set members must be strictly increasing")
        object.__setattr__(self, "members", members)
        object.__setattr__(self, "_lookup", frozenset(members))

    @classmethod
    def of(cls, ids: Iterable[int]) -> "IndexSet":
        """
        Build an index set from ids in any order.

        Raises:
            DomainError: If an id occurs more than once.
        """
        ids = [int(i) for i in ids]
        if len(set(ids)) != len(ids):
            raise DomainError(f"Duplicate hypothesis ids in {sorted(ids)}")
        return cls(tuple(sorted(ids)))

    @classmethod
    def full(cls, m: int) -> "IndexSet":
        """The family {1, ..., m}."""
        return cls(tuple(range(1, m + 1)))

    def __len__(self) -> int:
        return len(self.members)

    def __iter__(self) -> Iterator[int]:
        return iter(self.members)

    def __contains__(self, i: object) -> bool:
        return i in self._lookup

    @property
    def ids(self) -> np.ndarray:
        """Members as an integer array."""
        return np.asarray(self.members, dtype=np.int64)

    def issubset(self, other: "IndexSet") -> bool:
        return self._lookup <= other._lookup

    def union(self, other: "IndexSet") -> "IndexSet":
        return IndexSet(tuple(sorted(self._lookup | other._lookup)))

    def intersection(self, other: "IndexSet") -> "IndexSet":
        return IndexSet(tuple(sorted(self._lookup & other._lookup)))

    def difference(self, other: "IndexSet") -> "IndexSet":
        return IndexSet(tuple(i for i in self.members if i not in other._lookup))

    def __str__(self) -> str:
        return "{" + ",".join(str(i) for i in self.members) + "}"

@dataclass(frozen=True, eq=False)
class PValueVector:
    """
    Observed p-values p_1..p_m; position k of `values` holds hypothesis id k+1.
    """
    values: np.ndarray

    def __post_init__(self):
        """Validate and freeze the p-values."""
        values = np.array(self.values, dtype=float).ravel()
        if np.isnan(values).any():
            raise DomainError("p-values must not be NaN")
        if ((values < 0) | (values > 1)).any():
            raise DomainError("p-values must lie in [0, 1]")
        values.setflags(write=False)
        object.__setattr__(self, "values", values)

    @property
    def m(self) -> int:
        return len(self.values)

    def family(self) -> IndexSet:
        return IndexSet.full(self.m)

    def check_family(self, S: IndexSet) -> None:
        """
        Raises:
            DomainError: If S holds ids outside 1..m.
        """
        if len(S) and S.members[-1] > self.m:
            raise DomainError(f"Index set {S} contains ids outside 1..{self.m}")

    def of(self, S: IndexSet) -> np.ndarray:
        """p-values of the members of S, in id order."""
        self.check_family(S)
        return self.values[S.ids - 1]

    def sorted_of(self, S: IndexSet) -> np.ndarray:
        """p-values of S in increasing order (p_(1:S), ..., p_(|S|:S))."""
        return np.sort(self.of(S), kind="stable")

    def ordered_ids(self, S: IndexSet | None = None) -> np.ndarray:
        """Ids of S ordered by increasing p-value, ties broken by id."""
        S = self.family() if S is None else S
        order = np.argsort(self.of(S), kind="stable")
        return S.ids[order]

@dataclass(frozen=True)
class FdpBound:
    """Upper confidence bound q on the false discovery proportion of a set."""
    set: IndexSet
    q: float

class Provenance(Enum):
    """Which construction produced a discovery procedure."""
    KFWER = "k-FWER"
    FDX = "FDX"
    JER = "JER"
    INTERSECTION_FWER = "intersection-FWER"
    PARTIAL_CONJUNCTION = "partial-conjunction"
    PI0_INTERVAL = "pi0-interval"
    KR_ORIGINAL = "kr-original"
    INTERPOLATION = "interpolation"
    CLOSED_TESTING = "closed-testing"
    FWER_PROJECTION = "fwer-projection"
    EMBEDDING = "embedding"
    CUSTOM = "custom"

@dataclass(frozen=True, eq=False)
class KrStructure:
    """Nested KR sets on `family`: the data the closed form interpolation needs."""
    p: PValueVector
    family: IndexSet
    c: float

    @property
    def m(self) -> int:
        return len(self.family)

    def floors(self, values: np.ndarray) -> np.ndarray:
        """floor(c (1 + m p)) for every p in `values`."""
        return np.floor(self.c * (1 + self.m * np.asarray(values, dtype=float)))

@dataclass(frozen=True)
class KFwerStructure:
    """A single k-FWER statement on K."""
    K: IndexSet
    k: int

class DiscoveryProcedure(ABC):
    """
    A queryable map S -> d(S) of simultaneous lower bounds on the number of
    true discoveries in every subset S of `family`.

    Every query is checked against 0 <= d(S) <= |S| and d(empty) = 0.
    The optional `structure` carries construction data that lets operators
    use a closed form instead of exponential enumeration.
    """
    def __init__(self, family: IndexSet, provenance: Provenance, structure: object | None = None) -> None:
        self.family: IndexSet = family
        self.provenance: Provenance = provenance
        self.structure = structure

    @abstractmethod
    def _evaluate(self, S: IndexSet) -> int:
        """Bound for a nonempty S within the family."""

    def bound(self, S: IndexSet) -> int:
        """
        Return d(S).

        Raises:
            DomainError: If S is not a subset of the family.
            ProcedureError: If the underlying rule leaves [0, |S|].
        """
        if not S.issubset(self.family):
            raise DomainError(f"Set {S} is not contained in the family")
        if not len(S):
            return 0
        value = int(self._evaluate(S))
        if not 0 <= value <= len(S):
            raise ProcedureError(f"Bound {value} for {S} lies outside [0, {len(S)}]")
        return value

    def __call__(self, S: IndexSet) -> int:
        return self.bound(S)

class TableProcedure(DiscoveryProcedure):
    """
    Extensional procedure: an explicit table of nonzero bounds; sets absent
    from the table have bound 0. Non-integer entries are ceiled here.
    """
    def __init__(self, family: IndexSet, table: Mapping[IndexSet, float], provenance: Provenance = Provenance.CUSTOM, structure: object | None = None) -> None:
        super().__init__(family, provenance, structure)
        entries = {}
        for S, value in table.items():
            if not S.issubset(family):
                raise DomainError(f"Table entry {S} is not contained in the family")
            bound = ceil_int(value)
            if not 0 <= bound <= len(S):
                raise ProcedureError(f"Bound {bound} for {S} lies outside [0, {len(S)}]")
            if bound > 0:
                entries[S] = bound
        self.table: Mapping[IndexSet, int] = MappingProxyType(entries)

    def _evaluate(self, S: IndexSet) -> int:
        return self.table.get(S, 0)

class FunctionProcedure(DiscoveryProcedure):
    """
    Intensional procedure: bounds are computed on demand by `rule`.
    """
    def __init__(self, family: IndexSet, rule: Callable[[IndexSet], int], provenance: Provenance = Provenance.CUSTOM, structure: object | None = None) -> None:
        super().__init__(family, provenance, structure)
        self.rule = rule

    def _evaluate(self, S: IndexSet) -> int:
        return self.rule(S)

def zero_procedure(family: IndexSet, provenance: Provenance = Provenance.CUSTOM) -> TableProcedure:
    """The procedure that makes no statement: d(S) = 0 everywhere."""
    return TableProcedure(family, {}, provenance)

def tdg_to_fdp(d: DiscoveryProcedure, S: IndexSet) -> FdpBound:
    """
    Convert a true discovery bound into an FDP bound:
    q(S) = (|S| - d(S)) / max(|S|, 1).

    Raises:
        DomainError: If S is not contained in the family of d.
    """
    bound = d.bound(S)
    q = (len(S) - bound) / max(len(S), 1)
    return FdpBound(set=S, q=q)

def fdp_to_tdg(q: float, S: IndexSet) -> int:
    """
    Convert an FDP bound into a true discovery bound:
    d(S) = ceil((1 - q) |S|), clamped to [0, |S|].

    Raises:
        DomainError: If q lies outside [0, 1].
    """
    if not 0 <= q <= 1:
        raise DomainError(f"FDP bound q must lie in [0, 1], got {q}")
    return min(max(ceil_int((1 - q) * len(S)), 0), len(S))
