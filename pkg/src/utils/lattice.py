"""
Bitmask view of the power set of a small hypothesis family.

Bit b of a mask stands for the b-th smallest id of the family, so subset
tests, unions and differences are single integer operations. Used by every
exponential (oracle scale) computation in the package.
"""

import logging
from functools import cached_property
from typing import Callable, Iterator
import numpy as np
from utils.core import DiscoveryProcedure, IndexSet, Provenance, TableProcedure
from utils.errors import DomainError, OracleScaleError


logger = logging.getLogger(__name__)

ORACLE_MAX_SIZE = 20
ORACLE_RECOMMENDED_SIZE = 12

class SubsetLattice:
    """All subsets of `family` as integer masks 0 .. 2^|family| - 1."""

    def __init__(self, family: IndexSet, limit: int = ORACLE_MAX_SIZE) -> None:
        """
        Args:
            family (IndexSet): The ambient family I.
            limit (int): Largest family size accepted.

        Raises:
            OracleScaleError: If |family| exceeds the limit.
        """
        if len(family) > limit:
            raise OracleScaleError(
                f"Oracle scale only: family of size {len(family)} exceeds the limit of {limit}")
        if len(family) > ORACLE_RECOMMENDED_SIZE:
            logger.info("Enumerating 2^%d subsets; this may be slow", len(family))
        self.family: IndexSet = family
        self.size: int = len(family)
        self.masks: np.ndarray = np.arange(1 << self.size, dtype=np.int64)
        self.full_mask: int = (1 << self.size) - 1
        self._bit = {hypothesis: b for b, hypothesis in enumerate(family)}

    @cached_property
    def popcount(self) -> np.ndarray:
        """Number of members of every mask."""
        counts = np.zeros(len(self.masks), dtype=np.int64)
        for b in range(self.size):
            counts += (self.masks >> b) & 1
        return counts

    @cached_property
    def sets(self) -> list[IndexSet]:
        """Every subset, indexed by its mask."""
        members = self.family.members
        return [
            IndexSet(tuple(members[b] for b in range(self.size) if mask >> b & 1))
            for mask in range(1 << self.size)]

    def mask_of(self, S: IndexSet) -> int:
        """
        Raises:
            DomainError: If S is not a subset of the family.
        """
        try:
            return sum(1 << self._bit[i] for i in S)
        except KeyError as e:
            raise DomainError(f"Set {S} is not contained in the family") from e

    def set_of(self, mask: int) -> IndexSet:
        return self.sets[int(mask)]

    def submasks(self, mask: int) -> np.ndarray:
        """All masks contained in `mask`."""
        return self.masks[(self.masks & ~mask) == 0]

    def tabulate(self, rule: Callable[[IndexSet], int]) -> np.ndarray:
        """Evaluate `rule` on every subset, indexed by mask."""
        return np.array([rule(S) for S in self.sets], dtype=np.int64)

    def disjoint_pairs(self) -> Iterator[tuple[int, np.ndarray]]:
        """
        Yield (V, Ws) where Ws holds every mask disjoint from V; together
        these cover all ordered disjoint pairs (V, W).
        """
        for v in range(1 << self.size):
            yield v, self.masks[(self.masks & v) == 0]

    def coherence_violation(self, values: np.ndarray) -> tuple[int, int] | None:
        """
        First disjoint pair (V, W) breaking d(V) + d(W) <= d(V | W) <= d(V) + |W|,
        or None if the mask-indexed bounds are coherent.
        """
        for v, ws in self.disjoint_pairs():
            joint = values[v | ws]
            bad = (values[v] + values[ws] > joint) | (joint > values[v] + self.popcount[ws])
            if bad.any():
                return v, int(ws[np.argmax(bad)])
        return None

    def is_additive(self, values: np.ndarray) -> bool:
        """d(V | W) == d(V) + d(W) for every disjoint pair."""
        return all(
            np.array_equal(values[v | ws], values[v] + values[ws])
            for v, ws in self.disjoint_pairs())

    def procedure(self, values: np.ndarray, provenance: Provenance = Provenance.CUSTOM, structure: object | None = None) -> TableProcedure:
        """Wrap a mask-indexed array of bounds as an extensional procedure."""
        table = {self.sets[mask]: int(values[mask]) for mask in np.flatnonzero(values)}
        return TableProcedure(self.family, table, provenance, structure)

def materialize(d: DiscoveryProcedure, lattice: SubsetLattice | None = None) -> np.ndarray:
    """
    Bounds of d on every subset of its family, indexed by mask.

    Raises:
        OracleScaleError: If the family is too large to enumerate.
    """
    lattice = lattice or SubsetLattice(d.family)
    return lattice.tabulate(d.bound)
