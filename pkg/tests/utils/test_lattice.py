import pytest
import numpy as np
from utils.core import IndexSet, Provenance, TableProcedure
from utils.errors import DomainError, OracleScaleError
from utils.lattice import SubsetLattice, materialize


"""
Tests for utils.lattice

Class tested: SubsetLattice(family)
- Maps every subset of a small family to an integer mask
- Tabulates procedures and checks coherence and additivity over disjoint pairs

Test categories:
- Normal cases: mask/set conversion on a non-contiguous family, popcounts
- Edge/error cases:
    * family beyond the size limit
    * set outside the family
    * empty family
"""

@pytest.fixture
def lattice():
    return SubsetLattice(IndexSet.of([2, 5, 9]))

def test_mask_and_set_conversion(lattice):
    """
    Verify:
    - bit b stands for the b-th smallest id
    - mask_of and set_of are inverse to each other
    """
    assert lattice.mask_of(IndexSet.of([2, 9])) == 0b101
    assert lattice.set_of(0b110) == IndexSet.of([5, 9])
    for mask in lattice.masks:
        assert lattice.mask_of(lattice.set_of(mask)) == mask

def test_popcount_and_submasks(lattice):
    assert list(lattice.popcount) == [0, 1, 1, 2, 1, 2, 2, 3]
    assert sorted(lattice.submasks(0b101).tolist()) == [0, 1, 4, 5]

def test_mask_of_rejects_foreign_ids(lattice):
    with pytest.raises(DomainError, match="not contained in the family"):
        lattice.mask_of(IndexSet.of([3]))

def test_size_limit():
    """
    Test that a family beyond the limit raises OracleScaleError mentioning oracle scale.
    """
    with pytest.raises(OracleScaleError, match="Oracle scale only"):
        SubsetLattice(IndexSet.full(21))
    with pytest.raises(OracleScaleError, match="exceeds the limit of 4"):
        SubsetLattice(IndexSet.full(5), limit=4)

def test_disjoint_pairs_cover_all_ordered_pairs():
    """
    Verify the number of ordered disjoint pairs is 3^n.
    """
    lattice = SubsetLattice(IndexSet.full(4))
    assert sum(len(ws) for _, ws in lattice.disjoint_pairs()) == 3 ** 4
    for v, ws in lattice.disjoint_pairs():
        assert not np.any(ws & v)

def test_coherence_violation_detected():
    """
    d({1}) = 1, d({2}) = 0, d({1,2}) = 0 breaks d(V) + d(W) <= d(V | W).
    """
    family = IndexSet.full(2)
    lattice = SubsetLattice(family)
    values = materialize(TableProcedure(family, {IndexSet.of([1]): 1}), lattice)
    assert lattice.coherence_violation(values) is not None

def test_additive_projection_is_coherent():
    """
    r(S) = |S & R| is additive and coherent.
    """
    family = IndexSet.full(4)
    lattice = SubsetLattice(family)
    rejected = lattice.mask_of(IndexSet.of([1, 3]))
    values = lattice.popcount[lattice.masks & rejected]
    assert lattice.is_additive(values)
    assert lattice.coherence_violation(values) is None

def test_procedure_round_trip(lattice):
    """
    Verify lattice.procedure keeps nonzero entries only and materialize restores the array.
    """
    values = np.zeros(8, dtype=np.int64)
    values[0b111] = 2
    values[0b001] = 1
    d = lattice.procedure(values, Provenance.CLOSED_TESTING)
    assert len(d.table) == 2
    assert d.provenance is Provenance.CLOSED_TESTING
    assert np.array_equal(materialize(d, lattice), values)

def test_empty_family():
    lattice = SubsetLattice(IndexSet())
    assert list(lattice.masks) == [0]
    assert lattice.sets == [IndexSet()]
