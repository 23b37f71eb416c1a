import pytest
import numpy as np
from closed_testing import closed_testing_procedure, simes_like_suite
from local_tests import kr_admissible, local_test, simes
from procedures import (
    Dominance,
    adapt_fdx,
    adapt_intersection_fwer,
    adapt_jer,
    adapt_kfwer,
    adapt_partial_conjunction,
    adapt_pi0_interval,
    build_procedure,
    check_monotone_stack,
    coherent_closure,
    closed_from_suite,
    critical_family,
    dominates,
    induce_local_test,
    induced_suite,
    interpolate,
    is_coherent,
    kr_coherent_procedure,
    kr_original_procedure,
    monotone_stack_violation,
    procedure_suite,
    read_table,
    write_table)
from utils.core import IndexSet, KrStructure, Provenance, PValueVector, TableProcedure
from utils.errors import DomainError, InputFileError, OracleScaleError
from utils.inputs import KR_CHAIN, Method
from utils.lattice import SubsetLattice, materialize


"""
Tests for procedures

Functions tested: adapt_* adapters, kr_original_procedure, interpolate,
kr_coherent_procedure, build_procedure, is_coherent, check_monotone_stack,
dominates, induce_local_test, closed_from_suite, write_table/read_table
- Lift classical error rate statements into discovery procedures
- Interpolate procedures into coherent ones (closed forms and lattice path)
- Compare procedures and check monotonicity across families

Test categories:
- Normal cases: direct substitution examples for every adapter
- Edge/error cases:
    * duplicate sets and out-of-range parameters
    * families beyond the monotonicity check limit
    * malformed procedure tables
- Properties: interpolation never lowers a bound and its closure is coherent;
  the KR chain is ordered; coherent procedures equal closed testing of their tests
"""

# m = 10 with five p-values at or below 1e-4
P_KR = PValueVector([1e-5, 2e-5, 3e-5, 4e-5, 1e-4, 0.3, 0.5, 0.6, 0.8, 0.95])
P_SMALL = PValueVector([0.001, 0.004, 0.02, 0.03, 0.3, 0.7])

@pytest.fixture
def family():
    return IndexSet.full(10)

@pytest.mark.parametrize(
    "adapter, query, expected",
        [
            (lambda I: adapt_kfwer(IndexSet.full(5), 2, I), IndexSet.full(5), 4),
            (lambda I: adapt_fdx(IndexSet.full(10), 0.3, I), IndexSet.full(10), 7),
            (lambda I: adapt_partial_conjunction(1, 3, I), IndexSet.full(10), 3),
            (lambda I: adapt_partial_conjunction(0, 3, I), IndexSet.full(10), 0),
            (lambda I: adapt_pi0_interval(0.25, I), IndexSet.full(10), 8),
            (lambda I: adapt_intersection_fwer([(IndexSet.of([2, 3]), 1)], I), IndexSet.of([2, 3]), 1)
        ]
)
def test_adapter_examples(adapter, query, expected, family):
    d = adapter(family)
    assert d.bound(query) == expected
    assert d.bound(IndexSet.of([1])) == (1 if query == IndexSet.of([1]) else 0)

@pytest.mark.parametrize(
    "call, expected_msg",
        [
            (lambda I: adapt_kfwer(IndexSet.of([1]), 0, I), "k must be >= 1"),
            (lambda I: adapt_kfwer(IndexSet.of([11]), 1, I), "not contained in the family"),
            (lambda I: adapt_fdx(I, 1.5, I), "gamma must lie in \\[0, 1\\]"),
            (lambda I: adapt_jer([(IndexSet.of([1]), 1), (IndexSet.of([1]), 1)], I), "occurs more than once"),
            (lambda I: adapt_jer([(IndexSet.of([1]), 0)], I), "Every k_i must be >= 1"),
            (lambda I: adapt_intersection_fwer([(IndexSet.of([1]), 2)], I), "must be 0 or 1"),
            (lambda I: adapt_partial_conjunction(1, 11, I), "k must lie in 0..10"),
            (lambda I: adapt_pi0_interval(-0.1, I), "u must lie in \\[0, 1\\]")
        ]
)
def test_adapter_invalid_arguments(call, expected_msg, family):
    with pytest.raises(DomainError, match=expected_msg):
        call(family)

def test_jer_with_one_set_is_kfwer(family):
    K = IndexSet.of([1, 4, 7])
    assert dict(adapt_jer([(K, 2)], family).table) == dict(adapt_kfwer(K, 2, family).table)

def test_kr_original_bounds_nested_sets_only(family):
    """
    Verify:
    - d(K_5) = 5 - floor(c (1 + 10 p)) = 3 with c = 2.1626
    - sets that are not of the form K_i get 0
    """
    d = kr_original_procedure(P_KR, 0.05)
    assert d.provenance is Provenance.KR_ORIGINAL
    assert isinstance(d.structure, KrStructure)
    assert d.bound(IndexSet.full(5)) == 3
    assert d.bound(IndexSet.full(4)) == 2
    assert d.bound(IndexSet.of([1, 2, 3, 4, 6])) == 0

def test_kr_coherent_example(family):
    """
    Verify the interpolated KR bound 3 on the five smallest p-values and 2
    on a set holding four of them.
    """
    d = kr_coherent_procedure(P_KR, 0.05)
    assert d.provenance is Provenance.INTERPOLATION
    assert d.bound(IndexSet.full(5)) == 3
    assert d.bound(IndexSet.of([1, 2, 3, 4, 6])) == 2
    assert d.bound(IndexSet.of([6, 7])) == 0

def test_original_kr_is_not_coherent_but_interpolation_is():
    """
    d(K_5) = 3 exceeds d({2,3,4,5}) + |{1}| = 1 for the original KR bounds.
    """
    original = kr_original_procedure(P_KR, 0.05)
    assert not is_coherent(original)
    assert is_coherent(kr_coherent_procedure(P_KR, 0.05))

@pytest.mark.parametrize(
    "make",
        [
            lambda I: kr_original_procedure(PValueVector([1e-5, 3e-5, 0.002, 0.2, 0.6, 0.9]), 0.05),
            lambda I: adapt_kfwer(IndexSet.of([1, 2, 4, 5]), 2, I),
            lambda I: adapt_kfwer(IndexSet.of([3]), 1, I)
        ]
)
def test_closed_forms_equal_lattice_interpolation(make):
    """
    Test that the KR and k-FWER closed forms equal the generic lattice path
    on the same bounds stripped of their structure.
    """
    I = IndexSet.full(6)
    d = make(I)
    stripped = TableProcedure(I, d.table, d.provenance)
    assert np.array_equal(materialize(interpolate(d)), materialize(interpolate(stripped)))

def test_kr_interpolation_is_idempotent():
    """
    Verify the generic interpolation of KR bounds is coherent and a second round changes nothing.
    """
    original = kr_original_procedure(PValueVector([1e-5, 3e-5, 1e-4, 0.002, 0.2, 0.6, 0.9]), 0.05)
    once = interpolate(TableProcedure(original.family, original.table))
    assert is_coherent(once)
    assert np.array_equal(materialize(interpolate(once)), materialize(once))

def test_overlapping_statements_need_a_second_round():
    """
    d({1,2}) = d({3,4}) = 2 implies one true discovery in {1} and one in {3};
    a single round only finds 1 for {1,3}, the closure finds 2.
    """
    I = IndexSet.full(4)
    d = adapt_jer([(IndexSet.of([1, 2]), 1), (IndexSet.of([3, 4]), 1)], I)
    once = interpolate(d)
    assert once.bound(IndexSet.of([1, 3])) == 1
    assert not is_coherent(once)

    closure = coherent_closure(d)
    assert closure.bound(IndexSet.of([1, 3])) == 2
    assert is_coherent(closure)
    assert dominates(closure, d) is Dominance.A_DOMINATES
    assert np.array_equal(materialize(interpolate(closure)), materialize(closure))

def test_coherent_closure_keeps_closed_forms():
    d = adapt_kfwer(IndexSet.of([1, 2, 3]), 2, IndexSet.full(5))
    closure = coherent_closure(d)
    assert closure.bound(IndexSet.of([1, 2, 5])) == 1
    assert is_coherent(closure)

def test_interpolation_of_empty_family():
    d = TableProcedure(IndexSet(), {})
    assert materialize(interpolate(d)).tolist() == [0]

@pytest.mark.parametrize("p", [P_SMALL, PValueVector([0.0001, 0.0002, 0.01, 0.015, 0.9, 0.95, 0.99])])
def test_kr_chain_is_ordered(p):
    """
    Verify original <= coherent <= closed <= admissible on every subset.
    """
    procedures = [build_procedure(method, p, 0.05) for method in KR_CHAIN]
    for weaker, stronger in zip(procedures, procedures[1:]):
        assert dominates(stronger, weaker) in (Dominance.A_DOMINATES, Dominance.EQUAL)

def test_build_procedure_provenance():
    assert build_procedure(Method.KR_ORIGINAL, P_SMALL, 0.05).provenance is Provenance.KR_ORIGINAL
    assert build_procedure(Method.SIMES_CLOSED, P_SMALL, 0.05).provenance is Provenance.CLOSED_TESTING

def test_critical_family_errors():
    with pytest.raises(DomainError, match="requires a critical value family"):
        critical_family(Method.CUSTOM, 0.05)
    with pytest.raises(DomainError, match="not a closed testing method"):
        critical_family(Method.KR_ORIGINAL, 0.05)

def test_dominates():
    I = IndexSet.full(4)
    a = adapt_kfwer(IndexSet.of([1, 2]), 1, I)
    b = adapt_kfwer(IndexSet.of([3, 4]), 1, I)
    assert dominates(a, a) is Dominance.EQUAL
    assert dominates(a, b) is Dominance.INCOMPARABLE
    assert dominates(interpolate(a), a) is Dominance.A_DOMINATES
    assert dominates(a, interpolate(a)) is Dominance.B_DOMINATES
    with pytest.raises(DomainError, match="share the same family"):
        dominates(a, adapt_kfwer(IndexSet.of([1]), 1, IndexSet.full(3)))

def test_monotone_stacks():
    """
    Verify closed testing with a fixed suite and the shortcut methods are
    monotone across families.
    """
    J = IndexSet.full(5)
    p = PValueVector([0.001, 0.01, 0.03, 0.2, 0.6])
    assert check_monotone_stack(closed_from_suite(simes_like_suite(simes(0.05), p)), J)
    assert check_monotone_stack(lambda I: build_procedure(Method.KR_ADMISSIBLE, p, 0.05, family=I), J)
    assert check_monotone_stack(lambda I: build_procedure(Method.KR_COHERENT, p, 0.05, family=I), J)

def test_monotone_stack_violation_found():
    """
    A builder whose level grows with the family size gains discoveries in
    larger families: alpha = 0.02 on {1} misses p = 0.03, alpha = 0.04 on {1, 2} catches it.
    """
    p = PValueVector([0.03, 0.04, 0.5, 0.6])

    def builder(I):
        return closed_testing_procedure(simes_like_suite(simes(0.02 * len(I)), p), I)

    J = IndexSet.full(4)
    violation = monotone_stack_violation(builder, J)
    assert violation is not None
    S, I, wider = violation
    assert S.issubset(I) and I.issubset(wider)
    assert builder(I).bound(S) < builder(wider).bound(S)
    assert not check_monotone_stack(builder, J)

def test_monotone_stack_at_the_size_limit():
    """
    Verify closed Simes testing is monotone across all families within |J| = 10.
    """
    p = PValueVector([0.001, 0.004, 0.01, 0.02, 0.03, 0.05, 0.2, 0.4, 0.7, 0.9])
    assert check_monotone_stack(closed_from_suite(simes_like_suite(simes(0.05), p)), IndexSet.full(10))

def test_monotone_stack_size_limit():
    with pytest.raises(OracleScaleError):
        check_monotone_stack(lambda I: TableProcedure(I, {}), IndexSet.full(11))

def test_induced_local_test_matches_simes_like_test():
    """
    For closed testing with Simes-like tests, d^S(S) > 0 exactly when phi_S rejects.
    """
    fam = kr_admissible(0.05)

    def builder(I):
        return build_procedure(Method.KR_ADMISSIBLE, P_SMALL, 0.05, family=I)

    for S in SubsetLattice(P_SMALL.family()).sets:
        assert induce_local_test(builder, S) == local_test(fam, P_SMALL, S)

def test_closed_testing_of_induced_tests_is_fixed_point():
    """
    Verify:
    - closed testing of the tests induced by a closed testing stack returns the same bounds
    - closed testing of the tests induced by KR coherent never lowers its bounds
    """
    I = P_SMALL.family()
    closed = closed_from_suite(simes_like_suite(simes(0.05), P_SMALL))
    refit = closed_from_suite(induced_suite(closed))(I)
    assert dominates(refit, closed(I)) is Dominance.EQUAL

    def coherent(J):
        return kr_coherent_procedure(P_SMALL, 0.05, J)

    improved = closed_from_suite(induced_suite(coherent))(I)
    assert dominates(improved, coherent(I)) in (Dominance.A_DOMINATES, Dominance.EQUAL)

@pytest.mark.parametrize(
    "statements",
        [
            [(IndexSet.of([1, 2]), 1)],
            [(IndexSet.of([1, 2, 3]), 2), (IndexSet.of([3, 4, 5]), 1)],
            [(IndexSet.of([1, 2]), 1), (IndexSet.of([3, 4]), 1), (IndexSet.of([2, 5, 6]), 3)]
        ]
)
def test_coherent_procedures_equal_closed_testing_of_their_tests(statements):
    """
    A coherent d equals closed testing with phi_S = 1{d(S) > 0} on every subset.
    """
    I = IndexSet.full(6)
    d = coherent_closure(adapt_jer(statements, I))
    closed = closed_testing_procedure(procedure_suite(d), I)
    assert dominates(closed, d) is Dominance.EQUAL

@pytest.mark.slow
def test_random_coherent_procedures_equal_closed_testing_of_their_tests():
    """
    100 random JER statements on |I| <= 8, closed under interpolation: each
    result is coherent and closed testing of its tests returns it unchanged.
    """
    rng = np.random.default_rng(5)
    for instance in range(100):
        I = IndexSet.full(int(rng.integers(2, 9)))
        statements = {}
        for _ in range(int(rng.integers(1, 4))):
            K = IndexSet.of(rng.choice(I.ids, size=int(rng.integers(1, len(I) + 1)), replace=False).tolist())
            statements[K] = int(rng.integers(1, len(K) + 1))
        d = coherent_closure(adapt_jer(list(statements.items()), I))
        assert is_coherent(d), f"instance {instance}: {statements}"
        closed = closed_testing_procedure(procedure_suite(d), I)
        assert dominates(closed, d) is Dominance.EQUAL, f"instance {instance}: {statements}"

def test_procedure_suite_of_incoherent_procedure():
    """
    The tests of a lone k-FWER statement reject {1, 2} but not {1, 2, 3},
    so closed testing of them makes no discovery at all.
    """
    I = IndexSet.full(3)
    d = adapt_kfwer(IndexSet.of([1, 2]), 1, I)
    suite = procedure_suite(d)
    assert suite(IndexSet.of([1, 2])) == 1
    assert suite(IndexSet.of([1])) == 0
    assert materialize(closed_testing_procedure(suite, I)).max() == 0

def test_write_and_read_table(tmp_path):
    d = kr_original_procedure(P_KR, 0.05)
    path = tmp_path / "kr.csv"
    write_table(d, path)
    restored = read_table(path, d.family)
    assert dict(restored.table) == dict(d.table)

def test_read_table_malformed(tmp_path):
    path = tmp_path / "bad.csv"
    path.write_text("set,bound\n1 2,1\n1 x,1\n")
    with pytest.raises(InputFileError, match="line 3"):
        read_table(path, IndexSet.full(3))
    path.write_text("ids,value\n1,1\n")
    with pytest.raises(InputFileError, match="set,bound"):
        read_table(path, IndexSet.full(3))
