import pytest
import numpy as np
from closed_testing import shortcut_d
from utils.inputs import VerifyInput
from utils.parallel import stream_rng
from verify import Verifier, random_instance


"""
Tests for verify

Class tested: Verifier(verify_input, shortcut)
- Runs the oracle equivalence, coherence, monotone stack, interpolation and
  chain ordering suites on random instances
- Reports every counterexample together with its instance

Test categories:
- Normal cases: the shipped shortcut passes every suite
- Error cases: a deliberately broken shortcut is caught
"""

def off_by_one(state, p, S):
    """Shortcut that overstates every nonzero bound of a set with 3 or more members."""
    value = shortcut_d(state, p, S)
    return min(len(S), value + 1) if len(S) >= 3 and value > 0 else value

def never_rejects(state, p, S):
    return 0

def test_random_instance():
    """
    Verify instances have the requested size and are reproducible from the stream.
    """
    first = random_instance(6, stream_rng(0, 1))
    assert first.m == 6
    assert np.array_equal(first.values, random_instance(6, stream_rng(0, 1)).values)

def test_shipped_shortcut_passes():
    report = Verifier(VerifyInput(scale=5, trials=8, seed=2)).run()
    assert report.passed
    assert report.checks == 8 * (3 * 3 + 2)
    assert report.counterexamples == []

@pytest.mark.parametrize("shortcut", [off_by_one, never_rejects])
def test_broken_shortcut_is_caught(shortcut):
    """
    Test that a wrong shortcut yields counterexamples naming the suite and the instance.
    """
    report = Verifier(VerifyInput(scale=5, trials=20, seed=4), shortcut).run()
    assert not report.passed
    suites = {example.suite for example in report.counterexamples}
    assert "oracle-equivalence" in suites
    assert "p = (" in str(report.counterexamples[0])

@pytest.mark.slow
def test_shipped_shortcut_passes_at_full_scale():
    assert Verifier(VerifyInput(scale=8, trials=100, seed=0)).run().passed
