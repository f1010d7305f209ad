"""Acceptance gate: every criterion runs at its pinned tolerance and prints
one pass/fail line.  Criteria 1 and 2 also enforce their runtime targets."""

import pytest

from affinetest import acceptance

RUNTIME_TARGETS = {"counting_lemma": 60.0, "pattern_probability_exactness": 30.0}


@pytest.mark.parametrize("number,fn", acceptance.CRITERIA, ids=[n for n, _ in acceptance.CRITERIA])
def test_criterion(number, fn):
    result = fn()
    status = "PASS" if result.passed else "FAIL"
    print(f"[{status}] criterion {number} {result.name}: {result.detail} "
          f"({result.seconds:.1f}s)")
    assert result.passed, result.detail
    target = RUNTIME_TARGETS.get(result.name)
    if target is not None:
        assert result.seconds < target, f"{result.name} took {result.seconds:.1f}s"
