"""Shared fixtures.

The symmetry-breaking branch at (d, p) = (5, 2.8) costs several seconds
to continue and three test modules inspect it, so it is built once per
session.  The fixture hands out (branch, build_seconds) because the
acceptance tests also budget the construction time.
"""

import time

import pytest

from cknlab import continue_branch


@pytest.fixture(scope="session")
def branch_5_2_8():
    start = time.perf_counter()
    branch = continue_branch(5, 2.8)
    return branch, time.perf_counter() - start
