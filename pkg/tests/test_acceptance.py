"""Acceptance criteria 1-10 at full size, default point k = 0.1, seed 0.

Each test prints one ``[PASS]``/``[FAIL]`` line (also collected into the
terminal summary).  Sizes and tolerances live in ``langevin_bounce.verify``.
"""

import pytest

from langevin_bounce import verify
from langevin_bounce.analytic import ModelParams

SEED = 0
# runtime ceilings (seconds) for the criteria that state one
RUNTIME_LIMIT = {1: 1.0, 2: 30.0, 3: 120.0}


@pytest.fixture(scope="module")
def params():
    return ModelParams.from_k(0.1)


@pytest.fixture(scope="module")
def sizes():
    return verify.suite_sizes("full")


@pytest.mark.parametrize("cid", range(1, 11), ids=lambda i: f"criterion_{i:02d}")
def test_criterion(cid, params, sizes, acceptance_log):
    res = verify.CHECKS[cid - 1](params, SEED, sizes)
    line = res.line() + f" [{res.runtime_s:.1f} s]"
    print(line)
    acceptance_log.append(line)
    assert res.id == cid
    assert res.passed, line
    if cid in RUNTIME_LIMIT:
        assert res.runtime_s < RUNTIME_LIMIT[cid]


def test_quick_suite_all_pass_and_fast():
    report = verify.run_suite(suite="quick", seed=SEED)
    assert report.all_passed, [r.line() for r in report.criteria if not r.passed]
    assert sum(r.runtime_s for r in report.criteria) < 120.0
