import os
import sys

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

settings.register_profile("default", max_examples=30, deadline=None,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))

# criterion id -> list of (item, passed, detail)
ACCEPTANCE = {}


@pytest.fixture
def record():
    def _record(criterion, item, passed, detail=""):
        ACCEPTANCE.setdefault(criterion, []).append((item, bool(passed), detail))
        return passed
    return _record


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


def random_density(d, rng, rank=None):
    rank = rank or d
    X = rng.normal(size=(d, rank)) + 1j * rng.normal(size=(d, rank))
    rho = X @ X.conj().T
    return rho / np.trace(rho)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    tr = terminalreporter
    tr.section("acceptance criteria")
    for crit in sorted(ACCEPTANCE, key=lambda c: (len(c), c)):
        items = ACCEPTANCE[crit]
        ok = all(p for _, p, _ in items)
        tr.write_line(f"criterion {crit}: {'PASS' if ok else 'FAIL'}")
        for item, p, detail in items:
            tr.write_line(f"    [{'pass' if p else 'FAIL'}] {item}: {detail}")
