import itertools

import numpy as np
import pytest

from homemoe.models import TaskSpec


def brute_force_auc(scores, labels):
    """All positive/negative pairs, ties count one half."""
    pos = [s for s, y in zip(scores, labels) if y == 1]
    neg = [s for s, y in zip(scores, labels) if y == 0]
    total = 0.0
    for p, n in itertools.product(pos, neg):
        total += 1.0 if p > n else 0.5 if p == n else 0.0
    return total / (len(pos) * len(neg))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def four_tasks():
    return [TaskSpec("ctr", "interaction", 0.3), TaskSpec("like", "interaction", 0.05),
            TaskSpec("evtr", "watch", 0.3), TaskSpec("ltr", "watch", 0.1)]


@pytest.fixture
def eight_tasks():
    from homemoe.data import demo_tasks
    return demo_tasks()


# criterion number -> (passed, detail); filled by test_acceptance.py
ACCEPTANCE = {}


def record_acceptance(number, title, passed, detail):
    ACCEPTANCE[number] = (title, passed, detail)
    print(f"criterion {number} [{title}]: {'PASS' if passed else 'FAIL'} - {detail}")


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE):
        title, passed, detail = ACCEPTANCE[n]
        terminalreporter.write_line(f"{'PASS' if passed else 'FAIL'}  {n}. {title}: {detail}")
