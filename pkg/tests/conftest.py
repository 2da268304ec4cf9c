import numpy as np
import pytest
from hypothesis import settings

from rkpod.maskedmat import project

settings.register_profile("default", deadline=None, max_examples=60)
settings.load_profile("default")


def random_masked(rng, n, p, miss=0.3, keep_rows=True):
    """Random masked matrix with at least one observed entry per row and column."""
    X = rng.normal(size=(n, p)) * 3
    mask = rng.random((n, p)) >= miss
    if keep_rows:
        mask[np.arange(n), rng.integers(p, size=n)] = True
        mask[rng.integers(n, size=p), np.arange(p)] = True
    return project(X, mask)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


ACCEPTANCE_LINES: list[str] = []


@pytest.fixture
def verdict(capsys):
    """Print (and remember) one pass/fail line per acceptance criterion."""

    def report(num: int, ok: bool, detail: str):
        line = f"ACCEPTANCE {num:>2}: {'PASS' if ok else 'FAIL'}  {detail}"
        ACCEPTANCE_LINES.append(line)
        with capsys.disabled():
            print("\n" + line)
        return ok

    return report


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
