import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


ACCEPTANCE_RESULTS = []


@pytest.fixture
def criterion(request):
    """Record one acceptance criterion: name, verdict, wall time."""
    import time
    from contextlib import contextmanager

    @contextmanager
    def _criterion(name, limit=None):
        start = time.perf_counter()
        ok = False
        try:
            yield
            elapsed = time.perf_counter() - start
            if limit is not None:
                assert elapsed < limit, f"{name}: took {elapsed:.2f}s, limit {limit}s"
            ok = True
        finally:
            elapsed = time.perf_counter() - start
            line = f"{'PASS' if ok else 'FAIL'}  {name}  ({elapsed:.2f}s" + (
                f" / limit {limit}s)" if limit else ")")
            ACCEPTANCE_RESULTS.append(line)
            print(line)

    return _criterion


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_RESULTS:
            terminalreporter.write_line(line)
