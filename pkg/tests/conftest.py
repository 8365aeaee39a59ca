import contextlib
import time

import numpy as np
import pytest

from cclab.models import MarkovSource

_ACCEPTANCE = {}


class _Record:
    detail = ""


@pytest.fixture
def acceptance():
    """Context manager that logs one PASS/FAIL line per acceptance criterion."""

    @contextlib.contextmanager
    def criterion(number, title):
        rec = _Record()
        start = time.perf_counter()
        try:
            yield rec
        except BaseException as exc:
            _ACCEPTANCE[number] = ("FAIL", title, f"{rec.detail} [{type(exc).__name__}: {exc}]".strip(),
                                   time.perf_counter() - start)
            raise
        _ACCEPTANCE[number] = ("PASS", title, rec.detail, time.perf_counter() - start)

    return criterion


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_ACCEPTANCE):
        status, title, detail, secs = _ACCEPTANCE[number]
        terminalreporter.write_line(f"{status} criterion {number:2d} ({title}, {secs:.1f}s): {detail}")


def random_dist(rng, k, floor=0.0):
    p = rng.dirichlet(np.ones(k)) + floor
    return p / p.sum()


def random_kernel(rng, rows, cols, floor=0.0):
    return np.stack([random_dist(rng, cols, floor) for _ in range(rows)])


def random_source(rng, k, floor=0.0):
    return MarkovSource(random_dist(rng, k, floor), random_kernel(rng, k, k, floor))


@pytest.fixture
def rng():
    return np.random.default_rng(20261014)
