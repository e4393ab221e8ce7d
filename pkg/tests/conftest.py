from __future__ import annotations

import functools
import time

import numpy as np
import pytest

from kernelsr import synth


@functools.lru_cache(maxsize=None)
def _texture(n: int, seed: int) -> np.ndarray:
    return synth.textured_image(n, seed)


@pytest.fixture
def texture():
    """Cached seeded texture factory; returns a fresh copy."""
    return lambda n, seed=0: _texture(n, seed).copy()


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


# ---- acceptance gate reporting ------------------------------------------

ACCEPTANCE: dict[int, tuple[bool, str, str]] = {}


class _Gate:
    def __init__(self, number: int, title: str, limit_s: float):
        self.number, self.title, self.limit_s = number, title, limit_s
        self.detail = ""
        # time spent in shared fixtures that belongs to this criterion
        self.extra_s = 0.0

    def __enter__(self):
        self._t0 = time.perf_counter()
        return self

    def __exit__(self, exc_type, exc, tb):
        elapsed = time.perf_counter() - self._t0 + self.extra_s
        timing = f"{elapsed:.2f}s / limit {self.limit_s:g}s"
        if exc_type is None and elapsed > self.limit_s:
            ACCEPTANCE[self.number] = (False, self.title, f"too slow ({timing}) {self.detail}")
            raise AssertionError(f"criterion {self.number} exceeded its time limit: {timing}")
        if exc_type is None:
            ACCEPTANCE[self.number] = (True, self.title, f"{timing}; {self.detail}")
        else:
            ACCEPTANCE[self.number] = (False, self.title, f"{timing}; {exc_type.__name__}: {exc}")
        return False


@pytest.fixture
def gate():
    """``with gate(n, title, limit_s) as g:`` times and records one criterion."""
    return _Gate


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE):
        ok, title, detail = ACCEPTANCE[n]
        terminalreporter.write_line(f"[{'PASS' if ok else 'FAIL'}] {n}. {title}: {detail}")
