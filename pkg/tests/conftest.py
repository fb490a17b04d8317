import numpy as np
import pytest

from bsblcs.sensing import MASK64


class ScalarSplitMix:
    """Straight transcription of splitmix64 on Python ints, kept apart from the library."""

    def __init__(self, seed):
        self.state = seed

    def next(self):
        self.state = (self.state + 0x9E3779B97F4A7C15) % 2**64
        z = self.state
        z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) % 2**64
        z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) % 2**64
        return z ^ (z >> 31)


def scalar_supports(M, N, s, seed):
    rng = ScalarSplitMix(seed & MASK64)
    out = []
    for _ in range(N):
        pool = list(range(M))
        for k in range(s):
            j = k + rng.next() % (M - k)
            pool[k], pool[j] = pool[j], pool[k]
        out.append(tuple(sorted(pool[:s])))
    return tuple(out)


def blocksparse_vector(rng, N=384, block=24, active=3):
    z = np.zeros(N)
    for b in rng.choice(N // block, size=active, replace=False):
        z[b * block:(b + 1) * block] = rng.standard_normal(block)
    return z


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


# one line per acceptance criterion, printed at the end of the run
ACCEPTANCE_LINES: dict[int, str] = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE_LINES):
        terminalreporter.write_line(ACCEPTANCE_LINES[n])
