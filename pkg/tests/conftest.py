import numpy as np
import pytest

from productae.model import Architecture, ProductAE

TINY = dict(k1=2, k2=2, n1=3, n2=3, iterations=2, features=2,
            enc_layers=1, enc_width=8, dec_layers=1, dec_width=8, dec_last_layers=1)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def tiny_arch():
    return Architecture(**TINY)


@pytest.fixture
def tiny_model(tiny_arch):
    return ProductAE.build(tiny_arch, seed=3, dtype=np.float64)


_ACCEPTANCE_LINES: list[str] = []


@pytest.fixture
def acceptance(capsys):
    """``report(n, ok, detail)`` prints and records one pass/fail line for criterion n."""
    def report(n, ok, detail):
        line = f"criterion {n}: {'PASS' if ok else 'FAIL'}  {detail}"
        _ACCEPTANCE_LINES.append(line)
        with capsys.disabled():
            print(f"\n{line}")
        return ok
    return report


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(_ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
