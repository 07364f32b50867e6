import numpy as np
import pytest
from hypothesis import settings

settings.register_profile("default", deadline=None, max_examples=40)
settings.load_profile("default")

# filled by test_acceptance; echoed at the end of the run
ACCEPTANCE = {}


def random_psd(rng, M, rank=None, scale=None):
    rank = M if rank is None else rank
    a = rng.standard_normal((M, rank)) + 1j * rng.standard_normal((M, rank))
    r = a @ a.conj().T
    return r * ((M if scale is None else scale) / np.trace(r).real)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(ACCEPTANCE, key=lambda k: (int(k.rstrip("ab")), k)):
        ok, detail = ACCEPTANCE[key]
        terminalreporter.write_line(f"criterion {key:>3}: {'PASS' if ok else 'FAIL'}  {detail}")
