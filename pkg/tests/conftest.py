import numpy as np
import pytest

ACCEPTANCE_RESULTS = []


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for line in ACCEPTANCE_RESULTS:
        terminalreporter.write_line(line)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def random_unit(rng, d):
    v = rng.standard_normal(d)
    return v / np.linalg.norm(v)


def orthonormal_pair(rng, d):
    q, _ = np.linalg.qr(rng.standard_normal((d, 2)))
    return q[:, 0], q[:, 1]


def invariant_vector(rng, n1, n2):
    """Random vector orthogonal to both n1 and n2 (via QR, not via the library)."""
    d = n1.shape[0]
    q, _ = np.linalg.qr(np.column_stack([n1, n2, rng.standard_normal((d, d - 2))]))
    coeffs = rng.standard_normal(d - 2)
    return q[:, 2:] @ coeffs
