import numpy as np
import pytest

from pare.system_model import SystemConfig, realize, synthesize

REFERENCE = SystemConfig(M_R=5, M_T=2, N=16, Q=4, K=20, T=10)
TINY = SystemConfig(M_R=3, M_T=2, N=4, Q=2, K=6, T=4)


def crandn(rng, *shape):
    return (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / np.sqrt(2)


def rel_err(a, b):
    return np.linalg.norm(a - b) / np.linalg.norm(b)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def reference_case():
    rng = np.random.default_rng(7)
    real = realize(REFERENCE, rng)
    return REFERENCE, real, synthesize(REFERENCE, real)


def paratuck_scalar(A, B, Omega, CA, CB):
    """Entry-wise PARATUCK sum, y[k, i, j] = sum a_ir1 b_jr2 w_r1r2 cA_kr1 cB_kr2."""
    I, R1 = A.shape
    J, R2 = B.shape
    K = CA.shape[0]
    y = np.zeros((K, I, J), dtype=complex)
    for k in range(K):
        for i in range(I):
            for j in range(J):
                acc = 0j
                for r1 in range(R1):
                    for r2 in range(R2):
                        acc += A[i, r1] * B[j, r2] * Omega[r1, r2] * CA[k, r1] * CB[k, r2]
                y[k, i, j] = acc
    return y


_CRITERIA: dict[int, str] = {}


@pytest.fixture
def criterion():
    """Record and print the PASS/FAIL line of one acceptance criterion."""

    def record(number: int, ok: bool, detail: str) -> bool:
        line = f"criterion {number:2d}: {'PASS' if ok else 'FAIL'}  {detail}"
        _CRITERIA[number] = line
        print(line)
        return ok

    return record


def pytest_terminal_summary(terminalreporter):
    if _CRITERIA:
        terminalreporter.section("acceptance criteria")
        for number in sorted(_CRITERIA):
            terminalreporter.write_line(_CRITERIA[number])
