import numpy as np
import pytest

SX = np.array([[0.0, 1.0], [1.0, 0.0]])
SY = np.array([[0.0, -1j], [1j, 0.0]])
SZ = np.array([[1.0, 0.0], [0.0, -1.0]])


def site_op(op, site, L):
    """Pauli ``op`` on 0-based ``site`` in the bit-ordered basis (bit i = site i, 1 = up).

    The bit basis index is sum_i b_i 2^i, so site 0 is the *last* kron factor,
    and up (b=1) must map to sigma^z = +1, i.e. a flipped Pauli convention.
    """
    flip = np.array([[0.0, 1.0], [1.0, 0.0]])
    local = flip @ op @ flip  # basis order (down, up)
    out = np.array([[1.0]])
    for s in reversed(range(L)):
        out = np.kron(out, local if s == site else np.eye(2))
    return out


def pauli_chain(L, terms):
    """Sum of products of Paulis: terms = [(coef, [(op, site), ...]), ...]."""
    H = np.zeros((2**L, 2**L), dtype=complex)
    for coef, factors in terms:
        M = np.eye(2**L, dtype=complex)
        for op, site in factors:
            M = M @ site_op(op, site, L)
        H += coef * M
    assert np.allclose(H.imag, 0)
    return H.real


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def random_symmetric(rng, n):
    a = rng.normal(size=(n, n))
    return (a + a.T) / 2


# one line per acceptance criterion, echoed in the terminal summary
ACCEPTANCE_LINES: list[str] = []


def record(label: str, passed: bool, detail: str) -> None:
    ACCEPTANCE_LINES.append(f"{'PASS' if passed else 'FAIL'}  {label}: {detail}")


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
