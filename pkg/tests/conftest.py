import numpy as np
import pytest

# irreducible N=3 kernel with every entry of K nonzero
L3 = np.array([[1.0, 0.5, 0.3],
               [0.5, 1.2, 0.4],
               [0.3, 0.4, 0.9]])

# two 2-blocks
L4_BLOCKS = np.array([[1.0, 0.5, 0.0, 0.0],
                      [0.5, 1.0, 0.0, 0.0],
                      [0.0, 0.0, 1.0, 0.4],
                      [0.0, 0.0, 0.4, 0.8]])


def random_sym(rng, n):
    A = rng.standard_normal((n, n))
    return (A + A.T) / 2


def random_pd(rng, n, floor=0.3):
    A = rng.standard_normal((n, n)) / np.sqrt(n)
    return A @ A.T + floor * np.eye(n)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def L3_kernel():
    return L3.copy()


@pytest.fixture
def L4_block_kernel():
    return L4_BLOCKS.copy()


# one line per acceptance criterion, echoed in the terminal summary
ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
