import numpy as np
import pytest

from mcvar.panel import CoefficientSet, MultiClassPanel


def simulate_var(B: np.ndarray, T: int, rng, noise: float = 1.0, y0=None) -> np.ndarray:
    """Plain VAR(P) recursion; ``B`` has shape (P, J, J)."""
    P, J, _ = B.shape
    y = np.zeros((T, J))
    y[:P] = rng.standard_normal((P, J)) if y0 is None else y0
    for t in range(P, T):
        y[t] = sum(B[p] @ y[t - p - 1] for p in range(P)) + noise * rng.standard_normal(J)
    return y


def random_stable(rng, J: int, P: int = 1, radius: float = 0.6) -> np.ndarray:
    B = rng.standard_normal((P, J, J))
    comp = np.zeros((J * P, J * P))
    comp[:J] = np.concatenate(list(B), axis=1)
    if P > 1:
        comp[J:, :-J] = np.eye(J * (P - 1))
    rho = np.max(np.abs(np.linalg.eigvals(comp)))
    # scaling lag p by c**p scales every companion eigenvalue by c
    c = radius / rho
    return B * (c ** np.arange(1, P + 1))[:, None, None]


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture
def small_panel(rng):
    """K=3, J=3, T=60 noisy panel with shared dynamics."""
    B = np.array([[[0.5, 0.2, 0.0], [0.0, 0.4, 0.0], [0.1, 0.0, 0.3]]])
    data = [simulate_var(B, 60, rng, noise=0.7) for _ in range(3)]
    panel = MultiClassPanel.from_list(data)
    return panel, CoefficientSet(np.stack([B] * 3))


# one line per acceptance criterion, collected by tests/test_acceptance.py
ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
