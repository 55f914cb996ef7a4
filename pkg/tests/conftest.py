import numpy as np
import pytest

from gcsc.wcsc_niapg import WcscProblem


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def brute_circular(d, z):
    """Period-P circular convolution by a double loop."""
    P = len(z)
    out = np.zeros(P)
    for p in range(P):
        for j in range(len(d)):
            out[p] += d[j] * z[(p - j) % P]
    return out


def brute_reconstruct(D, Z):
    N, K, P = Z.shape
    return np.array([sum(brute_circular(D[k], Z[i, k]) for k in range(K)) for i in range(N)])


def spatial_weighted_f(D, Z, prob):
    """Weighted data term evaluated element by element, no FFTs."""
    xrec = brute_reconstruct(D, Z)
    G, N, P = prob.W.shape
    tot = 0.0
    for g in range(G):
        for i in range(N):
            for p in range(P):
                r = prob.X[i, p] - xrec[i, p] - prob.mu[g, p]
                tot += (prob.W[g, i, p] * r) ** 2
    return 0.5 * tot


def random_problem(rng, N=2, P=16, K=2, M=4, G=2, beta=0.1):
    X = rng.standard_normal((N, P))
    mu = 0.1 * rng.standard_normal((G, P))
    W = rng.uniform(0.2, 1.5, (G, N, P))
    D = rng.standard_normal((K, M))
    D /= 2 * np.linalg.norm(D, axis=1, keepdims=True)
    Z = rng.standard_normal((N, K, P))
    return WcscProblem(X, mu, W, beta), D, Z


# One line per acceptance criterion, echoed in the terminal summary.
ACCEPTANCE_LINES = []


def record(name, ok, detail):
    line = f"[{'PASS' if ok else 'FAIL'}] {name}: {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)
    return ok


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
