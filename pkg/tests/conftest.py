import numpy as np
import pytest

from rissec.channel import ChannelStats, PathLossSet, SystemDims, crandn, exp_correlation


def random_correlation(n, rng):
    """Complex Hermitian PSD matrix with unit diagonal."""
    A = crandn(rng, (n, n))
    C = A @ A.conj().T
    d = 1.0 / np.sqrt(np.real(np.diag(C)))
    C = C * np.outer(d, d)
    return 0.5 * (C + C.conj().T)


def make_stats(seed=0, M=8, N=16, K=3, M_E=2, correlated=True, P=1.0, sigma2=1e-2,
               shared_ris=False, beta1=0.5):
    rng = np.random.default_rng(seed)
    H1 = np.sqrt(beta1) * np.exp(1j * rng.uniform(0, 2 * np.pi, (M, N)))
    pl = PathLossSet(beta1, rng.uniform(0.1, 1.0, K), 0.3, rng.uniform(0.5, 2.0, K), 0.8)
    dims = SystemDims(M, N, K, M_E, P, sigma2)
    if not correlated:
        return ChannelStats(np.eye(M), np.eye(N), np.eye(M), np.eye(N), H1, pl, dims)
    R_B = [exp_correlation(M, r) for r in rng.uniform(0.1, 0.8, K)]
    R_I = random_correlation(N, rng) if shared_ris else [random_correlation(N, rng) for _ in range(K)]
    return ChannelStats(R_B, R_I, exp_correlation(M, 0.5), random_correlation(N, rng), H1, pl, dims)


@pytest.fixture
def stats():
    return make_stats(0)


# acceptance reporting: tests append (criterion, part, ok, detail); the
# terminal summary prints one line per criterion
ACCEPTANCE = []


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    order = []
    for crit, *_ in ACCEPTANCE:
        if crit not in order:
            order.append(crit)
    for crit in sorted(order, key=lambda c: int(c[2:])):
        parts = [p for p in ACCEPTANCE if p[0] == crit]
        ok = all(p[2] for p in parts)
        detail = "; ".join(f"{p[1]}: {'ok' if p[2] else 'FAIL'} ({p[3]})" for p in parts)
        terminalreporter.write_line(f"{crit} {'PASS' if ok else 'FAIL'}  {detail}")
