"""Monte Carlo estimates of the user rate bound and the worst-case Eve capacity.

The user rate is the use-and-then-forget bound

    log2(1 + p |E{h_k^H w_k}|^2 / Psi),
    Psi = p sum_{i != k} E|h_k^H w_i|^2 + q E{h_k^H V V^H h_k} + p var{h_k^H w_k} + sigma_k^2,

estimated by sample moments, and the Eve capacity is the sample mean of
``log2(1 + p w_k^H H_E X^{-1} H_E^H w_k)`` with ``X = q H_E^H V V^H H_E``.
Here ``p = xi P / K`` and ``q = (1 - xi) P / (M - K)``.

Trials are generated in fixed-size blocks, each with its own child seed, so
results do not depend on how blocks are scheduled over threads.
"""
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from . import _kernels
from .analysis import effective_correlations
from .channel import _as_phi, imperfect_csi, sample_realization
from .errors import DomainError, NumericalError

__all__ = [
    "PrecoderSet", "McEstimate", "McResult", "statistical_zeta2",
    "mrt_precoder", "zf_precoder", "an_precoder",
    "run_montecarlo", "empirical_user_rate", "empirical_eve_capacity", "empirical_secrecy_rate",
]

Z95 = 1.959963984540054
DEFAULT_BLOCK = 100


@dataclass(frozen=True)
class PrecoderSet:
    """Data precoder ``W`` (``(..., M, K)``) and null-space AN precoder ``V``."""

    W: np.ndarray
    V: np.ndarray
    scheme: str
    zeta2: float = math.nan


@dataclass(frozen=True)
class McEstimate:
    """Monte Carlo rate estimate with a 95% confidence half-width.

    ``components`` holds the per-term means behind the estimate (for the user
    rate: signal, interference, AN leakage, variance and noise powers).
    """

    mean: float
    half_width: float
    trials: int
    components: dict
    discarded: int = 0

    def as_dict(self, prefix=""):
        out = {f"{prefix}mean": self.mean, f"{prefix}half_width": self.half_width,
               f"{prefix}trials": self.trials, f"{prefix}discarded": self.discarded}
        out.update({f"{prefix}{k}": v for k, v in self.components.items()})
        return out


@dataclass(frozen=True)
class McResult:
    user: McEstimate
    eve: McEstimate
    secrecy: McEstimate
    max_condition: float


def _herm_t(A):
    return np.conj(np.swapaxes(A, -1, -2))


def statistical_zeta2(stats, phases):
    """MRT normalization ``K / sum_j tr(R_j)`` (exact in expectation)."""
    eff = effective_correlations(stats, phases)
    return stats.dims.K / float(np.real(np.trace(eff.R_user, axis1=1, axis2=2)).sum())


def mrt_precoder(H, zeta2=None):
    """MRT ``W = zeta H`` with null-space AN.

    With ``zeta2`` given (see :func:`statistical_zeta2`) the normalization is
    statistical; otherwise each realization is scaled to ``tr(W W^H) = K``.
    """
    H = np.asarray(H)
    K = H.shape[-1]
    if zeta2 is None:
        z2 = K / np.sum(np.abs(H) ** 2, axis=(-2, -1))
        W = H * np.sqrt(z2)[..., None, None]
        return PrecoderSet(W, an_precoder(H), "mrt", math.nan)
    return PrecoderSet(np.sqrt(zeta2) * H, an_precoder(H), "mrt", float(zeta2))


def zf_precoder(H, cond_limit=_kernels.COND_LIMIT):
    """Zero forcing ``H (H^H H)^{-1}`` scaled per realization to ``tr(W W^H) = K``."""
    H = np.asarray(H)
    return PrecoderSet(_zf_data(H, cond_limit), an_precoder(H), "zf")


def an_precoder(H):
    """Orthonormal basis ``V`` of the null space of ``H^H`` (``(..., M, M - K)``)."""
    H = np.asarray(H)
    M, K = H.shape[-2:]
    if M <= K:
        raise DomainError("artificial noise needs more antennas than users")
    U, _, _ = np.linalg.svd(H, full_matrices=True)
    return U[..., :, K:]


# ---------------------------------------------------------------------------
# simulation
# ---------------------------------------------------------------------------

def _block_stats(stats, phi, k, n, seed, tau, precoder, zeta2, eve_load):
    rng = np.random.default_rng(seed)
    real = sample_realization(stats, phi, rng, trials=n)
    est = imperfect_csi(real, tau, rng) if tau > 0 else real
    H = est.h_user
    if precoder == "zf":
        W = _zf_data(H)
    elif zeta2 is None:
        W = H * np.sqrt(stats.dims.K / np.sum(np.abs(H) ** 2, axis=(1, 2)))[:, None, None]
    else:
        W = np.sqrt(zeta2) * H
    return _kernels.trial_statistics(real.h_user[:, :, k], H, W, real.H_eve, k, eve_load)


def _zf_data(H, cond_limit=_kernels.COND_LIMIT):
    K = H.shape[-1]
    G = _herm_t(H) @ H
    if np.any(np.linalg.cond(G) > cond_limit):
        raise NumericalError("channel matrix is rank deficient; zero forcing undefined")
    W = H @ np.linalg.inv(G)
    return W * np.sqrt(K / np.sum(np.abs(W) ** 2, axis=(-2, -1)))[..., None, None]


def _simulate(stats, phi, k, trials, seed, threads, block, tau, precoder, zeta2, eve_load):
    n_blocks = -(-trials // block)
    sizes = [block] * (n_blocks - 1) + [trials - block * (n_blocks - 1)]
    seeds = np.random.SeedSequence(seed).spawn(n_blocks)
    args = [(stats, phi, k, n, s, tau, precoder, zeta2, eve_load) for n, s in zip(sizes, seeds)]
    if threads > 1 and n_blocks > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            parts = list(pool.map(lambda a: _block_stats(*a), args))
    else:
        parts = [_block_stats(*a) for a in args]
    return [np.concatenate([p[i] for p in parts]) for i in range(4)]


def _user_rate_from(gains, leak, k, p, q, sigma2):
    """UatF rate, its leave-one-out replicates and the mean power components."""
    n = len(leak)
    g = gains[:, k]
    others = np.sum(np.abs(gains) ** 2, axis=1) - np.abs(g) ** 2
    abs2 = np.abs(g) ** 2
    S1, S2, So, Sl = g.sum(), abs2.sum(), others.sum(), leak.sum()

    def rate(s1, s2, so, sl, m):
        mean = s1 / m
        sig = p * np.abs(mean) ** 2
        var = p * np.maximum(s2 / m - np.abs(mean) ** 2, 0.0)
        psi = p * so / m + q * sl / m + var + sigma2
        with np.errstate(divide="ignore", invalid="ignore"):
            return np.log2(1.0 + np.where(psi > 0, sig / psi, np.where(sig > 0, np.inf, 0.0))), sig, var

    r, sig, var = rate(S1, S2, So, Sl, n)
    loo, _, _ = rate(S1 - g, S2 - abs2, So - others, Sl - leak, n - 1)
    comps = {"signal": float(sig), "interference": float(p * So / n), "an_leakage": float(q * Sl / n),
             "variance": float(var), "noise": float(sigma2)}
    return float(r), loo, comps


def _jackknife_hw(loo):
    n = len(loo)
    if n < 2 or not np.all(np.isfinite(loo)):
        return math.nan
    return float(Z95 * math.sqrt((n - 1) / n * np.sum((loo - loo.mean()) ** 2)))


def run_montecarlo(stats, phases, xi, k, trials=1000, seed=0, threads=1, tau=0.0,
                   precoder="mrt", normalization="statistical", block=DEFAULT_BLOCK,
                   sigma2_eve=0.0):
    """Estimate user rate, Eve capacity and secrecy rate of user ``k``.

    Parameters
    ----------
    stats : ChannelStats
    phases : PhaseVector or array_like
    xi : float
        Power fraction for data; ``1 - xi`` goes to artificial noise.
    k : int
    trials : int
    seed : int
        Master seed; block ``b`` uses child ``b`` of ``SeedSequence(seed)``.
    threads : int
    tau : float
        CSI imperfection; the BS designs ``W`` and ``V`` from the estimate.
    precoder : {"mrt", "zf"}
    normalization : {"statistical", "per_realization"}
        MRT scaling (ignored for ZF).
    block : int
        Trials per seeded block. Results depend on it, not on ``threads``.
    sigma2_eve : float
        Eve noise power; 0 is the worst case.

    Returns
    -------
    McResult
    """
    if trials < 2:
        raise DomainError("need at least two trials")
    if not 0.0 <= xi <= 1.0:
        raise DomainError(f"power fraction must lie in [0, 1], got {xi}")
    if precoder not in ("mrt", "zf"):
        raise DomainError(f"unknown precoder {precoder!r}")
    if normalization not in ("statistical", "per_realization"):
        raise DomainError(f"unknown normalization {normalization!r}")
    if not 0 <= k < stats.dims.K:
        raise DomainError(f"user index {k} out of range")
    d = stats.dims
    phi = _as_phi(phases)
    p = xi * d.P / d.K
    q = (1.0 - xi) * d.P / (d.M - d.K)
    zeta2 = statistical_zeta2(stats, phi) if (precoder == "mrt" and normalization == "statistical") else None
    eve_load = sigma2_eve / q if q > 0 else 0.0

    gains, leak, eve, cond = _simulate(stats, phi, k, trials, seed, threads, max(1, int(block)),
                                       tau, precoder, zeta2, eve_load)
    rate, loo_r, comps = _user_rate_from(gains, leak, k, p, q, float(d.sigma2_user[k]))
    user = McEstimate(rate, _jackknife_hw(loo_r), trials, comps)

    ok = np.isfinite(eve)
    n_ok = int(ok.sum())
    discarded = trials - n_ok
    if q == 0 and sigma2_eve == 0:
        samples = np.full(trials, math.inf if p > 0 else 0.0)
        ok[:] = True
        n_ok = trials
        discarded = 0
    else:
        with np.errstate(divide="ignore", invalid="ignore"):
            samples = np.where(ok, np.log2(1.0 + (p / q if q > 0 else 0.0) * np.maximum(eve, 0.0)), np.nan)
    if n_ok == 0:
        raise NumericalError("every Eve trial was discarded as ill-conditioned")
    c = samples[ok]
    cap = float(c.mean())
    cap_hw = float(Z95 * c.std(ddof=1) / math.sqrt(n_ok)) if n_ok > 1 and math.isfinite(cap) else math.nan
    eve_est = McEstimate(cap, cap_hw, trials, {"discard_rate": discarded / trials}, discarded)

    # jackknife on the difference; a discarded trial leaves the Eve mean unchanged
    sc = np.where(ok, samples, 0.0)
    total = sc.sum()
    with np.errstate(divide="ignore", invalid="ignore"):
        loo_c = np.where(ok, (total - sc) / max(n_ok - 1, 1), total / n_ok)
    if math.isinf(cap):
        sec, sec_hw = 0.0, 0.0
    else:
        sec = max(0.0, rate - cap)
        sec_hw = _jackknife_hw(loo_r - loo_c)
    secrecy = McEstimate(sec, sec_hw, trials, {"unclamped": rate - cap}, discarded)
    return McResult(user, eve_est, secrecy, float(np.max(cond)))


def empirical_user_rate(stats, phases, xi, k, trials=1000, seed=0, **kw):
    return run_montecarlo(stats, phases, xi, k, trials, seed, **kw).user


def empirical_eve_capacity(stats, phases, xi, k, trials=1000, seed=0, **kw):
    return run_montecarlo(stats, phases, xi, k, trials, seed, **kw).eve


def empirical_secrecy_rate(stats, phases, xi, k, trials=1000, seed=0, **kw):
    return run_montecarlo(stats, phases, xi, k, trials, seed, **kw).secrecy
