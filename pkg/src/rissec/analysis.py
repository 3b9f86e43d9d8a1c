"""Closed-form ergodic secrecy rate from statistical CSI.

All quantities follow the trace expressions

    S_k = xi P tr(R_k)^2
    I_k = xi P sum_{i != k} tr(R_k R_i) + sigma_k^2 sum_j tr(R_j)
    S_E = xi M M_E (M - K) tr(R_k (R_E + beta3 R_BE))
    I_E = (1 - xi)(M - K - M_E) tr(R_E + beta3 R_BE) sum_j tr(R_j)

with ``R_k = beta2_k R_Bk + betaI_k H1 Phi R_Ik Phi^H H1^H`` and
``R_E = betaIE H1 Phi R_IE Phi^H H1^H``.
"""
import math
from dataclasses import dataclass

import numpy as np

from .channel import PhaseVector, _as_phi
from .errors import DimensionError, DomainError

__all__ = [
    "PhaseVector", "EffectiveCorrelation", "TraceTerms", "SecrecyEval",
    "effective_correlations", "trace_terms", "secrecy_from_terms", "secrecy_closed_form",
    "uncorrelated_sinrs", "large_ris_secrecy_limit", "direct_link_secrecy_rate",
    "corollary1_uncorrelated", "corollary2_asymptotic", "corollary3_no_ris",
]


@dataclass(frozen=True)
class EffectiveCorrelation:
    R_user: np.ndarray       # (K, M, M)
    R_eve_ris: np.ndarray    # (M, M), the RIS-reflected part R_E
    R_eve_total: np.ndarray  # R_E + beta3 R_BE


@dataclass(frozen=True)
class TraceTerms:
    """The scalar traces the secrecy rate of one user depends on."""

    tr_user: np.ndarray   # tr(R_j) for every j
    cross_user: float     # sum_{i != k} tr(R_k R_i)
    tr_eve: float         # tr(R_E + beta3 R_BE)
    cross_eve: float      # tr(R_k (R_E + beta3 R_BE))
    k: int


@dataclass(frozen=True)
class SecrecyEval:
    S_user: float
    I_user: float
    S_eve: float
    I_eve: float
    gamma_user: float
    gamma_eve: float
    rate_user: float
    capacity_eve: float
    secrecy_rate: float
    xi: float
    k: int

    def as_dict(self):
        return {f: getattr(self, f) for f in self.__dataclass_fields__}


def _herm(A):
    return 0.5 * (A + np.conj(np.swapaxes(A, -1, -2)))


def _tr_prod(A, B):
    """``Re tr(A B)`` for Hermitian A, B without forming the product."""
    return float(np.real(np.vdot(B, A)))


def effective_correlations(stats, phases):
    """Per-user and Eve covariance matrices of the effective BS-side channels."""
    phi = _as_phi(phases)
    if phi.shape != (stats.dims.N,):
        raise DimensionError(f"expected {stats.dims.N} phases, got {phi.shape}")
    pl = stats.path_loss
    A = stats.H1 * phi
    AH = A.conj().T
    if stats.shared_ris_correlation:
        ris = _herm(A @ stats.R_I_user[0] @ AH)
        R_user = pl.beta2[:, None, None] * stats.R_B_user + pl.betaI[:, None, None] * ris
    else:
        ris = _herm(A @ stats.R_I_user @ AH)
        R_user = pl.beta2[:, None, None] * stats.R_B_user + pl.betaI[:, None, None] * ris
    R_E = pl.betaIE * _herm(A @ stats.R_I_eve @ AH)
    return EffectiveCorrelation(_herm(R_user), R_E, _herm(R_E + pl.beta3 * stats.R_B_eve))


def trace_terms(eff, k):
    R = eff.R_user
    K = R.shape[0]
    if not 0 <= k < K:
        raise DomainError(f"user index {k} out of range for K={K}")
    tr_user = np.real(np.trace(R, axis1=1, axis2=2))
    others = R.sum(axis=0) - R[k]
    return TraceTerms(
        tr_user=tr_user,
        cross_user=_tr_prod(R[k], others),
        tr_eve=float(np.real(np.trace(eff.R_eve_total))),
        cross_eve=_tr_prod(R[k], eff.R_eve_total),
        k=k,
    )


def _log2p(x):
    return math.inf if math.isinf(x) else math.log2(1.0 + x)


def secrecy_from_terms(terms, dims, xi):
    """Evaluate S, I, gamma and rates for one user from its trace terms."""
    if not 0.0 <= xi <= 1.0:
        raise DomainError(f"power fraction must lie in [0, 1], got {xi}")
    M, K, M_E, P = dims.M, dims.K, dims.M_E, dims.P
    sigma2 = float(dims.sigma2_user[terms.k])
    sum_tr = float(terms.tr_user.sum())
    trk = float(terms.tr_user[terms.k])

    S_k = xi * P * trk ** 2
    I_k = xi * P * terms.cross_user + sigma2 * sum_tr
    S_E = xi * M * M_E * (M - K) * terms.cross_eve
    I_E = (1.0 - xi) * (M - K - M_E) * terms.tr_eve * sum_tr

    gamma_k = S_k / I_k if I_k > 0 else (0.0 if S_k == 0 else math.inf)
    if S_E <= 0:
        gamma_E = 0.0
    elif I_E <= 0:
        # AN power is zero: the worst-case Eve is noiseless and interference-free
        gamma_E = math.inf
    else:
        gamma_E = S_E / I_E
    rate = _log2p(gamma_k)
    cap = _log2p(gamma_E)
    if math.isinf(cap):
        sec = 0.0
    else:
        sec = max(0.0, rate - cap)
    return SecrecyEval(S_k, I_k, S_E, I_E, gamma_k, gamma_E, rate, cap, sec, float(xi), terms.k)


def secrecy_closed_form(stats, phases, xi, k):
    """Closed-form ergodic secrecy rate of user ``k``."""
    terms = trace_terms(effective_correlations(stats, phases), k)
    return secrecy_from_terms(terms, stats.dims, xi)


def uncorrelated_sinrs(beta1, beta2, betaI, beta3, betaIE, M, N, K, M_E, P, sigma2,
                       xi, k, gram_fro2):
    """SINRs ``(gamma_k, gamma_E)`` under uncorrelated fading at BS and RIS.

    ``gram_fro2`` is ``||H1 H1^H||_F^2 = tr((H1 H1^H)^2)``; ``tr(H1 H1^H)``
    equals ``beta1 M N`` exactly for a constant-modulus LoS matrix.
    """
    b2 = np.asarray(beta2, dtype=float)
    bI = np.asarray(betaI, dtype=float)
    t = bI * beta1 * M * N + b2 * M  # tr(R_j)
    others = np.arange(len(b2)) != k
    num = xi * P * (bI[k] ** 2 * beta1 ** 2 * M ** 2 * N ** 2
                    + 2 * bI[k] * b2[k] * beta1 * M ** 2 * N
                    + b2[k] ** 2 * M ** 2)
    cross = (b2[k] * b2[others] * M
             + (b2[k] * bI[others] + bI[k] * b2[others]) * beta1 * M * N
             + bI[k] * bI[others] * gram_fro2)
    gamma_k = num / (xi * P * cross.sum() + sigma2 * t.sum())

    num_e = xi * M_E * (M - K) * (bI[k] * betaIE * gram_fro2
                                  + (bI[k] * beta3 + b2[k] * betaIE) * beta1 * M * N
                                  + b2[k] * beta3 * M)
    den_e = (1 - xi) * (M - K - M_E) * (beta3 + betaIE * beta1 * N) * t.sum()
    if num_e == 0:
        gamma_e = 0.0
    elif den_e == 0:
        gamma_e = math.inf
    else:
        gamma_e = num_e / den_e
    return float(gamma_k), float(gamma_e)


def large_ris_secrecy_limit(betaI, M, K, M_E, xi, k):
    """Large-RIS limit of the uncorrelated secrecy rate.

    Follows from substituting ``H1 H1^H = beta1 N I_M`` and keeping the
    leading order in ``N``; direct links and noise drop out. Returns
    ``math.inf`` for a single user (no interference floor).
    """
    bI = np.asarray(betaI, dtype=float)
    others = bI.sum() - bI[k]
    if others == 0:
        return math.inf
    if xi >= 1:
        return 0.0
    user = math.log2(1 + M * bI[k] / others)
    eve = math.log2(1 + xi * M_E * (M - K) * bI[k] / ((1 - xi) * (M - K - M_E) * bI.sum()))
    return max(0.0, user - eve)


def direct_link_secrecy_rate(stats, xi, k):
    """Secrecy rate with the RIS links removed (BS correlation retained).

    Written with ``delta = beta2_k / sum_j beta2_j`` and the unit-diagonal
    identity ``tr(R_Bk) = M``.
    """
    pl = stats.path_loss
    b2 = pl.beta2
    total = b2.sum()
    if total <= 0:
        raise DomainError("all direct-link gains are zero; the no-RIS rate is undefined")
    d = stats.dims
    M, K, M_E, P = d.M, d.K, d.M_E, d.P
    sigma2 = float(d.sigma2_user[k])
    delta = b2[k] / total
    RBk = stats.R_B_user[k]
    cross = sum(b2[i] * _tr_prod(RBk, stats.R_B_user[i]) for i in range(K) if i != k)
    user = math.log2(1 + (xi * b2[k] ** 2 * P * M ** 2 / total)
                     / (xi * P * delta * cross + sigma2 * M))
    if xi >= 1:
        return 0.0
    if pl.beta3 == 0:
        return max(0.0, user)
    eve = math.log2(1 + xi * M_E * (M - K) * b2[k] * _tr_prod(RBk, stats.R_B_eve)
                    / ((1 - xi) * M * (M - K - M_E) * total))
    return max(0.0, user - eve)


# names used by earlier callers
corollary1_uncorrelated = uncorrelated_sinrs
corollary2_asymptotic = large_ris_secrecy_limit
corollary3_no_ris = direct_link_secrecy_rate
