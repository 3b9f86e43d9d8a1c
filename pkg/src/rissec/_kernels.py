"""Hot numeric kernels with a numba path and a pure-numpy fallback.

The numba path is used when numba imports cleanly and the environment
variable ``RISSEC_DISABLE_NUMBA`` is unset (or ``0``). Both paths are
always importable as ``*_numpy`` / ``*_numba`` so they can be compared
directly (see ``benchmarks/bench_kernels.py``).
"""
import os

import numpy as np

# Eve noise-correlation matrices with a larger eigenvalue spread are discarded.
COND_LIMIT = 1e12


def _numba_requested():
    return os.environ.get("RISSEC_DISABLE_NUMBA", "0").strip().lower() in ("", "0", "false", "no")


try:
    from numba import njit

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - numba is a declared dependency
    HAVE_NUMBA = False

USE_NUMBA = HAVE_NUMBA and _numba_requested()


# ---------------------------------------------------------------------------
# diag(Y @ Z) without forming the product
# ---------------------------------------------------------------------------

def diag_of_product_numpy(Y, Z):
    return np.einsum("ij,ji->i", Y, Z)


# ---------------------------------------------------------------------------
# per-trial Monte Carlo statistics
# ---------------------------------------------------------------------------

def trial_statistics_numpy(h_k, H_est, W, H_eve, k, eve_load):
    """Per-trial quantities behind the user-rate and Eve-capacity estimators.

    Parameters
    ----------
    h_k : (T, M) complex
        True channel of the user of interest.
    H_est : (T, M, K) complex
        Channel matrix the BS designs its precoders from.
    W : (T, M, K) complex
        Data precoder per trial.
    H_eve : (T, M, M_E) complex
        True Eve channel.
    k : int
        Column of ``W`` carrying the user's data.
    eve_load : float
        Diagonal loading ``sigma_E^2 / q`` added to Eve's noise correlation.

    Returns
    -------
    gains : (T, K) complex
        ``h_k^H w_i`` for every precoder column.
    leak : (T,) float
        ``||V^H h_k||^2``, the AN power reaching the user (per unit q).
    eve : (T,) float
        ``w_k^H H_E Y^{-1} H_E^H w_k`` with ``Y = H_E^H V V^H H_E``; NaN
        where the trial was discarded.
    cond : (T,) float
        Condition number of ``Y``.
    """
    Q, _ = np.linalg.qr(H_est)
    QH = np.conj(np.swapaxes(Q, 1, 2))
    gains = np.einsum("tm,tmi->ti", np.conj(h_k), W)

    r = h_k - np.einsum("tmk,tk->tm", Q, np.einsum("tkm,tm->tk", QH, h_k))
    leak = np.sum(np.abs(r) ** 2, axis=1)

    He_perp = H_eve - Q @ (QH @ H_eve)
    Y = np.conj(np.swapaxes(H_eve, 1, 2)) @ He_perp
    Y = 0.5 * (Y + np.conj(np.swapaxes(Y, 1, 2)))
    m_e = Y.shape[1]
    if eve_load:
        Y = Y + eve_load * np.eye(m_e)
    u = np.einsum("tme,tm->te", np.conj(H_eve), W[:, :, k])

    ev = np.linalg.eigvalsh(Y)
    lo, hi = ev[:, 0], ev[:, -1]
    with np.errstate(divide="ignore", invalid="ignore"):
        cond = np.where(lo > 0, hi / lo, np.inf)
    ok = cond <= COND_LIMIT
    eve = np.full(h_k.shape[0], np.nan)
    if np.any(ok):
        y = np.linalg.solve(Y[ok], u[ok][..., None])[..., 0]
        eve[ok] = np.real(np.sum(np.conj(u[ok]) * y, axis=1))
    return gains, leak, eve, cond


if HAVE_NUMBA:

    @njit(cache=True)
    def diag_of_product_numba(Y, Z):
        n = Y.shape[0]
        inner = Y.shape[1]
        out = np.empty(n, dtype=np.complex128)
        for i in range(n):
            acc = 0j
            for j in range(inner):
                acc += Y[i, j] * Z[j, i]
            out[i] = acc
        return out

    @njit(cache=True)
    def trial_statistics_numba(h_k, H_est, W, H_eve, k, eve_load):
        T, M, K = H_est.shape
        m_e = H_eve.shape[2]
        gains = np.empty((T, K), dtype=np.complex128)
        leak = np.empty(T)
        eve = np.full(T, np.nan)
        cond = np.empty(T)
        for t in range(T):
            Q, _ = np.linalg.qr(np.ascontiguousarray(H_est[t]))
            Q = np.ascontiguousarray(Q)
            QH = np.ascontiguousarray(np.conj(Q.T))
            h = np.ascontiguousarray(h_k[t])
            Wt = np.ascontiguousarray(W[t])
            for i in range(K):
                acc = 0j
                for m in range(M):
                    acc += np.conj(h[m]) * Wt[m, i]
                gains[t, i] = acc

            r = h - Q @ (QH @ h)
            s = 0.0
            for m in range(M):
                s += r[m].real ** 2 + r[m].imag ** 2
            leak[t] = s

            He = np.ascontiguousarray(H_eve[t])
            HeH = np.ascontiguousarray(np.conj(He.T))
            He_perp = He - Q @ (QH @ He)
            Y = HeH @ He_perp
            Y = 0.5 * (Y + np.conj(Y.T))
            for e in range(m_e):
                Y[e, e] += eve_load
            u = HeH @ np.ascontiguousarray(Wt[:, k])

            ev = np.linalg.eigvalsh(Y)
            lo = ev[0]
            hi = ev[m_e - 1]
            c = hi / lo if lo > 0 else np.inf
            cond[t] = c
            if c <= COND_LIMIT:
                y = np.linalg.solve(Y, u)
                acc = 0j
                for e in range(m_e):
                    acc += np.conj(u[e]) * y[e]
                eve[t] = acc.real
        return gains, leak, eve, cond

else:  # pragma: no cover
    diag_of_product_numba = diag_of_product_numpy
    trial_statistics_numba = trial_statistics_numpy


def diag_of_product(Y, Z):
    """Return ``diag(Y @ Z)`` in O(n^2) operations."""
    if USE_NUMBA:
        c = np.complex128
        return diag_of_product_numba(np.ascontiguousarray(Y, dtype=c),
                                     np.ascontiguousarray(Z, dtype=c))
    return diag_of_product_numpy(Y, Z)


def trial_statistics(h_k, H_est, W, H_eve, k, eve_load=0.0):
    if USE_NUMBA:
        c = np.complex128
        return trial_statistics_numba(np.ascontiguousarray(h_k, dtype=c),
                                      np.ascontiguousarray(H_est, dtype=c),
                                      np.ascontiguousarray(W, dtype=c),
                                      np.ascontiguousarray(H_eve, dtype=c),
                                      int(k), float(eve_load))
    return trial_statistics_numpy(h_k, H_est, W, H_eve, k, eve_load)


def backend():
    return "numba" if USE_NUMBA else "numpy"
