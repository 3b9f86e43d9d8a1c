"""Alternating maximization of the secrecy rate over the power fraction and
the RIS phases.

The power fraction has a closed-form maximizer for fixed phases; the phases
are updated by projected gradient ascent on the unit-modulus torus with a
backtracking line search. Gradients are Wirtinger derivatives with respect
to ``conj(phi)``: for a real objective ``f`` the first-order change under a
perturbation ``d`` of ``phi`` is ``2 Re(q^H d)``, and the derivative with
respect to the angle ``theta_n`` is ``2 Im(conj(phi_n) q_n)``.
"""
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize_scalar

from . import _kernels
from .analysis import effective_correlations, secrecy_from_terms, trace_terms
from .channel import PhaseVector, _as_phi
from .errors import DomainError, NumericalError

__all__ = [
    "PowerSplitCoefficients", "PowerFraction", "TraceRecord", "OptimizerState",
    "power_split_coefficients", "solve_power_fraction", "optimal_power_fraction",
    "phase_gradient", "project_unit_modulus", "line_search",
    "alternating_optimize", "multi_start",
]

LN2 = math.log(2.0)
GRID_POINTS = 10_000
GRID_TOL = 1e-3


# ---------------------------------------------------------------------------
# Power fraction
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class PowerSplitCoefficients:
    """``gamma_user = A1 xi / (A2 xi + A3)`` and ``gamma_eve = B1 xi / (1 - xi)``.

    The stationarity condition of the secrecy rate in ``xi`` is the quadratic
    ``a xi^2 + b xi + c = 0``.
    """

    A1: float
    A2: float
    A3: float
    B1: float

    @property
    def a(self):
        A1, A2, A3, B1 = self.A1, self.A2, self.A3, self.B1
        return B1 * (A1 * A2 + A1 * A3 + A2 * A2) - A1 * A3

    @property
    def b(self):
        return 2.0 * self.A3 * (self.A1 + self.B1 * self.A2)

    @property
    def c(self):
        return self.B1 * self.A3 ** 2 - self.A1 * self.A3

    @classmethod
    def from_terms(cls, terms, dims):
        M, K, M_E = dims.M, dims.K, dims.M_E
        sum_tr = float(terms.tr_user.sum())
        den = (M - K - M_E) * terms.tr_eve * sum_tr
        num = M * M_E * (M - K) * terms.cross_eve
        if num <= 0:
            B1 = 0.0
        elif den <= 0:
            B1 = math.inf
        else:
            B1 = num / den
        return cls(
            A1=dims.P * float(terms.tr_user[terms.k]) ** 2,
            A2=dims.P * terms.cross_user,
            A3=float(dims.sigma2_user[terms.k]) * sum_tr,
            B1=B1,
        )

    def rate(self, xi):
        """Unclamped secrecy rate on an array of power fractions."""
        xi = np.asarray(xi, dtype=float)
        with np.errstate(divide="ignore", invalid="ignore"):
            den = self.A2 * xi + self.A3
            gk = np.where(den > 0, self.A1 * xi / np.where(den > 0, den, 1.0),
                          np.where(xi > 0, np.inf, 0.0))
            if self.B1 == 0:
                ge = np.zeros_like(xi)
            else:
                ge = np.where(xi < 1, self.B1 * xi / np.where(xi < 1, 1.0 - xi, 1.0), np.inf)
            return np.log2(1.0 + gk) - np.log2(1.0 + ge)

    def stationary_point(self):
        """Root of the quadratic in ``(0, 1)``; written to avoid cancellation."""
        a, b, c = self.a, self.b, self.c
        disc = max(b * b - 4.0 * a * c, 0.0)
        den = b + math.sqrt(disc)
        return -2.0 * c / den if den > 0 else 0.0


def power_split_coefficients(stats, phases, k):
    terms = trace_terms(effective_correlations(stats, phases), k)
    return PowerSplitCoefficients.from_terms(terms, stats.dims)


@dataclass(frozen=True)
class PowerFraction:
    """Maximizing power fraction and how it was obtained.

    ``source`` is ``"closed_form"``, ``"fallback"`` (closed form disagreed
    with the grid check and golden-section refinement was used) or
    ``"degenerate"`` (boundary solution).
    """

    xi: float
    source: str
    coefficients: PowerSplitCoefficients
    grid_xi: float


def solve_power_fraction(coef, grid_points=GRID_POINTS, tol=GRID_TOL):
    """Maximize the secrecy rate over ``xi`` in [0, 1] and cross-check on a grid."""
    grid = np.linspace(0.0, 1.0, grid_points)
    vals = np.maximum(coef.rate(grid), 0.0)
    g_best = float(grid[int(np.argmax(vals))])

    if not coef.A1 > 0:
        return PowerFraction(0.0, "degenerate", coef, g_best)
    if coef.B1 == 0:
        return PowerFraction(1.0, "degenerate", coef, g_best)
    # the slope at xi = 0 is proportional to A1 / A3 - B1; noiseless users
    # (A3 = 0) see a rate that is flat in xi, so no power fraction beats 0
    if coef.A3 == 0 or coef.A1 / coef.A3 <= coef.B1:
        return PowerFraction(0.0, "degenerate", coef, g_best)

    xi = min(max(coef.stationary_point(), 0.0), 1.0)
    r_xi = max(float(coef.rate(xi)), 0.0)
    if abs(xi - g_best) <= tol or r_xi >= float(vals.max()) - 1e-12:
        return PowerFraction(xi, "closed_form", coef, g_best)

    h = 1.0 / (grid_points - 1)
    lo, hi = max(g_best - h, 0.0), min(g_best + h, 1.0 - 1e-15)
    res = minimize_scalar(lambda x: -float(coef.rate(x)), bounds=(lo, hi), method="bounded",
                          options={"xatol": 1e-12})
    return PowerFraction(float(res.x), "fallback", coef, g_best)


def optimal_power_fraction(stats, phases, k):
    """Power fraction maximizing the closed-form secrecy rate of user ``k``."""
    return solve_power_fraction(power_split_coefficients(stats, phases, k)).xi


# ---------------------------------------------------------------------------
# Gradient
# ---------------------------------------------------------------------------

class _Model:
    """Objective and gradient of one user's secrecy rate at fixed stats."""

    def __init__(self, stats, k):
        if not 0 <= k < stats.dims.K:
            raise DomainError(f"user index {k} out of range for K={stats.dims.K}")
        self.stats = stats
        self.k = k
        pl = stats.path_loss
        RI = stats.R_I_user
        self.bIk = float(pl.betaI[k])
        self.R_Ik = RI[k]
        if stats.shared_ris_correlation:
            self.R_I_all = pl.betaI.sum() * RI[0]
            self.R_I_others = (pl.betaI.sum() - pl.betaI[k]) * RI[0]
        else:
            self.R_I_all = np.einsum("k,kij->ij", pl.betaI, RI)
            self.R_I_others = self.R_I_all - self.bIk * RI[k]

    def evaluate(self, phi, xi):
        eff = effective_correlations(self.stats, phi)
        terms = trace_terms(eff, self.k)
        return secrecy_from_terms(terms, self.stats.dims, xi), eff, terms

    def objective(self, phi, xi):
        """Unclamped secrecy rate; ``-inf`` when Eve is unbounded."""
        ev, _, _ = self.evaluate(phi, xi)
        return _raw(ev)

    def gradient(self, phi, xi, ev=None, eff=None, terms=None):
        if ev is None:
            ev, eff, terms = self.evaluate(phi, xi)
        st = self.stats
        d = st.dims
        pl = st.path_loss
        k = self.k
        H1 = st.H1
        H1H = H1.conj().T

        def gram(C):
            return H1H @ C @ H1

        def diag(Y, R):
            return _kernels.diag_of_product(Y, phi[:, None] * R)

        Y0 = st.gram_H1
        R_k = eff.R_user[k]
        Yk = gram(R_k)
        Yo = gram(eff.R_user.sum(axis=0) - R_k)
        Yt = gram(eff.R_eve_total)

        tr_k = float(terms.tr_user[k])
        sum_tr = float(terms.tr_user.sum())
        sig2 = float(d.sigma2_user[k])
        d_sum_tr = diag(Y0, self.R_I_all)  # sum_j d tr(R_j)

        q = np.zeros(d.N, dtype=complex)
        if ev.I_user > 0 and xi > 0:
            dS = 2.0 * xi * d.P * tr_k * self.bIk * diag(Y0, self.R_Ik)
            dI = (xi * d.P * (self.bIk * diag(Yo, self.R_Ik) + diag(Yk, self.R_I_others))
                  + sig2 * d_sum_tr)
            g = ev.gamma_user
            dg = (dS - g * dI) / ev.I_user
            q += dg / ((1.0 + g) * LN2)
        if ev.S_eve > 0 and ev.I_eve > 0:
            cS = xi * d.M * d.M_E * (d.M - d.K)
            cI = (1.0 - xi) * (d.M - d.K - d.M_E)
            dS = cS * (self.bIk * diag(Yt, self.R_Ik) + pl.betaIE * diag(Yk, st.R_I_eve))
            dI = cI * (pl.betaIE * diag(Y0, st.R_I_eve) * sum_tr + terms.tr_eve * d_sum_tr)
            g = ev.gamma_eve
            dg = (dS - g * dI) / ev.I_eve
            q -= dg / ((1.0 + g) * LN2)
        return q


def _raw(ev):
    return -math.inf if math.isinf(ev.capacity_eve) else ev.rate_user - ev.capacity_eve


def phase_gradient(stats, phases, xi, k):
    """Wirtinger gradient ``d R_sec / d conj(phi_n)`` of the unclamped secrecy rate."""
    return _Model(stats, k).gradient(_as_phi(phases), float(xi))


def project_unit_modulus(v):
    """Entrywise ``exp(j arg v)``; exact zeros map to 1."""
    v = np.asarray(v, dtype=complex)
    mag = np.abs(v)
    out = np.ones_like(v)
    nz = mag > 0
    out[nz] = v[nz] / mag[nz]
    return out


def _tangential_norm(phi, q):
    return float(np.linalg.norm(2.0 * np.imag(np.conj(phi) * q)))


# ---------------------------------------------------------------------------
# Optimizer state and line search
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class TraceRecord:
    outer: int
    inner: int
    xi: float
    secrecy_rate: float
    grad_norm: float
    step: float

    def as_dict(self):
        return {f: getattr(self, f) for f in self.__dataclass_fields__}


@dataclass
class OptimizerState:
    """Iterate of the alternating optimizer.

    ``objective`` is the clamped secrecy rate, ``objective_raw`` the
    unclamped difference the ascent works on (they agree whenever the rate is
    positive). ``outer`` and ``inner`` count completed outer iterations and
    total inner iterations.
    """

    phases: PhaseVector
    xi: float
    objective: float
    objective_raw: float
    gradient: np.ndarray = None
    step: float = 0.0
    outer: int = 0
    inner: int = 0
    trace: list = field(default_factory=list)
    converged: bool = False
    xi_source: str = ""
    stationarity: float = math.nan
    k: int = 0


def _armijo(model, phi, xi, f0, q, mu0, shrink=0.5, c1=1e-4, max_halvings=50):
    """Backtrack on the projected step; returns ``(mu, phi_new, f_new)``."""
    mu = mu0
    for _ in range(max_halvings + 1):
        new = project_unit_modulus(phi + mu * q)
        pred = 2.0 * float(np.real(np.vdot(q, new - phi)))
        f = model.objective(new, xi)
        if f >= f0 + c1 * pred and f > f0:
            return mu, new, f
        mu *= shrink
    return 0.0, phi, f0


def _initial_step(q):
    # scale-free: the first trial moves the largest entry by one unit, since
    # gradients here are often orders of magnitude below 1
    m = float(np.max(np.abs(q))) if len(q) else 0.0
    return 1.0 / m if m > 0 else 1.0


def line_search(stats, state, k, shrink=0.5, c1=1e-4, max_halvings=50):
    """Backtracking step size for the projected gradient update of ``state``.

    Starts from ``1 / ||q||_inf`` and halves until the projected
    point satisfies the Armijo condition; returns 0 if none of the
    ``max_halvings`` trial steps does.
    """
    model = _Model(stats, k)
    phi = state.phases.phi
    q = state.gradient if state.gradient is not None else model.gradient(phi, state.xi)
    if not np.any(q):
        return 0.0
    f0 = model.objective(phi, state.xi)
    mu, _, _ = _armijo(model, phi, state.xi, f0, q, _initial_step(q), shrink, c1, max_halvings)
    return mu


# ---------------------------------------------------------------------------
# Alternating optimization
# ---------------------------------------------------------------------------

def _check(value, state, what):
    if not (math.isfinite(value) or value == -math.inf):
        raise NumericalError(f"non-finite {what}: {value}", state)


def alternating_optimize(stats, k, epsilon=1e-4, max_outer=50, max_inner=500,
                         xi=None, initial=None, xi0=0.5, callback=None):
    """Maximize the secrecy rate of user ``k`` over ``(xi, phases)``.

    Parameters
    ----------
    stats : ChannelStats
    k : int
        User whose secrecy rate is maximized.
    epsilon : float
        Stop when an inner loop, or a whole outer iteration, improves the
        rate by less than this (bits/s/Hz).
    max_outer, max_inner : int
        Iteration limits.
    xi : float, optional
        Hold the power fraction at this value and optimize phases only.
    initial : PhaseVector, optional
        Starting phases; defaults to all ``pi/2``.
    xi0 : float
        Power fraction used to report the starting objective.
    callback : callable, optional
        Called with every :class:`TraceRecord` as it is produced.

    Returns
    -------
    OptimizerState
    """
    if not epsilon > 0:
        raise DomainError("epsilon must be positive")
    fixed = xi is not None
    if fixed and not 0.0 <= xi <= 1.0:
        raise DomainError(f"power fraction must lie in [0, 1], got {xi}")
    model = _Model(stats, k)
    phases = initial if initial is not None else PhaseVector.constant(stats.dims.N)
    phi = np.array(phases.phi)
    x = float(xi) if fixed else float(xi0)

    ev, eff, terms = model.evaluate(phi, x)
    f = _raw(ev)
    state = OptimizerState(PhaseVector.from_phi(phi), x, ev.secrecy_rate, f, k=k)
    _check(f, state, "initial objective")

    def record(outer, inner, grad_norm, step):
        rec = TraceRecord(outer, inner, state.xi, state.objective, grad_norm, step)
        state.trace.append(rec)
        if callback is not None:
            callback(rec)

    record(0, 0, math.nan, 0.0)
    total_inner = 0
    for t in range(1, max_outer + 1):
        f_outer = f
        if not fixed:
            pf = solve_power_fraction(PowerSplitCoefficients.from_terms(terms, stats.dims))
            x = pf.xi
            state.xi_source = pf.source
            ev, eff, terms = model.evaluate(phi, x)
            f_new = _raw(ev)
            # the closed form maximizes over xi, so it can only tie or improve
            if f_new >= f:
                f = f_new
            state.xi, state.objective, state.objective_raw = x, ev.secrecy_rate, f
            record(t, total_inner, math.nan, 0.0)

        f_inner = f
        q = model.gradient(phi, x, ev, eff, terms)
        for _ in range(max_inner):
            mu, new, f_new = _armijo(model, phi, x, f, q, _initial_step(q))
            total_inner += 1
            state.step = mu
            if mu == 0.0:
                record(t, total_inner, _tangential_norm(phi, q), 0.0)
                break
            gain = f_new - f
            phi, f = new, f_new
            ev, eff, terms = model.evaluate(phi, x)
            _check(f, state, "objective")
            q = model.gradient(phi, x, ev, eff, terms)
            state.phases = PhaseVector.from_phi(phi)
            state.objective, state.objective_raw = ev.secrecy_rate, f
            record(t, total_inner, _tangential_norm(phi, q), mu)
            if gain < epsilon:
                break

        state.outer, state.inner = t, total_inner
        state.gradient = q
        state.stationarity = _tangential_norm(phi, q)
        if fixed or f - f_inner < epsilon or f - f_outer < epsilon:
            state.converged = True
            break

    state.phases = PhaseVector.from_phi(phi)
    return state


def _run_start(stats, k, initial, kwargs):
    return alternating_optimize(stats, k, initial=initial, **kwargs)


def multi_start(stats, k, starts=1, seed=0, threads=1, **kwargs):
    """Best of ``starts`` optimizer runs.

    The first run uses the default all-``pi/2`` initialization, the others
    draw uniform phases from independent child streams of ``seed``, so the
    result does not depend on ``threads``.

    Returns
    -------
    best : OptimizerState
    objectives : list of float
        Final secrecy rate of every run, in start order.
    """
    if starts < 1:
        raise DomainError("starts must be at least 1")
    N = stats.dims.N
    children = np.random.SeedSequence(seed).spawn(starts)
    inits = [None] + [PhaseVector.random(N, np.random.default_rng(c)) for c in children[1:]]
    if threads > 1 and starts > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            runs = list(pool.map(lambda init: _run_start(stats, k, init, kwargs), inits))
    else:
        runs = [_run_start(stats, k, init, kwargs) for init in inits]
    objectives = [r.objective for r in runs]
    best = max(range(starts), key=lambda i: (runs[i].objective_raw, -i))
    return runs[best], objectives
