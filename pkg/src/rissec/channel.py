"""Statistical channel model: correlation matrices, path losses, LoS matrix
and random channel realizations for the RIS-assisted downlink.

Array conventions
-----------------
Per-user quantities are stacked along a leading user axis (``R_B_user`` is
``(K, M, M)``) while channel vectors are stacked as matrix columns
(``h_user`` is ``(M, K)``, the usual ``H = [h_1, ..., h_K]``). Realizations
may carry an extra leading trial axis.
"""
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from .errors import DimensionError, DomainError, GeometryError, NotPSDError

# Negative eigenvalues above this are round-off and are clipped to zero.
PSD_TOL = 1e-10


def _frozen(a, dtype=None):
    a = np.array(a, dtype=dtype)
    a.setflags(write=False)
    return a


def _sqrt_stack(stack):
    if stack.strides[0] == 0:
        return _frozen_stack(sqrt_psd(stack[0]), len(stack), stack.shape[1:])
    return _frozen_stack([sqrt_psd(R) for R in stack], len(stack), stack.shape[1:])


def _frozen_stack(mats, count, shape):
    """Stack per-user matrices; a single shared matrix is broadcast, not copied."""
    a = np.asarray(mats)
    if a.ndim == 2:
        a = np.broadcast_to(a, (count,) + a.shape)
    if a.shape != (count,) + shape:
        raise DimensionError(f"expected shape {(count,) + shape}, got {a.shape}")
    if a.strides[0] != 0:
        a = a.copy()
    a.setflags(write=False)
    return a


# ---------------------------------------------------------------------------
# Domain types
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SystemDims:
    """Counts and power scalars.

    ``sigma2_user`` holds one noise power per user (a scalar is broadcast).
    ``sigma2_eve`` is informational: the worst-case Eve analysis sets it to 0.
    """

    M: int
    N: int
    K: int
    M_E: int
    P: float
    sigma2_user: np.ndarray
    sigma2_eve: float = 0.0

    def __post_init__(self):
        for name in ("M", "N", "K", "M_E"):
            v = getattr(self, name)
            if int(v) != v or v < 1:
                raise DomainError(f"{name} must be a positive integer, got {v!r}")
            object.__setattr__(self, name, int(v))
        if not self.M > self.K + self.M_E:
            raise DomainError(f"need M > K + M_E, got M={self.M}, K={self.K}, M_E={self.M_E}")
        if not self.P > 0:
            raise DomainError(f"P must be positive, got {self.P!r}")
        s2 = np.broadcast_to(np.asarray(self.sigma2_user, dtype=float), (self.K,))
        if np.any(s2 < 0) or self.sigma2_eve < 0:
            raise DomainError("noise powers must be nonnegative")
        object.__setattr__(self, "sigma2_user", _frozen(s2))
        object.__setattr__(self, "P", float(self.P))
        object.__setattr__(self, "sigma2_eve", float(self.sigma2_eve))


@dataclass(frozen=True)
class Geometry:
    """Node positions in meters; the RIS is an ``N_H x N_V`` grid."""

    bs_positions: np.ndarray
    ris_positions: np.ndarray
    ris_grid: tuple
    ris_spacing: tuple
    user_positions: np.ndarray
    eve_position: np.ndarray
    wavelength: float

    def __post_init__(self):
        for name in ("bs_positions", "ris_positions", "user_positions"):
            a = np.atleast_2d(np.asarray(getattr(self, name), dtype=float))
            if a.shape[1] != 3:
                raise GeometryError(f"{name} must be (n, 3)")
            object.__setattr__(self, name, _frozen(a))
        eve = np.asarray(self.eve_position, dtype=float).reshape(3)
        object.__setattr__(self, "eve_position", _frozen(eve))
        n_h, n_v = (int(x) for x in self.ris_grid)
        if n_h * n_v != len(self.ris_positions):
            raise GeometryError(
                f"RIS grid {n_h}x{n_v} does not match {len(self.ris_positions)} elements")
        object.__setattr__(self, "ris_grid", (n_h, n_v))
        object.__setattr__(self, "ris_spacing", tuple(float(x) for x in self.ris_spacing))
        if not self.wavelength > 0:
            raise GeometryError("wavelength must be positive")
        if np.min(self.bs_ris_distances) <= 0:
            raise GeometryError("a BS antenna coincides with a RIS element")

    @cached_property
    def bs_ris_distances(self):
        """``(M, N)`` distances between BS antennas and RIS elements."""
        return np.linalg.norm(self.bs_positions[:, None, :] - self.ris_positions[None, :, :], axis=-1)

    @property
    def M(self):
        return len(self.bs_positions)

    @property
    def N(self):
        return len(self.ris_positions)


@dataclass(frozen=True)
class PathLossSet:
    beta1: float
    beta2: np.ndarray
    beta3: float
    betaI: np.ndarray
    betaIE: float

    def __post_init__(self):
        b2 = _frozen(np.atleast_1d(np.asarray(self.beta2, dtype=float)))
        bI = _frozen(np.atleast_1d(np.asarray(self.betaI, dtype=float)))
        if b2.shape != bI.shape:
            raise DimensionError("beta2 and betaI must have one entry per user")
        object.__setattr__(self, "beta2", b2)
        object.__setattr__(self, "betaI", bI)
        for name in ("beta1", "beta3", "betaIE"):
            object.__setattr__(self, name, float(getattr(self, name)))
        if min(self.beta1, self.beta3, self.betaIE) < 0 or np.any(b2 < 0) or np.any(bI < 0):
            raise DomainError("path-loss gains must be nonnegative")

    def without_ris(self):
        """Copy with every RIS-side gain set to zero."""
        return PathLossSet(self.beta1, self.beta2, self.beta3, np.zeros_like(self.betaI), 0.0)


@dataclass(frozen=True)
class PhaseVector:
    """Unit-modulus RIS coefficients ``phi_n = exp(j theta_n)``."""

    theta: np.ndarray

    def __post_init__(self):
        th = np.mod(np.asarray(self.theta, dtype=float).ravel(), 2 * np.pi)
        object.__setattr__(self, "theta", _frozen(th))

    @cached_property
    def phi(self):
        return _frozen(np.exp(1j * self.theta))

    @classmethod
    def from_phi(cls, phi):
        return cls(np.angle(np.asarray(phi)))

    @classmethod
    def constant(cls, n, theta=np.pi / 2):
        return cls(np.full(n, theta))

    @classmethod
    def random(cls, n, rng):
        return cls(rng.uniform(0.0, 2 * np.pi, n))

    def __len__(self):
        return len(self.theta)


def _as_phi(phases):
    if isinstance(phases, PhaseVector):
        return phases.phi
    return np.asarray(phases, dtype=complex)


@dataclass(frozen=True)
class ChannelStats:
    """Statistical CSI: correlations, path losses and the LoS BS-RIS matrix.

    A correlation argument may be a single matrix shared by all users; it is
    then stored as a broadcast view and every consumer computes with it once.
    """

    R_B_user: np.ndarray
    R_I_user: np.ndarray
    R_B_eve: np.ndarray
    R_I_eve: np.ndarray
    H1: np.ndarray
    path_loss: PathLossSet
    dims: SystemDims
    validate: bool = field(default=True, repr=False, compare=False)

    def __post_init__(self):
        M, N, K = self.dims.M, self.dims.N, self.dims.K
        object.__setattr__(self, "R_B_user", _frozen_stack(self.R_B_user, K, (M, M)))
        object.__setattr__(self, "R_I_user", _frozen_stack(self.R_I_user, K, (N, N)))
        for name, n in (("R_B_eve", M), ("R_I_eve", N)):
            a = _frozen(getattr(self, name))
            if a.shape != (n, n):
                raise DimensionError(f"{name} must be {n}x{n}, got {a.shape}")
            object.__setattr__(self, name, a)
        H1 = _frozen(self.H1, dtype=complex)
        if H1.shape != (M, N):
            raise DimensionError(f"H1 must be {M}x{N}, got {H1.shape}")
        object.__setattr__(self, "H1", H1)
        if len(self.path_loss.beta2) != K:
            raise DimensionError("path-loss vectors must have K entries")
        if self.validate:
            for R in self._distinct(self.R_B_user) + self._distinct(self.R_I_user) + [self.R_B_eve, self.R_I_eve]:
                check_correlation(R)

    @staticmethod
    def _distinct(stack):
        return [stack[0]] if stack.strides[0] == 0 else list(stack)

    @property
    def shared_ris_correlation(self):
        """True when all users share one RIS correlation matrix."""
        return self.R_I_user.strides[0] == 0

    @cached_property
    def sqrt_R_B_user(self):
        return _sqrt_stack(self.R_B_user)

    @cached_property
    def sqrt_R_I_user(self):
        return _sqrt_stack(self.R_I_user)

    @cached_property
    def sqrt_R_B_eve(self):
        return _frozen(sqrt_psd(self.R_B_eve))

    @cached_property
    def sqrt_R_I_eve(self):
        return _frozen(sqrt_psd(self.R_I_eve))

    @cached_property
    def gram_H1(self):
        """``H1^H H1`` (N x N), independent of the phases."""
        return _frozen(self.H1.conj().T @ self.H1)

    def replace(self, **changes):
        """Return a copy with some fields replaced (``dims`` fields allowed too)."""
        dim_fields = {"M", "N", "K", "M_E", "P", "sigma2_user", "sigma2_eve"}
        dim_changes = {k: changes.pop(k) for k in list(changes) if k in dim_fields}
        kw = dict(R_B_user=self.R_B_user, R_I_user=self.R_I_user, R_B_eve=self.R_B_eve,
                  R_I_eve=self.R_I_eve, H1=self.H1, path_loss=self.path_loss, dims=self.dims,
                  validate=False)
        if dim_changes:
            d = self.dims
            kw["dims"] = SystemDims(**{**dict(M=d.M, N=d.N, K=d.K, M_E=d.M_E, P=d.P,
                                              sigma2_user=d.sigma2_user, sigma2_eve=d.sigma2_eve),
                                       **dim_changes})
        kw.update(changes)
        return ChannelStats(**kw)


@dataclass(frozen=True)
class ChannelRealization:
    """One (or a batch of) channel draw(s).

    ``h_user`` is ``(..., M, K)`` and ``H_eve`` is ``(..., M, M_E)``; the raw
    unit-variance Gaussian parts are kept so the effective channels can be
    recomposed, e.g. after an imperfect-CSI transformation.
    """

    h_user: np.ndarray
    H_eve: np.ndarray
    g_I: np.ndarray
    g_B: np.ndarray
    G_IE: np.ndarray
    G_BE: np.ndarray
    phi: np.ndarray
    stats: ChannelStats = field(repr=False)


# ---------------------------------------------------------------------------
# Correlation matrices
# ---------------------------------------------------------------------------

def exp_correlation(n, rho):
    """Exponential correlation ``[R]_{ij} = rho^{|i-j|}``."""
    if n < 1:
        raise DomainError(f"dimension must be positive, got {n}")
    if not 0 <= rho < 1:
        raise DomainError(f"rho must lie in [0, 1), got {rho}")
    idx = np.arange(n)
    return float(rho) ** np.abs(idx[:, None] - idx[None, :])


def grid_positions(n_h, n_v, d_h, d_v):
    """Element coordinates of a centered rectangular grid in the y-z plane."""
    if n_h < 1 or n_v < 1:
        raise GeometryError(f"grid dimensions must be positive, got {n_h}x{n_v}")
    y = (np.arange(n_h) - (n_h - 1) / 2) * d_h
    z = (np.arange(n_v) - (n_v - 1) / 2) * d_v
    yy, zz = np.meshgrid(y, z, indexing="ij")
    return np.stack([np.zeros(n_h * n_v), yy.ravel(), zz.ravel()], axis=1)


def ris_correlation(grid, d_h, d_v, wavelength):
    """Isotropic-scattering RIS correlation ``sinc(2 ||u_m - u_n|| / lambda)``."""
    try:
        n_h, n_v = (int(x) for x in grid)
    except (TypeError, ValueError):
        raise GeometryError(f"RIS grid must be a pair (N_H, N_V), got {grid!r}") from None
    if n_h < 1 or n_v < 1:
        raise GeometryError(f"RIS grid must be positive, got {grid!r}")
    if not (d_h > 0 and d_v > 0 and wavelength > 0):
        raise GeometryError("spacings and wavelength must be positive")
    u = grid_positions(n_h, n_v, d_h, d_v)
    dist = np.linalg.norm(u[:, None, :] - u[None, :, :], axis=-1)
    return repair_psd(np.sinc(2.0 * dist / wavelength))


def check_correlation(R, tol=1e-12):
    """Raise unless ``R`` is Hermitian with unit diagonal."""
    R = np.asarray(R)
    scale = max(np.linalg.norm(R), 1.0)
    if np.linalg.norm(R - R.conj().T) > tol * scale:
        raise NotPSDError("correlation matrix is not Hermitian")
    if np.max(np.abs(np.diag(R) - 1.0)) > tol:
        raise NotPSDError("correlation matrix must have a unit diagonal")


def repair_psd(R):
    """Clip round-off negative eigenvalues; larger negatives raise."""
    R = 0.5 * (R + R.conj().T)
    w, U = np.linalg.eigh(R)
    if w[0] >= 0:
        return R
    if w[0] < -PSD_TOL:
        raise NotPSDError(f"smallest eigenvalue {w[0]:.3e} is below -{PSD_TOL:g}")
    w = np.clip(w, 0.0, None)
    out = (U * w) @ U.conj().T
    out = 0.5 * (out + out.conj().T)
    # restore the exact unit diagonal lost to the reconstruction
    d = np.sqrt(np.real(np.diag(out)))
    out = out / np.outer(d, d)
    return out.real if np.isrealobj(R) else out


def sqrt_psd(R):
    """Hermitian PSD square root via eigendecomposition."""
    R = np.asarray(R)
    if np.linalg.norm(R - R.conj().T) > 1e-10 * max(np.linalg.norm(R), 1.0):
        raise NotPSDError("matrix is not Hermitian")
    w, U = np.linalg.eigh(0.5 * (R + R.conj().T))
    if w[0] < -PSD_TOL:
        raise NotPSDError(f"smallest eigenvalue {w[0]:.3e} is below -{PSD_TOL:g}")
    S = (U * np.sqrt(np.clip(w, 0.0, None))) @ U.conj().T
    S = 0.5 * (S + S.conj().T)
    return S.real if np.isrealobj(R) else S


# ---------------------------------------------------------------------------
# Path loss and LoS channel
# ---------------------------------------------------------------------------

def path_loss(d, exponent, C0=1e-2, D0=1.0):
    """Distance-dependent gain ``C0 (d / D0)^(-exponent)``."""
    d = np.asarray(d, dtype=float)
    if np.any(d <= 0):
        raise DomainError("distance must be positive")
    out = C0 * (d / D0) ** (-exponent)
    return float(out) if out.ndim == 0 else out


def numerical_rank(A, rtol=None):
    """Rank of ``A`` with numpy's default (or a relative) singular value cutoff."""
    s = np.linalg.svd(A, compute_uv=False)
    if rtol is None:
        rtol = max(A.shape) * np.finfo(float).eps
    return int(np.sum(s > rtol * s[0])) if s[0] > 0 else 0


def los_channel(geometry, beta1, min_rank=None, rtol=None):
    """LoS BS-RIS matrix ``[H1]_{m,n} = sqrt(beta1) exp(-j 2 pi d_{m,n} / lambda)``.

    Structurally degenerate geometries (repeated antenna or element
    positions, which duplicate rows or columns) are always rejected. A
    numerical rank requirement is opt-in through ``min_rank``; pass
    ``min_rank=min(M, N)`` to demand a numerically full-rank matrix.
    """
    if beta1 < 0:
        raise DomainError("beta1 must be nonnegative")
    for name, pos in (("BS antenna", geometry.bs_positions), ("RIS element", geometry.ris_positions)):
        d = np.linalg.norm(pos[:, None, :] - pos[None, :, :], axis=-1)
        d[np.diag_indices_from(d)] = np.inf
        if np.min(d, initial=np.inf) <= 0:
            raise GeometryError(f"two {name} positions coincide")
    H1 = np.sqrt(beta1) * np.exp(-2j * np.pi * geometry.bs_ris_distances / geometry.wavelength)
    if min_rank is not None and beta1 > 0:
        r = numerical_rank(H1, rtol)
        if r < min_rank:
            raise GeometryError(f"LoS matrix has numerical rank {r} < required {min_rank}")
    return H1


def near_square(n):
    """Factor ``n = a * b`` with ``a <= b`` as close as possible."""
    a = int(np.sqrt(n))
    while n % a:
        a -= 1
    return a, n // a


def high_rank_spacing(n_bs, n_ris, distance, ris_spacing_ref):
    """BS element spacing that makes a facing array pair's LoS matrix orthogonal.

    Uses the paraxial rule ``s_bs * s_ris = lambda D / max(n_bs, n_ris)``,
    with the product expressed relative to ``ris_spacing_ref`` given in
    wavelengths; the result is in wavelengths too.
    """
    return distance / (max(n_bs, n_ris) * ris_spacing_ref)


def cluster_center(bs_ris_distance, d_bs, d_ris):
    """Point in the z=0 plane at ``d_bs`` from the BS (origin) and ``d_ris`` from the RIS."""
    D = bs_ris_distance
    x = (d_bs ** 2 - d_ris ** 2 + D ** 2) / (2 * D)
    y2 = d_bs ** 2 - x ** 2
    if y2 < 0:
        raise GeometryError("cluster distances violate the triangle inequality")
    return np.array([x, np.sqrt(y2), 0.0])


def sample_disk(center, radius, count, rng):
    """Uniform points in a horizontal disk."""
    r = radius * np.sqrt(rng.random(count))
    a = rng.uniform(0.0, 2 * np.pi, count)
    return center + np.stack([r * np.cos(a), r * np.sin(a), np.zeros(count)], axis=1)


def build_geometry(M, N, K, rng, wavelength=0.1, bs_ris_distance=20.0,
                   ris_grid=None, ris_spacing=(0.25, 0.25), bs_grid=None,
                   bs_spacing=("auto", "auto"), ris_rotation=0.0,
                   cluster_bs=60.0, cluster_ris=50.0, cluster_radius=3.0):
    """Place the BS planar array at the origin facing a RIS grid on the x axis.

    Spacings are in wavelengths. ``"auto"`` BS spacing applies
    :func:`high_rank_spacing` against a quarter-wavelength RIS reference so
    the BS array stays fixed when the RIS spacing is varied. ``ris_rotation``
    turns the RIS about the vertical axis through its center (radians).
    Users and Eve are drawn uniformly in the cluster disk; Eve is drawn last.
    """
    ris_grid = tuple(ris_grid) if ris_grid is not None else near_square(N)
    bs_grid = tuple(bs_grid) if bs_grid is not None else near_square(M)
    if ris_grid[0] * ris_grid[1] != N:
        raise GeometryError(f"RIS grid {ris_grid} does not have {N} elements")
    if bs_grid[0] * bs_grid[1] != M:
        raise GeometryError(f"BS grid {bs_grid} does not have {M} antennas")
    lam = wavelength
    sp_bs = []
    for s, n_b, n_r in zip(bs_spacing, bs_grid, ris_grid):
        sp_bs.append(high_rank_spacing(n_b, n_r, bs_ris_distance / lam, 0.25) if s == "auto" else float(s))
    bs = grid_positions(bs_grid[0], bs_grid[1], sp_bs[0] * lam, sp_bs[1] * lam)
    ris = grid_positions(ris_grid[0], ris_grid[1], ris_spacing[0] * lam, ris_spacing[1] * lam)
    c, s = np.cos(ris_rotation), np.sin(ris_rotation)
    ris = ris @ np.array([[c, s, 0.0], [-s, c, 0.0], [0.0, 0.0, 1.0]])
    ris = ris + np.array([bs_ris_distance, 0.0, 0.0])
    pts = sample_disk(cluster_center(bs_ris_distance, cluster_bs, cluster_ris), cluster_radius, K + 1, rng)
    return Geometry(bs, ris, ris_grid, (ris_spacing[0] * lam, ris_spacing[1] * lam),
                    pts[:K], pts[K], lam)


def geometry_path_losses(geometry, bs_ris_distance, C0=1e-2, D0=1.0,
                         exp_bs_ris=2.0, exp_ris_side=2.2, exp_direct=3.0):
    """Large-scale gains from node distances (array centers for the RIS and BS)."""
    bs_c = geometry.bs_positions.mean(axis=0)
    ris_c = geometry.ris_positions.mean(axis=0)
    d_bu = np.linalg.norm(geometry.user_positions - bs_c, axis=1)
    d_ru = np.linalg.norm(geometry.user_positions - ris_c, axis=1)
    return PathLossSet(
        beta1=path_loss(bs_ris_distance, exp_bs_ris, C0, D0),
        beta2=path_loss(d_bu, exp_direct, C0, D0),
        beta3=path_loss(np.linalg.norm(geometry.eve_position - bs_c), exp_direct, C0, D0),
        betaI=path_loss(d_ru, exp_ris_side, C0, D0),
        betaIE=path_loss(np.linalg.norm(geometry.eve_position - ris_c), exp_ris_side, C0, D0),
    )


# ---------------------------------------------------------------------------
# Random realizations
# ---------------------------------------------------------------------------

def crandn(rng, shape):
    """Circularly symmetric complex Gaussian with unit variance."""
    return (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) * np.sqrt(0.5)


def draw_parts(stats, rng, trials=None):
    """Draw the four unit-variance Gaussian blocks (optionally ``trials`` of them)."""
    d = stats.dims
    lead = () if trials is None else (trials,)
    return (crandn(rng, lead + (d.N, d.K)), crandn(rng, lead + (d.M, d.K)),
            crandn(rng, lead + (d.N, d.M_E)), crandn(rng, lead + (d.M, d.M_E)))


def _color_users(sqrt_stack, g, gains):
    """Column k of ``g`` (shape ``(..., n, K)``) multiplied by ``gains[k] * sqrt_stack[k]``."""
    if sqrt_stack.strides[0] == 0:
        return (sqrt_stack[0] @ g) * np.sqrt(gains)
    out = np.einsum("kij,...jk->...ik", sqrt_stack, g)
    return out * np.sqrt(gains)


def compose(stats, phi, g_I, g_B, G_IE, G_BE):
    """Effective channels ``h_k = H1 Phi h_{I,k} + h_{B,k}`` and ``H_E`` likewise."""
    pl = stats.path_loss
    A = stats.H1 * phi
    h_I = _color_users(stats.sqrt_R_I_user, g_I, pl.betaI)
    h_B = _color_users(stats.sqrt_R_B_user, g_B, pl.beta2)
    H_IE = np.sqrt(pl.betaIE) * (stats.sqrt_R_I_eve @ G_IE)
    H_BE = np.sqrt(pl.beta3) * (stats.sqrt_R_B_eve @ G_BE)
    return A @ h_I + h_B, A @ H_IE + H_BE


def sample_realization(stats, phases, rng, trials=None):
    """Draw a channel realization (or a stacked batch of ``trials``)."""
    phi = _as_phi(phases)
    parts = draw_parts(stats, rng, trials)
    h, He = compose(stats, phi, *parts)
    return ChannelRealization(h, He, *parts, phi=phi, stats=stats)


def imperfect_csi(realization, tau, rng):
    """BS-side channel estimate under the error model ``z = sqrt(1-tau^2) z_hat + tau e``.

    The whitened user vectors are mixed as ``z_hat = sqrt(1-tau^2) z + tau e``
    with fresh ``e``, which has the required joint law, and the estimate is
    recomposed through the same colouring so ``h_hat ~ CN(0, R_k)``. Eve's
    channel is left untouched.
    """
    if not 0 <= tau <= 1:
        raise DomainError(f"tau must lie in [0, 1], got {tau}")
    if tau == 0:
        return realization
    a, b = np.sqrt(1.0 - tau ** 2), tau
    g_I = a * realization.g_I + b * crandn(rng, realization.g_I.shape)
    g_B = a * realization.g_B + b * crandn(rng, realization.g_B.shape)
    h, _ = compose(realization.stats, realization.phi, g_I, g_B, realization.G_IE, realization.G_BE)
    return ChannelRealization(h, realization.H_eve, g_I, g_B, realization.G_IE, realization.G_BE,
                              phi=realization.phi, stats=realization.stats)
