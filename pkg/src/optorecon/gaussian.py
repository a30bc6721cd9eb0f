"""Gaussian-state algebra for the mechanical network.

Quadrature convention used throughout the package: ``Q = (b + b^dag)/sqrt(2)``,
``P = i(b^dag - b)/sqrt(2)``, vacuum variance 1/2.  Phase-space vectors are
ordered ``(Q_1, ..., Q_n, P_1, ..., P_n)``.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from math import comb

import numpy as np

MAX_ORDER = 8
PURE_TOL = 1e-10


def symplectic_form(n_modes: int) -> np.ndarray:
    """Symplectic metric ``[[0, I], [-I, 0]]`` in the (Q..., P...) ordering."""
    eye = np.eye(n_modes)
    zero = np.zeros((n_modes, n_modes))
    return np.block([[zero, eye], [-eye, zero]])


def rotation(phase: float) -> np.ndarray:
    c, s = np.cos(phase), np.sin(phase)
    return np.array([[c, -s], [s, c]])


@dataclass(frozen=True)
class GaussianState:
    """Mean vector and covariance matrix of an n-mode Gaussian state."""

    mean: np.ndarray
    cov: np.ndarray
    n_modes: int = field(init=False)

    def __post_init__(self):
        mean = np.asarray(self.mean, dtype=float).reshape(-1)
        cov = np.asarray(self.cov, dtype=float)
        if cov.shape != (mean.size, mean.size) or mean.size % 2:
            raise ValueError(f"inconsistent shapes: mean {mean.shape}, cov {cov.shape}")
        if not np.allclose(cov, cov.T, atol=1e-12, rtol=0):
            raise ValueError("covariance matrix is not symmetric")
        mean.flags.writeable = False
        cov = 0.5 * (cov + cov.T)
        cov.flags.writeable = False
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "cov", cov)
        object.__setattr__(self, "n_modes", mean.size // 2)

    @classmethod
    def vacuum(cls, n_modes: int = 1) -> "GaussianState":
        return cls(np.zeros(2 * n_modes), 0.5 * np.eye(2 * n_modes))

    def transformed(self, T: np.ndarray, shift=None) -> "GaussianState":
        """Apply the linear map ``r -> T r (+ shift)``."""
        mean = T @ self.mean
        if shift is not None:
            mean = mean + shift
        return GaussianState(mean, T @ self.cov @ T.T)

    def displaced(self, d) -> "GaussianState":
        return GaussianState(self.mean + np.asarray(d, dtype=float), self.cov)

    def purity(self) -> float:
        # Tr rho^2 = 1 / sqrt(det(2 V)) in the vacuum = I/2 convention
        return float(1.0 / np.sqrt(np.linalg.det(2.0 * self.cov)))


@dataclass(frozen=True)
class PhysicalityReport:
    min_eigenvalue: float
    physical: bool
    tolerance: float


def check_physicality(state: GaussianState, tol: float = 1e-9) -> PhysicalityReport:
    """Smallest eigenvalue of ``cov + i Omega / 2`` (non-negative iff physical)."""
    omega = symplectic_form(state.n_modes)
    lam = np.linalg.eigvalsh(state.cov + 0.5j * omega)
    lo = float(lam.min())
    return PhysicalityReport(lo, lo >= -tol, tol)


def symplectic_eigenvalues(cov: np.ndarray) -> np.ndarray:
    """Williamson spectrum of a covariance matrix, ascending."""
    n = cov.shape[0] // 2
    ev = np.linalg.eigvals(1j * symplectic_form(n) @ cov)
    return np.sort(np.abs(ev.real))[::2]


def make_squeezed_thermal(nbar: float, r: float = 0.0, phase: float = 0.0,
                          n_modes: int = 1) -> GaussianState:
    """Single-mode squeezed thermal state (repeated identically if ``n_modes > 1``).

    Covariance ``(nbar + 1/2) R(phase) diag(e^{-2r}, e^{2r}) R(phase)^T``,
    zero mean.
    """
    if nbar < 0:
        raise ValueError("nbar must be non-negative")
    R = rotation(phase)
    block = (nbar + 0.5) * R @ np.diag([np.exp(-2 * r), np.exp(2 * r)]) @ R.T
    cov = np.zeros((2 * n_modes, 2 * n_modes))
    for j in range(n_modes):
        idx = [j, n_modes + j]
        cov[np.ix_(idx, idx)] = block
    return GaussianState(np.zeros(2 * n_modes), cov)


def make_two_mode_squeezed_thermal(nbar: float, r: float) -> GaussianState:
    """Two-mode squeezing ``exp(r(b1 b2 - b1^dag b2^dag))`` applied to a thermal pair."""
    if nbar < 0:
        raise ValueError("nbar must be non-negative")
    ch, sh = np.cosh(r), np.sinh(r)
    # ordering (Q1, Q2, P1, P2): Q_i -> ch Q_i - sh Q_j, P_i -> ch P_i + sh P_j
    S = np.array([[ch, -sh, 0, 0],
                  [-sh, ch, 0, 0],
                  [0, 0, ch, sh],
                  [0, 0, sh, ch]])
    cov = (nbar + 0.5) * S @ S.T
    return GaussianState(np.zeros(4), cov)


def log_negativity(state: GaussianState) -> float:
    """Logarithmic negativity of a two-mode state via the PPT criterion."""
    if state.n_modes != 2:
        raise ValueError("log_negativity is defined here for two modes only")
    flip = np.diag([1.0, 1.0, 1.0, -1.0])
    nu = symplectic_eigenvalues(flip @ state.cov @ flip)
    return float(max(0.0, -np.log2(2.0 * nu.min())))


def gaussian_raw_moments(mean, var, order: int) -> np.ndarray:
    """Raw moments ``E[Y^k]``, k=1..order, of ``Y ~ N(mean, var)`` (Isserlis)."""
    mean = float(mean)
    out = np.empty(order)
    for k in range(1, order + 1):
        total = 0.0
        for i in range(k // 2 + 1):
            dfact = np.prod(np.arange(2 * i - 1, 0, -2)) if i else 1.0
            total += comb(k, 2 * i) * mean ** (k - 2 * i) * var ** i * dfact
        out[k - 1] = total
    return out


def observable_vector(n_modes: int, thetas, weights) -> np.ndarray:
    """Phase-space vector ``a`` with ``a . r = sum_j w_j Q_{theta_j}``."""
    thetas = np.asarray(thetas, dtype=float)
    weights = np.asarray(weights, dtype=float)
    a = np.zeros(2 * n_modes)
    a[:n_modes] = weights * np.cos(thetas)
    a[n_modes:] = weights * np.sin(thetas)
    return a


def observable_law(state: GaussianState, obs) -> tuple[float, float]:
    """Mean and variance of the observable ``obs`` on ``|0><0| (x) state``.

    ``obs`` is anything with ``p_weight``, ``x_weight``, ``quad_weights`` and
    ``thetas`` attributes (e.g. :class:`optorecon.dynamics.EvolvedObservable`).
    The cavity quadratures contribute only vacuum noise.
    """
    if len(obs.thetas) != state.n_modes:
        raise ValueError("observable and state have different numbers of modes")
    a = observable_vector(state.n_modes, obs.thetas, obs.quad_weights)
    mean = float(a @ state.mean)
    var = float(a @ state.cov @ a) + 0.5 * (obs.p_weight ** 2 + obs.x_weight ** 2)
    return mean, var


def quadrature_moments_exact(state: GaussianState, obs, order: int) -> np.ndarray:
    """Exact raw moments 1..order of a linear observable on a Gaussian input."""
    if order > MAX_ORDER:
        raise ValueError(f"moment order {order} > {MAX_ORDER} is not supported")
    mean, var = observable_law(state, obs)
    return gaussian_raw_moments(mean, var, order)


def _root_fidelity_factor(V1, V2):
    n = V1.shape[0] // 2
    omega = symplectic_form(n)
    V = V1 + V2
    Vaux = omega.T @ np.linalg.solve(V, omega / 4 + V2 @ omega @ V1)
    w = np.linalg.eigvals(Vaux @ omega)
    f = 2.0 * (np.sqrt(1.0 + 1.0 / (4.0 * w * w) + 0j) + 1.0) * w
    ftot4 = np.prod(f).real
    return ftot4 ** 0.25 / np.linalg.det(V) ** 0.25


def gaussian_fidelity(s1: GaussianState, s2: GaussianState) -> float:
    """Uhlmann fidelity ``Tr|sqrt(rho1) sqrt(rho2)|`` between Gaussian states.

    Closed form for arbitrary multimode states (Banchi-Braunstein-Pirandola);
    the root (unsquared) fidelity, so two vacua displaced by ``d`` in phase
    space give ``exp(-|d|^2 / 4)``.
    """
    if s1.n_modes != s2.n_modes:
        raise ValueError("states have different numbers of modes")
    for s in (s1, s2):
        if not check_physicality(s).physical:
            raise ValueError("fidelity requested for an unphysical state")
    V = s1.cov + s2.cov
    d = s1.mean - s2.mean
    expo = np.exp(-0.25 * d @ np.linalg.solve(V, d))
    if max(s1.purity(), s2.purity()) > 1.0 - PURE_TOL:
        # one pure state: F = sqrt(Tr rho1 rho2); the general formula loses
        # half its digits here because sqrt(w^2 + 1/4) sits at a branch point
        return float(np.clip(expo / np.linalg.det(V) ** 0.25, 0.0, 1.0))
    # average both argument orders so the result is exactly symmetric
    pref = 0.5 * (_root_fidelity_factor(s1.cov, s2.cov) + _root_fidelity_factor(s2.cov, s1.cov))
    return float(np.clip(pref * expo, 0.0, 1.0))
