"""Harmonic oscillator networks and their normal-mode decomposition.

The network Hamiltonian is

    H0 = sum_n w_n b_n^dag b_n + sum_{n<m} J_nm (b_n b_m^dag + h.c.)
                               + sum_{n<m} K_nm (b_n b_m + h.c.)

and only ``b[probe_index]`` couples to the cavity.  Normal modes are defined
by ``d = S1 b + S2 b^dag`` so that ``H0 = sum_j nu_j d_j^dag d_j`` and the
probe operator reads ``b_p + b_p^dag = sum_j (G_j d_j + G_j^* d_j^dag)``.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla

from .gaussian import GaussianState, symplectic_form


class UnstableNetworkError(ValueError):
    """The quadratic form of H0 is not positive definite."""


@dataclass(frozen=True)
class NetworkSpec:
    omega: np.ndarray
    J: np.ndarray
    K: np.ndarray
    probe_index: int = 0

    def __post_init__(self):
        omega = np.atleast_1d(np.asarray(self.omega, dtype=float))
        n = omega.size
        J = np.zeros((n, n)) if self.J is None else np.asarray(self.J, dtype=float)
        K = np.zeros((n, n)) if self.K is None else np.asarray(self.K, dtype=float)
        for name, M in (("J", J), ("K", K)):
            if M.shape != (n, n):
                raise ValueError(f"{name} must be {n}x{n}")
            if not np.allclose(M, M.T) or np.any(np.diag(M) != 0):
                raise ValueError(f"{name} must be symmetric with zero diagonal")
        if np.any(omega <= 0):
            raise ValueError("bare frequencies must be strictly positive")
        if not 0 <= self.probe_index < n:
            raise ValueError("probe_index out of range")
        object.__setattr__(self, "omega", omega)
        object.__setattr__(self, "J", J)
        object.__setattr__(self, "K", K)

    @property
    def n_modes(self) -> int:
        return self.omega.size

    @classmethod
    def two_mode(cls, omega: float, J: float, K: float) -> "NetworkSpec":
        off = np.array([[0.0, 1.0], [1.0, 0.0]])
        return cls(np.array([omega, omega]), J * off, K * off)

    @classmethod
    def single(cls, omega_m: float) -> "NetworkSpec":
        return cls(np.array([omega_m]), None, None)


@dataclass(frozen=True)
class NormalModeBasis:
    s1: np.ndarray
    s2: np.ndarray
    nu: np.ndarray
    g_vec: np.ndarray

    @property
    def n_modes(self) -> int:
        return self.nu.size

    @property
    def bogoliubov(self) -> np.ndarray:
        """Full ``[[S1, S2], [S2*, S1*]]`` acting on ``(b; b^dag)``."""
        return np.block([[self.s1, self.s2], [self.s2.conj(), self.s1.conj()]])

    @property
    def quadrature_map(self) -> np.ndarray:
        """Real symplectic ``T`` with ``r_normal = T r_local``."""
        # d = u^T r  with  u_Q = (S1 + S2)/sqrt2,  u_P = i (S1 - S2)/sqrt2
        uq = (self.s1 + self.s2) / np.sqrt(2)
        up = 1j * (self.s1 - self.s2) / np.sqrt(2)
        U = np.hstack([uq, up])
        return np.sqrt(2) * np.vstack([U.real, U.imag])

    @classmethod
    def single_mode(cls, omega_m: float) -> "NormalModeBasis":
        return cls(np.eye(1, dtype=complex), np.zeros((1, 1), dtype=complex),
                   np.array([float(omega_m)]), np.array([1.0 + 0j]))

    def symplectic_residual(self) -> float:
        n = self.n_modes
        S = self.bogoliubov
        Kmet = np.diag(np.r_[np.ones(n), -np.ones(n)])
        return float(np.abs(S @ Kmet @ S.conj().T - Kmet).max())


@dataclass(frozen=True)
class AssumptionReport:
    a1_ok: bool
    g_abs: np.ndarray
    a2_ok: bool
    min_gap: float
    tol_g: float
    tol_gap: float

    @property
    def ok(self) -> bool:
        return self.a1_ok and self.a2_ok


def build_hamiltonian_form(spec: NetworkSpec) -> np.ndarray:
    """Matrix ``M`` with ``H0 = r^T M r / 2 + const`` for ``r = (Q..., P...)``.

    Raises :class:`UnstableNetworkError` if ``M`` is not positive definite.
    """
    W = np.diag(spec.omega)
    M = sla.block_diag(W + spec.J + spec.K, W + spec.J - spec.K)
    if np.linalg.eigvalsh(M).min() <= 0:
        raise UnstableNetworkError("network Hamiltonian is not positive definite")
    return M


def _fix_phases(u: np.ndarray, probe: int, tol_g: float) -> np.ndarray:
    m = u.shape[1] // 2
    out = u.copy()
    for j in range(out.shape[0]):
        # G_j = i sqrt2 conj(u_P[probe]); rotate d_j so that G_j >= 0
        G = 1j * np.sqrt(2) * np.conj(out[j, m + probe])
        if abs(G) > tol_g:
            out[j] *= np.exp(1j * np.angle(G))
        else:
            s1 = (out[j, :m] - 1j * out[j, m:]) / np.sqrt(2)
            k = int(np.argmax(np.abs(s1)))
            out[j] *= np.exp(-1j * np.angle(s1[k]))
    return out


def williamson_diagonalize(spec: NetworkSpec, tol_g: float = 1e-8) -> NormalModeBasis:
    """Normal modes of the network, eigenfrequencies ascending.

    Uses ``A = M^{1/2} Omega M^{1/2}``: the eigenvectors of the Hermitian
    ``iA`` stay orthonormal inside degenerate eigenspaces, so the result is
    symplectic even when the spectrum is degenerate.
    """
    M = build_hamiltonian_form(spec)
    n = spec.n_modes
    Msqrt = sla.sqrtm(M).real
    A = Msqrt @ symplectic_form(n) @ Msqrt
    lam, V = np.linalg.eigh(1j * A)
    nu = lam[n:]
    # mode operator d_j = u_j^T r with u_j = M^{1/2} conj(v_j) / sqrt(nu_j)
    U = (Msqrt @ V[:, n:].conj() / np.sqrt(nu)).T
    U = _fix_phases(U, spec.probe_index, tol_g)
    uq, up = U[:, :n], U[:, n:]
    s1 = (uq - 1j * up) / np.sqrt(2)
    s2 = (uq + 1j * up) / np.sqrt(2)
    g_vec = np.conj(s1 - s2)[:, spec.probe_index]
    # drop rounding residue left by the phase fix
    g_vec = np.where(np.abs(g_vec) > tol_g, np.abs(g_vec), g_vec).astype(complex)
    basis = NormalModeBasis(s1, s2, nu, g_vec)
    tol_gap = 1e-6 * nu.min()
    if n > 1 and np.diff(nu).min() <= tol_gap:
        warnings.warn("normal-mode spectrum is degenerate within tolerance", RuntimeWarning)
    return basis


def validate_assumptions(basis: NormalModeBasis, tol_g: float = 1e-8,
                         tol_gap: float | None = None) -> AssumptionReport:
    """Check that the probe sees every normal mode and the spectrum is non-degenerate."""
    if tol_gap is None:
        tol_gap = 1e-6 * basis.nu.min()
    g_abs = np.abs(basis.g_vec)
    gaps = np.abs(basis.nu[:, None] - basis.nu[None, :])
    gaps = gaps[~np.eye(basis.n_modes, dtype=bool)]
    min_gap = float(gaps.min()) if gaps.size else float("inf")
    return AssumptionReport(bool(np.all(g_abs > tol_g)), g_abs,
                            bool(min_gap > tol_gap), min_gap, tol_g, tol_gap)


def _check_dim(state: GaussianState, basis: NormalModeBasis):
    if state.n_modes != basis.n_modes:
        raise ValueError(f"state has {state.n_modes} modes, basis has {basis.n_modes}")


def local_to_normal(state: GaussianState, basis: NormalModeBasis) -> GaussianState:
    _check_dim(state, basis)
    return state.transformed(basis.quadrature_map)


def normal_to_local(state: GaussianState, basis: NormalModeBasis) -> GaussianState:
    """Express a normal-mode state in the original ``b_1..b_N`` modes."""
    _check_dim(state, basis)
    return state.transformed(np.linalg.inv(basis.quadrature_map))
