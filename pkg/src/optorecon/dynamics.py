"""Closed-form readout observables, optical losses and a brute-force propagator.

After the coupling window the evolution is ``U = exp(i Psi X^2) D(X beta)``
and the cavity momentum becomes

    P(tau) = P + 2 Psi X - sqrt(2) sum_j |beta_j| Q_{theta_j}.

The truncated-Fock propagator integrates the Schroedinger equation directly
and is meant as an independent check of that statement on small instances.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import reduce
from math import comb, fsum, gamma, pi, sqrt

import numpy as np
import scipy.sparse as sp
from scipy.integrate import solve_ivp

from .network import NetworkSpec, NormalModeBasis
from .profile import DisplacementResult, InteractionProfile

PSI_TOL = 1e-8


class TruncationError(RuntimeError):
    """The Fock cutoff is too small for the simulated dynamics."""


@dataclass(frozen=True)
class EvolvedObservable:
    """``p_weight P + x_weight X + sum_j quad_weights[j] Q_{thetas[j]}``."""

    p_weight: float
    x_weight: float
    quad_weights: np.ndarray
    thetas: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "quad_weights", np.atleast_1d(np.asarray(self.quad_weights, float)))
        object.__setattr__(self, "thetas", np.atleast_1d(np.asarray(self.thetas, float)))


def quadrature(theta, n_modes: int = 1, mode: int = 0) -> EvolvedObservable:
    """Bare mechanical quadrature ``Q_theta`` of one mode (no cavity part)."""
    w = np.zeros(n_modes)
    w[mode] = 1.0
    th = np.zeros(n_modes)
    th[mode] = theta
    return EvolvedObservable(0.0, 0.0, w, th)


@dataclass(frozen=True)
class LossChannel:
    epsilon: float

    def __post_init__(self):
        if not 0.0 <= self.epsilon < 1.0:
            raise ValueError("loss probability must satisfy 0 <= epsilon < 1")


def evolved_momentum(disp: DisplacementResult) -> EvolvedObservable:
    x_weight = 2.0 * disp.psi if abs(disp.psi) > PSI_TOL else 0.0
    return EvolvedObservable(1.0, x_weight, -sqrt(2) * disp.beta_mag, disp.theta)


def vacuum_moment(k: int) -> float:
    """``<0|P^k|0>``: zero for odd k, ``Gamma((k+1)/2)/sqrt(pi)`` for even k."""
    if k % 2:
        return 0.0
    return gamma((k + 1) / 2) / sqrt(pi)


def normal_moment(k: int, var: float) -> float:
    """k-th moment of a centred normal law of variance ``var`` (formally, ``var`` may be negative)."""
    if k % 2:
        return 0.0
    return var ** (k // 2) * float(np.prod(np.arange(k - 1, 0, -2)))


def loss_moments_forward(p_tau_moments, epsilon: float) -> np.ndarray:
    """Moments of ``P_out = sqrt(1-eps) P(tau) + sqrt(eps) P_vac``.

    ``p_tau_moments[m] = <P(tau)^m>`` for ``m = 0..n`` (so entry 0 is 1).
    The added vacuum noise is normal with variance ``eps/2``.
    """
    LossChannel(epsilon)
    p = np.asarray(p_tau_moments, dtype=float)
    s = p * (1 - epsilon) ** (np.arange(p.size) / 2)
    return np.array([fsum(comb(m, k) * normal_moment(k, epsilon / 2) * s[m - k] for k in range(m + 1))
                     for m in range(p.size)])


# --------------------------------------------------------------------------
# truncated Hilbert space


def _ladder(dim: int) -> sp.csr_matrix:
    return sp.diags(np.sqrt(np.arange(1, dim)), 1, format="csr", dtype=complex)


def embed(op, index: int, dims) -> sp.csr_matrix:
    mats = [sp.identity(d, format="csr", dtype=complex) for d in dims]
    mats[index] = sp.csr_matrix(op)
    return reduce(lambda x, y: sp.kron(x, y, format="csr"), mats)


def cavity_operators(dims):
    """``X`` and ``P`` of the cavity (subsystem 0) in the joint space."""
    a = embed(_ladder(dims[0]), 0, dims)
    return (a + a.T) / sqrt(2), 1j * (a.T - a) / sqrt(2)


def normal_mode_lowering(basis: NormalModeBasis, dims, local: bool):
    """Operators ``d_j`` in the joint space.

    With ``local=True`` the mechanical subsystems are the bare oscillators
    and ``d = S1 b + S2 b^dag`` is assembled from them; otherwise the
    subsystems are the normal modes themselves.
    """
    n = basis.n_modes
    b = [embed(_ladder(dims[k + 1]), k + 1, dims) for k in range(n)]
    if not local:
        return b
    return [sum(basis.s1[j, k] * b[k] + basis.s2[j, k] * b[k].T for k in range(n))
            for j in range(n)]


def heisenberg_observable(obs: EvolvedObservable, basis: NormalModeBasis, dims,
                          local: bool = True) -> sp.csr_matrix:
    """The operator ``obs`` (cavity and normal-mode quadratures) in the truncated space."""
    X, P = cavity_operators(dims)
    d = normal_mode_lowering(basis, dims, local)
    L = obs.p_weight * P + obs.x_weight * X
    for j, (w, th) in enumerate(zip(obs.quad_weights, obs.thetas)):
        L = L + w * (np.exp(-1j * th) * d[j] + np.exp(1j * th) * d[j].conj().T) / sqrt(2)
    return sp.csr_matrix(L)


def fock_state(coeffs, dim: int) -> np.ndarray:
    v = np.zeros(dim, dtype=complex)
    c = np.asarray(coeffs, dtype=complex)
    v[: c.size] = c
    return v / np.linalg.norm(v)


def coherent_coeffs(alpha: complex, dim: int) -> np.ndarray:
    n = np.arange(dim)
    logfact = np.cumsum(np.r_[0.0, np.log(np.arange(1, dim))])
    with np.errstate(divide="ignore"):
        mag = np.exp(-abs(alpha) ** 2 / 2 + n * np.log(abs(alpha) + 0.0) - logfact / 2)
    mag[0] = np.exp(-abs(alpha) ** 2 / 2)
    return mag * np.exp(1j * n * np.angle(alpha))


def propagate_truncated(profile: InteractionProfile, network, initial_mech,
                        cavity_dim: int, mech_dims, initial_cavity=None,
                        rtol: float = 1e-10, atol: float = 1e-12,
                        leak_tol: float = 1e-4) -> np.ndarray:
    """Integrate the Schroedinger equation for cavity + mechanics.

    Parameters
    ----------
    profile : InteractionProfile
        Coupling ``g(t)`` on ``[0, tau]``.
    network : NetworkSpec or NormalModeBasis
        A ``NetworkSpec`` simulates the bare oscillators with the full network
        Hamiltonian (lab frame for the mechanics); a ``NormalModeBasis``
        simulates the normal modes in their interaction picture.
    initial_mech : array
        Fock-basis state vector of the mechanics (tensor order = mode order),
        or a list with one coefficient vector per mode (product state).
    cavity_dim, mech_dims : int, sequence of int
        Fock cutoffs.
    initial_cavity : array, optional
        Fock coefficients of the cavity; vacuum by default.

    Returns
    -------
    ndarray
        Final joint state vector, ordered (cavity, mode 1, ..., mode n).
    """
    mech_dims = list(mech_dims)
    dims = [cavity_dim] + mech_dims
    if np.prod(dims) > 20000:
        raise ValueError("truncated space too large for the brute-force propagator")
    if isinstance(initial_mech, (list, tuple)):
        psi_m = reduce(np.kron, [fock_state(c, d) for c, d in zip(initial_mech, mech_dims)])
    else:
        psi_m = np.asarray(initial_mech, dtype=complex).reshape(-1)
        psi_m = psi_m / np.linalg.norm(psi_m)
    psi_c = fock_state([1.0] if initial_cavity is None else initial_cavity, cavity_dim)
    psi0 = np.kron(psi_c, psi_m)

    X, _ = cavity_operators(dims)
    if isinstance(network, NetworkSpec):
        n = network.n_modes
        b = [embed(_ladder(mech_dims[k]), k + 1, dims) for k in range(n)]
        H0 = sum(network.omega[k] * (b[k].T @ b[k]) for k in range(n))
        for i in range(n):
            for j in range(i + 1, n):
                H0 = H0 + network.J[i, j] * (b[i] @ b[j].T + b[i].T @ b[j])
                H0 = H0 + network.K[i, j] * (b[i] @ b[j] + b[i].T @ b[j].T)
        p = network.probe_index
        Hc = sp.csr_matrix(X @ (b[p] + b[p].T))
        H0 = sp.csr_matrix(H0)

        def rhs(t, y):
            return -1j * (H0 @ y + profile(t) * (Hc @ y))
    else:
        basis = network
        d = [embed(_ladder(mech_dims[k]), k + 1, dims) for k in range(basis.n_modes)]
        low = [sp.csr_matrix(X @ (G * dj)) for G, dj in zip(basis.g_vec, d)]
        nu = basis.nu

        def rhs(t, y):
            acc = np.zeros_like(y)
            for j, Lj in enumerate(low):
                ph = np.exp(-1j * nu[j] * t)
                v = Lj @ y
                acc += ph * v + np.conj(ph) * (Lj.conj().T @ y)
            return -1j * profile(t) * acc

    sol = solve_ivp(rhs, (0.0, profile.tau), psi0, method="DOP853", rtol=rtol, atol=atol)
    if not sol.success:
        raise RuntimeError(sol.message)
    psi = sol.y[:, -1]
    norm = np.linalg.norm(psi)
    if abs(norm - 1.0) > 1e-8:
        raise RuntimeError(f"norm drift {abs(norm - 1):.2e} in truncated propagation")
    _check_leakage(psi, dims, leak_tol)
    return psi


def _check_leakage(psi, dims, tol):
    prob = np.abs(psi.reshape(dims)) ** 2
    for k, d in enumerate(dims):
        marg = prob.sum(axis=tuple(i for i in range(len(dims)) if i != k))
        if marg[-2:].sum() > tol:
            raise TruncationError(
                f"subsystem {k} leaks {marg[-2:].sum():.1e} into its top Fock levels; "
                f"increase its cutoff beyond {d}")


def expectation(op, psi) -> complex:
    return complex(np.vdot(psi, op @ psi))


def cavity_momentum_moments(psi, dims, order: int = 2) -> np.ndarray:
    """``<P^k>``, k=1..order, of the cavity momentum in a joint state."""
    _, P = cavity_operators(dims)
    out, v = [], psi
    for _ in range(order):
        v = P @ v
        out.append(np.vdot(psi, v).real)
    return np.array(out)
