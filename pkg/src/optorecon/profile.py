"""Design of the time-dependent optomechanical coupling g(t).

A profile is a real trigonometric polynomial ``g(s) = sum_k c_k exp(-i f_k s)``
on ``0 <= s <= tau``.  Driving normal mode ``j`` (coupling ``G_j``) it produces
the X-conditioned displacement

    beta_j = -i G_j^* int_0^tau g(s) exp(i nu_j s) ds

together with the quadratic phase ``Psi = -sum_j int_0^tau Im(beta_j dbeta_j^*)``
on the cavity.  All integrals are evaluated in closed form from the
divided differences of ``exp`` (see :func:`exp_integral`,
:func:`double_exp_integral`).
"""
from __future__ import annotations

import csv
from dataclasses import dataclass
from math import factorial

import numpy as np
from scipy.optimize import minimize_scalar

from .network import NormalModeBasis, validate_assumptions

# below this spread (in radians of accumulated phase) the divided difference
# is summed as a series instead of by subtraction
_SERIES_SPREAD = 1.0
_SERIES_TERMS = 26


class ProfileDesignError(RuntimeError):
    """No admissible interaction profile for the requested target."""


# --------------------------------------------------------------------------
# closed-form integrals


def _dd1(x):
    """``(exp(ix) - 1) / (ix)`` without cancellation."""
    x = np.asarray(x, dtype=float)
    return np.exp(0.5j * x) * np.sinc(x / (2 * np.pi))


def _dd2(x0, x1, x2):
    """Second divided difference of ``exp`` at the imaginary nodes ``i x_k``."""
    x0, x1, x2 = np.broadcast_arrays(*(np.asarray(v, dtype=float) for v in (x0, x1, x2)))
    pts = np.sort(np.stack([x0, x1, x2], axis=-1), axis=-1)
    lo, mid, hi = pts[..., 0], pts[..., 1], pts[..., 2]
    spread = hi - lo
    out = np.empty(lo.shape, dtype=complex)

    far = spread >= _SERIES_SPREAD
    if np.any(far):
        l, m, h = lo[far], mid[far], hi[far]
        upper = np.exp(1j * m) * _dd1(h - m)
        lower = np.exp(1j * l) * _dd1(m - l)
        out[far] = (upper - lower) / (1j * (h - l))

    near = ~far
    if np.any(near):
        c = pts[near].mean(axis=-1)
        w = 1j * (pts[near] - c[:, None])
        # complete homogeneous symmetric polynomials h_k(w0, w1, w2)
        h = np.zeros((3, _SERIES_TERMS, w.shape[0]), dtype=complex)
        for v in range(3):
            h[v, 0] = 1.0
            for k in range(1, _SERIES_TERMS):
                h[v, k] = (h[v - 1, k] if v else 0.0) + w[:, v] * h[v, k - 1]
        total = sum(h[2, k] / factorial(k + 2) for k in range(_SERIES_TERMS))
        out[near] = np.exp(1j * c) * total
    return out if out.ndim else complex(out)


def exp_integral(a, tau):
    """``int_0^tau exp(i a s) ds``, exact at ``a = 0`` and continuous around it."""
    tau = np.asarray(tau, dtype=float)
    res = tau * _dd1(np.asarray(a) * tau)
    return res if np.ndim(res) else complex(res)


def double_exp_integral(a, b, tau):
    """``int_0^tau exp(i a t) int_0^t exp(i b s) ds dt`` for real ``a``, ``b``.

    Equals ``tau^2`` times the second divided difference of ``exp`` at
    ``0, i a tau, i (a + b) tau``; coincident nodes (``a = 0``, ``b = 0``,
    ``a + b = 0`` or all three) are handled by the series branch.
    """
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    tau = np.asarray(tau, dtype=float)
    res = tau ** 2 * _dd2(np.zeros_like(a * b * tau), a * tau, (a + b) * tau)
    return res if np.ndim(res) else complex(res)


# --------------------------------------------------------------------------
# profiles and their displacement


@dataclass(frozen=True)
class InteractionProfile:
    """Real coupling ``g(s) = sum_k coeffs[k] exp(-i freqs[k] s)`` on ``[0, tau]``."""

    coeffs: np.ndarray
    freqs: np.ndarray
    tau: float

    def __post_init__(self):
        coeffs = np.asarray(self.coeffs, dtype=complex).reshape(-1)
        freqs = np.asarray(self.freqs, dtype=float).reshape(-1)
        if coeffs.shape != freqs.shape:
            raise ValueError("coeffs and freqs must have the same length")
        if not self.tau > 0:
            raise ValueError("tau must be positive")
        object.__setattr__(self, "coeffs", coeffs)
        object.__setattr__(self, "freqs", freqs)
        object.__setattr__(self, "tau", float(self.tau))

    @property
    def terms(self):
        return list(zip(self.coeffs, self.freqs))

    def evaluate(self, t) -> np.ndarray:
        """Complex-valued sum; the imaginary part vanishes for a valid profile."""
        t = np.asarray(t, dtype=float)
        return np.exp(-1j * np.multiply.outer(t, self.freqs)) @ self.coeffs

    def __call__(self, t):
        return self.evaluate(t).real

    def is_hermitian(self, atol=1e-12, n_samples=1000) -> bool:
        t = np.linspace(0.0, self.tau, n_samples)
        return bool(np.abs(self.evaluate(t).imag).max() <= atol * max(1.0, self.peak()))

    def peak(self, n_samples=1024) -> float:
        t = np.linspace(0.0, self.tau, n_samples)
        return float(np.abs(self.evaluate(t).real).max())

    @classmethod
    def zero(cls, tau: float) -> "InteractionProfile":
        return cls(np.zeros(0, dtype=complex), np.zeros(0), tau)


@dataclass(frozen=True)
class DisplacementResult:
    beta: np.ndarray
    psi: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "beta", np.atleast_1d(np.asarray(self.beta, dtype=complex)))
        object.__setattr__(self, "psi", float(self.psi))

    @property
    def theta(self) -> np.ndarray:
        return np.angle(self.beta) + np.pi / 2

    @property
    def beta_mag(self) -> np.ndarray:
        return np.abs(self.beta)


def target_beta(thetas, beta_mags) -> np.ndarray:
    """Displacement that reads out the quadratures ``Q_theta`` with weights ``|beta|``."""
    thetas = np.atleast_1d(np.asarray(thetas, dtype=float))
    return np.asarray(beta_mags, dtype=float) * np.exp(1j * (thetas - np.pi / 2))


def beta_of_profile(profile: InteractionProfile, basis: NormalModeBasis) -> DisplacementResult:
    E = exp_integral(basis.nu[:, None] - profile.freqs[None, :], profile.tau)
    beta = -1j * basis.g_vec.conj() * (E @ profile.coeffs)
    return DisplacementResult(beta, 0.0)


def _psi_kernel(freqs, basis: NormalModeBasis, tau: float) -> np.ndarray:
    """``W`` with ``Psi = -Im(c^T W c)`` for profile coefficients ``c``."""
    nu = basis.nu[:, None, None]
    fk = freqs[None, :, None]
    fl = freqs[None, None, :]
    Wj = double_exp_integral(-(fk + nu), nu - fl, tau)
    return np.tensordot(np.abs(basis.g_vec) ** 2, Wj, axes=1)


def psi_of_profile(profile: InteractionProfile, basis: NormalModeBasis) -> float:
    W = _psi_kernel(profile.freqs, basis, profile.tau)
    c = profile.coeffs
    return float(-np.imag(c @ W @ c))


def displacement(profile: InteractionProfile, basis: NormalModeBasis) -> DisplacementResult:
    """Realized ``beta`` and ``Psi`` of a profile."""
    return DisplacementResult(beta_of_profile(profile, basis).beta, psi_of_profile(profile, basis))


def profile_to_csv(profile: InteractionProfile, times, path) -> None:
    times = np.asarray(times, dtype=float)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["t", "g"])
        for t, g in zip(times, profile(times)):
            w.writerow([repr(float(t)), repr(float(g))])


# --------------------------------------------------------------------------
# single mode


def _min_norm_on_conic(Q, lin, const, n_phi=720):
    """Smallest ``|y|`` in the plane with ``y^T Q y + 2 lin^T y + const = 0``."""

    def roots(phi):
        u = np.array([np.cos(phi), np.sin(phi)])
        a, b = u @ Q @ u, 2 * lin @ u
        if abs(a) < 1e-300:
            return [-const / b] if b != 0 and -const / b >= 0 else []
        disc = b * b - 4 * a * const
        if disc < 0:
            return []
        sq = np.sqrt(disc)
        return [r for r in ((-b - sq) / (2 * a), (-b + sq) / (2 * a)) if r >= 0]

    if abs(const) <= 1e-300:
        return np.zeros(2)
    phis = np.linspace(0.0, 2 * np.pi, n_phi, endpoint=False)
    best = np.inf
    best_phi = None
    for phi in phis:
        r = roots(phi)
        if r and min(r) < best:
            best, best_phi = min(r), phi
    if best_phi is None:
        return None

    def obj(phi):
        r = roots(phi)
        return min(r) if r else best * 10 + 1.0

    step = 2 * np.pi / n_phi
    res = minimize_scalar(obj, bounds=(best_phi - step, best_phi + step), method="bounded",
                          options={"xatol": 1e-12})
    phi = res.x if res.fun <= best else best_phi
    rho = min(roots(phi))
    return rho * np.array([np.cos(phi), np.sin(phi)])


def single_mode_profile(A: complex, B: complex, omega_m: float, tau: float) -> InteractionProfile:
    """``(w/2pi)(A e^{-iwt} + A* e^{iwt} + B e^{-2iwt} + B* e^{2iwt})``."""
    pref = omega_m / (2 * np.pi)
    coeffs = pref * np.array([A, np.conj(A), B, np.conj(B)])
    freqs = omega_m * np.array([1.0, -1.0, 2.0, -2.0])
    return InteractionProfile(coeffs, freqs, tau)


def synthesize_single_mode(theta: float, beta_mag: float, omega_m: float, tau: float,
                           tol: float = 1e-8):
    """Profile of the two-harmonic form reading out ``Q_theta`` with ``Psi = 0``.

    The four real unknowns in ``(A, B)`` are fixed by the target ``beta``
    (two equations), ``Psi = 0`` (one quadratic equation) and minimal
    ``|A|^2 + |B|^2``.

    Returns
    -------
    (InteractionProfile, DisplacementResult)
    """
    if not tau > 0 or not beta_mag > 0:
        raise ValueError("tau and beta_mag must be positive")
    basis = NormalModeBasis.single_mode(omega_m)
    beta_t = target_beta([theta], [beta_mag])[0]

    # columns: profile coefficient vector for unit ReA, ImA, ReB, ImB
    cols = [single_mode_profile(*u, omega_m, tau).coeffs
            for u in ((1, 0), (1j, 0), (0, 1), (0, 1j))]
    C = np.array(cols).T
    freqs = single_mode_profile(0, 0, omega_m, tau).freqs
    E = exp_integral(omega_m - freqs, tau)
    lb = -1j * (E @ C)
    L = np.vstack([lb.real, lb.imag])
    W = _psi_kernel(freqs, basis, tau)
    Qm = -np.imag(C.T @ W @ C)
    Qm = 0.5 * (Qm + Qm.T)

    rhs = np.array([beta_t.real, beta_t.imag])
    x_p = np.linalg.lstsq(L, rhs, rcond=None)[0]
    _, sv, vt = np.linalg.svd(L)
    if sv.min() < 1e-12 * sv.max():
        raise ProfileDesignError("displacement map is singular at this tau")
    N = vt[2:].T
    y = _min_norm_on_conic(N.T @ Qm @ N, N.T @ Qm @ x_p, x_p @ Qm @ x_p)
    if y is None:
        raise ProfileDesignError(
            f"no two-harmonic profile with Psi=0 at tau={tau:g}; try a longer interaction time")
    x = x_p + N @ y
    profile = single_mode_profile(x[0] + 1j * x[1], x[2] + 1j * x[3], omega_m, tau)
    result = displacement(profile, basis)
    _verify(result, np.array([beta_t]), tol)
    return profile, result


def _verify(result: DisplacementResult, beta_t, tol):
    err = np.abs(result.beta - beta_t).max()
    if err > tol or abs(result.psi) > tol:
        raise ProfileDesignError(
            f"synthesized profile misses its target (|dbeta|={err:.2e}, Psi={result.psi:.2e})")


# --------------------------------------------------------------------------
# networks


@dataclass(frozen=True)
class RSMatrices:
    """Linear map ``(beta; beta*) = R (G; G*) + S (h; h*)`` for the network ansatz."""

    r: np.ndarray
    s: np.ndarray
    tau: float
    omega_free: float

    @property
    def n_modes(self) -> int:
        return self.r.shape[0] // 2

    def deviation_from_identity(self) -> float:
        return float(np.linalg.norm(self.r - np.eye(self.r.shape[0]), 2))


def default_omega_free(basis: NormalModeBasis) -> float:
    return float(basis.nu.min() / np.sqrt(2))


def build_rs_matrices(basis: NormalModeBasis, tau: float,
                      omega_free: float | None = None) -> RSMatrices:
    """R and S for the profile ansatz with free frequency ``omega_free``."""
    if omega_free is None:
        omega_free = default_omega_free(basis)
    nu, G = basis.nu, basis.g_vec
    if np.min(np.abs(np.abs(omega_free) - nu)) < 1e-9 * nu.max():
        raise ValueError("omega_free collides with the normal-mode spectrum")
    Gc = G.conj()
    N = Gc[:, None] / (tau * Gc[None, :]) * exp_integral(nu[:, None] - nu[None, :], tau)
    M = -Gc[:, None] / (tau * G[None, :]) * exp_integral(nu[:, None] + nu[None, :], tau)
    np.fill_diagonal(N, 1.0)
    P = Gc / tau * exp_integral(nu - omega_free, tau)
    Qv = -Gc / tau * exp_integral(nu + omega_free, tau)
    R = np.block([[N, M], [M.conj(), N.conj()]])
    S = np.block([[P[:, None], Qv[:, None]], [Qv.conj()[:, None], P.conj()[:, None]]])
    return RSMatrices(R, S, float(tau), float(omega_free))


def network_profile(coeffs, h: complex, basis: NormalModeBasis, tau: float,
                    omega_free: float) -> InteractionProfile:
    """``(i/tau)[sum_k (g_k/G_k*) e^{-i nu_k s} - c.c. + h e^{-i w s} - c.c.]``."""
    coeffs = np.asarray(coeffs, dtype=complex)
    G = basis.g_vec
    c = (1j / tau) * np.concatenate([coeffs / G.conj(), -coeffs.conj() / G, [h, -np.conj(h)]])
    f = np.concatenate([basis.nu, -basis.nu, [omega_free, -omega_free]])
    return InteractionProfile(c, f, tau)


MAX_CONDITION = 1e10


def solve_coefficients(target_beta, h: complex, rs: RSMatrices) -> np.ndarray:
    """Profile coefficients giving ``target_beta`` for a fixed free amplitude ``h``."""
    cond = np.linalg.cond(rs.r)
    if not cond < MAX_CONDITION:
        raise ProfileDesignError(
            f"R is ill-conditioned (cond={cond:.2e}) at tau={rs.tau:g}; choose another tau")
    beta = np.asarray(target_beta, dtype=complex)
    rhs = np.concatenate([beta, beta.conj()]) - rs.s @ np.array([h, np.conj(h)])
    x = np.linalg.solve(rs.r, rhs)
    n = rs.n_modes
    return 0.5 * (x[:n] + x[n:].conj())


def _psi_quadratic(target_beta, rs: RSMatrices, basis: NormalModeBasis):
    """Coefficients of ``Psi(h) = [hx hy] Q [hx hy]^T + 2 lin.[hx hy] + const``."""

    def coeffs(h):
        g = solve_coefficients(target_beta, h, rs)
        return network_profile(g, h, basis, rs.tau, rs.omega_free).coeffs

    c0 = coeffs(0.0)
    cu = coeffs(1.0) - c0
    cv = coeffs(1j) - c0
    freqs = network_profile(np.zeros(basis.n_modes), 0.0, basis, rs.tau, rs.omega_free).freqs
    W = _psi_kernel(freqs, basis, rs.tau)

    def form(x, y):
        return -np.imag(x @ W @ y + y @ W @ x) / 2

    Q = np.array([[form(cu, cu), form(cu, cv)], [form(cv, cu), form(cv, cv)]])
    lin = np.array([form(c0, cu), form(c0, cv)])
    const = form(c0, c0)
    return Q, lin, const


def solve_h_for_zero_psi(target_beta, rs: RSMatrices, basis: NormalModeBasis,
                         n_phi: int = 64, n_peak_samples: int = 512) -> complex:
    """Free amplitude ``h`` cancelling the quadratic phase.

    With ``h = rho e^{i phi}`` the constraint is a real quadratic in ``rho``
    for each ``phi``.  A uniform ``phi`` grid is scanned, boundaries where
    the discriminant changes sign are bisected, and among all admissible
    roots the one with the smallest peak coupling is returned.
    """
    Q, lin, const = _psi_quadratic(target_beta, rs, basis)
    scale = max(abs(const), np.abs(Q).max(), np.abs(lin).max(), 1e-300)
    if abs(const) <= 1e-14 * scale:
        return 0j

    def quad(phi):
        u = np.array([np.cos(phi), np.sin(phi)])
        return u @ Q @ u, 2 * lin @ u

    def roots(phi):
        a, b = quad(phi)
        disc = b * b - 4 * a * const
        if abs(a) < 1e-14 * scale:
            r = [-const / b] if abs(b) > 0 else []
        elif disc < 0:
            return []
        else:
            sq = np.sqrt(disc)
            r = [(-b - sq) / (2 * a), (-b + sq) / (2 * a)]
        return [x for x in r if x >= 0]

    def disc(phi):
        a, b = quad(phi)
        return b * b - 4 * a * const

    phis = np.linspace(0.0, 2 * np.pi, n_phi, endpoint=False)
    cands = [rho * np.exp(1j * phi) for phi in phis for rho in roots(phi)]
    # refinement: a root branch may appear between grid points
    d = np.array([disc(p) for p in phis])
    for k in range(n_phi):
        lo, hi = phis[k], phis[k] + 2 * np.pi / n_phi
        dlo, dhi = d[k], d[(k + 1) % n_phi]
        if (dlo < 0) != (dhi < 0):
            for _ in range(60):
                m = 0.5 * (lo + hi)
                if (disc(m) < 0) == (dlo < 0):
                    lo = m
                else:
                    hi = m
            phi = hi if dlo < 0 else lo
            cands += [rho * np.exp(1j * phi) for rho in roots(phi)]
    if not cands:
        raise ProfileDesignError(
            "no free amplitude h cancels Psi; alter |beta_j| or the interaction time")

    def peak(h):
        g = solve_coefficients(target_beta, h, rs)
        return network_profile(g, h, basis, rs.tau, rs.omega_free).peak(n_peak_samples)

    return complex(min(cands, key=peak))


# tried in order when the caller leaves the free frequency open (units of min nu)
FREE_FREQUENCY_LADDER = (1 / np.sqrt(2), 0.3, 0.5, 0.9, 1.3, 1.7, 2.2, 3.0)


def synthesize_multimode(thetas, beta_mags, basis: NormalModeBasis, tau: float,
                         omega_free: float | None = None, tol: float = 1e-8):
    """Network profile reading out ``sum_j |beta_j| Q_{theta_j}`` with ``Psi = 0``.

    If ``omega_free`` is None the free frequency is taken from
    :data:`FREE_FREQUENCY_LADDER` (first admissible value wins).  The realized
    displacement and phase are re-evaluated from the profile and checked
    against the target before returning.
    """
    report = validate_assumptions(basis)
    if not report.ok:
        raise ProfileDesignError(f"network violates the readout assumptions: {report}")
    beta_t = target_beta(thetas, beta_mags)
    if beta_t.size != basis.n_modes:
        raise ValueError("one (theta, |beta|) pair is needed per normal mode")
    if omega_free is None:
        ladder = [f * basis.nu.min() for f in FREE_FREQUENCY_LADDER]
        ladder = [w for w in ladder if np.min(np.abs(w - basis.nu)) > 1e-3 * basis.nu.min()]
    else:
        ladder = [omega_free]
    last = None
    for w in ladder:
        rs = build_rs_matrices(basis, tau, w)
        try:
            h = solve_h_for_zero_psi(beta_t, rs, basis)
        except ProfileDesignError as exc:
            last = exc
            continue
        g = solve_coefficients(beta_t, h, rs)
        profile = network_profile(g, h, basis, tau, rs.omega_free)
        result = displacement(profile, basis)
        _verify(result, beta_t, tol)
        return profile, result
    raise ProfileDesignError(f"{last} (tau={tau:g}, tried omega_free={np.round(ladder, 4)})")
