"""Characteristic-function readout in the single-photon coupling regime.

With a constant coupling ``g0 a^dag a (b + b^dag)`` the evolution is
``exp(i psi N^2) D(N beta)``.  The cavity starts in a coherent state
``|alpha>`` and its mean field carries the mechanical characteristic
function:

    <X> + i<P> = sqrt2 alpha exp(i psi + |alpha|^2 (e^{2i psi} - 1)) chi(beta)

Only a ring of ``beta`` values is reachable by varying the interaction time.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .network import NormalModeBasis
from .profile import InteractionProfile, beta_of_profile, psi_of_profile

PREFACTOR_THRESHOLD = 1e-12
POINTS_PER_PERIOD = 64


@dataclass(frozen=True)
class RingPoint:
    tau: float
    beta: complex
    psi: float


@dataclass(frozen=True)
class ChiEstimate:
    beta: complex
    chi: complex
    provenance: str = "measured"
    stderr: float = 0.0

    @property
    def bounded(self) -> bool:
        """``|chi| <= 1`` up to three standard errors (a check, never a clamp)."""
        return abs(self.chi) <= 1.0 + 3.0 * self.stderr + 1e-12


def ring_point(g0: float, omega_m: float, tau: float) -> RingPoint:
    if tau < 0:
        raise ValueError("tau must be non-negative")
    if tau == 0:
        return RingPoint(0.0, 0j, 0.0)
    profile = InteractionProfile(np.array([g0], dtype=complex), np.array([0.0]), tau)
    basis = NormalModeBasis.single_mode(omega_m)
    return RingPoint(float(tau), complex(beta_of_profile(profile, basis).beta[0]),
                     psi_of_profile(profile, basis))


def ring_scan(g0: float, omega_m: float, n_points: int = POINTS_PER_PERIOD, periods: float = 1.0):
    """Ring points at ``n_points`` equally spaced times per mechanical period."""
    n = int(round(n_points * periods))
    taus = np.arange(n) * 2 * np.pi / (omega_m * n_points)
    return [ring_point(g0, omega_m, t) for t in taus]


def prefactor(alpha: complex, psi: float) -> complex:
    """Map from ``chi(beta)`` to ``<X> + i<P>``."""
    a2 = abs(alpha) ** 2
    return np.sqrt(2) * alpha * np.exp(1j * psi + a2 * (np.exp(2j * psi) - 1))


def analytic_chi(state_kind: str, beta: complex, nbar: float = 0.0, gamma: complex = 0.0) -> complex:
    """``tr{D(beta) rho}`` for vacuum, thermal(nbar) and coherent(gamma) states."""
    beta = complex(beta)
    if state_kind == "vacuum":
        return complex(np.exp(-abs(beta) ** 2 / 2))
    if state_kind == "thermal":
        return complex(np.exp(-(nbar + 0.5) * abs(beta) ** 2))
    if state_kind == "coherent":
        return complex(np.exp(-abs(beta) ** 2 / 2 + beta * np.conj(gamma) - np.conj(beta) * gamma))
    raise ValueError(f"unknown state kind {state_kind!r}")


def forward_expectations(alpha: complex, ring: RingPoint, chi_true: complex) -> tuple[float, float]:
    z = prefactor(alpha, ring.psi) * chi_true
    return float(z.real), float(z.imag)


def reconstruct_chi(x_mean: float, p_mean: float, alpha: complex, ring: RingPoint,
                    stderr: float = 0.0, provenance: str = "measured") -> ChiEstimate:
    pref = prefactor(alpha, ring.psi)
    if abs(pref) < PREFACTOR_THRESHOLD:
        raise ValueError(f"prefactor {abs(pref):.1e} too small to invert (alpha={alpha}, psi={ring.psi:g})")
    return ChiEstimate(ring.beta, complex(x_mean + 1j * p_mean) / pref, provenance, stderr / abs(pref))


def second_moments(alpha: complex, ring: RingPoint, chi_double: complex) -> tuple[float, float]:
    """``<X^2>`` and ``<P^2>`` of the cavity after the pulse.

    ``chi_double`` is the characteristic function at ``2 beta``; the photon
    number is conserved so ``<a^dag a> = |alpha|^2``.
    """
    a2 = abs(alpha) ** 2
    psi = ring.psi
    aa = alpha ** 2 * np.exp(4j * psi + a2 * (np.exp(4j * psi) - 1)) * chi_double
    return a2 + 0.5 + aa.real, a2 + 0.5 - aa.real


def simulate_ring(alpha: complex, rings, chi_fn, shots: int, seed=None) -> list:
    """Reconstruct ``chi`` along a ring from ``shots`` homodyne shots per quadrature.

    The sample means of X and P are drawn from their Gaussian
    standard-error law, using the exact first and second moments of the
    cavity field.  ``chi_fn(beta)`` is the true characteristic function.
    """
    rng = np.random.default_rng(seed)
    out = []
    for rp in rings:
        xm, pm = forward_expectations(alpha, rp, chi_fn(rp.beta))
        x2, p2 = second_moments(alpha, rp, chi_fn(2 * rp.beta))
        vx, vp = max(x2 - xm ** 2, 0.0), max(p2 - pm ** 2, 0.0)
        x = rng.normal(xm, np.sqrt(vx / shots))
        p = rng.normal(pm, np.sqrt(vp / shots))
        out.append(reconstruct_chi(x, p, alpha, rp, stderr=np.sqrt((vx + vp) / shots)))
    return out


def ring_to_csv(rings, estimates, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["tau", "re_beta", "im_beta", "psi", "re_chi", "im_chi"])
        for rp, est in zip(rings, estimates):
            w.writerow([repr(float(v)) for v in (rp.tau, rp.beta.real, rp.beta.imag, rp.psi,
                                                  est.chi.real, est.chi.imag)])
