"""Homodyne sampling, loss inversion and moment-based state reconstruction.

The pipeline for one reconstruction:

1. for every designed setting, sample ``P_out`` (or use exact moments),
2. undo the loss channel on the raw moments,
3. solve the multinomial system for the mixed mechanical moments,
4. assemble mean and covariance from first and second moments.

All randomness flows from ``SeedSequence(seed, spawn_key=(point, setting, trial))``
so a trial can be replayed in isolation and the result does not depend on
how trials are distributed over workers.
"""
from __future__ import annotations

import itertools
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from math import factorial, fsum, sqrt

import numpy as np

from .dynamics import (EvolvedObservable, LossChannel, normal_moment, evolved_momentum, loss_moments_forward,
                       vacuum_moment)
from .gaussian import (MAX_ORDER, GaussianState, check_physicality, gaussian_fidelity,
                       observable_law, quadrature_moments_exact)
from .network import NormalModeBasis, local_to_normal, normal_to_local
from .profile import DisplacementResult, InteractionProfile, ProfileDesignError, synthesize_multimode, synthesize_single_mode

SINGLE_MODE_THETAS = (0.0, np.pi / 4, -np.pi / 4, np.pi / 2)
NETWORK_PAIRS = ((-np.pi / 2, -np.pi / 2), (0.0, 0.0), (0.0, -np.pi / 2),
                 (-np.pi / 2, 0.0), (-3 * np.pi / 4, -3 * np.pi / 4), (-np.pi / 4, -np.pi / 4))
# interaction times for NETWORK_PAIRS in units of 1/min(nu)
NETWORK_TAUS = (5.0, 15.0, 3.0, 25.0, 25.0, 3.0)


class RankDeficientError(np.linalg.LinAlgError):
    def __init__(self, message, labels):
        super().__init__(f"{message}: {', '.join(labels)}")
        self.labels = list(labels)


# --------------------------------------------------------------------------
# sampling


@dataclass(frozen=True)
class Setting:
    thetas: tuple
    beta_mags: tuple
    epsilon: float = 0.0
    n_samples: int = 1000
    seed: int = 0

    def __post_init__(self):
        if any(b <= 0 for b in self.beta_mags):
            raise ValueError("beta magnitudes must be positive")
        if self.n_samples < 1:
            raise ValueError("n_samples must be at least 1")
        LossChannel(self.epsilon)


@dataclass(frozen=True)
class MeasurementPlan:
    settings: list
    order: int = 2


@dataclass(frozen=True)
class SampleSet:
    outcomes: np.ndarray
    setting: object = None
    seed: object = None

    def __len__(self):
        return self.outcomes.size


def _rng(seed):
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)


def simulate_homodyne(state: GaussianState, obs: EvolvedObservable, epsilon: float,
                      n: int, seed=None, setting=None) -> SampleSet:
    """Draw ``n`` outcomes of the lossy readout ``sqrt(1-eps) P(tau) + sqrt(eps) P_vac``.

    Every map involved is linear and the inputs are Gaussian, so the
    outcome law is normal and can be sampled exactly.
    """
    LossChannel(epsilon)
    if n < 1:
        raise ValueError("need at least one sample")
    mean, var = observable_law(state, obs)
    mean_out = sqrt(1 - epsilon) * mean
    sd_out = sqrt((1 - epsilon) * var + epsilon / 2)
    x = _rng(seed).normal(mean_out, sd_out, size=n)
    return SampleSet(x, setting, seed)


def empirical_moments(samples, order: int) -> np.ndarray:
    """Raw sample moments ``mean(x^k)``, k=1..order."""
    x = samples.outcomes if isinstance(samples, SampleSet) else np.asarray(samples, dtype=float)
    if x.size == 0:
        raise ValueError("empty sample set")
    if order > MAX_ORDER:
        raise ValueError(f"order {order} > {MAX_ORDER} is not supported")
    return np.array([np.mean(x ** k) for k in range(1, order + 1)])


def invert_loss(measured, epsilon: float) -> np.ndarray:
    """Undo the loss channel on raw moments (both indexed 0..n, entry 0 equal to 1).

    Adding independent normal noise of variance ``eps/2`` is undone by the
    same binomial convolution with variance ``-eps/2``, followed by the
    ``(1-eps)^(-m/2)`` rescaling.  This avoids the error growth of solving
    the triangular system row by row.
    """
    if epsilon >= 1:
        raise ValueError("epsilon = 1 erases the signal")
    LossChannel(epsilon)
    q = np.asarray(measured, dtype=float)
    s = np.array([fsum(_binom(m, k) * normal_moment(k, -epsilon / 2) * q[m - k] for k in range(m + 1))
                  for m in range(q.size)])
    return s / (1 - epsilon) ** (np.arange(q.size) / 2)


def _binom(m, k):
    return factorial(m) // (factorial(k) * factorial(m - k))


# --------------------------------------------------------------------------
# moment systems


@dataclass(frozen=True)
class MomentLabel:
    config: int
    thetas: tuple
    powers: tuple

    def __str__(self):
        parts = [f"Q{j + 1}({t:+.4f})^{k}" for j, (t, k) in enumerate(zip(self.thetas, self.powers)) if k]
        return f"<{' '.join(parts)}>"


@dataclass(frozen=True)
class MomentSystem:
    matrix: np.ndarray
    rhs: np.ndarray
    labels: list
    row_info: list = field(default_factory=list)


@dataclass(frozen=True)
class MomentSolution:
    labels: list
    values: np.ndarray
    residual: float
    condition: float

    def as_dict(self) -> dict:
        return dict(zip(self.labels, self.values))


def _compositions(total, parts):
    """All non-negative integer vectors of length ``parts`` summing to ``total``."""
    for cut in itertools.combinations(range(total + parts - 1), parts - 1):
        edges = (-1,) + cut + (total + parts - 1,)
        yield tuple(edges[i + 1] - edges[i] - 1 for i in range(parts))


def _config_key(thetas, ndigits=6):
    return tuple(np.round(np.angle(np.exp(1j * np.asarray(thetas, dtype=float))), ndigits))


def build_moment_system(results, order: int) -> MomentSystem:
    """Linear system linking readout moments to mixed mechanical moments.

    Parameters
    ----------
    results : iterable of (beta_mags, thetas, p_tau_moments)
        ``p_tau_moments`` is indexed 0..n (entry 0 equal to 1) with ``n >= order``.
        Settings sharing the same ``thetas`` address the same unknowns.
    order : int
        Highest moment order used.

    Each row is scaled by ``(sqrt2 max|beta|)^-m`` so rows of different
    order have comparable size.
    """
    results = [(np.atleast_1d(np.asarray(b, float)), np.atleast_1d(np.asarray(t, float)),
                np.asarray(p, float)) for b, t, p in results]
    if not results:
        raise ValueError("no settings supplied")
    n_modes = results[0][0].size
    configs = {}
    for b, t, _ in results:
        configs.setdefault(_config_key(t), t)
    config_index = {key: i for i, key in enumerate(configs)}
    powers = [k for m in range(1, order + 1) for k in _compositions(m, n_modes)]
    labels = [MomentLabel(config_index[key], tuple(configs[key]), k)
              for key in configs for k in powers]
    col = {(lab.config, lab.powers): i for i, lab in enumerate(labels)}

    rows, rhs, info = [], [], []
    for s, (b, t, p) in enumerate(results):
        if p.size <= order:
            raise ValueError("p_tau_moments must be indexed 0..order")
        c = config_index[_config_key(t)]
        w = -sqrt(2) * b
        for m in range(1, order + 1):
            scale = (sqrt(2) * b.max()) ** -m
            row = np.zeros(len(labels))
            const = vacuum_moment(m)
            for k in (k for mm in range(1, m + 1) for k in _compositions(mm, n_modes)):
                k0 = m - sum(k)
                coef = factorial(m) / (factorial(k0) * np.prod([factorial(x) for x in k]))
                row[col[(c, k)]] += coef * vacuum_moment(k0) * np.prod(w ** np.array(k))
            rows.append(scale * row)
            rhs.append(scale * (p[m] - const))
            info.append((s, m))
    return MomentSystem(np.array(rows), np.array(rhs), labels, info)


def _deficient_labels(A, labels, rtol=1e-10):
    _, sv, vt = np.linalg.svd(A)
    rank = int(np.sum(sv > rtol * sv.max())) if sv.size else 0
    null = vt[rank:]
    hit = np.abs(null).max(axis=0) > 1e-6 if null.size else np.zeros(len(labels), bool)
    return rank, [str(l) for l, h in zip(labels, hit) if h]


def solve_moment_system(sys: MomentSystem) -> MomentSolution:
    """Least-squares solution (exact when square) of a moment system."""
    A = sys.matrix
    norms = np.linalg.norm(A, axis=0)
    norms[norms == 0] = 1.0
    As = A / norms
    rank, bad = _deficient_labels(As, sys.labels)
    if rank < A.shape[1]:
        raise RankDeficientError("moment system is rank deficient in", bad)
    y, *_ = np.linalg.lstsq(As, sys.rhs, rcond=None)
    x = y / norms
    residual = float(np.linalg.norm(A @ x - sys.rhs))
    return MomentSolution(sys.labels, x, residual, float(np.linalg.cond(As)))


def assemble_covariance(solution, n_modes: int) -> GaussianState:
    """Mean and covariance from first and second quadrature moments.

    Each configuration contributes ``<Q_theta_j> = a_j . mu`` and
    ``<Q_theta_j Q_theta_k> = a_j^T (cov + mu mu^T) a_k`` with
    ``a_j = cos(theta_j) e_Qj + sin(theta_j) e_Pj``; both sets are solved by
    least squares.  Physicality is not enforced.
    """
    moments = solution.as_dict() if isinstance(solution, MomentSolution) else dict(solution)
    dim = 2 * n_modes
    iu = np.triu_indices(dim)
    names = [f"Q{i + 1}" for i in range(n_modes)] + [f"P{i + 1}" for i in range(n_modes)]

    def avec(thetas, j):
        a = np.zeros(dim)
        a[j], a[n_modes + j] = np.cos(thetas[j]), np.sin(thetas[j])
        return a

    r1, y1, r2, y2 = [], [], [], []
    for lab, val in moments.items():
        order = sum(lab.powers)
        idx = [j for j, k in enumerate(lab.powers) for _ in range(k)]
        if order == 1:
            r1.append(avec(lab.thetas, idx[0]))
            y1.append(val)
        elif order == 2:
            a, b = avec(lab.thetas, idx[0]), avec(lab.thetas, idx[1])
            outer = 0.5 * (np.outer(a, b) + np.outer(b, a))
            outer = outer + outer.T - np.diag(np.diag(outer))
            r2.append(outer[iu])
            y2.append(val)
    if not r1 or not r2:
        raise ValueError("first and second moments are both required")
    A1, A2 = np.array(r1), np.array(r2)
    missing = []
    rank, bad = _deficient_labels(A1, [f"mean[{n}]" for n in names])
    if rank < dim:
        missing += bad
    rank, bad = _deficient_labels(A2, [f"cov[{names[i]},{names[j]}]" for i, j in zip(*iu)])
    if rank < iu[0].size:
        missing += bad
    if missing:
        raise RankDeficientError("quadrature set leaves entries unconstrained", missing)
    mu = np.linalg.lstsq(A1, np.array(y1), rcond=None)[0]
    s = np.linalg.lstsq(A2, np.array(y2), rcond=None)[0]
    second = np.zeros((dim, dim))
    second[iu] = s
    second = second + second.T - np.diag(np.diag(second))
    cov = second - np.outer(mu, mu)
    return GaussianState(mu, 0.5 * (cov + cov.T))


# --------------------------------------------------------------------------
# deconvolution


def deconvolve_distribution(density, grid, beta_mag: float, reg: float = 1e-8) -> np.ndarray:
    """Estimate the quadrature distribution from the rescaled readout histogram.

    The rescaled readout ``-P(tau)/(sqrt2 |beta|)`` is the quadrature plus
    independent Gaussian noise of variance ``1/(4|beta|^2)``.  The kernel is
    removed by Tikhonov-regularised division in Fourier space.

    Parameters
    ----------
    density : array
        Histogram (density) of the rescaled readout on ``grid``.
    grid : array
        Uniformly spaced bin centres.
    beta_mag : float
        Displacement magnitude used for the readout.
    reg : float
        Tikhonov parameter relative to the kernel's unit DC gain.
    """
    density = np.asarray(density, dtype=float)
    grid = np.asarray(grid, dtype=float)
    dx = grid[1] - grid[0]
    if not np.allclose(np.diff(grid), dx, rtol=1e-9, atol=0):
        raise ValueError("grid must be uniform")
    k = 2 * np.pi * np.fft.rfftfreq(grid.size, d=dx)
    H = np.exp(-0.5 * k ** 2 / (4 * beta_mag ** 2))
    # with only a few harmonics in the passband the estimate is a smooth bump
    if np.count_nonzero(H ** 2 > reg) < 4:
        warnings.warn("kernel is too wide for this grid; deconvolution returns a nearly flat estimate",
                      RuntimeWarning)
    # the phase of the data spectrum is untouched: the kernel is real and even
    F = np.fft.rfft(density)
    est = np.fft.irfft(F * H / (H ** 2 + reg), n=grid.size)
    est = np.clip(est, 0.0, None)
    return est / (est.sum() * dx)


def convolve_readout_kernel(density, grid, beta_mag: float) -> np.ndarray:
    """Forward model: smear a quadrature density with the readout kernel."""
    density = np.asarray(density, dtype=float)
    dx = grid[1] - grid[0]
    k = 2 * np.pi * np.fft.rfftfreq(grid.size, d=dx)
    H = np.exp(-0.5 * k ** 2 / (4 * beta_mag ** 2))
    return np.fft.irfft(np.fft.rfft(density) * H, n=grid.size)


# --------------------------------------------------------------------------
# reconstruction pipelines


@dataclass(frozen=True)
class DesignedSetting:
    config: int
    profile: InteractionProfile
    disp: DisplacementResult

    @property
    def observable(self) -> EvolvedObservable:
        return evolved_momentum(self.disp)


def augmentation_schedule(n_modes: int, order: int) -> list:
    """|beta| scale vectors giving enough independent rows per configuration.

    Starts at all ones, then multiplies one mode at a time by 2, 3, ...  For
    two modes and order 2 this is (1,1), (2,1), (1,2).  Distinct factors
    keep the ratios |beta_2|/|beta_1| distinct, which the homogeneous
    blocks of order >= 3 need.
    """
    need = max(_binom(m + n_modes - 1, n_modes - 1) for m in range(1, order + 1))
    out = [np.ones(n_modes)]
    factor = 2.0
    while len(out) < need:
        for j in range(n_modes):
            if len(out) == need:
                break
            s = np.ones(n_modes)
            s[j] = factor
            out.append(s)
        factor += 1.0
    return out


def design_single_mode(omega_m: float = 1.0, tau: float | None = None,
                       thetas=SINGLE_MODE_THETAS, beta_mag: float = 5.0) -> list:
    tau = 2 * np.pi / omega_m if tau is None else tau
    out = []
    for c, th in enumerate(thetas):
        prof, disp = synthesize_single_mode(th, beta_mag, omega_m, tau)
        out.append(DesignedSetting(c, prof, disp))
    return out


def design_network(basis: NormalModeBasis, pairs=NETWORK_PAIRS, taus=NETWORK_TAUS,
                   base_mag: float = 1.0, order: int = 2) -> list:
    """Synthesize one profile per (configuration, |beta| scaling).

    ``taus`` are in units of ``1/min(nu)``.
    """
    nu_min = basis.nu.min()
    sched = augmentation_schedule(basis.n_modes, order)
    out = []
    for c, (th, t) in enumerate(zip(pairs, taus)):
        for s in sched:
            try:
                prof, disp = synthesize_multimode(th, base_mag * s, basis, t / nu_min)
            except ProfileDesignError as exc:
                raise ProfileDesignError(
                    f"thetas={np.round(th, 4).tolist()}, |beta| scale={s.tolist()}: {exc}") from exc
            out.append(DesignedSetting(c, prof, disp))
    return out


def _setting_seed(seed: int, setting: int, trial: int, point: int = 0) -> np.random.SeedSequence:
    return np.random.SeedSequence(seed, spawn_key=(point, setting, trial))


def readout_moments(state: GaussianState, setting: DesignedSetting, order: int,
                    epsilon: float = 0.0, n_samples: int | None = None, rng_seed=None) -> np.ndarray:
    """Loss-corrected moments ``<P(tau)^m>``, m=0..order.

    With ``n_samples=None`` the exact moments are pushed through the loss
    channel and back; otherwise they are estimated from simulated samples.
    """
    obs = setting.observable
    if n_samples is None:
        exact = np.r_[1.0, quadrature_moments_exact(state, obs, order)]
        measured = loss_moments_forward(exact, epsilon)
    else:
        samples = simulate_homodyne(state, obs, epsilon, n_samples, rng_seed)
        measured = np.r_[1.0, empirical_moments(samples, order)]
    return invert_loss(measured, epsilon)


def reconstruct(state: GaussianState, design, epsilon: float = 0.0, n_samples: int | None = None,
                seed: int = 0, trial: int = 0, order: int = 2, point: int = 0):
    """Reconstruct a state (in the readout mode basis) from one simulated experiment.

    Returns
    -------
    (GaussianState, MomentSolution)
    """
    results = []
    for i, ds in enumerate(design):
        p = readout_moments(state, ds, order, epsilon, n_samples,
                            None if n_samples is None else _setting_seed(seed, i, trial, point))
        # the configuration index, not the realized angle, identifies shared unknowns
        thetas = np.asarray(_design_thetas(design, ds.config))
        results.append((ds.disp.beta_mag, thetas, p))
    sol = solve_moment_system(build_moment_system(results, order))
    return assemble_covariance(sol, state.n_modes), sol


def _design_thetas(design, config):
    ths = np.array([ds.disp.theta for ds in design if ds.config == config])
    return np.angle(np.exp(1j * ths).mean(axis=0))


def safe_fidelity(a: GaussianState, b: GaussianState) -> float:
    """Fidelity, or 0 when the estimate is unphysical."""
    if not check_physicality(a).physical or not check_physicality(b).physical:
        return 0.0
    return gaussian_fidelity(a, b)


@dataclass(frozen=True)
class SweepPoint:
    n_samples: int
    epsilon: float
    mean: float
    std: float
    n_trials: int
    n_unphysical: int

    @property
    def stderr(self) -> float:
        return self.std / sqrt(self.n_trials)


def _trial(args):
    state, design, basis, epsilon, n, seed, point, trial, order = args
    normal = state if basis is None else local_to_normal(state, basis)
    est, _ = reconstruct(normal, design, epsilon, n, seed, trial, order, point)
    if basis is not None:
        est = normal_to_local(est, basis)
    return safe_fidelity(est, state), not check_physicality(est).physical


def fidelity_sweep(state: GaussianState, design, n_grid, trials: int = 100, epsilon: float = 0.0,
                   seed: int = 0, basis: NormalModeBasis | None = None, order: int = 2,
                   workers: int = 1) -> list:
    """Mean and spread of the reconstruction fidelity against the sample count.

    ``state`` is given in the original (local) modes when ``basis`` is set;
    reconstruction happens in the normal-mode basis and is mapped back.
    Unphysical estimates score fidelity 0 and are counted.  Trial ``t`` at
    grid point ``i`` draws setting ``k`` from the stream ``(seed; i, k, t)``, so results do not
    depend on ``workers``.
    """
    out = []
    for i, n in enumerate(n_grid):
        jobs = [(state, design, basis, epsilon, int(n), seed, i, t, order)
                for t in range(trials)]
        if workers > 1:
            with ProcessPoolExecutor(workers) as ex:
                res = list(ex.map(_trial, jobs, chunksize=max(1, trials // (4 * workers))))
        else:
            res = [_trial(j) for j in jobs]
        f = np.array([r[0] for r in res])
        out.append(SweepPoint(int(n), float(epsilon), float(f.mean()), float(f.std(ddof=1)) if trials > 1 else 0.0,
                              trials, int(sum(r[1] for r in res))))
    return out
