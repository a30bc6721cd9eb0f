"""Walk through one reconstruction end to end, printing what each stage produces.

    python3 demos/walkthrough.py

1. design an interaction profile that reads out a chosen mechanical quadrature
2. sample the lossy homodyne readout and reconstruct a squeezed thermal state
3. repeat on a two-mode network in its normal-mode basis
4. read the characteristic function on the single-photon ring
"""
import numpy as np

from optorecon.dynamics import evolved_momentum
from optorecon.estimator import (deconvolve_distribution, design_network,
                                 design_single_mode, reconstruct, simulate_homodyne)
from optorecon.gaussian import gaussian_fidelity, make_squeezed_thermal, make_two_mode_squeezed_thermal
from optorecon.network import NetworkSpec, local_to_normal, normal_to_local, validate_assumptions, \
    williamson_diagonalize
from optorecon.singlephoton import analytic_chi, ring_scan, simulate_ring

np.set_printoptions(precision=4, suppress=True)

# -- 1. one mechanical mode, one period of interaction
design = design_single_mode(omega_m=1.0, beta_mag=5.0)
print("single mode: four profiles, one per quadrature angle")
for ds in design:
    obs = evolved_momentum(ds.disp)
    print(f"  theta={ds.disp.theta[0]:+.4f}  |beta|={ds.disp.beta_mag[0]:.4f}  Psi={ds.disp.psi:+.1e}"
          f"  peak g={ds.profile.peak():.3f}  readout weight={obs.quad_weights[0]:+.3f}")

# -- 2. finite-sample reconstruction with 20% loss
state = make_squeezed_thermal(1.0, 0.2)
est, sol = reconstruct(state, design, epsilon=0.2, n_samples=2000, seed=1)
print("\nsqueezed thermal state, 2000 samples per setting, eps=0.2")
print("  true cov\n", state.cov)
print("  estimated cov\n", est.cov)
print(f"  fidelity {gaussian_fidelity(est, state):.5f}, moment-system condition {sol.condition:.1f}")

# the rescaled readout -P/(sqrt2|beta|) is the quadrature blurred by a Gaussian of
# variance 1/(4|beta|^2); with a weak readout (|beta|=1) the blur is visible
weak = design_single_mode(beta_mag=1.0)
x = simulate_homodyne(state, weak[0].observable, 0.0, 200000, seed=2).outcomes / (-np.sqrt(2) * 1.0)
grid = np.linspace(-8, 8, 512, endpoint=False)
dx = grid[1] - grid[0]
hist, _ = np.histogram(x, bins=np.r_[grid, grid[-1] + dx], density=True)
sharp = deconvolve_distribution(hist, grid, 1.0, reg=1e-2)
print(f"  |beta|=1 readout: histogram variance {np.sum(grid ** 2 * hist) * dx:.4f},"
      f" deconvolved {np.sum(grid ** 2 * sharp) * dx:.4f}, true {state.cov[0, 0]:.4f}")

# -- 3. two coupled modes
spec = NetworkSpec.two_mode(2.0, 0.7, 0.7)
basis = williamson_diagonalize(spec)
print(f"\nnetwork normal modes nu={basis.nu}, couplings G={basis.g_vec.real}")
rep = validate_assumptions(basis)
print(f"  readout assumptions: all G_j nonzero {rep.a1_ok}, nondegenerate spectrum {rep.a2_ok}")
pairs = ((-np.pi / 2, -np.pi / 2), (0.0, 0.0), (0.0, -np.pi / 2), (-np.pi / 2, 0.0),
         (-3 * np.pi / 4, -3 * np.pi / 4), (-np.pi / 4, -np.pi / 4))
net = design_network(basis, pairs, (5, 15, 4, 25, 25, 4))
print(f"  {len(net)} profiles (six angle pairs x three |beta| scalings)")
two = make_two_mode_squeezed_thermal(1.5, 0.2)
est, _ = reconstruct(local_to_normal(two, basis), net, n_samples=20000, seed=3)
back = normal_to_local(est, basis)
print(f"  fidelity from 20000 samples per setting: {gaussian_fidelity(back, two):.5f}")

# -- 4. single-photon coupling: chi(beta) on a ring
rings = ring_scan(0.5, 1.0, 16)
gamma = 0.7 + 0.3j
chi = lambda b: analytic_chi("coherent", b, gamma=gamma)
est = simulate_ring(1.0, rings, chi, 10000, seed=4)
print("\nsingle-photon ring, coherent mechanics, 1e4 shots per point")
for rp, e in list(zip(rings, est))[::4]:
    print(f"  beta={rp.beta:+.3f}  psi={rp.psi:.3f}  chi={e.chi:+.3f} +- {e.stderr:.3f}  true={chi(rp.beta):+.3f}")
