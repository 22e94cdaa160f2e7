"""Indicial roots on a circle cone and the tip exponents a heat flow produces."""
import numpy as np

from conetool.conesolve import ConeModel, SolverConfig, mode_eigenpairs, solve_heat
from conetool.fields import ConeField, RadialMesh
from conetool.indicial import conormal_roots, q_set, weight_window
from conetool.meshnorm import fit_exponent
from conetool.spectrum import circle_spectrum

# %% cross section: circle of length 2 pi a, a = 1/2 (an opening angle of pi)
spec = circle_spectrum(0.5, 3)
for r in conormal_roots(spec, 1):
    print(f"mode {r.mode}: rho = {r.rho_plus:+.3f}, {r.rho_minus:+.3f}")

win = weight_window("laplacian", 1, spec.eigenvalues[1])
gamma = 0.5 * (win.lo + win.hi)
print("weight window", (win.lo, win.hi), "-> gamma =", gamma)
for root in q_set(spec, 1, gamma, 2, allow_incomplete=True):
    print(f"  Q_2 root {root.rho.real:+.2f}, pole order {root.eta}")

# %% heat flow from mode-2 data; the fitted exponent should be l / a = 4
mesh = RadialMesh.geometric(400, 1e-6)
model = ConeModel(spec, mesh, "dirichlet")
x = mesh.x
c = np.zeros((4, len(x)), complex)
c[2] = x**4 * (1 - x**2)
mu = mode_eigenpairs(model, 2, 1)[0][0]
T = 1 / mu
traj = solve_heat(model, ConeField(c, mesh, spec), SolverConfig(dt=T / 100, t_end=T))
fit = fit_exponent(traj[-1], 2, (1e-4, 1e-2))
print(f"t = {T:.4f}: alpha = {fit.alpha:.5f}, log power {fit.log_power}, "
      f"residual {fit.residual:.1e}")
