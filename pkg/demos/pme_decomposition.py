"""Frozen-coefficient splitting u = v_tau + w_tau for a porous medium flow."""
import numpy as np

from conetool.conesolve import ConeModel, SolverConfig, solve_pme
from conetool.fields import ConeField, RadialMesh
from conetool.freezeflow import decompose, epsilon_window, remainder_bound
from conetool.spectrum import circle_spectrum

spec = circle_spectrum(1, 3)
mesh = RadialMesh.geometric(100, 1e-4)
x = mesh.x
c = np.zeros((4, len(x)), complex)
c[0] = 1.5 + 0.3 * np.cos(np.pi * x)
c[1] = 0.1 * x * (1 - x)
c[2] = 0.05j * x**2

# decomposition needs a snapshot at every step
dt, t_end = 1e-3, 0.2
times = tuple(np.round(np.arange(0, t_end + 1e-9, dt), 12))
traj = solve_pme(ConeModel(spec, mesh, "neumann"), ConeField(c, mesh, spec),
                 SolverConfig(time_stepper="be", dt=dt, t_end=t_end, times=times, m=2))

rep = decompose(traj, 0.04, 0.12)
print("w norm on [0.04, 0.12]:", rep.w_norm, " route gap:", rep.duhamel_gap)

# ||w|| <= C (nu - tau)^{1/q'} across nested windows
out = remainder_bound(traj, 0.04, [0.14, 0.09, 0.065])
print("fitted C in", (out["C_min"], out["C_max"]), "ratio", out["ratio"])

ew = epsilon_window(traj, 0.1, 1e-3)
print("epsilon window:", ew["t1"], ew["t2"], "w =", ew["w_norm"])
