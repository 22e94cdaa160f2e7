"""Scalar sectorial bound of -Delta + 1 on graded meshes of increasing size."""
import numpy as np

from conetool.conesolve import ConeModel, assemble_mode_operator
from conetool.fields import RadialMesh
from conetool.freezeflow import sectorial_probe
from conetool.spectrum import circle_spectrum

gamma = -0.5  # inside the Laplacian weight window (-1, 0) for the unit circle
for N in (128, 256, 512, 1024):
    model = ConeModel(circle_spectrum(1, 1), RadialMesh.geometric(N, 1e-6), "neumann")
    op = assemble_mode_operator(model, 0)
    res = sectorial_probe(-op.matrix, 3 * np.pi / 4, 1.0, 41,
                          op.volumes * model.mesh.x ** (-2 * gamma))
    print(f"N = {N:5d}: K_est = {res.K_est:.6f} at lambda = {res.argmax:.3g}")
