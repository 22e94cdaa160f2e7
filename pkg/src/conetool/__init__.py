"""Tip asymptotics and model-cone solvers for parabolic flows on conic manifolds.

Submodules
----------
spectrum    cross-section Laplacian spectra
indicial    conormal roots, asymptotics sets and parameter windows
fields      radial meshes, mode-decomposed fields, angular transform
meshnorm    Mellin-Sobolev norms and near-tip exponent fits
conesolve   heat, porous medium and Swift-Hohenberg solvers on the model cone
freezeflow  frozen-coefficient splitting and sectoriality probes
cli         the ``conetool`` command
"""
__version__ = "0.1.0"
