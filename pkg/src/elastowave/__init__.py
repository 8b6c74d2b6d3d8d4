"""Summation-by-parts finite differences for scalar and elastic waves on multiblock curvilinear grids.

Modules
-------
sbp            operator triplets (shifted, symmetric, GLL), closures and certificates
timestepping   central-difference integrator, CFL bound, power iteration
wave1d         1D scalar wave equation with Dirichlet/Robin/non-reflecting ends and interfaces
geometry       mappings, analytic metrics and block grids
elastic        anisotropic elastic operator, boundary conditions, multiblock assembly, sources
config/model   TOML configuration and model building
output         CSV traces, ``EWSNAP01`` snapshots, JSON manifests
verify         independent oracles and the experiment drivers
cli            the ``elastowave`` command
"""
__version__ = "0.1.0"

from ._backend import DEFAULT_BACKEND  # noqa: E402,F401
