"""Pseudo-spectral simulation of rotating, density-dependent 2-D MHD on the torus.

Subpackages of functionality:

* :mod:`rotmhd.grid` -- grid, transforms, differential operators, projection
* :mod:`rotmhd.littlewood_paley` -- dyadic blocks, Besov/Sobolev norms, paraproducts
* :mod:`rotmhd.dynamics` -- primitive and limit right-hand sides, diagnostics
* :mod:`rotmhd.timestepper` -- integrating-factor Runge-Kutta stepping
* :mod:`rotmhd.experiments` -- sweeps, twin runs, invariant suite
* :mod:`rotmhd.config`, :mod:`rotmhd.io`, :mod:`rotmhd.cli` -- configuration and persistence
"""

__version__ = "0.1.0"
