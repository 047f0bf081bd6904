"""Pseudo-spectral Galerkin laboratory for viscous non-resistive MHD.

Modules: ``spectral`` (band-limited fields and operators), ``nonlinear``
(alias-free products, commutators, estimate probes), ``mhd`` (truncated MHD
solver), ``stokes`` (reduced Stokes model), ``counterexample`` (continuum
Fourier-space counterexample at s = n/2) and ``cli``.
"""

__version__ = "0.1.0"
