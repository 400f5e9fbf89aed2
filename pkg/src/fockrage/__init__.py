"""Finite-dimensional many-body RAGE toolkit.

Modules: ``onebody`` (lattice operators), ``fock`` (sectors and
Hamiltonians), ``reduced`` (reduced density matrices), ``dynamics``
(evolution and ergodic means), ``bbgky`` (hierarchy solver), ``rage``
(escape experiments) and ``cli``.
"""
__version__ = "0.1.0"

from ._kernels import BACKEND  # noqa: E402,F401
