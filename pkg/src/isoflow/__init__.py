"""Isomonodromy systems attached to simply-laced supernova graphs.

Modules: ``kacmoody`` (graphs, roots, reflections, existence test), ``orbits``
(Jordan data and markings), ``phase`` (phase space, symplectic form, SL2
action), ``spectral`` (spectral polynomial), ``flow`` (Hamiltonian one-form,
vector fields, connections, integrator) and ``cli``.
"""

__version__ = "0.1.0"
