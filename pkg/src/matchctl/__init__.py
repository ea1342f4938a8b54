"""Matching control laws for underactuated Lagrangian systems.

Subpackages and modules: :mod:`geometry` (metrics, Christoffel symbols,
projections), :mod:`matching` (matching conditions and control law),
:mod:`linear` (constant-coefficient construction), :mod:`ballbeam`
(explicit ball-and-beam family), :mod:`sim` (closed-loop simulation) and
:mod:`cli`.
"""
__version__ = "0.1.0"
