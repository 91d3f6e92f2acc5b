"""Helium scattering off a single CO adsorbate on Pt(111) at four levels of description.

Modules: ``potential`` (interaction models), ``fermatian`` (hard-wall ray
optics), ``hardwall`` (asymptotic hard-wall amplitudes), ``newtonian``
(classical trajectories), ``tdse`` (wave-packet propagation and S-matrix),
``bohmian`` (guidance-equation trajectories and vortices) and ``cli``.
"""
__version__ = "0.1.0"
