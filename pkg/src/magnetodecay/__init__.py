"""Ray-geometric decay criteria and desk-scale solvers for magnetoelasticity."""

__version__ = "0.1.0"
