"""Reduced 3D-0D FSI solver: RIIS Navier-Stokes coupled to a lumped valve model."""

__version__ = "0.1.0"
