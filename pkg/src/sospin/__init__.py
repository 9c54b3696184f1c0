"""Disordered solid-on-solid pinning laboratory."""

__version__ = "0.1.0"
