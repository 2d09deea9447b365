"""Desk-scale lab for representation-conditioned diffusion models."""

__version__ = "0.1.0"
