"""Discrete-event simulation of MTC/HTC service providers on a shared cluster cloud."""

__version__ = "0.1.0"
