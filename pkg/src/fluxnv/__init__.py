"""Flux qubit coupled to an NV spin ensemble."""

__version__ = "0.1.0"
