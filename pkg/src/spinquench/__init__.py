"""Trotterized spin-chain quench dynamics on an emulated NISQ device."""

__version__ = "0.1.0"
