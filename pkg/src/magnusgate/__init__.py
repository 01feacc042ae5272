"""Optical-Magnus tweezer gate simulator for two trapped ions."""

__version__ = "0.1.0"
