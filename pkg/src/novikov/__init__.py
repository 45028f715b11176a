"""Planar sections of triply periodic level surfaces and their stability maps."""

__version__ = "0.1.0"
