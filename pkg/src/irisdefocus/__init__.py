"""Defocus-based iris protection for eye tracking, reproduced at desk scale."""

__version__ = "0.1.0"
