"""Spatial cluster detection with scan and average likelihood ratio statistics."""

__version__ = "0.1.0"
