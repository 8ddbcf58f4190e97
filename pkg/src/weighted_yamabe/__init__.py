"""Weighted Yamabe quotients on rotationally symmetric smooth metric measure spaces."""

__version__ = "0.1.0"
