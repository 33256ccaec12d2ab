"""Signal recovery from randomly rotated, projected, noisy observations."""

__version__ = "0.1.0"
