"""Trainable activation functions in a small numpy CNN framework."""

__version__ = "0.1.0"
