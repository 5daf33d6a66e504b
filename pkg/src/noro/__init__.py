"""Noise-robust one-shot voice conversion on synthetic speech."""

__version__ = "0.1.0"
