"""Separability distance, circuit distinguishers and descriptive complexity for qustrings."""

__version__ = "0.1.0"
