"""Realizability engine for minimal, second-order and higher-order logic."""

__version__ = "0.1.0"
