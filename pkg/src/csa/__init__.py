"""Coded slotted ALOHA: density evolution, bounds, simulation and design."""

__version__ = "0.1.0"
