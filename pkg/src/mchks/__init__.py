"""Multiphase Cahn-Hilliard / Keller-Segel tumor growth simulator."""

__version__ = "0.1.0"
