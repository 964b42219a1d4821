"""Persona-grounded chat responses adapted from retrieved background stories."""

__version__ = "0.1.0"
