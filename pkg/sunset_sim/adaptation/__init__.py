"""Uncertainty injection, monitoring and managing systems."""
