"""Managed system: scene generation, image operations, surrogate model and nodes."""
