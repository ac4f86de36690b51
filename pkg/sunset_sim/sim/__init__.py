"""Discrete-event core: virtual clock, event log, bus and lifecycle nodes."""
