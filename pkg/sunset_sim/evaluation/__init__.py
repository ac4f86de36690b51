"""Metrics and plots computed from event logs."""
