"""
SUNSET simulator: a deterministic sensor-fusion segmentation pipeline with
injectable uncertainties, lifecycle adaptations and a pluggable managing
system.
"""

__version__ = "1.0.0"
