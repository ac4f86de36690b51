# sunset_sim/errors.py
"""Exception hierarchy shared by all simulator modules."""

from __future__ import annotations


class SunsetError(Exception):
    """Root of every simulator error."""


class BusError(SunsetError):
    """Misuse of the publish/subscribe layer (e.g. duplicate subscription)."""


class SimulationError(SunsetError):
    """An event handler failed; the run is aborted."""


class LifecycleError(SunsetError):
    """Illegal lifecycle transition requested on a node."""


class ModelError(SunsetError):
    """Segmentation model misuse (e.g. modality mismatch)."""


class CalibrationError(SunsetError):
    """No calibration constants satisfy the entropy targets."""


class MetricsError(SunsetError):
    """Metric inputs are inconsistent (dimension mismatch, incomplete log)."""


class ScenarioError(SunsetError):
    """Scenario validation failed. ``diagnostics`` lists every problem found."""

    def __init__(self, message: str, diagnostics: list[str] | None = None):
        self.diagnostics = list(diagnostics or [])
        detail = "; ".join(self.diagnostics)
        super().__init__(f"{message}: {detail}" if detail else message)


class InjectionError(SunsetError):
    """An uncertainty could not be injected (unknown id, criticality taken)."""
