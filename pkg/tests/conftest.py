"""Shared fixtures: scenario builders, a wired simulation and a tiny bus."""

from __future__ import annotations

from typing import Any

import pytest

from sunset_sim.config import ScenarioConfig, scenario_from_dict
from sunset_sim.runner import Simulation
from sunset_sim.sim.bus import Bus
from sunset_sim.sim.eventlog import EventLog


def make_scenario(**overrides: Any) -> ScenarioConfig:
    data: dict[str, Any] = {"name": "test", "duration_s": 20.0, "controller": "none"}
    data.update(overrides)
    return scenario_from_dict(data)


def scripted(time_s: float, target: str, action: str, **args: Any) -> dict[str, Any]:
    return {"time_s": time_s, "target": target, "action": action, "args": args}


def injected(time_s: float, uid: str) -> dict[str, Any]:
    return {"time_s": time_s, "uncertainty": uid}


def run(**overrides: Any) -> tuple[Simulation, EventLog]:
    sim = Simulation(make_scenario(**overrides))
    return sim, sim.run()


@pytest.fixture
def scenario() -> ScenarioConfig:
    return make_scenario()


@pytest.fixture
def settings(scenario):
    return scenario.settings


@pytest.fixture
def bus() -> Bus:
    return Bus(EventLog())


@pytest.fixture
def clean_run() -> tuple[Simulation, EventLog]:
    return run(name="clean")
