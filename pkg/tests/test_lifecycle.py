import numpy as np
import pytest

from sunset_sim.errors import LifecycleError
from sunset_sim.sim.bus import Bus
from sunset_sim.sim.eventlog import EventLog
from sunset_sim.sim.lifecycle import (
    OUTAGE,
    Activate,
    AdaptationCommand,
    ChangeSubscription,
    Deactivate,
    Environment,
    LifecycleNode,
    LifecycleState,
    NodeRegistry,
    Redeploy,
    Restart,
    SetParameter,
    action_from_dict,
)

TOPIC = "/camera/image"


class TickerNode(LifecycleNode):
    """Publishes a counter every 100 ms while healthy."""

    node_id = "camera"
    PARAMETERS = ("gain",)

    def __init__(self, ctx):
        super().__init__(ctx)
        self.gain = 1.0
        self.received = []
        self.subscribe("/depth/image", self.received.append)
        self.create_timer(0.1, self.tick)

    def coerce_parameter(self, name, value):
        value = float(value)
        if value <= 0:
            raise LifecycleError("invalid value")
        return value

    def tick(self):
        if self.active and not self.faults.has(OUTAGE):
            self.publish(TOPIC, self.gain)


@pytest.fixture
def registry(settings):
    return NodeRegistry(Bus(EventLog()), Environment(), settings)


@pytest.fixture
def node(registry):
    return registry.register("camera", TickerNode)


def command(action, target="camera", issuer="test"):
    return AdaptationCommand(target, action, 0, issuer)


def publish_times(registry):
    return [r.t for r in registry.bus.log.of_kind("publish") if r.topic == TOPIC]


def test_register_configures_and_activates(registry, node):
    assert node.state is LifecycleState.ACTIVE
    steps = [(r.detail["from"], r.detail["to"]) for r in registry.bus.log.of_kind("transition")]
    assert steps == [("UNCONFIGURED", "INACTIVE"), ("INACTIVE", "ACTIVE")]


def test_register_without_autostart_stays_inactive(registry):
    node = registry.register("camera", TickerNode, autostart=False)
    assert node.state is LifecycleState.INACTIVE
    assert not registry.is_active("camera")


def test_duplicate_registration_rejected(registry, node):
    with pytest.raises(LifecycleError):
        registry.register("camera", TickerNode)


def test_illegal_transition_raises(node):
    with pytest.raises(LifecycleError, match="illegal transition"):
        node.activate()


def test_set_parameter(registry, node):
    outcome = registry.apply_adaptation(command(SetParameter("gain", "2.5")))
    assert outcome.accepted
    assert node.gain == 2.5
    (rec,) = registry.bus.log.of_kind("adaptation")
    assert rec.detail["action"] == "SetParameter"
    assert rec.detail["args"] == {"name": "gain", "value": "2.5"}
    assert rec.detail["accepted"] is True


@pytest.mark.parametrize("action,reason", [
    (SetParameter("exposure", 1), "unknown parameter"),
    (SetParameter("gain", -1), "invalid value"),
    (ChangeSubscription("/nowhere", TOPIC), "unknown topic"),
    (ChangeSubscription("/fusion/output", "/segmentation/output"), "not subscribed"),
    (Activate(), "illegal transition"),
])
def test_rejected_commands_leave_node_untouched(registry, node, action, reason):
    outcome = registry.apply_adaptation(command(action))
    assert not outcome.accepted
    assert outcome.reason == reason
    assert node.state is LifecycleState.ACTIVE
    assert node.gain == 1.0
    assert registry.bus.log.of_kind("adaptation")[-1].detail["accepted"] is False


def test_unknown_target_rejected(registry, node):
    outcome = registry.apply_adaptation(command(Restart(), target="lidar"))
    assert outcome.reason == "unknown node"


def test_change_subscription_moves_handler(registry, node):
    registry.apply_adaptation(command(ChangeSubscription("/depth/image", "/enhancement/image")))
    assert node.subscriptions == ["/enhancement/image"]
    registry.bus.publish("camera", "/enhancement/image", "x")
    registry.bus.publish("camera", "/depth/image", "y")
    registry.bus.run_until(0)
    assert [m.payload for m in node.received] == ["x"]


def test_action_from_dict():
    assert action_from_dict("SetParameter", {"name": "focus", "value": "auto"}) == SetParameter("focus", "auto")
    assert action_from_dict("Redeploy") == Redeploy()
    with pytest.raises(LifecycleError):
        action_from_dict("Reboot")


def test_deactivated_node_does_not_publish(registry, node):
    bus = registry.bus
    bus.run_until(1000)
    registry.apply_adaptation(command(Deactivate()))
    assert node.state is LifecycleState.UNCONFIGURED
    bus.run_until(2000)
    registry.apply_adaptation(command(Activate()))
    bus.run_until(3000)
    times = publish_times(registry)
    assert not [t for t in times if 1000 < t <= 2000]
    assert 2100 in times


def test_restart_clears_transient_fault_and_keeps_parameters(registry, node):
    bus = registry.bus
    registry.apply_adaptation(command(SetParameter("gain", 3.0)))
    node.faults.add(OUTAGE, persistent=False)
    bus.run_until(1000)
    registry.apply_adaptation(command(Restart()))
    bus.run_until(1400)
    assert node.state is LifecycleState.UNCONFIGURED
    bus.run_until(3000)
    assert node.state is LifecycleState.ACTIVE
    assert not node.faults.has(OUTAGE)
    assert node.gain == 3.0
    assert bus.log.of_kind("restart_complete")[0].t == 1500
    assert publish_times(registry)[0] == 1500


def test_restart_keeps_persistent_fault(registry, node):
    node.faults.add(OUTAGE, persistent=True)
    registry.apply_adaptation(command(Restart()))
    registry.bus.run_until(3000)
    assert node.state is LifecycleState.ACTIVE
    assert node.faults.has(OUTAGE)
    assert publish_times(registry) == []


def test_redeploy_spawns_fresh_node(registry, node):
    bus = registry.bus
    registry.apply_adaptation(command(SetParameter("gain", 3.0)))
    node.faults.add(OUTAGE, persistent=True)
    bus.run_until(1000)
    registry.apply_adaptation(command(Redeploy()))
    assert node.state is LifecycleState.FINALIZED
    assert registry.is_redeploying("camera")
    bus.run_until(5000)
    fresh = registry.get("camera")
    assert fresh is not node
    assert fresh.state is LifecycleState.ACTIVE
    assert fresh.gain == 1.0
    assert not fresh.faults.has(OUTAGE)
    assert bus.log.of_kind("redeploy_complete")[0].t == 4000


def test_redeploy_of_healthy_node_costs_exactly_its_delay(registry, node):
    bus = registry.bus
    bus.run_until(1000)
    registry.apply_adaptation(command(Redeploy()))
    bus.run_until(6000)
    times = publish_times(registry)
    gaps = [b - a for a, b in zip(times, times[1:])]
    assert max(gaps) - 100 == 3000


def test_commands_during_redeploy_are_queued_then_replayed(registry, node):
    bus = registry.bus
    registry.apply_adaptation(command(Redeploy()))
    assert registry.apply_adaptation(command(SetParameter("gain", 4.0))).reason == "queued"
    dup = registry.apply_adaptation(command(Redeploy()))
    assert not dup.accepted and dup.reason == "already redeploying"
    assert len(bus.log.of_kind("adaptation_queued")) == 1
    bus.run_until(4000)
    assert registry.get("camera").gain == 4.0


def test_finalized_node_rejects_commands(registry, node):
    node.shutdown()
    outcome = registry.apply_adaptation(command(SetParameter("gain", 2.0)))
    assert outcome.reason == "illegal transition"


LEGAL_TRANSITIONS = {
    ("UNCONFIGURED", "INACTIVE"), ("INACTIVE", "ACTIVE"), ("ACTIVE", "INACTIVE"), ("INACTIVE", "UNCONFIGURED"),
    ("UNCONFIGURED", "FINALIZED"), ("INACTIVE", "FINALIZED"), ("ACTIVE", "FINALIZED"),
}
RANDOM_ACTIONS = (
    Activate(), Deactivate(), Restart(), Redeploy(), SetParameter("gain", 2.0),
    ChangeSubscription("/depth/image", "/enhancement/image"),
    ChangeSubscription("/enhancement/image", "/depth/image"),
)


@pytest.mark.parametrize("seed", range(25))
def test_random_command_sequences_stay_within_the_lifecycle(registry, node, seed):
    rng = np.random.default_rng(seed)
    bus = registry.bus
    t = 0
    for _ in range(40):
        t += int(rng.integers(0, 800))
        bus.run_until(t)
        before = registry.get("camera").state
        outcome = registry.apply_adaptation(command(RANDOM_ACTIONS[int(rng.integers(len(RANDOM_ACTIONS)))]))
        if not outcome.accepted:
            assert outcome.reason in {"illegal transition", "already redeploying", "not subscribed",
                                      "already subscribed"}
            assert registry.get("camera").state is before
    bus.run_until(t + 5000)

    steps = [(r.detail["from"], r.detail["to"]) for r in bus.log.of_kind("transition")]
    assert set(steps) <= LEGAL_TRANSITIONS
    for (_, prev_to), (next_from, _) in zip(steps, steps[1:]):
        # A finalized node is replaced by a fresh, unconfigured one.
        assert next_from == ("UNCONFIGURED" if prev_to == "FINALIZED" else prev_to)
    assert registry.get("camera").state.value == steps[-1][1] != "FINALIZED"
    assert not registry.is_redeploying("camera")
