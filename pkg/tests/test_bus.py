import json

import pytest

from sunset_sim.errors import BusError, SimulationError
from sunset_sim.sim.bus import MESSAGE_DELIVERY, TIMER_FIRE, Bus
from sunset_sim.sim.clock import VirtualClock, format_time, to_ms
from sunset_sim.sim.eventlog import EventLog, LogRecord


def test_time_is_integer_milliseconds():
    assert to_ms(0.1) == 100
    assert to_ms(-0.25) == -250
    assert format_time(5100) == "5.100"
    assert format_time(7) == "0.007"


def test_clock_never_moves_backwards():
    clock = VirtualClock()
    clock.advance_to(10)
    with pytest.raises(ValueError):
        clock.advance_to(9)


def test_empty_queue_advances_clock(bus):
    assert bus.run_until(20_000) == 0
    assert bus.now == 20_000


def test_ten_hz_timer_fires_twenty_times_in_two_seconds(bus):
    ticks = []
    bus.create_timer("camera", 0.1, lambda: ticks.append(bus.now))
    bus.run_until(2000)
    assert len(ticks) == 20
    assert ticks[0] == 100 and ticks[-1] == 2000
    assert bus.executed[TIMER_FIRE] == 20


def test_timer_created_mid_run_stays_on_grid(bus):
    bus.run_until(1234)
    ticks = []
    bus.create_timer("camera", 0.1, lambda: ticks.append(bus.now))
    bus.run_until(1500)
    assert ticks == [1300, 1400, 1500]


def test_same_due_time_runs_in_insertion_order(bus):
    order = []
    for name in "abc":
        bus.schedule(500, "test", name, lambda name=name: order.append(name))
    bus.run_until(500)
    assert order == ["a", "b", "c"]


def test_cannot_schedule_in_the_past(bus):
    bus.run_until(100)
    with pytest.raises(BusError):
        bus.schedule(50, "test", "x", lambda: None)
    with pytest.raises(BusError):
        bus.run_until(50)


def test_publish_delivers_to_subscribers(bus):
    got = []
    bus.subscribe("fusion", "/camera/image", got.append)
    seq = bus.publish("camera", "/camera/image", "frame", stamp=0)
    assert seq == 1
    assert got == []  # delivery is an event, not a direct call
    bus.run_until(0)
    assert [m.payload for m in got] == ["frame"]
    assert bus.executed[MESSAGE_DELIVERY] == 1


def test_latency_delays_delivery():
    bus = Bus(EventLog(), latency_s={"/camera/image": 0.05})
    got = []
    bus.subscribe("fusion", "/camera/image", lambda m: got.append(bus.now))
    bus.publish("camera", "/camera/image", "frame")
    bus.run_until(1000)
    assert got == [50]


def test_duplicate_subscription_rejected(bus):
    bus.subscribe("fusion", "/camera/image", lambda m: None)
    with pytest.raises(BusError, match="already subscribed"):
        bus.subscribe("fusion", "/camera/image", lambda m: None)


def test_destroyed_subscription_stops_delivery(bus):
    got = []
    sub = bus.subscribe("fusion", "/camera/image", got.append)
    bus.publish("camera", "/camera/image", 1)
    sub.destroy()
    bus.run_until(10)
    assert got == []
    assert bus.subscribers("/camera/image") == []


def test_inactive_publisher_is_dropped(bus):
    got = []
    bus.is_active = lambda node: node != "camera"
    bus.subscribe("fusion", "/camera/image", got.append)
    assert bus.publish("camera", "/camera/image", "frame") is None
    bus.run_until(100)
    assert got == []
    (dropped,) = bus.log.of_kind("dropped")
    assert dropped.detail["reason"] == "inactive publisher"
    assert bus.estimate_frequency("/camera/image", 2.0) == 0.0


@pytest.mark.parametrize("count,expected", [(0, 0.0), (1, 0.5), (10, 5.0)])
def test_frequency_over_window(bus, count, expected):
    for i in range(count):
        bus.schedule(1500 + i * 100, "test", "camera",
                     lambda: bus.publish("camera", "/camera/image", None))
    bus.run_until(3000)
    assert bus.estimate_frequency("/camera/image", 2.0) == pytest.approx(expected)


def test_frequency_matches_brute_force_count(bus):
    bus.create_timer("camera", 0.1, lambda: bus.publish("camera", "/camera/image", None))
    bus.create_timer("depth", 0.3, lambda: bus.publish("depth", "/depth/image", None))
    bus.run_until(5000)
    published = bus.log.of_kind("publish")
    for topic in ("/camera/image", "/depth/image"):
        for now in range(0, 5001, 250):
            for window in (0.5, 1.0, 2.0):
                lo = now - to_ms(window)
                brute = sum(1 for r in published if r.topic == topic and lo < r.t <= now)
                assert bus.estimate_frequency(topic, window, now) == pytest.approx(brute / window)


def test_frequency_window_must_be_positive(bus):
    with pytest.raises(BusError):
        bus.estimate_frequency("/camera/image", 0.0)


def test_handler_fault_aborts_run(bus):
    def boom():
        raise RuntimeError("broken handler")

    bus.schedule(10, "test", "x", boom)
    with pytest.raises(SimulationError, match="broken handler"):
        bus.run_until(100)


def test_log_field_order_and_rounding():
    log = EventLog()
    rec = log.append(5100, "publish", "camera", topic="/camera/image", seq=3, entropy=0.1234567891)
    obj = json.loads(rec.to_json())
    assert list(obj) == ["t", "kind", "node", "topic", "seq", "detail"]
    assert obj["t"] == "5.100"
    assert obj["detail"]["entropy"] == 0.123457
    bare = json.loads(log.append(0, "run_end", "simulation").to_json())
    assert list(bare) == ["t", "kind", "node", "detail"]


def test_log_file_reads_back(tmp_path):
    log = EventLog()
    log.append(100, "publish", "camera", topic="/camera/image", seq=1)
    log.append(200, EventLog.RUN_END, "simulation", events=1)
    path = log.write(tmp_path / "events.jsonl")
    again = EventLog.read(path)
    assert again.complete and again.end_time == 200
    assert again.to_jsonl() == log.to_jsonl()
    assert list(again)[0] == LogRecord(100, "publish", "camera", "/camera/image", 1, {})
