from __future__ import annotations

import io
import json
import random

import pytest

from neuroproxy.aer import AerPacket, encode_packet
from neuroproxy.declarative import compile_doc, parse
from neuroproxy.graphstore import PropertyGraph
from neuroproxy.nsp import (
    INTERFACES,
    NSP_SCHEMA,
    DeviceUnreachableError,
    LocalDeviceLink,
    NeuromorphicSystemProxy,
    SimulatedDevice,
)
from neuroproxy.pubsub import Broker
from neuroproxy.snn import SnnConfig, SpikeEvent
from oracles import threshold_fire_times
from workloads import coincidence_doc

MS = 1_000_000
S = 1_000_000_000


def make_proxy(doc_text: str | None = None, **kwargs):
    device = SimulatedDevice()
    broker = Broker()
    proxy = NeuromorphicSystemProxy("nc0", LocalDeviceLink(device), broker, **kwargs)
    if doc_text is not None:
        proxy.apply_objectives(parse(doc_text))
    return proxy, device, broker


def test_fresh_proxy():
    proxy, _, _ = make_proxy()
    assert proxy.get_system_state() == SnnConfig()
    assert proxy.serve_query("match Event { id }") == []


def test_empty_objectives():
    proxy, device, _ = make_proxy("")
    assert proxy.get_system_state() == SnnConfig()
    assert proxy.mapping.rules == ()
    assert device.snapshot_structural() == SnnConfig()


def test_apply_objectives_pushes_config_to_device():
    proxy, device, _ = make_proxy(coincidence_doc(3, 5.0))
    expected, _ = compile_doc(parse(coincidence_doc(3, 5.0)))
    assert device.snapshot_structural() == expected
    assert proxy.get_system_state() == expected
    assert proxy.serve_query("match Readout { address, topic }") == []  # no liveness yet


def test_unreachable_device_keeps_previous_config():
    proxy, device, _ = make_proxy(coincidence_doc(2, 5.0))
    before = proxy.get_system_state()
    device.online = False
    with pytest.raises(DeviceUnreachableError):
        proxy.apply_objectives(parse(coincidence_doc(3, 5.0)))
    assert proxy.get_system_state() == before
    assert len(proxy.mapping.rules) == 1 and proxy.mapping.rules[0].readout == 2


def test_threshold_examples():
    proxy, _, broker = make_proxy(coincidence_doc(3, 5.0, k=3, horizon_ms=10.0))
    sid = broker.subscribe("nc/#")
    assert proxy.on_output_spike(SpikeEvent(3, 0)) == []
    assert proxy.on_output_spike(SpikeEvent(3, 4 * MS)) == []
    (note,) = proxy.on_output_spike(SpikeEvent(3, 8 * MS))
    assert note.attributes == {"readout": 3, "count": 3, "window_ms": 10.0, "instance": "nc0"}
    assert broker.poll(sid) == [note]

    proxy, _, _ = make_proxy(coincidence_doc(3, 5.0, k=2, horizon_ms=10.0))
    assert proxy.on_output_spike(SpikeEvent(3, 0)) == []
    assert proxy.on_output_spike(SpikeEvent(3, 12 * MS)) == []


def test_unmapped_spikes_are_counted():
    proxy, _, _ = make_proxy(coincidence_doc(2, 5.0))
    assert proxy.on_output_spike(SpikeEvent(77, 0)) == []
    assert proxy.counters["ignored_spikes"] == 1


@pytest.mark.parametrize("seed", range(30))
def test_notifications_match_sliding_window_oracle(seed):
    rng = random.Random(seed)
    k = rng.randint(1, 4)
    horizon = rng.choice([1, 5, 10, 25])
    proxy, _, _ = make_proxy(coincidence_doc(2, 5.0, k=k, horizon_ms=float(horizon)))
    times = sorted(rng.randrange(0, 200) * MS // 2 for _ in range(rng.randint(0, 60)))
    got = []
    for t in times:
        got += [(n.publish_time, n.attributes["count"]) for n in proxy.on_output_spike(SpikeEvent(2, t))]
    assert got == threshold_fire_times(times, k, horizon * MS)


def test_event_vertex_has_snapshot_child_after_real_spikes():
    proxy, device, broker = make_proxy(coincidence_doc(3, 5.0))
    sid = broker.subscribe("nc/+")
    proxy.forward_input([SpikeEvent(0, 0), SpikeEvent(1, MS), SpikeEvent(2, 2 * MS)])
    data = device.output_packet(20 * MS)
    notes = proxy.feed_output(data)
    assert len(notes) == 1 and broker.poll(sid) == notes
    ref = notes[0].payload_ref
    tree = proxy.serve_query(
        f'match Event{{id="{ref}"}} {{ id, count, snapshot->Snapshot {{ clock, state->NeuronState {{ neuron }} }} }}'
    )
    assert tree == [{"id": ref, "count": 1, "snapshot": [{"clock": 20 * MS, "state": [{"neuron": 3}]}]}]
    assert proxy.serve_query(f'match Event{{id="{ref}"}} {{ time }}') == [{"time": 3 * MS}]


def test_expired_readout_liveness_is_filtered():
    proxy, _, _ = make_proxy(coincidence_doc(2, 5.0), refresh_interval=S, miss_threshold=2)
    proxy.on_output_spike(SpikeEvent(2, 0))
    assert proxy.serve_query("match Readout { address }", now=2 * S) == [{"address": 2}]
    assert proxy.serve_query("match Readout { address }", now=2 * S + 1) == []
    # the event itself is history, not liveness, so it stays queryable
    assert len(proxy.serve_query("match Event { id }", now=10 * S)) == 1
    assert proxy.sweep(3 * S) == ["readout/2"]


def test_longevity_when_device_goes_silent():
    proxy, device, _ = make_proxy(coincidence_doc(2, 5.0))
    config = proxy.get_system_state()
    device.online = False
    (note,) = proxy.on_output_spike(SpikeEvent(2, MS))
    assert proxy.counters["snapshot_failures"] == 1
    assert proxy.get_system_state() == config
    assert proxy.serve_query(f'match Event{{id="{note.payload_ref}"}} {{ readout }}') == [{"readout": 2}]


def _fire_at(proxy, times_s):
    return [proxy.on_output_spike(SpikeEvent(2, t * S))[0] for t in times_s]


def test_offload_snapshots():
    proxy, _, _ = make_proxy(coincidence_doc(2, 5.0), snapshot_max_age=60 * S)
    sink = io.StringIO()
    assert proxy.offload_snapshots(sink, now=0) == 0
    notes = _fire_at(proxy, [1, 2, 3, 100])
    before = proxy.graph.snapshot()
    old_ids = [f"{n.payload_ref}/snapshot" for n in notes[:3]]
    expected_doc = proxy.snapshot_document(old_ids)
    assert proxy.offload_snapshots(sink, now=100 * S) == 3
    assert len(proxy.graph.vertices("Snapshot")) == 1
    (line,) = sink.getvalue().splitlines()
    doc = json.loads(line)
    assert doc == expected_doc
    # re-ingest into the pruned graph restores the original
    proxy.graph.ingest(doc)
    full = sorted(v.id for v in before.vertices())
    assert sorted(v.id for v in proxy.graph.vertices()) == full
    assert sorted(e.id for e in proxy.graph.edges()) == sorted(e.id for e in before.edges())


def test_offload_to_path(tmp_path):
    proxy, _, _ = make_proxy(coincidence_doc(2, 5.0))
    _fire_at(proxy, [1])
    target = tmp_path / "snaps.jsonl"
    assert proxy.offload_snapshots(target, now=1000 * S) == 1
    assert len(target.read_text().splitlines()) == 1


def test_failed_sink_leaves_graph_unpruned():
    class Broken:
        def write(self, _):
            raise OSError("disk full")

    proxy, _, _ = make_proxy(coincidence_doc(2, 5.0))
    _fire_at(proxy, [1, 2])
    count = len(proxy.graph)
    with pytest.raises(OSError):
        proxy.offload_snapshots(Broken(), now=1000 * S)
    assert len(proxy.graph) == count


def test_graph_stays_schema_valid():
    proxy, _, _ = make_proxy(coincidence_doc(2, 5.0))
    _fire_at(proxy, [1, 2, 3])
    proxy.offload_snapshots(io.StringIO(), now=62 * S)
    copy = PropertyGraph(NSP_SCHEMA)
    copy.ingest(proxy.graph.subgraph_document(v.id for v in proxy.graph.vertices()))
    assert len(copy) == len(proxy.graph)


def test_status_lists_every_interface():
    proxy, device, _ = make_proxy(coincidence_doc(2, 5.0))
    proxy.forward_input([SpikeEvent(0, 0), SpikeEvent(1, 0)])
    proxy.feed_output(device.output_packet(5 * MS))
    proxy.get_system_state()
    proxy.serve_query("match Event { id }")
    status = proxy.status()
    assert list(status["interfaces"]) == list(INTERFACES)
    assert all(status["interfaces"][name] > 0 for name in INTERFACES)


def test_device_rejects_wrong_packet_kinds():
    device = SimulatedDevice()
    with pytest.raises(ValueError):
        device.receive_control(encode_packet(AerPacket.spikes([])))
    with pytest.raises(ValueError):
        device.receive_input(encode_packet(AerPacket.control(b"{}")))
