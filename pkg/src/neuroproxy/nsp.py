"""Neuromorphic-system proxy: the digital twin fronting one NC device.

The proxy caches the last applied structural configuration, turns readout
spikes into notifications through count-over-horizon thresholding, records
event-triggered snapshots in a property graph and answers graph queries. Only
``apply_objectives`` and snapshot requests need the device to be reachable.
"""

from __future__ import annotations

import json
import logging
import os
import threading
from collections import Counter, deque
from typing import IO, Any, Protocol, Union

from .aer import KIND_CONTROL, KIND_SPIKES, AerPacket, StreamDecoder, encode_packet
from .declarative import MappingRule, ObjectiveDoc, ProxyMapping, compile_doc
from .graphstore import GraphQuery, GraphSchema, PropertyGraph, parse_query, run_query
from .pubsub import Broker, Notification, Publisher
from .snn import NetworkInstance, SnnConfig, SpikeEvent, TransientState, build_network
from .softstate import SoftStateStore

logger = logging.getLogger(__name__)

NS_PER_S = 1_000_000_000

NSP_SCHEMA = GraphSchema(
    vertex_labels={
        "Readout": {"address": "int", "pattern": "str", "topic": "str"},
        "Event": {"readout": "int", "topic": "str", "time": "int", "count": "int", "window_ms": "real", "seq": "int"},
        "Snapshot": {"time": "int", "clock": "int", "pending": "int"},
        "NeuronState": {"neuron": "int", "potential": "real", "refractory_until": "int"},
    },
    edge_labels={"source": {}, "snapshot": {}, "state": {}},
)

INTERFACES = (
    "snn_config",
    "input_spike_data",
    "output_spike_data",
    "objectives",
    "system_state",
    "event_notification",
    "output_data",
)


class DeviceUnreachableError(ConnectionError):
    pass


class DeviceLink(Protocol):
    def send_control(self, packet: bytes) -> None: ...

    def send_input(self, packet: bytes) -> None: ...

    def request_transient(self) -> TransientState: ...


class SimulatedDevice:
    """An NC system: a network instance behind an AER byte interface."""

    def __init__(self, config: SnnConfig | None = None) -> None:
        self.instance: NetworkInstance = build_network(config or SnnConfig())
        self.online = True
        self._control = StreamDecoder()
        self._input = StreamDecoder()
        self.counters: Counter[str] = Counter()

    @property
    def clock(self) -> int:
        return self.instance.clock

    def receive_control(self, data: bytes) -> None:
        if not self.online:
            raise DeviceUnreachableError("device offline")
        for packet in self._control.feed(data):
            if packet.kind != KIND_CONTROL:
                raise ValueError("spike packet on the control channel")
            config = SnnConfig.from_json(packet.payload)
            now = self.instance.clock
            instance = build_network(config)
            instance.clock = now
            self.instance = instance
            self.counters["snn_config"] += 1

    def receive_input(self, data: bytes) -> int:
        if not self.online:
            raise DeviceUnreachableError("device offline")
        injected = 0
        for packet in self._input.feed(data):
            if packet.kind != KIND_SPIKES:
                raise ValueError("control packet on the input channel")
            self.instance.inject(packet.events)
            injected += len(packet.events)
        self.counters["input_spike_data"] += injected
        return injected

    def advance(self, until: int) -> list[SpikeEvent]:
        spikes = self.instance.advance(until)
        self.counters["output_spike_data"] += len(spikes)
        return spikes

    def output_packet(self, until: int) -> bytes | None:
        spikes = self.advance(until)
        return encode_packet(AerPacket.spikes(spikes)) if spikes else None

    def snapshot_transient(self) -> TransientState:
        if not self.online:
            raise DeviceUnreachableError("device offline")
        return self.instance.snapshot_transient()

    def snapshot_structural(self) -> SnnConfig:
        return self.instance.snapshot_structural()


class LocalDeviceLink:
    """In-process link to a :class:`SimulatedDevice`."""

    def __init__(self, device: SimulatedDevice) -> None:
        self.device = device

    def send_control(self, packet: bytes) -> None:
        self.device.receive_control(packet)

    def send_input(self, packet: bytes) -> None:
        self.device.receive_input(packet)

    def request_transient(self) -> TransientState:
        return self.device.snapshot_transient()


Sink = Union[str, "os.PathLike[str]", IO[str]]


class NeuromorphicSystemProxy:
    def __init__(
        self,
        instance_id: str,
        link: DeviceLink,
        broker: Broker | None = None,
        *,
        refresh_interval: int = NS_PER_S,
        miss_threshold: int = 3,
        snapshot_max_age: int = 60 * NS_PER_S,
    ) -> None:
        self.instance_id = instance_id
        self.link = link
        self.broker = broker if broker is not None else Broker()
        self.publisher = Publisher(self.broker, instance_id)
        self.config = SnnConfig()
        self.mapping = ProxyMapping()
        self.softstate = SoftStateStore(refresh_interval, miss_threshold)
        self.graph = PropertyGraph(NSP_SCHEMA)
        self.snapshot_max_age = snapshot_max_age
        self.now = 0
        self.counters: Counter[str] = Counter()
        self.interfaces: Counter[str] = Counter()
        self._windows: dict[int, deque[int]] = {}
        self._events = 0
        self._decoder = StreamDecoder()
        self._lock = threading.RLock()

    # -- NC-facing side -----------------------------------------------------

    def apply_objectives(self, doc: ObjectiveDoc) -> SnnConfig:
        config, mapping = compile_doc(doc)
        packet = encode_packet(AerPacket.control(config.to_json().encode("utf-8")))
        with self._lock:
            self.interfaces["objectives"] += 1
            # raises DeviceUnreachableError before any local state changes
            self.link.send_control(packet)
            self.interfaces["snn_config"] += 1
            self.config = config
            self.mapping = mapping
            self._windows = {rule.readout: deque() for rule in mapping.rules}
            for rule in mapping.rules:
                self.graph.upsert_vertex(
                    _readout_id(rule.readout),
                    "Readout",
                    {"address": rule.readout, "pattern": rule.pattern, "topic": rule.topic},
                )
        logger.info("%s applied config with %d neurons", self.instance_id, len(config.neurons))
        return config

    def forward_input(self, events: list[SpikeEvent]) -> None:
        """Digital-side stimuli routed to the device's input spike interface."""
        self.link.send_input(encode_packet(AerPacket.spikes(events)))
        self.interfaces["input_spike_data"] += len(events)

    def feed_output(self, data: bytes) -> list[Notification]:
        """Consume AER bytes from the device's output stream."""
        notes = []
        for packet in self._decoder.feed(data):
            for event in packet.events:
                notes.extend(self.on_output_spike(event))
        return notes

    def on_output_spike(self, event: SpikeEvent) -> list[Notification]:
        with self._lock:
            self.now = max(self.now, event.timestamp)
            self.interfaces["output_spike_data"] += 1
            rule = self.mapping.rule_for(event.address)
            if rule is None:
                self.counters["ignored_spikes"] += 1
                return []
            t = event.timestamp
            window = self._windows[rule.readout]
            window.append(t)
            while window and window[0] <= t - rule.horizon_ns:
                window.popleft()
            if len(window) < rule.min_count:
                return []
            count = len(window)
            window.clear()
            return [self._fire(rule, t, count)]

    def _fire(self, rule: MappingRule, t: int, count: int) -> Notification:
        self._events += 1
        event_id = f"event/{self.instance_id}/{self._events}"
        window_ms = rule.horizon_ns / 1_000_000
        readout_vertex = _readout_id(rule.readout)
        self.graph.upsert_vertex(
            readout_vertex, "Readout", {"address": rule.readout, "pattern": rule.pattern, "topic": rule.topic}
        )
        self.graph.upsert_vertex(
            event_id,
            "Event",
            {"readout": rule.readout, "topic": rule.topic, "time": t, "count": count,
             "window_ms": window_ms, "seq": self._events},
        )
        self.graph.upsert_edge(f"{event_id}/source", event_id, readout_vertex, "source")
        self.softstate.refresh(readout_vertex, event_id, max(t, self.softstate.watermark))
        if rule.snapshot:
            try:
                self._store_snapshot(event_id, t, self.link.request_transient())
            except DeviceUnreachableError:
                self.counters["snapshot_failures"] += 1
        note = self.publisher.publish(
            rule.topic,
            {"readout": rule.readout, "count": count, "window_ms": window_ms, "instance": self.instance_id},
            payload_ref=event_id,
            time=t,
        )
        self.counters["notifications"] += 1
        self.interfaces["event_notification"] += 1
        return note

    def _store_snapshot(self, event_id: str, t: int, state: TransientState) -> None:
        snap_id = f"{event_id}/snapshot"
        self.graph.upsert_vertex(snap_id, "Snapshot", {"time": t, "clock": state.clock, "pending": len(state.pending)})
        self.graph.upsert_edge(f"{snap_id}/edge", event_id, snap_id, "snapshot")
        for nid, ns in sorted(state.neurons.items()):
            vid = f"{snap_id}/n{nid}"
            self.graph.upsert_vertex(
                vid, "NeuronState",
                {"neuron": nid, "potential": ns.potential, "refractory_until": ns.refractory_until},
            )
            self.graph.upsert_edge(f"{vid}/edge", snap_id, vid, "state")

    # -- digital-facing side ------------------------------------------------

    def get_system_state(self) -> SnnConfig:
        self.interfaces["system_state"] += 1
        return self.config

    def serve_query(self, q: GraphQuery | str, now: int | None = None) -> list[dict[str, Any]]:
        if isinstance(q, str):
            q = parse_query(q)
        now = self.now if now is None else now
        with self._lock:
            snap = self.graph.snapshot()
        for vertex in snap.vertices("Readout"):
            if self.softstate.get(vertex.id, now) is None:
                snap.remove_vertex(vertex.id, cascade=True)
        self.interfaces["output_data"] += 1
        return run_query(snap, q)

    def sweep(self, now: int) -> list[str]:
        with self._lock:
            self.now = max(self.now, now)
            return self.softstate.sweep(now)

    def offload_snapshots(self, sink: Sink, now: int | None = None, max_age: int | None = None) -> int:
        """Write snapshots older than ``max_age`` to ``sink`` as one JSON line, then prune them."""
        now = self.now if now is None else now
        max_age = self.snapshot_max_age if max_age is None else max_age
        with self._lock:
            old = sorted(v.id for v in self.graph.vertices("Snapshot") if v.props["time"] < now - max_age)
            if not old:
                return 0
            doc = self.snapshot_document(old)
            line = json.dumps(doc, separators=(",", ":")) + "\n"
            if isinstance(sink, (str, os.PathLike)):
                with open(sink, "a", encoding="utf-8") as fh:
                    fh.write(line)
            else:
                sink.write(line)
                flush = getattr(sink, "flush", None)
                if flush is not None:
                    flush()
            for vid in doc["vertices"]:
                self.graph.remove_vertex(vid["id"], cascade=True)
        return len(old)

    def snapshot_document(self, snapshot_ids: list[str]) -> dict[str, Any]:
        """Snapshot vertices, their neuron states and every edge touching them."""
        members: set[str] = set()
        for sid in snapshot_ids:
            members.add(sid)
            members.update(e.dst for e in self.graph.out_edges(sid) if e.label == "state")
        doc = self.graph.subgraph_document(members)
        inbound = [
            {"id": e.id, "src": e.src, "dst": e.dst, "label": e.label, "weight": e.weight, "props": dict(e.props)}
            for sid in snapshot_ids
            for e in self.graph.in_edges(sid)
            if e.src not in members
        ]
        doc["edges"] = sorted(doc["edges"] + inbound, key=lambda e: e["id"])
        return doc

    def status(self) -> dict[str, Any]:
        return {
            "instance": self.instance_id,
            "neurons": len(self.config.neurons),
            "rules": len(self.mapping.rules),
            "counters": dict(sorted(self.counters.items())),
            "interfaces": {name: self.interfaces[name] for name in INTERFACES},
        }


def _readout_id(address: int) -> str:
    return f"readout/{address}"
