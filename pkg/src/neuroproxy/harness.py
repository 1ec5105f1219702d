"""Deterministic discrete-event scenario runner.

A scenario is a static graph of processes joined by one-way channels. Every
channel owns an independent random stream derived from ``(seed, channel
name)``, drops each message with probability ``loss_prob`` and delays
survivors by a fixed or uniformly drawn latency. All activations run on one
logical timeline ordered by ``(time, process name, sequence)``, so a report is
a pure function of the scenario and the seed.

Scenario files are JSON::

    {
      "name": "demo", "seed": 7, "duration_ns": 5000000000,
      "objectives": "demo.obj", "dataset": "trials.json",
      "validation": {"probe": "probe"},
      "processes": [{"name": "nc0", "kind": "nc_system", "params": {}}, ...],
      "channels": [{"from": "src.out", "to": "nc0.in",
                    "latency": {"fixed_ms": 0.5}, "loss_prob": 0.3}, ...]
    }

Latency is an integer number of ns or one of ``{"fixed_ns": n}``,
``{"fixed_ms": x}``, ``{"uniform_ns": [lo, hi]}``, ``{"uniform_ms": [lo, hi]}``.
Relative paths resolve against the scenario file's directory.
"""

from __future__ import annotations

import hashlib
import heapq
import itertools
import json
import logging
import math
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, ClassVar, NamedTuple, Sequence

import numpy as np

from .aer import AerPacket, decode_all, encode_packet
from .codecs import CodecParams, LevelCrossingEncoder, encode
from .declarative import ObjectiveDoc, ValidationReport, parse, validate
from .nsp import INTERFACES, DeviceUnreachableError, NeuromorphicSystemProxy, SimulatedDevice
from .pubsub import Broker, Notification, PublishError
from .snn import SpikeEvent, TransientState, ms_to_ns

logger = logging.getLogger(__name__)


class ScenarioError(ValueError):
    """Scenario or dataset that cannot be resolved."""


# -- channels -------------------------------------------------------------------

@dataclass(frozen=True)
class Latency:
    lo: int
    hi: int

    def __post_init__(self) -> None:
        if not 0 <= self.lo <= self.hi:
            raise ScenarioError(f"latency range [{self.lo}, {self.hi}] is invalid")

    @classmethod
    def fixed(cls, ns: int) -> Latency:
        return cls(ns, ns)

    @classmethod
    def parse(cls, spec: Any) -> Latency:
        if spec is None:
            return cls(0, 0)
        if isinstance(spec, int) and not isinstance(spec, bool):
            return cls(spec, spec)
        if isinstance(spec, dict) and len(spec) == 1:
            (key, value), = spec.items()
            if key == "fixed_ns":
                return cls(int(value), int(value))
            if key == "fixed_ms":
                return cls(ms_to_ns(value), ms_to_ns(value))
            if key in ("uniform_ns", "uniform_ms") and isinstance(value, list) and len(value) == 2:
                conv = int if key == "uniform_ns" else ms_to_ns
                return cls(conv(value[0]), conv(value[1]))
        raise ScenarioError(f"unrecognised latency spec {spec!r}")

    def sample(self, rng: np.random.Generator, size: int | None = None):
        if self.lo == self.hi:
            return self.lo if size is None else np.full(size, self.lo, dtype=np.int64)
        drawn = rng.integers(self.lo, self.hi, size=size, endpoint=True)
        return int(drawn) if size is None else drawn

    def to_dict(self) -> dict[str, int]:
        return {"lo_ns": self.lo, "hi_ns": self.hi}


def channel_rng(seed: int, name: str) -> np.random.Generator:
    """Independent stream per channel: adding a channel never perturbs the others."""
    salt = int.from_bytes(hashlib.sha256(name.encode("utf-8")).digest()[:8], "little")
    return np.random.default_rng([seed, salt])


def simulate_channel(
    events: Sequence[SpikeEvent], latency: Latency, loss_prob: float, rng: np.random.Generator
) -> list[SpikeEvent]:
    """Drop each event independently, delay survivors, re-sort stably by delivery time."""
    if not 0.0 <= loss_prob <= 1.0:
        raise ScenarioError(f"loss_prob {loss_prob} outside [0, 1]")
    n = len(events)
    if n == 0:
        return []
    keep = rng.random(n) >= loss_prob
    delays = latency.sample(rng, n)
    out = [SpikeEvent(e.address, e.timestamp + int(d)) for e, d, k in zip(events, delays, keep) if k]
    out.sort(key=lambda e: e.timestamp)
    return out


@dataclass
class Channel:
    name: str
    src: str
    src_port: str
    dst: str
    dst_port: str
    latency: Latency
    loss_prob: float
    rng: np.random.Generator
    sent: int = 0
    delivered: int = 0
    dropped: int = 0

    def transmit(self) -> int | None:
        """Draw the fate of one message: its latency, or None when lost."""
        self.sent += 1
        lost = self.rng.random() < self.loss_prob
        delay = self.latency.sample(self.rng)
        if lost:
            self.dropped += 1
            return None
        self.delivered += 1
        return delay

    def stats(self) -> dict[str, Any]:
        return {
            "from": f"{self.src}.{self.src_port}",
            "to": f"{self.dst}.{self.dst_port}",
            "latency": self.latency.to_dict(),
            "loss_prob": self.loss_prob,
            "sent": self.sent,
            "delivered": self.delivered,
            "dropped": self.dropped,
        }


# -- datasets -------------------------------------------------------------------

@dataclass(frozen=True)
class Trial:
    expect: bool
    spikes: tuple[tuple[int, int], ...] = ()  # (address, offset ns)
    symbol: int | None = None


@dataclass(frozen=True)
class TrialDataset:
    trials: tuple[Trial, ...]
    spacing_ns: int
    start_ns: int = 0

    def start_of(self, index: int) -> int:
        return self.start_ns + index * self.spacing_ns

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> TrialDataset:
        try:
            spacing = ms_to_ns(data["spacing_ms"])
            start = ms_to_ns(data.get("start_ms", 0))
            trials = []
            for item in data["trials"]:
                spikes = tuple(sorted((int(a), ms_to_ns(t)) for a, t in item.get("spikes", ())))
                symbol = item.get("symbol")
                trials.append(Trial(bool(item["expect"]), spikes, None if symbol is None else int(symbol)))
        except (KeyError, TypeError, ValueError) as exc:
            raise ScenarioError(f"malformed dataset: {exc}") from None
        if spacing <= 0:
            raise ScenarioError("trial spacing must be > 0")
        for i, t in enumerate(trials):
            if any(not 0 <= off < spacing for _, off in t.spikes):
                raise ScenarioError(f"trial {i} has spikes outside its slot")
        return cls(tuple(trials), spacing, start)

    @classmethod
    def load(cls, path: str | Path) -> TrialDataset:
        with open(path, encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh))


# -- scenario config --------------------------------------------------------------

@dataclass(frozen=True)
class ProcessSpec:
    name: str
    kind: str
    params: dict[str, Any] = field(default_factory=dict)


@dataclass(frozen=True)
class ChannelSpec:
    src: str
    dst: str
    latency: Latency = Latency(0, 0)
    loss_prob: float = 0.0
    name: str = ""

    @property
    def label(self) -> str:
        return self.name or f"{self.src}->{self.dst}"


@dataclass(frozen=True)
class ScenarioConfig:
    processes: tuple[ProcessSpec, ...]
    channels: tuple[ChannelSpec, ...]
    seed: int = 0
    duration_ns: int = 1_000_000_000
    objectives: ObjectiveDoc | None = None
    dataset: TrialDataset | None = None
    validation: dict[str, Any] = field(default_factory=dict)
    name: str = "scenario"

    def __post_init__(self) -> None:
        if not 0 <= self.seed < 2**64:
            raise ScenarioError("seed must be a 64-bit unsigned integer")
        if self.duration_ns <= 0:
            raise ScenarioError("duration must be > 0")
        names = [p.name for p in self.processes]
        dupes = sorted(n for n, c in Counter(names).items() if c > 1)
        if dupes:
            raise ScenarioError(f"duplicate process names {dupes}")
        kinds = {p.name: p.kind for p in self.processes}
        for p in self.processes:
            if p.kind not in PROCESS_KINDS:
                raise ScenarioError(f"process {p.name!r} has unknown kind {p.kind!r}")
        labels = [c.label for c in self.channels]
        if len(set(labels)) != len(labels):
            raise ScenarioError("channel names must be unique")
        for c in self.channels:
            if not 0.0 <= c.loss_prob <= 1.0:
                raise ScenarioError(f"channel {c.label}: loss_prob {c.loss_prob} outside [0, 1]")
            for end, outgoing in ((c.src, True), (c.dst, False)):
                proc, _, port = end.partition(".")
                if proc not in kinds or not port:
                    raise ScenarioError(f"channel {c.label}: endpoint {end!r} does not resolve")
                cls = PROCESS_KINDS[kinds[proc]]
                ports = cls.out_ports if outgoing else cls.in_ports
                if ports is not None and port not in ports:
                    raise ScenarioError(f"channel {c.label}: {kinds[proc]} has no {'output' if outgoing else 'input'} port {port!r}")
        if self.dataset is not None and self.objectives is not None:
            horizons = [r.horizon_ms for r in self.objectives.rules]
            if horizons and self.dataset.spacing_ns <= ms_to_ns(max(horizons)):
                raise ScenarioError("trial spacing must exceed every rule horizon")

    def with_seed(self, seed: int) -> ScenarioConfig:
        return ScenarioConfig(
            self.processes, self.channels, seed, self.duration_ns, self.objectives, self.dataset,
            self.validation, self.name,
        )

    @classmethod
    def from_dict(cls, data: dict[str, Any], base_dir: str | Path = ".") -> ScenarioConfig:
        base = Path(base_dir)
        try:
            processes = tuple(
                ProcessSpec(p["name"], p["kind"], dict(p.get("params", {}))) for p in data.get("processes", ())
            )
            channels = tuple(
                ChannelSpec(
                    c["from"], c["to"], Latency.parse(c.get("latency")), float(c.get("loss_prob", 0.0)),
                    c.get("name", ""),
                )
                for c in data.get("channels", ())
            )
            seed = int(data.get("seed", 0))
            duration = int(data["duration_ns"])
        except (KeyError, TypeError, ValueError) as exc:
            raise ScenarioError(f"malformed scenario: {exc}") from None
        objectives = None
        if data.get("objectives"):
            obj_path = base / data["objectives"]
            try:
                objectives = parse(obj_path.read_text(encoding="utf-8"))
            except OSError as exc:
                raise ScenarioError(f"cannot read objectives {obj_path}: {exc}") from None
        dataset = None
        ds_path = data.get("dataset")
        if ds_path is None and objectives is not None and objectives.validation is not None:
            ds_path = objectives.validation.dataset
        if ds_path:
            try:
                dataset = TrialDataset.load(base / ds_path)
            except OSError as exc:
                raise ScenarioError(f"cannot read dataset {base / ds_path}: {exc}") from None
        return cls(
            processes, channels, seed, duration, objectives, dataset, dict(data.get("validation", {})),
            str(data.get("name", "scenario")),
        )

    @classmethod
    def load(cls, path: str | Path) -> ScenarioConfig:
        path = Path(path)
        try:
            data = json.loads(path.read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as exc:
            raise ScenarioError(f"cannot load scenario {path}: {exc}") from None
        return cls.from_dict(data, path.parent)


# -- processes --------------------------------------------------------------------

class Sample(NamedTuple):
    time: int
    value: float


class Process:
    kind: ClassVar[str] = ""
    in_ports: ClassVar[tuple[str, ...] | None] = ()
    out_ports: ClassVar[tuple[str, ...] | None] = ()

    def __init__(self, name: str, params: dict[str, Any], sim: Simulation) -> None:
        self.name = name
        self.params = params
        self.sim = sim
        self.counts: Counter[str] = Counter()

    def start(self) -> None:
        pass

    def on_message(self, port: str, payload: Any, t: int) -> None:
        raise ScenarioError(f"{self.kind} {self.name!r} does not accept messages")

    def on_wake(self, tag: Any, t: int) -> None:
        pass

    def emit(self, port: str, payload: Any, t: int) -> None:
        self.counts["emitted"] += 1
        self.sim.route(self.name, port, payload, t)

    def report(self) -> dict[str, Any]:
        return {"kind": self.kind, **dict(sorted(self.counts.items()))}


class SignalSource(Process):
    """Emits (time, value) samples: an explicit list or a sampled sine."""

    kind = "signal_source"
    out_ports = ("out",)

    def start(self) -> None:
        for sample in self.samples():
            self.sim.wake(self, sample.time, sample)

    def samples(self) -> list[Sample]:
        if "samples" in self.params:
            return [Sample(ms_to_ns(t), float(v)) for t, v in self.params["samples"]]
        sine = self.params.get("sine")
        if sine is None:
            return []
        step = ms_to_ns(sine.get("step_ms", 1.0))
        end = ms_to_ns(sine["duration_ms"])
        period = float(sine["period_ms"])
        amp, offset = float(sine.get("amplitude", 1.0)), float(sine.get("offset", 0.0))
        return [
            Sample(t, offset + amp * math.sin(2 * math.pi * (t / 1e6) / period)) for t in range(0, end + 1, step)
        ]

    def on_wake(self, tag: Sample, t: int) -> None:
        self.emit("out", tag, t)


class LebesgueSensor(Process):
    kind = "lebesgue_sensor"
    in_ports = ("in",)
    out_ports = ("out",)

    def __init__(self, name: str, params: dict[str, Any], sim: Simulation) -> None:
        super().__init__(name, params, sim)
        self.encoder = LevelCrossingEncoder(float(params["delta"]), int(params["up"]), int(params["down"]))

    def on_message(self, port: str, payload: Sample, t: int) -> None:
        # the sensor stamps events with the sample time it observed
        for event in self.encoder.push(payload.time, payload.value):
            self.emit("out", event, t)


class SymbolSource(Process):
    """Plays an explicit symbol list, or the scenario dataset's trials when ``play_dataset`` is set."""

    kind = "symbol_source"
    out_ports = ("out",)

    def start(self) -> None:
        for item in self.params.get("symbols", ()):
            self.sim.wake(self, ms_to_ns(item["time_ms"]), int(item["symbol"]))
        dataset = self.sim.config.dataset
        if self.params.get("play_dataset") and dataset is not None:
            for i, trial in enumerate(dataset.trials):
                t0 = dataset.start_of(i)
                if trial.symbol is not None:
                    self.sim.wake(self, t0, trial.symbol)
                for address, offset in trial.spikes:
                    self.sim.wake(self, t0 + offset, SpikeEvent(address, t0 + offset))

    def on_wake(self, tag: Any, t: int) -> None:
        self.emit("out", tag, t)


class CodecEncoder(Process):
    kind = "codec_encoder"
    in_ports = ("in",)
    out_ports = ("out",)

    def __init__(self, name: str, params: dict[str, Any], sim: Simulation) -> None:
        super().__init__(name, params, sim)
        self.scheme = params["scheme"]
        self.codec = CodecParams(
            int(params["n_neurons"]),
            float(params.get("window_ms", 10.0)),
            float(params.get("resolution_ms", 1.0)),
            int(params.get("n_phases", 3)),
            int(params.get("base_address", 0)),
        )

    def on_message(self, port: str, payload: int, t: int) -> None:
        for event in encode(self.scheme, payload, self.codec, t0=t):
            self.sim.wake(self, event.timestamp, event)

    def on_wake(self, tag: SpikeEvent, t: int) -> None:
        self.emit("out", tag, t)


class NcSystem(Process):
    """The simulated NC device behind its AER byte interfaces."""

    kind = "nc_system"
    in_ports = ("in", "control")
    out_ports = ("out",)

    def __init__(self, name: str, params: dict[str, Any], sim: Simulation) -> None:
        super().__init__(name, params, sim)
        self.device = SimulatedDevice()
        self._pending_wakes: set[int] = set()
        self.aer: Counter[str] = Counter()

    def _wire(self, packet: AerPacket) -> bytes:
        data = encode_packet(packet)
        self.aer["packets"] += 1
        self.aer["bytes"] += len(data)
        if decode_all(data) != [packet]:
            self.aer["round_trip_mismatches"] += 1
        return data

    def on_message(self, port: str, payload: Any, t: int) -> None:
        if port == "control":
            self.device.receive_control(payload)
            return
        # timestamps are sender-assigned on the wire; the chip sees the spike when it arrives
        event = SpikeEvent(payload.address, t)
        try:
            self.device.receive_input(self._wire(AerPacket.spikes([event])))
        except ValueError as exc:
            self.counts["rejected_inputs"] += 1
            logger.debug("%s rejected %s: %s", self.name, event, exc)
            return
        self.aer["input_events"] += 1
        self.schedule_next()

    def schedule_next(self) -> None:
        nxt = self.device.instance.next_delivery_time()
        if nxt is not None and nxt not in self._pending_wakes:
            self._pending_wakes.add(nxt)
            self.sim.wake(self, nxt, "advance")

    def on_wake(self, tag: Any, t: int) -> None:
        self._pending_wakes.discard(t)
        if t < self.device.clock:
            return
        spikes = self.device.advance(t)
        if spikes:
            self.aer["output_events"] += len(spikes)
            self.emit("out", self._wire(AerPacket.spikes(spikes)), t)
        self.schedule_next()

    def report(self) -> dict[str, Any]:
        out = super().report()
        out["device"] = dict(sorted(self.device.counters.items()))
        return out


class HarnessDeviceLink:
    """Proxy-to-device link: control pushes cross a (possibly lossy) channel, snapshots are direct."""

    def __init__(self, sim: Simulation, nsp: str, device: NcSystem) -> None:
        self.sim = sim
        self.nsp = nsp
        self.device = device

    def send_control(self, packet: bytes) -> None:
        channels = self.sim.outgoing(self.nsp, "control")
        if not channels:
            raise DeviceUnreachableError("no control channel configured")
        for channel in channels:
            if channel.transmit() is None:
                raise DeviceUnreachableError(f"control packet lost on {channel.name}")
        # reconfiguration is applied synchronously so the proxy's update stays atomic
        self.device.device.receive_control(packet)

    def send_input(self, packet: bytes) -> None:
        self.device.device.receive_input(packet)
        self.device.schedule_next()

    def request_transient(self) -> TransientState:
        return self.device.device.snapshot_transient()


class NspProcess(Process):
    kind = "nsp"
    in_ports = ("in", "stimulus")
    out_ports = ("events", "control")

    def __init__(self, name: str, params: dict[str, Any], sim: Simulation) -> None:
        super().__init__(name, params, sim)
        self.device_name = params["device"]
        self.proxy: NeuromorphicSystemProxy | None = None
        self._outbox: list[Notification] = []
        self.sweep_ns = ms_to_ns(params["sweep_ms"]) if "sweep_ms" in params else None

    def start(self) -> None:
        device = self.sim.processes.get(self.device_name)
        if not isinstance(device, NcSystem):
            raise ScenarioError(f"nsp {self.name!r}: device {self.device_name!r} is not an nc_system")
        local = Broker()
        local.subscribe("#", target=self._outbox.append)
        self.proxy = NeuromorphicSystemProxy(
            self.params.get("instance", self.name),
            HarnessDeviceLink(self.sim, self.name, device),
            local,
            refresh_interval=ms_to_ns(self.params.get("refresh_ms", 1000)),
            miss_threshold=int(self.params.get("miss_threshold", 3)),
        )
        if self.sim.config.objectives is not None:
            self.sim.wake(self, 0, "apply")
        if self.sweep_ns:
            self.sim.wake(self, self.sweep_ns, "sweep")

    def on_wake(self, tag: Any, t: int) -> None:
        if tag == "apply":
            try:
                self.proxy.apply_objectives(self.sim.config.objectives)
            except DeviceUnreachableError as exc:
                self.counts["apply_failures"] += 1
                logger.info("%s: %s", self.name, exc)
        elif tag == "sweep":
            self.counts["expired"] += len(self.proxy.sweep(t))
            if t + self.sweep_ns <= self.sim.config.duration_ns:
                self.sim.wake(self, t + self.sweep_ns, "sweep")

    def on_message(self, port: str, payload: Any, t: int) -> None:
        if port == "stimulus":
            self.proxy.forward_input([SpikeEvent(payload.address, t)])
            self.sim.processes[self.device_name].schedule_next()
            return
        self.proxy.feed_output(payload)
        notes, self._outbox[:] = list(self._outbox), []
        for note in notes:
            self.emit("events", note, t)

    def report(self) -> dict[str, Any]:
        out = super().report()
        out["proxy"] = self.proxy.status() if self.proxy is not None else None
        return out


class BrokerProcess(Process):
    """Stand-alone broker; each configured subscription delivers to its own output port."""

    kind = "broker"
    in_ports = ("in",)
    out_ports = None  # one port per subscription

    def __init__(self, name: str, params: dict[str, Any], sim: Simulation) -> None:
        super().__init__(name, params, sim)
        self.broker = Broker(int(params.get("capacity", 1024)))
        self._now = 0
        for sub in params.get("subscriptions", ()):
            port = sub.get("port", sub["id"])
            self.broker.subscribe(
                sub["pattern"], sub.get("predicate"), sub_id=sub["id"], target=self._forwarder(port)
            )

    def _forwarder(self, port: str) -> Callable[[Notification], None]:
        return lambda note: self.emit(port, note, self._now)

    def on_message(self, port: str, payload: Notification, t: int) -> None:
        self._now = t
        try:
            self.counts["deliveries"] += self.broker.publish(payload)
        except PublishError:
            # a latent channel reordered one publisher's stream
            self.counts["rejected"] += 1


class SubscriberProbe(Process):
    """Records notifications and optionally follows each one up with a query."""

    kind = "subscriber_probe"
    in_ports = ("in",)

    def __init__(self, name: str, params: dict[str, Any], sim: Simulation) -> None:
        super().__init__(name, params, sim)
        self.records: list[dict[str, Any]] = []

    def on_message(self, port: str, payload: Notification, t: int) -> None:
        record: dict[str, Any] = {"received_ns": t, **payload.to_dict()}
        nsp_name = self.params.get("nsp")
        if nsp_name is not None:
            proxy = self.sim.processes[nsp_name].proxy
            if self.params.get("query", True) and payload.payload_ref is not None:
                q = (
                    f'match Event{{id="{payload.payload_ref}"}} '
                    "{ id, time, count, snapshot->Snapshot { clock, pending } }"
                )
                record["query"] = proxy.serve_query(q, now=t)
            if self.params.get("state", True):
                record["state_neurons"] = len(proxy.get_system_state().neurons)
        self.records.append(record)


PROCESS_KINDS: dict[str, type[Process]] = {
    cls.kind: cls
    for cls in (SignalSource, LebesgueSensor, SymbolSource, CodecEncoder, NcSystem, NspProcess, BrokerProcess,
                SubscriberProbe)
}


# -- simulation -------------------------------------------------------------------

class Simulation:
    def __init__(self, config: ScenarioConfig) -> None:
        self.config = config
        self.processes: dict[str, Process] = {}
        for spec in config.processes:
            self.processes[spec.name] = PROCESS_KINDS[spec.kind](spec.name, spec.params, self)
        self.channels: list[Channel] = []
        self._routes: dict[tuple[str, str], list[Channel]] = {}
        for spec in config.channels:
            src, src_port = spec.src.split(".", 1)
            dst, dst_port = spec.dst.split(".", 1)
            ch = Channel(spec.label, src, src_port, dst, dst_port, spec.latency, spec.loss_prob,
                         channel_rng(config.seed, spec.label))
            self.channels.append(ch)
            self._routes.setdefault((src, src_port), []).append(ch)
        self._heap: list[tuple[int, str, int, str, Any, Any]] = []
        self._seq = itertools.count()
        self.now = 0
        self.activations: Counter[str] = Counter()

    def outgoing(self, process: str, port: str) -> list[Channel]:
        return self._routes.get((process, port), [])

    def wake(self, process: Process, t: int, tag: Any) -> None:
        if t < self.now:
            raise ScenarioError(f"{process.name} scheduled a wake in the past")
        heapq.heappush(self._heap, (t, process.name, next(self._seq), "", None, tag))

    def route(self, process: str, port: str, payload: Any, t: int) -> None:
        for ch in self._routes.get((process, port), ()):
            delay = ch.transmit()
            if delay is not None:
                heapq.heappush(self._heap, (t + delay, ch.dst, next(self._seq), ch.dst_port, payload, None))

    def run(self) -> None:
        for proc in self.processes.values():
            proc.start()
        horizon = self.config.duration_ns
        while self._heap and self._heap[0][0] <= horizon:
            t, name, _, port, payload, tag = heapq.heappop(self._heap)
            self.now = t
            proc = self.processes[name]
            self.activations[name] += 1
            if port:
                proc.counts["received"] += 1
                proc.on_message(port, payload, t)
            else:
                proc.on_wake(tag, t)


# -- reports ----------------------------------------------------------------------

@dataclass
class ScenarioReport:
    data: dict[str, Any]

    @property
    def validation(self) -> ValidationReport | None:
        v = self.data.get("validation")
        if v is None:
            return None
        return ValidationReport(
            v["trials"], v["successes"], v["success_rate"], v["std_dev"], v["confidence"], tuple(v["interval"]),
            v["p_min"], v["verdict"],
        )

    def to_json(self) -> str:
        return json.dumps(self.data, sort_keys=True, indent=2) + "\n"


def _interface_usage(sim: Simulation) -> dict[str, int]:
    usage = dict.fromkeys(INTERFACES, 0)
    for proc in sim.processes.values():
        if isinstance(proc, NspProcess) and proc.proxy is not None:
            for name in INTERFACES:
                if name not in ("snn_config", "input_spike_data"):
                    usage[name] += proc.proxy.interfaces[name]
        elif isinstance(proc, NcSystem):
            usage["snn_config"] += proc.device.counters["snn_config"]
            usage["input_spike_data"] += proc.device.counters["input_spike_data"]
    return usage


def _trial_outcomes(sim: Simulation) -> tuple[list[dict[str, Any]], list[bool]]:
    dataset = sim.config.dataset
    if dataset is None:
        return [], []
    probes = [p for p in sim.processes.values() if isinstance(p, SubscriberProbe)]
    probe_name = sim.config.validation.get("probe")
    if probe_name is not None:
        probes = [sim.processes[probe_name]]
    if not probes:
        raise ScenarioError("a dataset needs a subscriber_probe to observe outcomes")
    times = sorted(r["publish_time"] for r in probes[0].records)
    rows, outcomes = [], []
    for i, trial in enumerate(dataset.trials):
        lo, hi = dataset.start_of(i), dataset.start_of(i) + dataset.spacing_ns
        count = sum(lo <= t < hi for t in times)
        success = (count > 0) == trial.expect
        rows.append({"index": i, "start_ns": lo, "expect": trial.expect, "notifications": count, "success": success})
        outcomes.append(success)
    return rows, outcomes


def run_scenario(config: ScenarioConfig, seed: int | None = None) -> ScenarioReport:
    if seed is not None:
        config = config.with_seed(seed)
    sim = Simulation(config)
    sim.run()
    trials, outcomes = _trial_outcomes(sim)
    validation = None
    if outcomes:
        spec = config.validation
        doc = config.objectives or ObjectiveDoc()
        validation = validate(doc, outcomes, p_min=spec.get("p_min"), confidence=spec.get("confidence"))
    aer: Counter[str] = Counter()
    for proc in sim.processes.values():
        if isinstance(proc, NcSystem):
            aer.update(proc.aer)
    processes = {}
    for name, proc in sorted(sim.processes.items()):
        entry = proc.report()
        entry["activations"] = sim.activations[name]
        processes[name] = entry
    notifications = {
        name: proc.records for name, proc in sorted(sim.processes.items()) if isinstance(proc, SubscriberProbe)
    }
    data = {
        "scenario": config.name,
        "seed": config.seed,
        "duration_ns": config.duration_ns,
        "end_time_ns": sim.now,
        "processes": processes,
        "channels": {ch.name: ch.stats() for ch in sorted(sim.channels, key=lambda c: c.name)},
        "notifications": notifications,
        "interfaces": _interface_usage(sim),
        "aer": {k: aer[k] for k in ("packets", "bytes", "input_events", "output_events", "round_trip_mismatches")},
        "trials": trials,
        "validation": validation.to_dict() if validation is not None else None,
    }
    logger.info("scenario %s finished at %d ns", config.name, sim.now)
    return ScenarioReport(data)


def bundled_scenario(name: str) -> Path:
    """Path of a scenario shipped with the package (``coincidence``, ``coincidence_lossy``, ...)."""
    path = Path(__file__).with_name("scenarios") / f"{name}.json"
    if not path.exists():
        raise ScenarioError(f"no bundled scenario {name!r}")
    return path


def bundled_scenarios() -> list[str]:
    return sorted(p.stem for p in (Path(__file__).with_name("scenarios")).glob("*.json") if "trials" not in p.stem)


__all__ = [
    "ChannelSpec",
    "Latency",
    "ProcessSpec",
    "ScenarioConfig",
    "ScenarioError",
    "ScenarioReport",
    "TrialDataset",
    "bundled_scenario",
    "bundled_scenarios",
    "channel_rng",
    "run_scenario",
    "simulate_channel",
]
