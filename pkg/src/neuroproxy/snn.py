"""Event-driven leaky integrate-and-fire network simulator.

Structural state (topology, weights, time constants, delays, thresholds) lives
in an immutable :class:`SnnConfig`. Transient state (membrane potentials,
refractory windows, in-flight synaptic deliveries) lives in a
:class:`NetworkInstance` and only changes in reaction to injected spikes.

All times inside the simulator are integer nanoseconds. Config fields are given
in milliseconds and converted exactly.
"""

from __future__ import annotations

import heapq
import json
import math
from dataclasses import dataclass, field
from decimal import ROUND_HALF_EVEN, Decimal
from typing import Any, Iterable, NamedTuple

NS_PER_MS = 1_000_000
U32_MAX = 2**32 - 1
U64_MAX = 2**64 - 1


class SpikeEvent(NamedTuple):
    address: int
    timestamp: int


def ms_to_ns(value: float) -> int:
    """Convert a millisecond value to integer nanoseconds without float drift."""
    exact = Decimal(repr(float(value))) * NS_PER_MS
    return int(exact.to_integral_value(rounding=ROUND_HALF_EVEN))


def event_order(event: SpikeEvent) -> tuple[int, int]:
    return (event.timestamp, event.address)


class ConfigError(ValueError):
    """Structured rejection of an invalid network configuration."""

    def __init__(self, kind: str, element: Any, message: str) -> None:
        super().__init__(f"{kind}: {message} ({element!r})")
        self.kind = kind
        self.element = element


class InjectError(ValueError):
    pass


class RejectedEventError(InjectError):
    pass


class CausalityError(InjectError):
    pass


@dataclass(frozen=True)
class Neuron:
    id: int
    threshold: float
    tau_mem: float
    v_reset: float = 0.0
    refractory: float = 0.0


@dataclass(frozen=True)
class Synapse:
    src: int
    dst: int
    weight: float
    delay: float


@dataclass(frozen=True)
class SnnConfig:
    neurons: tuple[Neuron, ...] = ()
    synapses: tuple[Synapse, ...] = ()
    input_addresses: frozenset[int] = frozenset()
    readout_ids: frozenset[int] = frozenset()

    def __post_init__(self) -> None:
        object.__setattr__(self, "neurons", tuple(self.neurons))
        object.__setattr__(self, "synapses", tuple(self.synapses))
        object.__setattr__(self, "input_addresses", frozenset(self.input_addresses))
        object.__setattr__(self, "readout_ids", frozenset(self.readout_ids))

    def validate(self) -> None:
        seen: set[int] = set()
        for neuron in self.neurons:
            if not 0 <= neuron.id <= U32_MAX:
                raise ConfigError("address-range", neuron, "neuron id outside 32-bit range")
            if neuron.id in seen:
                raise ConfigError("duplicate-id", neuron.id, "neuron id declared twice")
            seen.add(neuron.id)
            if not neuron.tau_mem > 0 or not math.isfinite(neuron.tau_mem):
                raise ConfigError("nonpositive-tau", neuron, "membrane time constant must be > 0")
            if not neuron.refractory >= 0:
                raise ConfigError("negative-refractory", neuron, "refractory period must be >= 0")
            if not math.isfinite(neuron.threshold) or not math.isfinite(neuron.v_reset):
                raise ConfigError("nonfinite-parameter", neuron, "threshold and reset must be finite")
        for address in self.input_addresses:
            if not 0 <= address <= U32_MAX:
                raise ConfigError("address-range", address, "input address outside 32-bit range")
            if address in seen:
                raise ConfigError("duplicate-id", address, "input address collides with a neuron id")
        for synapse in self.synapses:
            if synapse.dst not in seen:
                raise ConfigError("dangling-endpoint", synapse, f"destination {synapse.dst} is not a neuron")
            if synapse.src not in seen and synapse.src not in self.input_addresses:
                raise ConfigError("dangling-endpoint", synapse, f"source {synapse.src} is not declared")
            if not synapse.delay > 0 or ms_to_ns(synapse.delay) <= 0:
                raise ConfigError("nonpositive-delay", synapse, "synaptic delay must be > 0")
            if not math.isfinite(synapse.weight):
                raise ConfigError("nonfinite-parameter", synapse, "weight must be finite")
        for readout in self.readout_ids:
            if readout not in seen:
                raise ConfigError("dangling-endpoint", readout, "readout id is not a neuron")

    def to_dict(self) -> dict[str, Any]:
        return {
            "neurons": [
                {
                    "id": n.id,
                    "threshold": n.threshold,
                    "tau_mem": n.tau_mem,
                    "v_reset": n.v_reset,
                    "refractory": n.refractory,
                }
                for n in self.neurons
            ],
            "synapses": [
                {"src": s.src, "dst": s.dst, "weight": s.weight, "delay": s.delay}
                for s in self.synapses
            ],
            "input_addresses": sorted(self.input_addresses),
            "readout_ids": sorted(self.readout_ids),
        }

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> SnnConfig:
        try:
            return cls(
                neurons=tuple(
                    Neuron(
                        id=int(n["id"]),
                        threshold=float(n["threshold"]),
                        tau_mem=float(n["tau_mem"]),
                        v_reset=float(n.get("v_reset", 0.0)),
                        refractory=float(n.get("refractory", 0.0)),
                    )
                    for n in data.get("neurons", ())
                ),
                synapses=tuple(
                    Synapse(int(s["src"]), int(s["dst"]), float(s["weight"]), float(s["delay"]))
                    for s in data.get("synapses", ())
                ),
                input_addresses=frozenset(int(a) for a in data.get("input_addresses", ())),
                readout_ids=frozenset(int(r) for r in data.get("readout_ids", ())),
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise ConfigError("malformed-document", data, str(exc)) from exc

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), separators=(",", ":"))

    @classmethod
    def from_json(cls, text: str | bytes) -> SnnConfig:
        try:
            data = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError("malformed-document", None, str(exc)) from exc
        return cls.from_dict(data)


@dataclass(frozen=True)
class NeuronState:
    potential: float
    last_update: int
    refractory_until: int


@dataclass(frozen=True)
class Delivery:
    time: int
    dst: int
    src: int
    weight: float


@dataclass(frozen=True)
class TransientState:
    clock: int
    neurons: dict[int, NeuronState] = field(default_factory=dict)
    pending: tuple[Delivery, ...] = ()


class NetworkInstance:
    """A running network. Single-threaded; do not share across threads while mutating."""

    def __init__(self, config: SnnConfig) -> None:
        config.validate()
        self._config = config
        ids = [n.id for n in config.neurons]
        self._index = {nid: i for i, nid in enumerate(ids)}
        self._ids = ids
        self._threshold = [n.threshold for n in config.neurons]
        self._tau_ns = [n.tau_mem * NS_PER_MS for n in config.neurons]
        self._v_reset = [n.v_reset for n in config.neurons]
        self._refractory_ns = [ms_to_ns(n.refractory) for n in config.neurons]
        self._readout = [nid in config.readout_ids for nid in ids]
        # fan-out by source address: (delay_ns, dst_index, src_address, synapse_index, weight)
        self._fanout: dict[int, list[tuple[int, int, int, int, float]]] = {}
        for k, syn in enumerate(config.synapses):
            self._fanout.setdefault(syn.src, []).append(
                (ms_to_ns(syn.delay), self._index[syn.dst], syn.src, k, syn.weight)
            )
        self.reset()

    def reset(self) -> None:
        """Return to the freshly built transient state (clock 0, all potentials at reset)."""
        n = len(self._ids)
        self.clock = 0
        self._v = list(self._v_reset)
        self._last = [0] * n
        self._refr_until = [0] * n
        # heap entries: (time, dst_address, src_address, synapse_index, dst_index, weight)
        self._queue: list[tuple[int, int, int, int, int, float]] = []

    @property
    def config(self) -> SnnConfig:
        return self._config

    def _schedule(self, source: int, t: int) -> None:
        for delay, dst_i, src, k, weight in self._fanout.get(source, ()):
            heapq.heappush(self._queue, (t + delay, self._ids[dst_i], src, k, dst_i, weight))

    def inject(self, events: Iterable[SpikeEvent]) -> None:
        events = list(events)
        previous = self.clock
        for ev in events:
            if ev.address not in self._config.input_addresses:
                raise RejectedEventError(f"address {ev.address} is not an input address")
            if ev.timestamp < self.clock:
                raise CausalityError(f"event at {ev.timestamp} ns precedes clock {self.clock} ns")
            if ev.timestamp < previous:
                raise CausalityError("injected events are not sorted by timestamp")
            previous = ev.timestamp
        for ev in events:
            self._schedule(ev.address, ev.timestamp)

    def next_delivery_time(self) -> int | None:
        return self._queue[0][0] if self._queue else None

    def advance(self, until: int) -> list[SpikeEvent]:
        """Process every pending delivery due at or before ``until``; return readout spikes."""
        if until < self.clock:
            raise CausalityError(f"cannot advance backwards from {self.clock} to {until}")
        queue = self._queue
        v, last, refr_until = self._v, self._last, self._refr_until
        out: list[SpikeEvent] = []
        while queue and queue[0][0] <= until:
            t, dst, _src, _k, i, weight = heapq.heappop(queue)
            if t < refr_until[i]:
                continue
            potential = v[i] * math.exp(-(t - last[i]) / self._tau_ns[i]) + weight
            last[i] = t
            if potential >= self._threshold[i]:
                v[i] = self._v_reset[i]
                refr_until[i] = t + self._refractory_ns[i]
                if self._readout[i]:
                    out.append(SpikeEvent(dst, t))
                self._schedule(dst, t)
            else:
                v[i] = potential
        self.clock = until
        return out

    def snapshot_structural(self) -> SnnConfig:
        return self._config

    def snapshot_transient(self) -> TransientState:
        # decay is computed for the report only; the live state is not touched so
        # that taking snapshots never perturbs subsequent dynamics
        clock = self.clock
        neurons = {}
        for i, nid in enumerate(self._ids):
            potential = self._v[i] * math.exp(-(clock - self._last[i]) / self._tau_ns[i])
            neurons[nid] = NeuronState(potential, clock, self._refr_until[i])
        pending = tuple(
            Delivery(t, dst, src, w) for t, dst, src, _k, _i, w in sorted(self._queue)
        )
        return TransientState(clock, neurons, pending)


def build_network(config: SnnConfig) -> NetworkInstance:
    return NetworkInstance(config)
