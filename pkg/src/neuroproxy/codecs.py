"""Neural coding schemes: capacity counting, symbol/spike-train codecs, level-crossing encoding.

Capacities assume the small-population regime where each neuron spikes at most
once per window. The rate code is the only scheme that puts several spikes on
one neuron; in that regime its capacity coincides with the count code.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Iterable, Sequence

from .snn import NS_PER_MS, SpikeEvent, event_order, ms_to_ns


class CodecError(ValueError):
    pass


class ParameterError(CodecError):
    pass


class CapacityError(CodecError):
    pass


class DecodeError(CodecError):
    pass


class CodingScheme(str, enum.Enum):
    RATE = "rate"
    COUNT = "count"
    TIMING = "timing"
    RANK_ORDER = "rank_order"
    SYNCHRONY = "synchrony"
    BINARY_REFERENCE = "binary_reference"


@dataclass(frozen=True)
class CodecParams:
    """Window geometry for a population code.

    ``window_ms`` is the coding interval and ``resolution_ms`` its temporal
    resolution; their ratio must be a whole number of bins.
    """

    n_neurons: int
    window_ms: float = 10.0
    resolution_ms: float = 1.0
    n_phases: int = 3
    base_address: int = 0

    def __post_init__(self) -> None:
        if self.n_neurons < 1:
            raise ParameterError("need at least one neuron")
        if self.n_phases < 1:
            raise ParameterError("need at least one phase")
        if not self.resolution_ms > 0 or self.window_ms < self.resolution_ms:
            raise ParameterError("require window >= resolution > 0")
        ratio = Fraction(repr(float(self.window_ms))) / Fraction(repr(float(self.resolution_ms)))
        if ratio.denominator != 1:
            raise ParameterError(f"window/resolution = {ratio} is not a whole number of bins")
        if self.base_address < 0 or self.base_address + self.n_neurons - 1 > 2**32 - 1:
            raise ParameterError("addresses fall outside the 32-bit range")

    @property
    def bins(self) -> int:
        ratio = Fraction(repr(float(self.window_ms))) / Fraction(repr(float(self.resolution_ms)))
        return int(ratio)

    @property
    def window_ns(self) -> int:
        return ms_to_ns(self.window_ms)

    @property
    def bin_ns(self) -> int:
        return ms_to_ns(self.resolution_ms)


def capacity_states(scheme: CodingScheme | str, params: CodecParams) -> int:
    scheme = CodingScheme(scheme)
    n = params.n_neurons
    if scheme is CodingScheme.TIMING:
        return params.bins**n
    if scheme is CodingScheme.RANK_ORDER:
        return math.factorial(n)
    if scheme is CodingScheme.SYNCHRONY:
        return params.n_phases**n
    if scheme is CodingScheme.BINARY_REFERENCE:
        return 2**n
    return n + 1  # count and rate


def equivalent_bits(states: int) -> float:
    if states < 1:
        raise ValueError("state count must be >= 1")
    return math.log2(states)  # exact for arbitrarily large ints


# -- digit / permutation helpers ----------------------------------------------

def _digits(value: int, base: int, width: int) -> list[int]:
    """Most significant digit first."""
    out = [0] * width
    for i in range(width - 1, -1, -1):
        value, out[i] = divmod(value, base)
    return out


def _undigits(digits: Sequence[int], base: int) -> int:
    value = 0
    for d in digits:
        value = value * base + d
    return value


def lehmer_to_permutation(index: int, n: int) -> list[int]:
    pool = list(range(n))
    perm = []
    for i in range(n, 0, -1):
        pos, index = divmod(index, math.factorial(i - 1))
        perm.append(pool.pop(pos))
    return perm


def permutation_to_lehmer(perm: Sequence[int]) -> int:
    pool = sorted(perm)
    n = len(perm)
    index = 0
    for i, item in enumerate(perm):
        pos = pool.index(item)
        index += pos * math.factorial(n - 1 - i)
        pool.pop(pos)
    return index


def _ceil_div(a: int, b: int) -> int:
    return -(-a // b)


# -- encode / decode -----------------------------------------------------------

def encode(scheme: CodingScheme | str, symbol: int, params: CodecParams, t0: int = 0) -> list[SpikeEvent]:
    """Map ``symbol`` to a spike train inside the window ``[t0, t0 + window)``."""
    scheme = CodingScheme(scheme)
    if scheme is CodingScheme.BINARY_REFERENCE:
        raise ParameterError("binary_reference is a capacity baseline, not a spike code")
    capacity = capacity_states(scheme, params)
    if not 0 <= symbol < capacity:
        raise CapacityError(f"symbol {symbol} outside [0, {capacity}) for {scheme.value}")
    n, base = params.n_neurons, params.base_address
    window = params.window_ns
    events: list[SpikeEvent]

    if scheme is CodingScheme.COUNT:
        events = [SpikeEvent(base + i, t0) for i in range(symbol)]
    elif scheme is CodingScheme.RATE:
        events = [SpikeEvent(base, t0 + (j * window) // symbol) for j in range(symbol)]
    elif scheme is CodingScheme.TIMING:
        bins = _digits(symbol, params.bins, n)
        events = [SpikeEvent(base + i, t0 + b * params.bin_ns) for i, b in enumerate(bins)]
    elif scheme is CodingScheme.RANK_ORDER:
        order = lehmer_to_permutation(symbol, n)
        events = [SpikeEvent(base + nid, t0 + _rank_offset(rank, params)) for rank, nid in enumerate(order)]
    else:
        phases = _digits(symbol, params.n_phases, n)
        events = [SpikeEvent(base + i, t0 + _phase_offset(p, params)) for i, p in enumerate(phases)]
    return sorted(events, key=event_order)


def _rank_offset(rank: int, params: CodecParams) -> int:
    if params.n_neurons <= params.bins:
        return rank * params.bin_ns
    # more neurons than bins: subdivide the window evenly, order is all that matters
    return (rank * params.window_ns) // params.n_neurons


def _phase_offset(phase: int, params: CodecParams) -> int:
    # ceil keeps each offset inside its own phase slot, so floor() recovers it
    return _ceil_div(phase * params.window_ns, params.n_phases)


def _window_offsets(events: Iterable[SpikeEvent], params: CodecParams, t0: int) -> list[tuple[int, int]]:
    """Return (neuron index, offset ns) pairs after range checks."""
    out = []
    for ev in events:
        idx = ev.address - params.base_address
        if not 0 <= idx < params.n_neurons:
            raise DecodeError(f"address {ev.address} is not part of the population")
        offset = ev.timestamp - t0
        if not 0 <= offset < params.window_ns:
            raise DecodeError(f"event {ev} lies outside the window starting at {t0}")
        out.append((idx, offset))
    return out


def _once_each(pairs: list[tuple[int, int]], n: int, scheme: str) -> dict[int, int]:
    seen: dict[int, int] = {}
    for idx, offset in pairs:
        if idx in seen:
            raise DecodeError(f"{scheme}: neuron {idx} spiked more than once")
        seen[idx] = offset
    if len(seen) != n:
        missing = sorted(set(range(n)) - set(seen))
        raise DecodeError(f"{scheme}: neurons {missing} did not spike")
    return seen


def decode(scheme: CodingScheme | str, events: Iterable[SpikeEvent], params: CodecParams, t0: int = 0) -> int:
    scheme = CodingScheme(scheme)
    if scheme is CodingScheme.BINARY_REFERENCE:
        raise ParameterError("binary_reference is a capacity baseline, not a spike code")
    pairs = _window_offsets(events, params, t0)
    n = params.n_neurons

    if scheme is CodingScheme.COUNT:
        if len({idx for idx, _ in pairs}) != len(pairs):
            raise DecodeError("count: a neuron spiked more than once")
        return len(pairs)
    if scheme is CodingScheme.RATE:
        if any(idx != 0 for idx, _ in pairs):
            raise DecodeError("rate: spikes must come from the designated neuron")
        if len(pairs) > n:
            raise DecodeError(f"rate: {len(pairs)} spikes exceed capacity {n}")
        return len(pairs)
    if scheme is CodingScheme.TIMING:
        seen = _once_each(pairs, n, "timing")
        return _undigits([seen[i] // params.bin_ns for i in range(n)], params.bins)
    if scheme is CodingScheme.RANK_ORDER:
        seen = _once_each(pairs, n, "rank_order")
        if len(set(seen.values())) != n:
            raise DecodeError("rank_order: simultaneous spikes make the order ambiguous")
        order = sorted(seen, key=seen.__getitem__)
        return permutation_to_lehmer(order)
    seen = _once_each(pairs, n, "synchrony")
    phases = [(seen[i] * params.n_phases) // params.window_ns for i in range(n)]
    return _undigits(phases, params.n_phases)


# -- level crossing ------------------------------------------------------------

class LevelCrossingEncoder:
    """Stateful delta modulator: emits UP/DOWN events whenever the signal moves one level."""

    def __init__(self, delta: float, up_address: int, down_address: int) -> None:
        if not delta > 0:
            raise ParameterError("delta must be > 0")
        self.delta = delta
        self.up_address = up_address
        self.down_address = down_address
        self._origin: float | None = None
        self._level = 0

    @property
    def reference(self) -> float | None:
        if self._origin is None:
            return None
        return self._origin + self._level * self.delta

    def push(self, time: int, value: float) -> list[SpikeEvent]:
        if self._origin is None:
            self._origin = value
            return []
        out = []
        # reference kept as origin + level * delta so long ramps do not accumulate drift
        while value >= self._origin + (self._level + 1) * self.delta:
            self._level += 1
            out.append(SpikeEvent(self.up_address, time))
        while value <= self._origin + (self._level - 1) * self.delta:
            self._level -= 1
            out.append(SpikeEvent(self.down_address, time))
        return out


def lebesgue_encode(
    samples: Iterable[tuple[int, float]], delta: float, up_addr: int, down_addr: int
) -> list[SpikeEvent]:
    encoder = LevelCrossingEncoder(delta, up_addr, down_addr)
    events: list[SpikeEvent] = []
    for time, value in samples:
        events.extend(encoder.push(time, value))
    return events


def capacity_rows(params: CodecParams) -> list[dict[str, object]]:
    """Capacity table rows in descending-capacity order, with comparison notes."""
    rows = []
    for scheme in (
        CodingScheme.TIMING,
        CodingScheme.RANK_ORDER,
        CodingScheme.SYNCHRONY,
        CodingScheme.BINARY_REFERENCE,
        CodingScheme.COUNT,
        CodingScheme.RATE,
    ):
        states = capacity_states(scheme, params)
        bits = equivalent_bits(states)
        note = ""
        if scheme is CodingScheme.SYNCHRONY:
            alt = (params.n_phases + 1) ** params.n_neurons
            note = (
                f"discrepancy: reference value is 20 bits; {params.n_phases}^N gives "
                f"{bits:.2f}; {params.n_phases + 1} states per neuron give {alt} states = "
                f"{equivalent_bits(alt):.2f} bits"
            )
        elif scheme is CodingScheme.RATE:
            note = "equals count code when each neuron spikes at most once"
        rows.append(
            {
                "scheme": scheme.value,
                "states": states,
                "equivalent_bits": bits,
                "floored_bits": math.floor(bits),
                "rounded_bits": f"{bits:.2f}",
                "note": note,
            }
        )
    return rows


__all__ = [
    "NS_PER_MS",
    "CodecParams",
    "CodingScheme",
    "LevelCrossingEncoder",
    "capacity_rows",
    "capacity_states",
    "decode",
    "encode",
    "equivalent_bits",
    "lebesgue_encode",
]
