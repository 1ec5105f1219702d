"""AER packet framing and spike stream merging.

Wire layout, all integers little-endian::

    magic   4 bytes  b"AER0"
    kind    1 byte   0x01 spike events, 0x02 control payload
    count   4 bytes  number of events (kind 0x01) or payload length (kind 0x02)
    body    count * 12 bytes (u32 address + u64 timestamp ns), or the raw payload
"""

from __future__ import annotations

import heapq
import struct
from dataclasses import dataclass
from typing import Iterable, Iterator

from .snn import U32_MAX, U64_MAX, SpikeEvent

MAGIC = b"AER0"
KIND_SPIKES = 0x01
KIND_CONTROL = 0x02
HEADER = struct.Struct("<4sBI")
RECORD = struct.Struct("<IQ")


class AerError(ValueError):
    pass


class EncodeError(AerError):
    pass


class DecodeError(AerError):
    def __init__(self, reason: str, offset: int) -> None:
        super().__init__(f"{reason} at byte offset {offset}")
        self.reason = reason
        self.offset = offset


class MergeError(AerError):
    def __init__(self, stream: int, event: SpikeEvent) -> None:
        super().__init__(f"stream {stream} is not time-ordered at {event}")
        self.stream = stream


@dataclass(frozen=True)
class AerPacket:
    kind: int
    events: tuple[SpikeEvent, ...] = ()
    payload: bytes = b""

    @classmethod
    def spikes(cls, events: Iterable[SpikeEvent]) -> AerPacket:
        return cls(KIND_SPIKES, tuple(SpikeEvent(*e) for e in events))

    @classmethod
    def control(cls, payload: bytes) -> AerPacket:
        return cls(KIND_CONTROL, (), bytes(payload))


def encode_packet(packet: AerPacket) -> bytes:
    if packet.kind == KIND_CONTROL:
        if len(packet.payload) > U32_MAX:
            raise EncodeError("control payload too large")
        return HEADER.pack(MAGIC, KIND_CONTROL, len(packet.payload)) + packet.payload
    if packet.kind != KIND_SPIKES:
        raise EncodeError(f"unknown packet kind {packet.kind:#04x}")
    events = packet.events
    if len(events) > U32_MAX:
        raise EncodeError("too many events for one packet")
    parts = [HEADER.pack(MAGIC, KIND_SPIKES, len(events))]
    previous = 0
    for i, (address, timestamp) in enumerate(events):
        if not 0 <= address <= U32_MAX or not 0 <= timestamp <= U64_MAX:
            raise EncodeError(f"event {i} out of range: {events[i]}")
        if timestamp < previous:
            raise EncodeError(f"event {i} is earlier than its predecessor")
        previous = timestamp
        parts.append(RECORD.pack(address, timestamp))
    return b"".join(parts)


def decode_packet(data: bytes | bytearray | memoryview, offset: int = 0) -> tuple[AerPacket, int]:
    """Decode one packet starting at ``offset``; return it with the number of bytes consumed."""
    buf = memoryview(data)
    head = bytes(buf[offset:offset + 4])
    if head != MAGIC[:len(head)]:
        raise DecodeError(f"bad magic {head!r}", offset)
    if len(buf) - offset < HEADER.size:
        raise DecodeError("truncated header", len(buf))
    _, kind, count = HEADER.unpack_from(buf, offset)
    body = offset + HEADER.size
    if kind == KIND_CONTROL:
        end = body + count
        if len(buf) < end:
            raise DecodeError("truncated control payload", len(buf))
        return AerPacket.control(bytes(buf[body:end])), end - offset
    if kind != KIND_SPIKES:
        raise DecodeError(f"unknown packet kind {kind:#04x}", offset + 4)
    end = body + count * RECORD.size
    if len(buf) < end:
        raise DecodeError("truncated event records", len(buf))
    events = []
    previous = 0
    for i, (address, timestamp) in enumerate(RECORD.iter_unpack(buf[body:end])):
        if timestamp < previous:
            raise DecodeError("events out of timestamp order", body + i * RECORD.size)
        previous = timestamp
        events.append(SpikeEvent(address, timestamp))
    return AerPacket(KIND_SPIKES, tuple(events)), end - offset


def decode_all(data: bytes) -> list[AerPacket]:
    packets = []
    offset = 0
    while offset < len(data):
        packet, used = decode_packet(data, offset)
        packets.append(packet)
        offset += used
    return packets


class StreamDecoder:
    """Incremental decoder for one connection; feed arbitrary chunks, get whole packets."""

    def __init__(self) -> None:
        self._buffer = bytearray()
        self._consumed = 0  # absolute stream offset of _buffer[0]

    def feed(self, chunk: bytes) -> list[AerPacket]:
        self._buffer.extend(chunk)
        packets = []
        offset = 0
        while True:
            need = self._needed(offset)
            if need is None or len(self._buffer) - offset < need:
                break
            try:
                packet, used = decode_packet(self._buffer, offset)
            except DecodeError as exc:
                raise DecodeError(exc.reason, self._consumed + exc.offset) from None
            packets.append(packet)
            offset += used
        del self._buffer[:offset]
        self._consumed += offset
        return packets

    def _needed(self, offset: int) -> int | None:
        available = len(self._buffer) - offset
        head = bytes(self._buffer[offset:offset + 4])
        if head != MAGIC[:len(head)]:
            return available  # decode_packet reports the bad magic
        if available < HEADER.size:
            return None
        _, kind, count = HEADER.unpack_from(self._buffer, offset)
        if kind == KIND_SPIKES:
            return HEADER.size + count * RECORD.size
        if kind == KIND_CONTROL:
            return HEADER.size + count
        return HEADER.size

    @property
    def pending(self) -> int:
        """Bytes buffered but not yet forming a complete packet."""
        return len(self._buffer)


def _checked(stream: Iterable[SpikeEvent], index: int) -> Iterator[SpikeEvent]:
    # equal-timestamp runs are re-sorted by address so the merge key is monotone
    group: list[SpikeEvent] = []
    for event in stream:
        event = SpikeEvent(*event)
        if group and event.timestamp != group[0].timestamp:
            if event.timestamp < group[0].timestamp:
                raise MergeError(index, event)
            group.sort(key=lambda e: e.address)
            yield from group
            group = []
        group.append(event)
    group.sort(key=lambda e: e.address)
    yield from group


def merge_streams(streams: Iterable[Iterable[SpikeEvent]]) -> Iterator[SpikeEvent]:
    """Lazily merge time-ordered streams into one stream ordered by (timestamp, address)."""
    checked = [_checked(s, i) for i, s in enumerate(streams)]
    return heapq.merge(*checked, key=lambda e: (e.timestamp, e.address))
