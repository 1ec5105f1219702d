"""Hybrid topic + content publish/subscribe broker and its line protocol.

Subscriptions name a topic pattern ('/'-separated; '+' matches one segment, a
terminal '#' matches any suffix, including none) and an optional conjunction
of attribute comparisons. Topic matching runs first, the predicate only on
topic hits.

Each subscription owns a bounded queue. When it overflows the oldest queued
notification is discarded and counted; publishers never see an error for it.
"""

from __future__ import annotations

import itertools
import logging
import operator
import threading
from collections import deque
from dataclasses import dataclass, field
from typing import Any, Callable, Iterable, Mapping, Sequence, Union

from ._text import Scalar, Scanner, TextSyntaxError, format_scalar, is_scalar

logger = logging.getLogger(__name__)


class PubSubError(ValueError):
    pass


class PatternError(PubSubError):
    pass


class PublishError(PubSubError):
    pass


class FrameError(PubSubError):
    pass


_OPS: dict[str, Callable[[Any, Any], bool]] = {
    "=": operator.eq,
    "!=": operator.ne,
    "<": operator.lt,
    "<=": operator.le,
    ">": operator.gt,
    ">=": operator.ge,
}
_ALIASES = {"≠": "!=", "≤": "<=", "≥": ">=", "==": "="}
# longest first so '<=' wins over '<'
_OP_TOKENS = sorted([*_OPS, *_ALIASES], key=len, reverse=True)


@dataclass(frozen=True)
class Comparison:
    attribute: str
    op: str
    value: Scalar

    def __post_init__(self) -> None:
        op = _ALIASES.get(self.op, self.op)
        if op not in _OPS:
            raise PatternError(f"unknown comparison operator {self.op!r}")
        if not self.attribute:
            raise PatternError("comparison attribute name is empty")
        object.__setattr__(self, "op", op)

    def holds(self, attributes: Mapping[str, Scalar]) -> bool:
        if self.attribute not in attributes:
            return False
        actual = attributes[self.attribute]
        if isinstance(actual, bool) or isinstance(self.value, bool):
            if not (isinstance(actual, bool) and isinstance(self.value, bool)):
                return False
            if self.op not in ("=", "!="):
                return False
        elif isinstance(actual, str) != isinstance(self.value, str):
            return False
        return _OPS[self.op](actual, self.value)

    def __str__(self) -> str:
        return f"{self.attribute}{self.op}{format_scalar(self.value)}"


Predicate = tuple[Comparison, ...]


def parse_predicate(text: str) -> Predicate:
    """``rate>=3 & kind="burst"`` -> conjunction of comparisons."""
    scanner = Scanner(text)
    if scanner.at_end():
        return ()
    out = []
    try:
        while True:
            name = scanner.ident()
            for token in _OP_TOKENS:
                if scanner.accept(token):
                    op = token
                    break
            else:
                raise scanner.error("expected a comparison operator")
            out.append(Comparison(name, op, scanner.scalar()))
            if scanner.at_end():
                return tuple(out)
            scanner.expect("&")
    except TextSyntaxError as exc:
        raise PatternError(str(exc)) from None


def format_predicate(predicate: Predicate) -> str:
    return " & ".join(str(c) for c in predicate)


def parse_pattern(pattern: str) -> tuple[str, ...]:
    segments = tuple(pattern.split("/"))
    for i, seg in enumerate(segments):
        if not seg:
            raise PatternError(f"empty segment in pattern {pattern!r}")
        if seg == "#":
            if i != len(segments) - 1:
                raise PatternError(f"'#' must be the last segment in {pattern!r}")
        elif "#" in seg or ("+" in seg and seg != "+"):
            raise PatternError(f"wildcards must occupy a whole segment in {pattern!r}")
    return segments


def validate_topic(topic: str) -> tuple[str, ...]:
    segments = tuple(topic.split("/"))
    if any(not seg for seg in segments):
        raise PublishError(f"empty segment in topic {topic!r}")
    if any(seg in ("+", "#") or "+" in seg or "#" in seg for seg in segments):
        raise PublishError(f"published topic {topic!r} contains a wildcard")
    return segments


def topic_matches(pattern: Sequence[str], topic: Sequence[str]) -> bool:
    for i, seg in enumerate(pattern):
        if seg == "#":
            return True
        if i >= len(topic):
            return False
        if seg != "+" and seg != topic[i]:
            return False
    return len(pattern) == len(topic)


@dataclass(frozen=True)
class Notification:
    topic: str
    attributes: Mapping[str, Scalar] = field(default_factory=dict)
    payload_ref: str | None = None
    publisher: str = ""
    publish_seq: int = 0
    publish_time: int = 0

    def to_dict(self) -> dict[str, Any]:
        return {
            "topic": self.topic,
            "attributes": dict(self.attributes),
            "payload_ref": self.payload_ref,
            "publisher": self.publisher,
            "publish_seq": self.publish_seq,
            "publish_time": self.publish_time,
        }


Target = Union[None, Callable[[Notification], None]]


@dataclass
class Subscription:
    id: str
    pattern: str
    predicate: Predicate = ()
    capacity: int = 1024
    target: Target = None
    dropped: int = 0
    delivered: int = 0
    segments: tuple[str, ...] = ()
    queue: deque = field(default_factory=deque)

    def __post_init__(self) -> None:
        self.segments = parse_pattern(self.pattern)
        if self.capacity < 1:
            raise PubSubError("queue capacity must be >= 1")


def match(sub: Subscription, notification: Notification) -> bool:
    if not topic_matches(sub.segments, notification.topic.split("/")):
        return False
    return all(c.holds(notification.attributes) for c in sub.predicate)


class Broker:
    """In-process broker. Safe for concurrent publishers and subscribers."""

    def __init__(self, default_capacity: int = 1024) -> None:
        self.default_capacity = default_capacity
        self._subs: dict[str, Subscription] = {}
        self._last_seq: dict[str, int] = {}
        self._ids = itertools.count(1)
        self._table_lock = threading.Lock()
        self._deliver_lock = threading.Lock()

    def subscribe(
        self,
        pattern: str,
        predicate: str | Iterable[Comparison] | None = None,
        *,
        capacity: int | None = None,
        target: Target = None,
        sub_id: str | None = None,
    ) -> str:
        if isinstance(predicate, str):
            predicate = parse_predicate(predicate)
        with self._table_lock:
            if sub_id is None:
                sub_id = f"s{next(self._ids)}"
                while sub_id in self._subs:
                    sub_id = f"s{next(self._ids)}"
            elif sub_id in self._subs:
                raise PubSubError(f"subscription id {sub_id!r} already in use")
            sub = Subscription(
                sub_id,
                pattern,
                tuple(predicate or ()),
                capacity or self.default_capacity,
                target,
            )
            # copy-on-write so publishers iterate a stable table without locking
            table = dict(self._subs)
            table[sub_id] = sub
            self._subs = table
        logger.debug("subscribed %s to %s", sub_id, pattern)
        return sub_id

    def unsubscribe(self, sub_id: str) -> bool:
        with self._table_lock:
            if sub_id not in self._subs:
                return False
            table = dict(self._subs)
            del table[sub_id]
            self._subs = table
        return True

    def subscription(self, sub_id: str) -> Subscription:
        return self._subs[sub_id]

    def subscriptions(self) -> list[Subscription]:
        return list(self._subs.values())

    def publish(self, notification: Notification) -> int:
        segments = validate_topic(notification.topic)
        for name, value in notification.attributes.items():
            if not name or not is_scalar(value):
                raise PublishError(f"attribute {name!r}={value!r} is not a named scalar")
        table = self._subs
        with self._deliver_lock:
            last = self._last_seq.get(notification.publisher)
            if last is not None and notification.publish_seq <= last:
                raise PublishError(
                    f"publisher {notification.publisher!r} sequence {notification.publish_seq} "
                    f"does not follow {last}"
                )
            self._last_seq[notification.publisher] = notification.publish_seq
            count = 0
            for sub in table.values():
                if not topic_matches(sub.segments, segments):
                    continue
                if not all(c.holds(notification.attributes) for c in sub.predicate):
                    continue
                count += 1
                sub.delivered += 1
                if sub.target is not None:
                    sub.target(notification)
                    continue
                if len(sub.queue) >= sub.capacity:
                    sub.queue.popleft()
                    sub.dropped += 1
                sub.queue.append(notification)
        return count

    def poll(self, sub_id: str, limit: int | None = None) -> list[Notification]:
        sub = self._subs.get(sub_id)
        if sub is None:
            return []
        with self._deliver_lock:
            n = len(sub.queue) if limit is None else min(limit, len(sub.queue))
            return [sub.queue.popleft() for _ in range(n)]


class Publisher:
    """Publishing handle that stamps sequence numbers; knows nothing about subscribers."""

    def __init__(self, broker: Broker, name: str) -> None:
        self._broker = broker
        self.name = name
        self._seq = 0

    @property
    def last_seq(self) -> int:
        return self._seq

    def publish(
        self,
        topic: str,
        attributes: Mapping[str, Scalar] | None = None,
        payload_ref: str | None = None,
        time: int = 0,
    ) -> Notification:
        self._seq += 1
        note = Notification(topic, dict(attributes or {}), payload_ref, self.name, self._seq, time)
        self._broker.publish(note)
        return note


# -- line protocol -------------------------------------------------------------

@dataclass(frozen=True)
class SubFrame:
    id: str
    pattern: str
    predicate: Predicate = ()


@dataclass(frozen=True)
class UnsubFrame:
    id: str


@dataclass(frozen=True)
class PubFrame:
    topic: str
    attributes: Mapping[str, Scalar] = field(default_factory=dict)


@dataclass(frozen=True)
class EvtFrame:
    topic: str
    attributes: Mapping[str, Scalar] = field(default_factory=dict)
    payload_ref: str | None = None


Frame = Union[SubFrame, UnsubFrame, PubFrame, EvtFrame]


def format_attributes(attributes: Mapping[str, Scalar]) -> str:
    if not attributes:
        return "-"
    return ",".join(f"{k}={format_scalar(v)}" for k, v in attributes.items())


def _parse_attributes(scanner: Scanner) -> dict[str, Scalar]:
    if scanner.accept("-"):
        return {}
    attrs: dict[str, Scalar] = {}
    while True:
        name = scanner.ident()
        scanner.expect("=")
        attrs[name] = scanner.scalar()
        if not scanner.accept(","):
            return attrs


def format_frame(frame: Frame) -> str:
    if isinstance(frame, SubFrame):
        line = f"SUB {frame.id} {frame.pattern}"
        if frame.predicate:
            line += " " + format_predicate(frame.predicate)
        return line
    if isinstance(frame, UnsubFrame):
        return f"UNSUB {frame.id}"
    if isinstance(frame, PubFrame):
        return f"PUB {frame.topic} {format_attributes(frame.attributes)}"
    ref = "-" if frame.payload_ref is None else format_scalar(frame.payload_ref)
    return f"EVT {frame.topic} {format_attributes(frame.attributes)} {ref}"


def parse_frame(line: str) -> Frame:
    line = line.rstrip("\r\n")
    scanner = Scanner(line)
    try:
        verb = scanner.word()
        if verb == "SUB":
            sub_id = scanner.word()
            pattern = scanner.word()
            parse_pattern(pattern)
            return SubFrame(sub_id, pattern, parse_predicate(line[scanner.pos:]))
        if verb == "UNSUB":
            frame: Frame = UnsubFrame(scanner.word())
        elif verb == "PUB":
            topic = scanner.word()
            attrs = {} if scanner.at_end() else _parse_attributes(scanner)
            frame = PubFrame(topic, attrs)
        elif verb == "EVT":
            topic = scanner.word()
            attrs = _parse_attributes(scanner)
            if scanner.accept("-"):
                ref = None
            else:
                value = scanner.scalar()
                if not isinstance(value, str):
                    raise scanner.error("payload reference must be a string")
                ref = value
            frame = EvtFrame(topic, attrs, ref)
        else:
            raise FrameError(f"unknown frame verb {verb!r}")
        if not scanner.at_end():
            raise scanner.error("unexpected trailing text")
        return frame
    except (TextSyntaxError, PatternError) as exc:
        raise FrameError(str(exc)) from None
