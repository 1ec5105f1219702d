"""Refresh-maintained soft state with logical-clock expiry."""

from __future__ import annotations

import threading
from dataclasses import dataclass
from typing import Any


class ClockError(ValueError):
    pass


@dataclass
class SoftEntry:
    key: str
    value: Any
    refresh_interval: int
    miss_threshold: int
    last_refresh: int
    created: int

    def deadline(self) -> int:
        """Last instant (inclusive) at which the entry is still visible."""
        return self.last_refresh + self.miss_threshold * self.refresh_interval

    def visible(self, now: int) -> bool:
        return now - self.last_refresh <= self.miss_threshold * self.refresh_interval


class SoftStateStore:
    """Entries live while refreshed; one silently missed refresh too many and they are gone.

    Time is always passed in (integer ns), never read from a wall clock. An
    entry refreshed at ``t`` is visible through ``t + miss_threshold * interval``
    inclusive. ``get`` never mutates; physical removal happens in ``sweep`` and
    when ``refresh`` replaces an expired entry.
    """

    def __init__(self, refresh_interval: int = 100_000_000, miss_threshold: int = 3) -> None:
        if refresh_interval <= 0 or miss_threshold < 1:
            raise ValueError("refresh_interval must be > 0 and miss_threshold >= 1")
        self.default_interval = refresh_interval
        self.default_threshold = miss_threshold
        self._entries: dict[str, SoftEntry] = {}
        self._watermark = 0
        self._lock = threading.Lock()

    @property
    def watermark(self) -> int:
        return self._watermark

    def refresh(
        self,
        key: str,
        value: Any,
        now: int,
        refresh_interval: int | None = None,
        miss_threshold: int | None = None,
    ) -> bool:
        """Create or renew ``key``. Returns True when the entry was (re)created."""
        interval = self.default_interval if refresh_interval is None else refresh_interval
        threshold = self.default_threshold if miss_threshold is None else miss_threshold
        if interval <= 0 or threshold < 1:
            raise ValueError("refresh_interval must be > 0 and miss_threshold >= 1")
        with self._lock:
            if now < self._watermark:
                raise ClockError(f"refresh at {now} precedes store clock {self._watermark}")
            self._watermark = now
            entry = self._entries.get(key)
            if entry is not None and entry.visible(now):
                entry.value = value
                entry.last_refresh = now
                entry.refresh_interval = interval
                entry.miss_threshold = threshold
                return False
            self._entries[key] = SoftEntry(key, value, interval, threshold, now, now)
            return True

    def get(self, key: str, now: int, default: Any = None) -> Any:
        entry = self._entries.get(key)
        if entry is None or not entry.visible(now):
            return default
        return entry.value

    def entry(self, key: str, now: int) -> SoftEntry | None:
        entry = self._entries.get(key)
        if entry is None or not entry.visible(now):
            return None
        return SoftEntry(**vars(entry))

    def live_keys(self, now: int) -> list[str]:
        with self._lock:
            return sorted(k for k, e in self._entries.items() if e.visible(now))

    def sweep(self, now: int) -> list[str]:
        with self._lock:
            expired = sorted(k for k, e in self._entries.items() if not e.visible(now))
            for key in expired:
                del self._entries[key]
            return expired

    def __len__(self) -> int:
        # physically stored, including expired-but-unswept entries
        return len(self._entries)
