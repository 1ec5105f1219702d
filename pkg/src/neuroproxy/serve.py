"""Network front-end for a proxy wrapping an in-process simulated device.

Three TCP listeners share one event loop:

* AER input: raw AER spike packets; every event is restamped with its arrival time.
* pubsub: line frames. ``SUB``/``UNSUB`` manage the connection's subscriptions, matching
  notifications come back as ``EVT`` lines and ``PUB`` injects a notification.
* query: ``match ...`` lines answer with one JSON line, ``state`` returns the current
  network configuration.

A ticker advances the device every ``tick_ms`` and feeds its output back to the proxy.
"""

from __future__ import annotations

import asyncio
import itertools
import json
import logging
from dataclasses import dataclass
from pathlib import Path

from .aer import KIND_SPIKES, AerPacket, DecodeError, StreamDecoder, encode_packet
from .declarative import ObjectiveError, parse
from .graphstore import GraphError, dumps_result
from .nsp import LocalDeviceLink, NeuromorphicSystemProxy, SimulatedDevice
from .pubsub import (
    Broker,
    EvtFrame,
    FrameError,
    Notification,
    PubFrame,
    Publisher,
    PubSubError,
    SubFrame,
    UnsubFrame,
    format_frame,
    parse_frame,
)
from .snn import SpikeEvent, ms_to_ns

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class ServeConfig:
    instance: str = "nc0"
    objectives: str | None = None
    host: str = "127.0.0.1"
    aer_port: int = 0
    pubsub_port: int = 0
    query_port: int = 0
    tick_ms: float = 1.0
    refresh_ms: float = 1000.0
    miss_threshold: int = 3

    @classmethod
    def load(cls, path: str | Path) -> ServeConfig:
        path = Path(path)
        data = json.loads(path.read_text(encoding="utf-8"))
        unknown = set(data) - set(cls.__dataclass_fields__)
        if unknown:
            raise ValueError(f"unknown serve config keys {sorted(unknown)}")
        if data.get("objectives"):
            data["objectives"] = str(path.parent / data["objectives"])
        return cls(**data)


class ProxyServer:
    def __init__(self, config: ServeConfig) -> None:
        self.config = config
        self.device = SimulatedDevice()
        self.broker = Broker()
        self.proxy = NeuromorphicSystemProxy(
            config.instance,
            LocalDeviceLink(self.device),
            self.broker,
            refresh_interval=ms_to_ns(config.refresh_ms),
            miss_threshold=config.miss_threshold,
        )
        if config.objectives:
            self.proxy.apply_objectives(parse(Path(config.objectives).read_text(encoding="utf-8")))
        self._conn_ids = itertools.count(1)
        self._servers: list[asyncio.base_events.Server] = []
        self._ticker: asyncio.Task | None = None
        self._t0 = 0.0
        self.ports: dict[str, int] = {}

    def now(self) -> int:
        return max(self.device.clock, int((asyncio.get_running_loop().time() - self._t0) * 1e9))

    async def start(self) -> dict[str, int]:
        self._t0 = asyncio.get_running_loop().time()
        c = self.config
        for name, handler, port in (
            ("aer", self._handle_aer, c.aer_port),
            ("pubsub", self._handle_pubsub, c.pubsub_port),
            ("query", self._handle_query, c.query_port),
        ):
            server = await asyncio.start_server(handler, c.host, port)
            self._servers.append(server)
            self.ports[name] = server.sockets[0].getsockname()[1]
        self._ticker = asyncio.create_task(self._tick())
        logger.info("serving %s on %s", self.config.instance, self.ports)
        return self.ports

    async def stop(self) -> None:
        if self._ticker is not None:
            self._ticker.cancel()
        for server in self._servers:
            server.close()
            await server.wait_closed()

    def step(self, until: int | None = None) -> list[Notification]:
        """Advance the device and hand its output to the proxy."""
        until = self.now() if until is None else until
        data = self.device.output_packet(until)
        return self.proxy.feed_output(data) if data else []

    async def _tick(self) -> None:
        period = self.config.tick_ms / 1000.0
        while True:
            await asyncio.sleep(period)
            try:
                self.step()
            except Exception:  # keep serving; the failure is in one packet
                logger.exception("tick failed")

    async def _handle_aer(self, reader: asyncio.StreamReader, writer: asyncio.StreamWriter) -> None:
        decoder = StreamDecoder()
        try:
            while chunk := await reader.read(65536):
                for packet in decoder.feed(chunk):
                    if packet.kind != KIND_SPIKES:
                        logger.info("ignoring control packet on the input port")
                        continue
                    t = self.now()
                    self.step(t)
                    stamped = [SpikeEvent(e.address, t) for e in packet.events]
                    try:
                        self.device.receive_input(encode_packet(AerPacket.spikes(stamped)))
                    except ValueError as exc:
                        logger.info("rejected input: %s", exc)
        except DecodeError as exc:
            logger.info("closing AER connection: %s", exc)
        finally:
            writer.close()

    async def _handle_pubsub(self, reader: asyncio.StreamReader, writer: asyncio.StreamWriter) -> None:
        conn = next(self._conn_ids)
        publisher = Publisher(self.broker, f"client{conn}")
        owned: set[str] = set()

        def deliver(note: Notification) -> None:
            frame = EvtFrame(note.topic, note.attributes, note.payload_ref)
            writer.write((format_frame(frame) + "\n").encode("utf-8"))

        try:
            while line := await reader.readline():
                text = line.decode("utf-8", "replace").strip()
                if not text:
                    continue
                try:
                    frame = parse_frame(text)
                    if isinstance(frame, SubFrame):
                        key = f"{conn}:{frame.id}"
                        self.broker.unsubscribe(key)
                        self.broker.subscribe(frame.pattern, frame.predicate, target=deliver, sub_id=key)
                        owned.add(key)
                    elif isinstance(frame, UnsubFrame):
                        owned.discard(f"{conn}:{frame.id}")
                        self.broker.unsubscribe(f"{conn}:{frame.id}")
                    elif isinstance(frame, PubFrame):
                        publisher.publish(frame.topic, frame.attributes, time=self.now())
                    else:
                        raise FrameError("clients may not send EVT frames")
                    writer.write(b"OK\n")
                except PubSubError as exc:
                    writer.write(f"ERR {exc}\n".encode("utf-8"))
                await writer.drain()
        finally:
            for key in owned:
                self.broker.unsubscribe(key)
            writer.close()

    def answer(self, text: str) -> str:
        if text == "state":
            return self.proxy.get_system_state().to_json()
        try:
            return dumps_result(self.proxy.serve_query(text, now=self.now()))
        except GraphError as exc:
            return json.dumps({"error": str(exc)})

    async def _handle_query(self, reader: asyncio.StreamReader, writer: asyncio.StreamWriter) -> None:
        try:
            while line := await reader.readline():
                text = line.decode("utf-8", "replace").strip()
                if text:
                    writer.write((self.answer(text) + "\n").encode("utf-8"))
                    await writer.drain()
        finally:
            writer.close()


async def serve_forever(config: ServeConfig, ready: asyncio.Event | None = None) -> None:
    server = ProxyServer(config)
    ports = await server.start()
    print(json.dumps(ports, sort_keys=True), flush=True)
    if ready is not None:
        ready.set()
    try:
        await asyncio.Event().wait()
    finally:
        await server.stop()


def run(config_path: str | Path) -> None:
    try:
        config = ServeConfig.load(config_path)
    except (OSError, ValueError, TypeError) as exc:
        raise SystemExit(f"bad serve config: {exc}") from None
    try:
        asyncio.run(serve_forever(config))
    except ObjectiveError as exc:
        raise SystemExit(f"bad objectives: {exc}") from None
    except KeyboardInterrupt:
        pass

