from __future__ import annotations

import asyncio
import json

import pytest

from neuroproxy.aer import AerPacket, encode_packet
from neuroproxy.serve import ProxyServer, ServeConfig
from neuroproxy.snn import SpikeEvent
from workloads import coincidence_doc


@pytest.fixture
def objectives(tmp_path):
    path = tmp_path / "c.obj"
    path.write_text(coincidence_doc(2, 5.0))
    return path


def test_config_load(tmp_path, objectives):
    (tmp_path / "p.json").write_text(json.dumps({"instance": "x", "objectives": "c.obj", "tick_ms": 2}))
    config = ServeConfig.load(tmp_path / "p.json")
    assert config.instance == "x" and config.objectives == str(objectives)
    (tmp_path / "bad.json").write_text(json.dumps({"colour": "red"}))
    with pytest.raises(ValueError):
        ServeConfig.load(tmp_path / "bad.json")


async def _session(objectives):
    server = ProxyServer(ServeConfig(objectives=str(objectives), tick_ms=1.0))
    ports = await server.start()
    try:
        ps_reader, ps_writer = await asyncio.open_connection("127.0.0.1", ports["pubsub"])
        ps_writer.write(b"SUB s1 nc/# count>=1\nSUB bad nc/#/x\n")
        await ps_writer.drain()
        acks = [await ps_reader.readline(), await ps_reader.readline()]

        _, aer_writer = await asyncio.open_connection("127.0.0.1", ports["aer"])
        packet = encode_packet(AerPacket.spikes([SpikeEvent(0, 0), SpikeEvent(1, 0)]))
        aer_writer.write(packet[:7])  # split across writes on purpose
        await aer_writer.drain()
        aer_writer.write(packet[7:])
        await aer_writer.drain()

        evt = await asyncio.wait_for(ps_reader.readline(), timeout=5)

        q_reader, q_writer = await asyncio.open_connection("127.0.0.1", ports["query"])
        q_writer.write(b"match Event { readout, count }\nstate\nmatch Nope { id }\n")
        await q_writer.drain()
        answers = [json.loads(await q_reader.readline()) for _ in range(3)]
        for w in (ps_writer, aer_writer, q_writer):
            w.close()
        return acks, evt.decode(), answers
    finally:
        await server.stop()


def test_end_to_end_over_sockets(objectives):
    acks, evt, answers = asyncio.run(_session(objectives))
    assert acks[0] == b"OK\n" and acks[1].startswith(b"ERR")
    assert evt.startswith("EVT nc/p ") and "readout=2" in evt
    assert answers[0] == [{"readout": 2, "count": 1}]
    assert [n["id"] for n in answers[1]["neurons"]] == [2]
    assert "error" in answers[2]


def test_answer_without_objectives():
    server = ProxyServer(ServeConfig())

    async def ask():
        await server.start()
        try:
            return server.answer("state"), server.answer("match Event { id }")
        finally:
            await server.stop()

    state, events = asyncio.run(ask())
    assert json.loads(state)["neurons"] == [] and events == "[]"
