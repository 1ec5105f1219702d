"""Random workload generators shared by unit and acceptance tests."""

from __future__ import annotations

import random

import numpy as np

from neuroproxy.graphstore import GraphSchema, PropertyGraph
from neuroproxy.pubsub import Comparison, Notification
from neuroproxy.snn import SpikeEvent
from neuroproxy.softstate import SoftStateStore

SEGMENTS = ["nc", "dev1", "dev2", "events", "alarms", "x"]
ATTRS = ["rate", "count", "kind", "ok"]
OPS = ["=", "!=", "<", "<=", ">", ">="]


def random_value(rng: random.Random):
    pick = rng.random()
    if pick < 0.4:
        return rng.randint(0, 9)
    if pick < 0.6:
        return rng.choice([0.5, 2.5, 7.25])
    if pick < 0.85:
        return rng.choice(["burst", "idle", "spike"])
    return rng.choice([True, False])


def random_topic(rng: random.Random) -> str:
    return "/".join(rng.choice(SEGMENTS) for _ in range(rng.randint(1, 4)))


def random_pattern(rng: random.Random) -> str:
    parts = []
    for _ in range(rng.randint(1, 4)):
        r = rng.random()
        parts.append("+" if r < 0.25 else rng.choice(SEGMENTS))
    if rng.random() < 0.3:
        parts[-1] = "#"
    return "/".join(parts)


def random_predicate(rng: random.Random) -> list[tuple[str, str, object]]:
    return [(rng.choice(ATTRS), rng.choice(OPS), random_value(rng)) for _ in range(rng.randint(0, 2))]


def random_attributes(rng: random.Random) -> dict:
    return {name: random_value(rng) for name in ATTRS if rng.random() < 0.7}


def as_comparisons(predicate: list[tuple[str, str, object]]) -> tuple[Comparison, ...]:
    return tuple(Comparison(*c) for c in predicate)


def random_notifications(rng: random.Random, n: int, publishers: int = 3) -> list[Notification]:
    seqs = [0] * publishers
    out = []
    for i in range(n):
        p = rng.randrange(publishers)
        seqs[p] += 1
        out.append(Notification(random_topic(rng), random_attributes(rng), f"ref{i}", f"pub{p}", seqs[p], i))
    return out


def coincidence_doc(n_members: int, window_ms: float, k: int = 1, horizon_ms: float = 10.0) -> str:
    lines = [f"input i{j} address {j}" for j in range(n_members)]
    members = ", ".join(f"i{j}" for j in range(n_members))
    lines.append(f"pattern p = coincidence({members}) within {window_ms}ms")
    lines.append(f"emit nc/p when count(p) >= {k} in {horizon_ms}ms")
    return "\n".join(lines) + "\n"


def placement_fires(network, placement_ns: dict[int, int]) -> bool:
    """Reset ``network``, inject one spike per (address, time) and report whether any readout fired."""
    network.reset()
    events = sorted((SpikeEvent(a, t) for a, t in placement_ns.items()), key=lambda e: (e.timestamp, e.address))
    network.inject(events)
    return bool(network.advance(max(placement_ns.values(), default=0) + 10**9))


def survival_rate(p: float, k: int, trials: int, seed: int) -> float:
    """Refresh at 0, then k refresh messages each lost with probability p; probe at (k+1) intervals."""
    rng = np.random.default_rng(seed)
    interval = 100_000_000
    survived = 0
    for trial in range(trials):
        store = SoftStateStore(interval, k)
        store.refresh("x", trial, 0)
        for j in range(1, k + 1):
            if rng.random() >= p:
                store.refresh("x", trial, j * interval)
        survived += store.get("x", (k + 1) * interval) is not None
    return survived / trials


SCHEMA = GraphSchema(
    vertex_labels={"Node": {"name": "str", "rank": "int"}, "Event": {"time": "int"}, "Snap": {"clock": "int"}},
    edge_labels={"link": {"kind": "str"}, "other": {}, "snapshot": {}},
)


def node_graph(n: int) -> PropertyGraph:
    g = PropertyGraph(SCHEMA)
    for i in range(n):
        g.upsert_vertex(f"v{i}", "Node", {"name": f"n{i}", "rank": i})
    return g


def random_graph(rng: random.Random, n: int, m: int, max_w: int = 9):
    g = node_graph(n)
    edges = []
    for k in range(m):
        a, b = f"v{rng.randrange(n)}", f"v{rng.randrange(n)}"
        w = rng.randint(0, max_w)
        g.upsert_edge(f"e{k}", a, b, rng.choice(["link", "other"]), weight=w)
        edges.append((a, b, w))
    return g, edges
