from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from neuroproxy.snn import (
    CausalityError,
    ConfigError,
    Neuron,
    RejectedEventError,
    SnnConfig,
    SpikeEvent,
    Synapse,
    build_network,
    ms_to_ns,
)
from oracles import clock_driven_reference, random_network

MS = 1_000_000


def one_neuron(weight: float = 1.0, threshold: float = 1.0, tau: float = 10.0, refractory: float = 0.0):
    return SnnConfig(
        neurons=(Neuron(1, threshold, tau, 0.0, refractory),),
        synapses=(Synapse(0, 1, weight, 1.0),),
        input_addresses=frozenset({0}),
        readout_ids=frozenset({1}),
    )


def test_ms_to_ns_is_exact():
    assert ms_to_ns(1) == MS
    assert ms_to_ns(0.1) == 100_000
    assert ms_to_ns(2.345) == 2_345_000
    assert ms_to_ns(0.0000015) == 2  # rounds to nearest ns


def test_empty_network_is_silent():
    net = build_network(SnnConfig())
    assert net.clock == 0
    assert net.advance(10**12) == []
    assert net.snapshot_structural() == SnnConfig()


@pytest.mark.parametrize(
    "config, kind",
    [
        (SnnConfig((Neuron(1, 1, 1), Neuron(1, 1, 1))), "duplicate-id"),
        (SnnConfig((Neuron(1, 1, 1),), (Synapse(1, 99, 1, 1),)), "dangling-endpoint"),
        (SnnConfig((Neuron(1, 1, 1),), (Synapse(5, 1, 1, 1),)), "dangling-endpoint"),
        (SnnConfig((Neuron(1, 1, 0),)), "nonpositive-tau"),
        (SnnConfig((Neuron(1, 1, 1),), (Synapse(1, 1, 1, 0),)), "nonpositive-delay"),
        (SnnConfig((Neuron(1, 1, 1, 0, -1),)), "negative-refractory"),
        (SnnConfig((Neuron(1, 1, 1),), readout_ids=frozenset({2})), "dangling-endpoint"),
        (SnnConfig((Neuron(1, 1, 1),), input_addresses=frozenset({1})), "duplicate-id"),
        (SnnConfig((Neuron(2**32, 1, 1),)), "address-range"),
        (SnnConfig((Neuron(1, float("nan"), 1),)), "nonfinite-parameter"),
    ],
)
def test_config_rejections_name_the_element(config, kind):
    with pytest.raises(ConfigError) as info:
        build_network(config)
    assert info.value.kind == kind
    assert info.value.element


def test_inject_schedules_one_delivery_per_synapse():
    net = build_network(one_neuron())
    net.inject([])
    assert net.next_delivery_time() is None
    net.inject([SpikeEvent(0, 0)])
    assert net.next_delivery_time() == MS
    assert [d.time for d in net.snapshot_transient().pending] == [MS]


def test_inject_errors():
    net = build_network(one_neuron())
    with pytest.raises(RejectedEventError):
        net.inject([SpikeEvent(7, 0)])
    net.advance(5 * MS)
    with pytest.raises(CausalityError):
        net.inject([SpikeEvent(0, MS)])
    with pytest.raises(CausalityError):
        net.inject([SpikeEvent(0, 9 * MS), SpikeEvent(0, 8 * MS)])
    # a rejected batch leaves nothing behind
    assert net.next_delivery_time() is None
    with pytest.raises(CausalityError):
        net.advance(MS)


def test_suprathreshold_deposit_fires_exactly_after_delay():
    net = build_network(one_neuron())
    net.inject([SpikeEvent(0, 0)])
    assert net.advance(10 * MS) == [SpikeEvent(1, MS)]


def test_subthreshold_deposit_stays_silent_and_is_visible():
    net = build_network(one_neuron(weight=0.5))
    net.inject([SpikeEvent(0, 0)])
    assert net.advance(MS) == []
    assert net.snapshot_transient().neurons[1].potential == pytest.approx(0.5)


def test_two_leaky_deposits_cross_threshold():
    config = SnnConfig(
        neurons=(Neuron(1, 1.0, 10.0),),
        synapses=(Synapse(0, 1, 0.6, 1.0),),
        input_addresses=frozenset({0}),
        readout_ids=frozenset({1}),
    )
    # deposits land at 1 ms and 2 ms; the second sees 0.6*e^-0.1 + 0.6
    assert 0.6 * math.exp(-0.1) + 0.6 == pytest.approx(1.1429, abs=1e-4)
    net = build_network(config)
    net.inject([SpikeEvent(0, 0), SpikeEvent(0, MS)])
    assert net.advance(10 * MS) == [SpikeEvent(1, 2 * MS)]
    assert net.snapshot_transient().neurons[1].potential == 0.0
    ref = clock_driven_reference(config, [SpikeEvent(0, 0), SpikeEvent(0, MS)], 10 * MS)
    assert ref == [SpikeEvent(1, 2 * MS)]


def test_equality_at_threshold_fires():
    net = build_network(one_neuron(weight=0.75, threshold=0.75))
    net.inject([SpikeEvent(0, 0)])
    assert len(net.advance(2 * MS)) == 1


def test_refractory_window_drops_deliveries():
    net = build_network(one_neuron(refractory=2.0))
    net.inject([SpikeEvent(0, 0), SpikeEvent(0, MS), SpikeEvent(0, 2 * MS)])
    # spike at 1 ms, the 2 ms delivery is dropped, the 3 ms one lands at refractory end
    assert net.advance(10 * MS) == [SpikeEvent(1, MS), SpikeEvent(1, 3 * MS)]


def test_simultaneous_deliveries_follow_destination_then_source_order():
    config = SnnConfig(
        neurons=(Neuron(5, 1.0, 10.0), Neuron(3, 1.0, 10.0)),
        synapses=(Synapse(1, 5, 1.0, 1.0), Synapse(0, 3, 1.0, 1.0)),
        input_addresses=frozenset({0, 1}),
        readout_ids=frozenset({3, 5}),
    )
    net = build_network(config)
    net.inject([SpikeEvent(0, 0), SpikeEvent(1, 0)])
    assert net.advance(MS) == [SpikeEvent(3, MS), SpikeEvent(5, MS)]


def test_snapshot_does_not_perturb_dynamics():
    config, events = random_network(np.random.default_rng(7))
    a = build_network(config)
    b = build_network(config)
    a.inject(events)
    b.inject(events)
    out_a = []
    for t in range(0, 40 * MS, MS):
        out_a += a.advance(t)
        a.snapshot_transient()
    out_a += a.advance(40 * MS)
    assert out_a == b.advance(40 * MS)


def test_snapshot_transient_materializes_decay():
    net = build_network(one_neuron(weight=0.5))
    net.inject([SpikeEvent(0, 0)])
    net.advance(11 * MS)
    snap = net.snapshot_transient()
    assert snap.clock == 11 * MS
    state = snap.neurons[1]
    assert state.last_update == snap.clock
    assert state.potential == pytest.approx(0.5 * math.exp(-1.0))


def test_reset_restores_fresh_state():
    config, events = random_network(np.random.default_rng(3))
    net = build_network(config)
    net.inject(events)
    first = net.advance(50 * MS)
    net.reset()
    assert net.clock == 0 and net.next_delivery_time() is None
    net.inject(events)
    assert net.advance(50 * MS) == first


def test_structural_snapshot_rebuilds_identically():
    config, events = random_network(np.random.default_rng(11))
    net = build_network(config)
    twin = build_network(net.snapshot_structural())
    net.inject(events)
    twin.inject(events)
    assert net.advance(60 * MS) == twin.advance(60 * MS)


@pytest.mark.parametrize("seed", range(25))
def test_matches_clock_driven_reference(seed):
    config, events = random_network(np.random.default_rng(1000 + seed))
    until = 50 * MS
    net = build_network(config)
    net.inject(events)
    got = net.advance(until)
    want = clock_driven_reference(config, events, until)
    assert len(got) == len(want)
    for g, w in zip(got, want):
        assert g.address == w.address
        assert abs(g.timestamp - w.timestamp) <= 1_000


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), cuts=st.lists(st.integers(0, 60 * MS), max_size=6))
def test_split_advance_equals_single_advance(seed, cuts):
    config, events = random_network(np.random.default_rng(seed))
    whole = build_network(config)
    whole.inject(events)
    expected = whole.advance(60 * MS)
    split = build_network(config)
    split.inject(events)
    got = []
    for t in sorted(cuts):
        got += split.advance(t)
    got += split.advance(60 * MS)
    assert got == expected


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 2**32 - 1))
def test_causality_and_refractoriness(seed):
    config, events = random_network(np.random.default_rng(seed))
    net = build_network(config)
    net.inject(events)
    spikes = net.advance(60 * MS)
    assert spikes == sorted(spikes, key=lambda e: e.timestamp)
    if spikes:
        min_delay = min(ms_to_ns(s.delay) for s in config.synapses)
        assert events and spikes[0].timestamp >= events[0].timestamp + min_delay
    refractory = {n.id: ms_to_ns(n.refractory) for n in config.neurons}
    last: dict[int, int] = {}
    for s in spikes:
        if s.address in last:
            assert s.timestamp - last[s.address] >= refractory[s.address]
        last[s.address] = s.timestamp


@settings(max_examples=60, deadline=None)
@given(seed=st.integers(0, 2**32 - 1))
def test_config_json_round_trip(seed):
    config, _ = random_network(np.random.default_rng(seed))
    text = config.to_json()
    assert SnnConfig.from_json(text) == config
    assert SnnConfig.from_json(text).to_json() == text


def test_from_json_rejects_malformed_documents():
    with pytest.raises(ConfigError) as info:
        SnnConfig.from_json("{not json")
    assert info.value.kind == "malformed-document"
    with pytest.raises(ConfigError):
        SnnConfig.from_json('{"neurons": [{"id": 1}]}')
