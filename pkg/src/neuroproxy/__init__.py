"""Microservice-style integration layer for a simulated neuromorphic device."""

from .aer import AerPacket, decode_packet, encode_packet, merge_streams
from .codecs import (
    CodecParams,
    CodingScheme,
    capacity_states,
    decode,
    encode,
    equivalent_bits,
    lebesgue_encode,
)
from .declarative import ObjectiveDoc, ValidationReport, compile_doc, parse, validate
from .graphstore import GraphQuery, GraphSchema, PropertyGraph, parse_query
from .harness import ScenarioConfig, run_scenario
from .nsp import NeuromorphicSystemProxy, SimulatedDevice
from .pubsub import Broker, Notification
from .snn import NetworkInstance, SnnConfig, SpikeEvent, build_network
from .softstate import SoftStateStore

__version__ = "0.1.0"

__all__ = [
    "AerPacket",
    "Broker",
    "CodecParams",
    "CodingScheme",
    "GraphQuery",
    "GraphSchema",
    "NetworkInstance",
    "NeuromorphicSystemProxy",
    "Notification",
    "ObjectiveDoc",
    "PropertyGraph",
    "ScenarioConfig",
    "SimulatedDevice",
    "SnnConfig",
    "SoftStateStore",
    "SpikeEvent",
    "ValidationReport",
    "build_network",
    "capacity_states",
    "compile_doc",
    "decode",
    "decode_packet",
    "encode",
    "encode_packet",
    "equivalent_bits",
    "lebesgue_encode",
    "merge_streams",
    "parse",
    "parse_query",
    "run_scenario",
    "validate",
]
