"""Objective documents: parse, print, compile to a network + proxy mapping, validate outcomes.

Grammar (one statement per line, ``#`` starts a comment)::

    input <name> address <uint>
    pattern <name> = coincidence(<name>, ...) within <real>ms
    emit <topic> when count(<pattern>) >= <uint> in <real>ms
    validate dataset <path> expect success >= <real> confidence <real>
"""

from __future__ import annotations

import logging
import math
import re
import statistics
from dataclasses import dataclass
from statistics import NormalDist
from typing import Any, Iterable, Sequence

from .pubsub import PublishError, validate_topic
from .snn import U32_MAX, Neuron, SnnConfig, Synapse, ms_to_ns

_REAL = r"-?\d+(?:\.\d*)?(?:[eE][-+]?\d+)?"
_NAME = r"[A-Za-z_][A-Za-z0-9_]*"
_STATEMENTS = {
    "input": re.compile(rf"input\s+(?P<name>{_NAME})\s+address\s+(?P<address>\d+)$"),
    "pattern": re.compile(
        rf"pattern\s+(?P<name>{_NAME})\s*=\s*(?P<kind>{_NAME})\s*\((?P<members>[^)]*)\)"
        rf"\s*within\s+(?P<window>{_REAL})\s*ms$"
    ),
    "emit": re.compile(
        rf"emit\s+(?P<topic>\S+)\s+when\s+count\s*\(\s*(?P<pattern>{_NAME})\s*\)\s*>=\s*"
        rf"(?P<k>\d+)\s+in\s+(?P<horizon>{_REAL})\s*ms$"
    ),
    "validate": re.compile(
        rf"validate\s+dataset\s+(?P<path>\S+)\s+expect\s+success\s*>=\s*(?P<p_min>{_REAL})"
        rf"\s+confidence\s+(?P<confidence>{_REAL})$"
    ),
}

logger = logging.getLogger(__name__)

READOUT_DELAY_MS = 1.0


class ObjectiveError(ValueError):
    def __init__(self, message: str, line: int | None = None, column: int | None = None) -> None:
        where = f"line {line}, column {column}: " if line is not None else ""
        super().__init__(where + message)
        self.line = line
        self.column = column


class CompileError(ValueError):
    pass


@dataclass(frozen=True)
class InputDecl:
    name: str
    address: int


@dataclass(frozen=True)
class PatternDecl:
    name: str
    members: tuple[str, ...]
    window_ms: float
    kind: str = "coincidence"


@dataclass(frozen=True)
class EmitRule:
    topic: str
    pattern: str
    min_count: int
    horizon_ms: float


@dataclass(frozen=True)
class ValidationSpec:
    dataset: str
    p_min: float
    confidence: float


@dataclass(frozen=True)
class ObjectiveDoc:
    inputs: tuple[InputDecl, ...] = ()
    patterns: tuple[PatternDecl, ...] = ()
    rules: tuple[EmitRule, ...] = ()
    validation: ValidationSpec | None = None

    def input(self, name: str) -> InputDecl:
        return next(i for i in self.inputs if i.name == name)

    def pattern(self, name: str) -> PatternDecl:
        return next(p for p in self.patterns if p.name == name)


def _strip_comment(line: str) -> str:
    # '#' inside a topic like a/#/b is not a comment, so only split on ' #' or leading '#'
    if line.lstrip().startswith("#"):
        return ""
    m = re.search(r"\s#", line)
    return line[: m.start()] if m else line


def parse(text: str) -> ObjectiveDoc:
    inputs: list[InputDecl] = []
    patterns: list[PatternDecl] = []
    rules: list[EmitRule] = []
    validation: ValidationSpec | None = None
    names: dict[str, int] = {}

    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = _strip_comment(raw).rstrip()
        body = line.lstrip()
        if not body:
            continue
        indent = len(line) - len(body)
        keyword = body.split(None, 1)[0]
        regex = _STATEMENTS.get(keyword)
        if regex is None:
            raise ObjectiveError(f"unknown statement {keyword!r}", lineno, indent + 1)
        m = regex.match(body)
        if m is None:
            raise ObjectiveError(f"malformed {keyword} statement", lineno, indent + 1)

        def col(group: str) -> int:
            return indent + m.start(group) + 1

        def claim(name: str) -> None:
            if name in names:
                raise ObjectiveError(
                    f"duplicate name {name!r} (first declared on line {names[name]})", lineno, col("name")
                )
            names[name] = lineno

        if keyword == "input":
            address = int(m["address"])
            if address > U32_MAX:
                raise ObjectiveError("address exceeds 32 bits", lineno, col("address"))
            if any(i.address == address for i in inputs):
                raise ObjectiveError(f"address {address} already bound", lineno, col("address"))
            claim(m["name"])
            inputs.append(InputDecl(m["name"], address))
        elif keyword == "pattern":
            if m["kind"] != "coincidence":
                raise ObjectiveError(f"unsupported pattern kind {m['kind']!r}", lineno, col("kind"))
            members = tuple(s.strip() for s in m["members"].split(",") if s.strip())
            declared = {i.name for i in inputs}
            for member in members:
                if not re.fullmatch(_NAME, member):
                    raise ObjectiveError(f"bad member name {member!r}", lineno, col("members"))
                if member not in declared:
                    raise ObjectiveError(f"unknown input {member!r}", lineno, col("members"))
            if len(set(members)) != len(members):
                raise ObjectiveError("pattern lists an input twice", lineno, col("members"))
            window = float(m["window"])
            if not window > 0:
                raise ObjectiveError("window must be > 0 ms", lineno, col("window"))
            claim(m["name"])
            patterns.append(PatternDecl(m["name"], members, window))
        elif keyword == "emit":
            try:
                validate_topic(m["topic"])
            except PublishError as exc:
                raise ObjectiveError(str(exc), lineno, col("topic")) from None
            if m["pattern"] not in {p.name for p in patterns}:
                raise ObjectiveError(f"unknown pattern {m['pattern']!r}", lineno, col("pattern"))
            k = int(m["k"])
            if k < 1:
                raise ObjectiveError("count threshold must be >= 1", lineno, col("k"))
            horizon = float(m["horizon"])
            if not horizon > 0:
                raise ObjectiveError("horizon must be > 0 ms", lineno, col("horizon"))
            rules.append(EmitRule(m["topic"], m["pattern"], k, horizon))
        else:
            if validation is not None:
                raise ObjectiveError("only one validate statement is allowed", lineno, indent + 1)
            p_min, confidence = float(m["p_min"]), float(m["confidence"])
            if not 0 <= p_min <= 1:
                raise ObjectiveError("expected success must lie in [0, 1]", lineno, col("p_min"))
            if not 0 < confidence < 1:
                raise ObjectiveError("confidence must lie in (0, 1)", lineno, col("confidence"))
            validation = ValidationSpec(m["path"], p_min, confidence)
    return ObjectiveDoc(tuple(inputs), tuple(patterns), tuple(rules), validation)


def dumps(doc: ObjectiveDoc) -> str:
    lines = [f"input {i.name} address {i.address}" for i in doc.inputs]
    lines += [
        f"pattern {p.name} = {p.kind}({', '.join(p.members)}) within {p.window_ms!r}ms" for p in doc.patterns
    ]
    lines += [
        f"emit {r.topic} when count({r.pattern}) >= {r.min_count} in {r.horizon_ms!r}ms" for r in doc.rules
    ]
    if doc.validation is not None:
        v = doc.validation
        lines.append(f"validate dataset {v.dataset} expect success >= {v.p_min!r} confidence {v.confidence!r}")
    return "\n".join(lines) + ("\n" if lines else "")


# -- compilation ---------------------------------------------------------------

@dataclass(frozen=True)
class MappingRule:
    readout: int
    topic: str
    min_count: int
    horizon_ns: int
    snapshot: bool = True
    pattern: str = ""


@dataclass(frozen=True)
class ProxyMapping:
    """Binds readout neurons to notification rules and names the graph labels used for results."""

    rules: tuple[MappingRule, ...] = ()
    event_label: str = "Event"
    snapshot_label: str = "Snapshot"
    readout_label: str = "Readout"
    snapshot_edge: str = "snapshot"
    source_edge: str = "source"

    def __post_init__(self) -> None:
        readouts = [r.readout for r in self.rules]
        if len(set(readouts)) != len(readouts):
            raise CompileError("two rules bind the same readout")
        for r in self.rules:
            if r.min_count < 1 or r.horizon_ns <= 0:
                raise CompileError(f"rule for readout {r.readout} needs k >= 1 and H > 0")

    def rule_for(self, readout: int) -> MappingRule | None:
        for r in self.rules:
            if r.readout == readout:
                return r
        return None


@dataclass(frozen=True)
class CoincidenceParams:
    tau_ms: float
    spread_sum: float
    threshold: float


def coincidence_params(members: int, window_ms: float) -> CoincidenceParams:
    """Threshold halfway between P-1 simultaneous deposits and P deposits spread evenly over W."""
    if members < 1:
        raise CompileError("coincidence pattern needs at least one member")
    tau = 4.0 * window_ms
    if members == 1:
        spread = 1.0
    else:
        spread = math.fsum(math.exp(-i * window_ms / ((members - 1) * tau)) for i in range(members))
    return CoincidenceParams(tau, spread, (members - 1 + spread) / 2.0)


MAX_SOUND_MEMBERS = 4


def compile_doc(doc: ObjectiveDoc) -> tuple[SnnConfig, ProxyMapping]:
    addresses = {i.name: i.address for i in doc.inputs}
    next_id = max(addresses.values(), default=-1) + 1
    neurons, synapses, readouts = [], [], {}
    for offset, pattern in enumerate(doc.patterns):
        if not pattern.members:
            raise CompileError(f"pattern {pattern.name!r} has no members")
        nid = next_id + offset
        if nid > U32_MAX:
            raise CompileError("readout address space exhausted")
        params = coincidence_params(len(pattern.members), pattern.window_ms)
        if len(pattern.members) > MAX_SOUND_MEMBERS:
            # front-loaded placements (P-1 spikes early, one at W) then fall below threshold
            logger.warning(
                "pattern %r has %d members; detection of every placement within %gms is only guaranteed up to %d",
                pattern.name, len(pattern.members), pattern.window_ms, MAX_SOUND_MEMBERS,
            )
        neurons.append(Neuron(nid, params.threshold, params.tau_ms, 0.0, pattern.window_ms))
        synapses += [Synapse(addresses[m], nid, 1.0, READOUT_DELAY_MS) for m in pattern.members]
        readouts[pattern.name] = nid
    rules = []
    for rule in doc.rules:
        if rule.pattern not in readouts:
            raise CompileError(f"rule {rule.topic!r} references unknown pattern {rule.pattern!r}")
        rules.append(
            MappingRule(readouts[rule.pattern], rule.topic, rule.min_count, ms_to_ns(rule.horizon_ms), True, rule.pattern)
        )
    config = SnnConfig(
        neurons=tuple(neurons),
        synapses=tuple(synapses),
        input_addresses=frozenset(addresses.values()),
        readout_ids=frozenset(readouts.values()),
    )
    config.validate()
    return config, ProxyMapping(tuple(rules))


# -- validation procedure --------------------------------------------------------

@dataclass(frozen=True)
class ValidationReport:
    trials: int
    successes: int
    success_rate: float
    std_dev: float
    confidence: float
    interval: tuple[float, float]
    p_min: float
    verdict: str

    @property
    def passed(self) -> bool:
        return self.verdict == "pass"

    def to_dict(self) -> dict[str, Any]:
        return {
            "trials": self.trials,
            "successes": self.successes,
            "success_rate": self.success_rate,
            "std_dev": self.std_dev,
            "confidence": self.confidence,
            "interval": list(self.interval),
            "p_min": self.p_min,
            "verdict": self.verdict,
        }


def wilson_interval(successes: int, trials: int, confidence: float) -> tuple[float, float]:
    z = NormalDist().inv_cdf(1.0 - (1.0 - confidence) / 2.0)
    p = successes / trials
    z2n = z * z / trials
    centre = (p + z2n / 2.0) / (1.0 + z2n)
    half = z / (1.0 + z2n) * math.sqrt(p * (1.0 - p) / trials + z * z / (4.0 * trials * trials))
    lo, hi = max(0.0, centre - half), min(1.0, centre + half)
    return min(lo, p), max(hi, p)


def validate(
    doc: ObjectiveDoc,
    trial_outcomes: Sequence[bool] | Iterable[bool],
    *,
    p_min: float | None = None,
    confidence: float | None = None,
) -> ValidationReport:
    outcomes = [bool(o) for o in trial_outcomes]
    if not outcomes:
        raise ValueError("validation needs at least one trial")
    spec = doc.validation
    if p_min is None or confidence is None:
        if spec is None:
            raise ValueError("document has no validate statement; pass p_min and confidence")
        p_min = spec.p_min if p_min is None else p_min
        confidence = spec.confidence if confidence is None else confidence
    n, k = len(outcomes), sum(outcomes)
    std = statistics.stdev([float(o) for o in outcomes]) if n > 1 else 0.0
    lo, hi = wilson_interval(k, n, confidence)
    return ValidationReport(n, k, k / n, std, confidence, (lo, hi), p_min, "pass" if lo >= p_min else "fail")

