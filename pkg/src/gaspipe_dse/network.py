"""Pipeline network topology, physical parameters and the network file format.

A network file is line oriented, whitespace separated, with ``#`` comments::

    [params]
    c_m_per_s 340
    friction_factor 0.015

    [nodes]
    # id kind pressure_bar (sources only)
    1 source 27.8
    2 sink

    [pipelines]
    # from to length_km diameter_m
    1 2 5 0.6

Pipelines are numbered in file order (1-based) and must be oriented from the
smaller node id to the bigger one.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from importlib import resources

BAR = 1e5  # Pa

SOURCE = "source"
SINK = "sink"


class NetworkFormatError(ValueError):
    """Syntax error in a network file."""

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class NetworkValidationError(ValueError):
    """A parsed network violates a structural invariant."""


@dataclass(frozen=True)
class Node:
    id: int
    kind: str
    pressure_bar: float | None = None

    @property
    def is_source(self) -> bool:
        return self.kind == SOURCE

    @property
    def load_profile_ref(self) -> str | None:
        return None if self.is_source else f"node{self.id}"


@dataclass(frozen=True)
class Pipeline:
    from_node: int
    to_node: int
    length_km: float
    diameter: float  # m

    @property
    def length(self) -> float:
        return self.length_km * 1e3

    @property
    def area(self) -> float:
        return math.pi * self.diameter**2 / 4.0


@dataclass(frozen=True)
class GasNetwork:
    """Validated network; construct through :func:`parse_network` or :meth:`create`."""

    nodes: tuple[Node, ...]
    pipelines: tuple[Pipeline, ...]
    sound_speed: float = 340.0
    friction_factor: float = 0.015
    _by_id: dict = field(default=None, init=False, repr=False, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "_by_id", {n.id: n for n in self.nodes})

    @classmethod
    def create(cls, nodes, pipelines, sound_speed=340.0, friction_factor=0.015) -> GasNetwork:
        nodes = tuple(sorted(nodes, key=lambda n: n.id))
        net = cls(tuple(nodes), tuple(pipelines), float(sound_speed), float(friction_factor))
        net.validate()
        return net

    @property
    def n_nodes(self) -> int:
        return len(self.nodes)

    @property
    def n_pipelines(self) -> int:
        return len(self.pipelines)

    @property
    def sources(self) -> list[Node]:
        return [n for n in self.nodes if n.is_source]

    @property
    def sinks(self) -> list[Node]:
        return [n for n in self.nodes if not n.is_source]

    @property
    def n_source(self) -> int:
        return len(self.sources)

    @property
    def n_sink(self) -> int:
        return len(self.sinks)

    @property
    def c2(self) -> float:
        return self.sound_speed**2

    def node(self, node_id: int) -> Node:
        return self._by_id[node_id]

    def source_density(self, node_id: int) -> float:
        """Density (kg/m³) held at a source node, from p = c² ρ."""
        node = self.node(node_id)
        if not node.is_source:
            raise KeyError(f"node {node_id} is not a source")
        return node.pressure_bar * BAR / self.c2

    def incident(self, node_id: int) -> list[tuple[int, str]]:
        """(pipeline index, end) pairs touching ``node_id``; end is 'from' or 'to'."""
        out = []
        for k, p in enumerate(self.pipelines):
            if p.from_node == node_id:
                out.append((k, "from"))
            if p.to_node == node_id:
                out.append((k, "to"))
        return out

    def validate(self) -> None:
        ids = [n.id for n in self.nodes]
        if len(set(ids)) != len(ids):
            dup = sorted({i for i in ids if ids.count(i) > 1})
            raise NetworkValidationError(f"duplicate node id(s): {dup}")
        if sorted(ids) != list(range(1, len(ids) + 1)):
            raise NetworkValidationError(f"node ids must be 1..{len(ids)}, got {sorted(ids)}")
        for n in self.nodes:
            if n.kind not in (SOURCE, SINK):
                raise NetworkValidationError(f"node {n.id}: unknown kind {n.kind!r}")
            if n.is_source:
                if n.pressure_bar is None or not n.pressure_bar > 0:
                    raise NetworkValidationError(f"source node {n.id}: pressure must be > 0")
            elif n.pressure_bar is not None:
                raise NetworkValidationError(f"sink node {n.id}: pressure only allowed on sources")
        if not any(n.is_source for n in self.nodes):
            raise NetworkValidationError("network has no source node")
        if not self.sound_speed > 0:
            raise NetworkValidationError("sound speed must be > 0")
        if not self.friction_factor > 0:
            raise NetworkValidationError("friction factor must be > 0")
        for k, p in enumerate(self.pipelines, start=1):
            if p.from_node not in self._by_id or p.to_node not in self._by_id:
                raise NetworkValidationError(f"pipeline {k} ({p.from_node},{p.to_node}): unknown node")
            if p.from_node >= p.to_node:
                raise NetworkValidationError(
                    f"pipeline {k} ({p.from_node},{p.to_node}): orientation requires from < to"
                )
            if not (p.length > 0 and p.diameter > 0):
                raise NetworkValidationError(
                    f"pipeline {k} ({p.from_node},{p.to_node}): length and diameter must be > 0"
                )
        self._check_connected()

    def _check_connected(self) -> None:
        adj: dict[int, set[int]] = {n.id: set() for n in self.nodes}
        for p in self.pipelines:
            adj[p.from_node].add(p.to_node)
            adj[p.to_node].add(p.from_node)
        seen = {self.nodes[0].id}
        stack = [self.nodes[0].id]
        while stack:
            for nb in adj[stack.pop()]:
                if nb not in seen:
                    seen.add(nb)
                    stack.append(nb)
        if len(seen) != len(self.nodes):
            missing = sorted(set(adj) - seen)
            raise NetworkValidationError(f"network is disconnected; unreachable nodes {missing}")


def _num(tok: str, line: int) -> float:
    try:
        return float(tok)
    except ValueError:
        raise NetworkFormatError(f"expected a number, got {tok!r}", line) from None


def _int(tok: str, line: int) -> int:
    try:
        return int(tok)
    except ValueError:
        raise NetworkFormatError(f"expected an integer, got {tok!r}", line) from None


def parse_network(text: str) -> GasNetwork:
    params = {"c_m_per_s": 340.0, "friction_factor": 0.015}
    nodes: list[Node] = []
    pipes: list[Pipeline] = []
    section = None
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith("["):
            if not line.endswith("]"):
                raise NetworkFormatError(f"malformed section header {line!r}", lineno)
            section = line[1:-1].strip().lower()
            if section not in ("params", "nodes", "pipelines"):
                raise NetworkFormatError(f"unknown section [{section}]", lineno)
            continue
        tok = line.split()
        if section is None:
            raise NetworkFormatError("data outside of any section", lineno)
        if section == "params":
            if len(tok) != 2:
                raise NetworkFormatError("expected 'key value'", lineno)
            if tok[0] not in params:
                raise NetworkFormatError(f"unknown parameter {tok[0]!r}", lineno)
            params[tok[0]] = _num(tok[1], lineno)
        elif section == "nodes":
            if len(tok) not in (2, 3):
                raise NetworkFormatError("expected 'id kind [pressure_bar]'", lineno)
            kind = tok[1].lower()
            if kind not in (SOURCE, SINK):
                raise NetworkFormatError(f"node kind must be source or sink, got {tok[1]!r}", lineno)
            if kind == SOURCE and len(tok) != 3:
                raise NetworkFormatError("source node needs a pressure in bar", lineno)
            if kind == SINK and len(tok) != 2:
                raise NetworkFormatError("sink node takes no pressure", lineno)
            pressure = _num(tok[2], lineno) if len(tok) == 3 else None
            nodes.append(Node(_int(tok[0], lineno), kind, pressure))
        else:
            if len(tok) != 4:
                raise NetworkFormatError("expected 'from to length_km diameter_m'", lineno)
            pipes.append(
                Pipeline(
                    _int(tok[0], lineno),
                    _int(tok[1], lineno),
                    _num(tok[2], lineno),
                    _num(tok[3], lineno),
                )
            )
    return GasNetwork.create(nodes, pipes, params["c_m_per_s"], params["friction_factor"])


def serialize_network(net: GasNetwork) -> str:
    lines = [
        "[params]",
        f"c_m_per_s {net.sound_speed!r}",
        f"friction_factor {net.friction_factor!r}",
        "",
        "[nodes]",
    ]
    for n in net.nodes:
        lines.append(f"{n.id} {n.kind} {n.pressure_bar!r}" if n.is_source else f"{n.id} {n.kind}")
    lines += ["", "[pipelines]"]
    for p in net.pipelines:
        lines.append(f"{p.from_node} {p.to_node} {p.length_km!r} {p.diameter!r}")
    return "\n".join(lines) + "\n"


def load_network(path) -> GasNetwork:
    with open(path) as fh:
        return parse_network(fh.read())


def builtin_benchmark() -> GasNetwork:
    """The 30-node, 29-pipeline test system with sources at nodes 1 and 2."""
    text = resources.files("gaspipe_dse.data").joinpath("benchmark30.net").read_text()
    return parse_network(text)
