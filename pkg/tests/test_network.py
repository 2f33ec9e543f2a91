import math

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gaspipe_dse.network import (
    GasNetwork,
    NetworkFormatError,
    NetworkValidationError,
    Node,
    Pipeline,
    builtin_benchmark,
    parse_network,
    serialize_network,
)

MINIMAL = """
[nodes]
1 source 27.8
2 sink
[pipelines]
1 2 5 0.6
"""

# (from, to, length_km, diameter_m) as tabulated for the benchmark
TABLE = [
    (1, 3, 5, 0.6), (3, 4, 3, 0.6), (4, 5, 4, 0.5), (5, 6, 6, 0.5), (6, 7, 7, 0.5),
    (2, 7, 2, 0.5), (3, 8, 3, 0.4), (8, 9, 5, 0.2), (8, 10, 7, 0.2), (9, 11, 5, 0.4),
    (4, 12, 4, 0.4), (12, 13, 8, 0.4), (13, 14, 10, 0.4), (14, 15, 9, 0.2),
    (15, 16, 10, 0.2), (14, 17, 4, 0.2), (5, 18, 10, 0.4), (18, 20, 3, 0.2),
    (20, 21, 7, 0.2), (18, 19, 2, 0.2), (6, 22, 10, 0.4), (22, 23, 6, 0.2),
    (23, 24, 7, 0.2), (23, 25, 4, 0.2), (25, 26, 9, 0.2), (26, 27, 4, 0.2),
    (7, 28, 2, 0.2), (28, 29, 7, 0.2), (28, 30, 5, 0.2),
]


def test_minimal_network():
    net = parse_network(MINIMAL)
    assert (net.n_nodes, net.n_pipelines) == (2, 1)
    assert net.node(1).is_source and not net.node(2).is_source
    assert net.pipelines[0].length == 5000.0


def test_benchmark_topology(bench):
    assert (bench.n_nodes, bench.n_pipelines) == (30, 29)
    assert bench.n_source == 2 and bench.n_sink == 28
    assert [n.id for n in bench.sources] == [1, 2]
    assert bench.node(1).pressure_bar == 27.8 and bench.node(2).pressure_bar == 28.5
    assert {p.diameter for p in bench.pipelines} <= {0.2, 0.4, 0.5, 0.6}
    pipes = {(p.from_node, p.to_node): p for p in bench.pipelines}
    assert pipes[(1, 3)].length_km == 5 and pipes[(1, 3)].diameter == 0.6
    assert pipes[(28, 30)].length_km == 5 and pipes[(28, 30)].diameter == 0.2


def test_benchmark_matches_table(bench):
    got = [(p.from_node, p.to_node, p.length_km, p.diameter) for p in bench.pipelines]
    assert sorted(got) == sorted(TABLE)


def test_sound_speed_and_friction(bench):
    assert bench.sound_speed == 340.0
    assert bench.c2 == 340.0**2
    assert bench.friction_factor == 0.015
    assert bench.source_density(1) == pytest.approx(27.8e5 / 340.0**2, rel=1e-15)


def test_round_trip(bench):
    assert parse_network(serialize_network(bench)) == bench


def test_area(bench):
    for p in bench.pipelines:
        assert p.area == pytest.approx(math.pi * p.diameter**2 / 4, rel=1e-12)


def test_every_sink_is_connected(bench):
    ends = {p.from_node for p in bench.pipelines} | {p.to_node for p in bench.pipelines}
    assert {n.id for n in bench.sinks} <= ends


def test_incident_orientation(bench):
    inc = bench.incident(7)
    ends = {(bench.pipelines[k].from_node, bench.pipelines[k].to_node, e) for k, e in inc}
    assert ends == {(6, 7, "to"), (2, 7, "to"), (7, 28, "from")}


@pytest.mark.parametrize(
    "text, match",
    [
        (MINIMAL.replace("1 2 5 0.6", "2 1 5 0.6"), "orientation"),
        (MINIMAL.replace("1 2 5 0.6", "1 2 -5 0.6"), "length"),
        (MINIMAL.replace("1 2 5 0.6", "1 2 5 0"), "diameter"),
        (MINIMAL.replace("1 source 27.8", "1 sink"), "no source"),
        (MINIMAL.replace("2 sink", "2 sink\n4 sink"), "1..3"),
        (MINIMAL.replace("2 sink", "2 sink\n3 sink"), "disconnected"),
        (MINIMAL.replace("1 2 5 0.6", "1 5 5 0.6"), "unknown node"),
        ("[params]\nfriction_factor 0\n" + MINIMAL, "friction"),
        (MINIMAL.replace("2 sink", "2 sink\n2 sink"), "duplicate"),
    ],
)
def test_validation_errors(text, match):
    with pytest.raises(NetworkValidationError, match=match):
        parse_network(text)


def test_reversed_benchmark_pipe_is_rejected(bench):
    bad = serialize_network(bench).replace("\n2 7 ", "\n7 2 ")
    with pytest.raises(NetworkValidationError, match="orientation"):
        parse_network(bad)


@pytest.mark.parametrize(
    "text, line",
    [
        ("[nodes]\n1 source\n", 2),
        ("[nodes]\n1 source x\n", 2),
        ("[nodes]\n1 source 3\n2 well\n", 3),
        ("1 source 3\n", 1),
        ("[bogus]\n", 1),
        ("[params]\nspeed 3\n", 2),
        ("[nodes]\n1 source 3\n[pipelines]\n1 2 5\n", 4),
    ],
)
def test_format_errors_carry_line(text, line):
    with pytest.raises(NetworkFormatError) as info:
        parse_network(text)
    assert info.value.line == line
    assert str(info.value).startswith(f"line {line}:")


@st.composite
def tree_networks(draw):
    n = draw(st.integers(2, 12))
    nodes = [Node(1, "source", draw(st.floats(1.0, 80.0)))]
    for i in range(2, n + 1):
        if draw(st.booleans()) and i == 2:
            nodes.append(Node(i, "source", draw(st.floats(1.0, 80.0))))
        else:
            nodes.append(Node(i, "sink"))
    pipes = [
        Pipeline(draw(st.integers(1, i - 1)), i, draw(st.floats(0.1, 50.0)),
                 draw(st.sampled_from([0.2, 0.4, 0.5, 0.6])))
        for i in range(2, n + 1)
    ]
    return GasNetwork.create(nodes, pipes, draw(st.floats(200.0, 450.0)),
                             draw(st.floats(1e-3, 0.05)))


@settings(max_examples=50, deadline=None)
@given(tree_networks())
def test_round_trip_property(net):
    assert parse_network(serialize_network(net)) == net
    assert net.n_source + net.n_sink == net.n_nodes


def test_builtin_is_immutable():
    net = builtin_benchmark()
    with pytest.raises(AttributeError):
        net.sound_speed = 1.0
