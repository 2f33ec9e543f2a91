"""Scenarios, ground-truth propagation and synthetic SCADA measurements.

Scenario file layout (``#`` comments, whitespace separated)::

    [time]
    # dt_s horizon_s seed
    900 86400 7

    [loads]
    # node t0_h v0 t1_h v1 ...   piecewise linear in hours, kg/s
    9 0 1.6 12 2.0 24 1.6
    3 0 0

    [noise]
    # pressure_sigma_bar flow_sigma_rel virtual_sigma_kg_s
    0.01 0.02 0.001

    [bad_data]
    # kind node t_h value      kind p (bar) or m (kg/s)
    p 30 5 12

    [bias]
    # kind nodes t_start_h t_end_h offset     nodes: all | 1,2,5
    p all 10 19.75 0.2

Measurement channels are ``2 * n_nodes`` long: node pressures in id order,
then nodal flows in id order. Internally pressures are carried as densities;
bar only appears at the file boundary.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from importlib import resources

import numpy as np

from .network import BAR, GasNetwork
from .transient import (
    StateIndex,
    TransientModel,
    assemble,
    nodal_balance_row,
    steady_state,
)

PRESSURE = "p"
FLOW = "m"


class ScenarioError(ValueError):
    def __init__(self, message: str, line: int | None = None):
        self.line = line
        super().__init__(f"line {line}: {message}" if line is not None else message)


@dataclass(frozen=True)
class NoiseConfig:
    pressure_sigma: float = 0.01  # bar
    flow_sigma_relative: float = 0.02
    virtual_sigma: float = 0.001  # kg/s

    def __post_init__(self):
        if not (self.pressure_sigma > 0 and self.flow_sigma_relative > 0 and self.virtual_sigma > 0):
            raise ScenarioError("all noise sigmas must be > 0")


@dataclass(frozen=True)
class BadDataEvent:
    kind: str
    node: int
    t_hours: float
    value: float  # bar or kg/s, replaces the measurement


@dataclass(frozen=True)
class BiasEvent:
    kind: str
    nodes: tuple[int, ...] | None  # None means every node
    t_start_hours: float
    t_end_hours: float
    offset: float  # bar or kg/s, added over the closed interval


@dataclass(frozen=True)
class Scenario:
    dt: float
    horizon: float
    load_profiles: dict  # node id -> ((t_hours...), (kg/s...))
    noise: NoiseConfig = field(default_factory=NoiseConfig)
    bad_data_events: tuple[BadDataEvent, ...] = ()
    bias_events: tuple[BiasEvent, ...] = ()
    rng_seed: int = 0

    def __post_init__(self):
        if not (self.dt > 0 and self.horizon > 0):
            raise ScenarioError("dt and horizon must be positive")
        steps = self.horizon / self.dt
        if abs(steps - round(steps)) > 1e-9 * max(steps, 1.0):
            raise ScenarioError(f"horizon {self.horizon} s is not a multiple of dt {self.dt} s")
        for nid, (ts, vs) in self.load_profiles.items():
            if len(ts) != len(vs) or not ts:
                raise ScenarioError(f"load profile of node {nid} needs matching (t, v) pairs")
            if any(b < a for a, b in zip(ts, ts[1:])):
                raise ScenarioError(f"load profile of node {nid}: times must be nondecreasing")

    @property
    def n_steps(self) -> int:
        return int(round(self.horizon / self.dt))

    @property
    def times(self) -> np.ndarray:
        """Grid times in seconds, t_0 = 0 .. t_T = horizon."""
        return np.arange(self.n_steps + 1) * self.dt

    def with_seed(self, seed: int) -> Scenario:
        return replace(self, rng_seed=int(seed))

    def load_at(self, t_seconds: float) -> dict[int, float]:
        h = t_seconds / 3600.0
        return {nid: float(np.interp(h, ts, vs)) for nid, (ts, vs) in self.load_profiles.items()}

    def is_junction(self, node_id: int) -> bool:
        ts, vs = self.load_profiles.get(node_id, ((0.0,), (0.0,)))
        return all(v == 0 for v in vs)

    def step_of(self, t_hours: float) -> int:
        """Grid step for a time in hours; raises if off-grid or outside 1..T."""
        k = t_hours * 3600.0 / self.dt
        kr = int(round(k))
        if abs(k - kr) > 1e-9 * max(abs(k), 1.0):
            raise ScenarioError(f"event time {t_hours} h is not on the {self.dt} s grid")
        if not 1 <= kr <= self.n_steps:
            raise ScenarioError(f"event time {t_hours} h outside the measured steps")
        return kr

    def check_against(self, net: GasNetwork) -> None:
        ids = {n.id for n in net.nodes}
        for n in net.sources:
            if n.id in self.load_profiles:
                raise ScenarioError(f"source node {n.id} cannot carry a load profile")
        for n in net.sinks:
            if n.id not in self.load_profiles:
                raise ScenarioError(f"sink node {n.id} has no load profile")
        for nid in self.load_profiles:
            if nid not in ids:
                raise ScenarioError(f"load profile for unknown node {nid}")
        for ev in self.bad_data_events:
            if ev.node not in ids:
                raise ScenarioError(f"bad-data event on unknown node {ev.node}")
            self.step_of(ev.t_hours)
        for ev in self.bias_events:
            for nid in ev.nodes or ():
                if nid not in ids:
                    raise ScenarioError(f"bias event on unknown node {nid}")
            if self.step_of(ev.t_start_hours) > self.step_of(ev.t_end_hours):
                raise ScenarioError("bias interval ends before it starts")


def _f(tok, line):
    try:
        return float(tok)
    except ValueError:
        raise ScenarioError(f"expected a number, got {tok!r}", line) from None


def _i(tok, line):
    try:
        return int(tok)
    except ValueError:
        raise ScenarioError(f"expected an integer, got {tok!r}", line) from None


def _kind(tok, line):
    if tok not in (PRESSURE, FLOW):
        raise ScenarioError(f"channel kind must be 'p' or 'm', got {tok!r}", line)
    return tok


def parse_scenario(text: str) -> Scenario:
    time = None
    noise = None
    loads: dict[int, tuple] = {}
    bad: list[BadDataEvent] = []
    bias: list[BiasEvent] = []
    section = None
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith("["):
            if not line.endswith("]"):
                raise ScenarioError(f"malformed section header {line!r}", lineno)
            section = line[1:-1].strip().lower()
            if section not in ("time", "loads", "noise", "bad_data", "bias"):
                raise ScenarioError(f"unknown section [{section}]", lineno)
            continue
        tok = line.split()
        if section is None:
            raise ScenarioError("data outside of any section", lineno)
        if section == "time":
            if len(tok) != 3:
                raise ScenarioError("expected 'dt_s horizon_s seed'", lineno)
            time = (_f(tok[0], lineno), _f(tok[1], lineno), _i(tok[2], lineno))
        elif section == "noise":
            if len(tok) != 3:
                raise ScenarioError("expected 'pressure_sigma_bar flow_sigma_rel virtual_sigma'", lineno)
            try:
                noise = NoiseConfig(*(_f(t, lineno) for t in tok))
            except ScenarioError as exc:
                raise ScenarioError(str(exc), lineno) from None
        elif section == "loads":
            if len(tok) < 3 or len(tok) % 2 == 0:
                raise ScenarioError("expected 'node t0 v0 [t1 v1 ...]'", lineno)
            nid = _i(tok[0], lineno)
            if nid in loads:
                raise ScenarioError(f"duplicate load profile for node {nid}", lineno)
            vals = [_f(t, lineno) for t in tok[1:]]
            ts, vs = tuple(vals[0::2]), tuple(vals[1::2])
            if any(b < a for a, b in zip(ts, ts[1:])):
                raise ScenarioError("profile times must be nondecreasing", lineno)
            loads[nid] = (ts, vs)
        elif section == "bad_data":
            if len(tok) != 4:
                raise ScenarioError("expected 'kind node t_h value'", lineno)
            bad.append(BadDataEvent(_kind(tok[0], lineno), _i(tok[1], lineno),
                                    _f(tok[2], lineno), _f(tok[3], lineno)))
        else:
            if len(tok) != 5:
                raise ScenarioError("expected 'kind nodes t_start_h t_end_h offset'", lineno)
            nodes = None if tok[1] == "all" else tuple(_i(t, lineno) for t in tok[1].split(","))
            bias.append(BiasEvent(_kind(tok[0], lineno), nodes, _f(tok[2], lineno),
                                  _f(tok[3], lineno), _f(tok[4], lineno)))
    if time is None:
        raise ScenarioError("missing [time] section")
    return Scenario(time[0], time[1], loads, noise or NoiseConfig(), tuple(bad), tuple(bias), time[2])


def serialize_scenario(sc: Scenario) -> str:
    out = ["[time]", f"{sc.dt!r} {sc.horizon!r} {sc.rng_seed}", "", "[loads]"]
    for nid in sorted(sc.load_profiles):
        ts, vs = sc.load_profiles[nid]
        out.append(" ".join([str(nid)] + [f"{t!r} {v!r}" for t, v in zip(ts, vs)]))
    n = sc.noise
    out += ["", "[noise]", f"{n.pressure_sigma!r} {n.flow_sigma_relative!r} {n.virtual_sigma!r}"]
    if sc.bad_data_events:
        out += ["", "[bad_data]"]
        out += [f"{e.kind} {e.node} {e.t_hours!r} {e.value!r}" for e in sc.bad_data_events]
    if sc.bias_events:
        out += ["", "[bias]"]
        for e in sc.bias_events:
            nodes = "all" if e.nodes is None else ",".join(str(i) for i in e.nodes)
            out.append(f"{e.kind} {nodes} {e.t_start_hours!r} {e.t_end_hours!r} {e.offset!r}")
    return "\n".join(out) + "\n"


def load_scenario(path) -> Scenario:
    with open(path) as fh:
        return parse_scenario(fh.read())


BUNDLED_SCENARIOS = ("normal", "bad_data", "bias")


def bundled_scenario(name: str) -> Scenario:
    if name not in BUNDLED_SCENARIOS:
        raise KeyError(f"no bundled scenario {name!r}; choose from {BUNDLED_SCENARIOS}")
    text = resources.files("gaspipe_dse.data").joinpath(f"{name}.scn").read_text()
    return parse_scenario(text)


def diurnal_profile(base: float, phase_hours: float = 0.0, swing: float = 0.3,
                    horizon_hours: float = 24.0, knot_hours: float = 1.0):
    """Hourly knots of ``base * (1 + swing * sin(2 pi (t - phase) / 24 h))``."""
    n = int(round(horizon_hours / knot_hours))
    ts = tuple(k * knot_hours for k in range(n + 1))
    vs = tuple(round(base * (1 + swing * math.sin(2 * math.pi * (t - phase_hours) / 24.0)), 6)
               for t in ts)
    return ts, vs


# --- truth -------------------------------------------------------------------

def build_model(net: GasNetwork, scenario: Scenario):
    """Steady initial state at the t=0 loads and the model linearized around it.

    Returns ``(model, x0)``.
    """
    scenario.check_against(net)
    x0, u_bar = steady_state(net, scenario.load_at(0.0))
    return assemble(net, scenario.dt, u_bar), x0


def input_series(model: TransientModel, net: GasNetwork, scenario: Scenario) -> np.ndarray:
    """(T+1, dim) array; row k is u_k, the transformed input entering at step k."""
    return np.array([model.input_vector(net, scenario.load_at(t)) for t in scenario.times])


def simulate(model: TransientModel, net: GasNetwork, scenario: Scenario,
             x0: np.ndarray) -> np.ndarray:
    """Noise-free trajectory, (T+1, dim), row 0 being ``x0``."""
    if abs(model.dt - scenario.dt) > 1e-12 * scenario.dt:
        raise ValueError(f"model dt {model.dt} != scenario dt {scenario.dt}")
    u = input_series(model, net, scenario)
    xs = np.empty((scenario.n_steps + 1, model.index.dim))
    xs[0] = x0
    for k in range(scenario.n_steps):
        xs[k + 1] = model.F @ xs[k] + u[k + 1]
    return xs


# --- measurements -----------------------------------------------------------

@dataclass(frozen=True)
class Channel:
    node: int
    kind: str
    virtual: bool = False

    @property
    def name(self) -> str:
        return f"{self.kind}_node{self.node}"


def channels(net: GasNetwork, scenario: Scenario | None = None) -> list[Channel]:
    out = [Channel(n.id, PRESSURE) for n in net.nodes]
    for n in net.nodes:
        virtual = scenario is not None and not n.is_source and scenario.is_junction(n.id)
        out.append(Channel(n.id, FLOW, virtual))
    return out


def measurement_matrix(net: GasNetwork, index: StateIndex) -> np.ndarray:
    """Density identity over the node block, nodal net consumption over the flow block.

    A node's flow channel reads inflow through pipe to-ends minus outflow
    through from-ends, so loaded sinks read their load, junctions zero and
    sources minus their injection.
    """
    n = net.n_nodes
    H = np.zeros((2 * n, index.dim))
    H[:n, index.density_slots] = np.eye(n)
    for k, node in enumerate(net.nodes):
        H[n + k] = nodal_balance_row(net, index, node.id)
    return H


def channel_sigmas(net: GasNetwork, scenario: Scenario, H: np.ndarray,
                   trajectory: np.ndarray) -> np.ndarray:
    """Per-channel noise standard deviation in internal units.

    Flow sigmas are relative to each node's time-averaged nominal |flow| over
    the measured steps, floored at the virtual sigma; junctions get the
    virtual sigma outright.
    """
    n = net.n_nodes
    noise = scenario.noise
    sig = np.empty(2 * n)
    sig[:n] = noise.pressure_sigma * BAR / net.c2
    nominal = np.abs(trajectory[1:] @ H[n:].T).mean(axis=0)
    for k, node in enumerate(net.nodes):
        if not node.is_source and scenario.is_junction(node.id):
            sig[n + k] = noise.virtual_sigma
        else:
            sig[n + k] = max(noise.flow_sigma_relative * nominal[k], noise.virtual_sigma)
    return sig


@dataclass(frozen=True)
class Corruption:
    step: int  # 1..T
    channel: int
    kind: str  # 'bad_data' or 'bias'
    before: float
    after: float


@dataclass(frozen=True, eq=False)
class MeasurementSeries:
    """Measurements at steps 1..T (row k-1 holds step k)."""

    times: np.ndarray  # seconds
    z: np.ndarray
    z_true: np.ndarray
    channels: tuple[Channel, ...]
    sigma: np.ndarray
    corruption_log: tuple[Corruption, ...] = ()

    @property
    def n_steps(self) -> int:
        return self.z.shape[0]

    def corrupted_mask(self) -> np.ndarray:
        mask = np.zeros(self.z.shape, dtype=bool)
        for c in self.corruption_log:
            mask[c.step - 1, c.channel] = True
        return mask


def _to_internal(kind: str, value: float, net: GasNetwork) -> float:
    return value * BAR / net.c2 if kind == PRESSURE else value


def synthesize_measurements(net: GasNetwork, scenario: Scenario, H: np.ndarray,
                            trajectory: np.ndarray) -> MeasurementSeries:
    """z_k = H x_k + w_k for k = 1..T, then bad-data replacement, then bias."""
    scenario.check_against(net)
    n = net.n_nodes
    chans = channels(net, scenario)
    sigma = channel_sigmas(net, scenario, H, trajectory)
    z_true = trajectory[1:] @ H.T
    rng = np.random.default_rng(scenario.rng_seed)
    z = z_true + rng.standard_normal(z_true.shape) * sigma

    def col(kind, node):
        return (node - 1) if kind == PRESSURE else n + node - 1

    log = []
    for ev in scenario.bad_data_events:
        k, c = scenario.step_of(ev.t_hours), col(ev.kind, ev.node)
        before = z[k - 1, c]
        z[k - 1, c] = _to_internal(ev.kind, ev.value, net)
        log.append(Corruption(k, c, "bad_data", float(before), float(z[k - 1, c])))
    for ev in scenario.bias_events:
        k0, k1 = scenario.step_of(ev.t_start_hours), scenario.step_of(ev.t_end_hours)
        offset = _to_internal(ev.kind, ev.offset, net)
        nodes = ev.nodes if ev.nodes is not None else [nd.id for nd in net.nodes]
        for nid in nodes:
            c = col(ev.kind, nid)
            for k in range(k0, k1 + 1):
                before = z[k - 1, c]
                z[k - 1, c] += offset
                log.append(Corruption(k, c, "bias", float(before), float(z[k - 1, c])))
    times = scenario.times[1:]
    for arr in (z, z_true, sigma, times):
        arr.setflags(write=False)
    return MeasurementSeries(times, z, z_true, tuple(chans), sigma, tuple(log))


def to_display_units(net: GasNetwork, values: np.ndarray) -> np.ndarray:
    """Convert channel-ordered values (last axis 2*n_nodes) so pressures read in bar."""
    out = np.array(values, dtype=float, copy=True)
    out[..., :net.n_nodes] *= net.c2 / BAR
    return out


def from_display_units(net: GasNetwork, values: np.ndarray) -> np.ndarray:
    out = np.array(values, dtype=float, copy=True)
    out[..., :net.n_nodes] *= BAR / net.c2
    return out
