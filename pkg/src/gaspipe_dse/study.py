"""End-to-end runs: simulate a scenario, filter it with both variants, score it."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import estimation as est
from .metrics import channel_reports, compare, event_window_error, source_pressure_names
from .network import GasNetwork
from .simulator import (
    FLOW,
    PRESSURE,
    MeasurementSeries,
    Scenario,
    build_model,
    measurement_matrix,
    simulate,
    synthesize_measurements,
)
from .transient import TransientModel

KF = "kf"
RKF = "rkf"
VARIANTS = {KF: est.CLASSIC, RKF: est.ROBUST}


@dataclass(eq=False)
class StudyRun:
    net: GasNetwork
    scenario: Scenario
    model: TransientModel
    x0: np.ndarray
    trajectory: np.ndarray
    H: np.ndarray
    measurements: MeasurementSeries
    config: est.EstimatorConfig
    results: dict = field(default_factory=dict)  # 'kf' / 'rkf' -> EstimationResult

    def reports(self, tag: str):
        ms = self.measurements
        return channel_reports(ms.channels, self.results[tag].z_hat, ms.z, ms.z_true,
                               exclude=source_pressure_names(self.net))


def prepare(net: GasNetwork, scenario: Scenario, m_w: int = 10, mu_floor: float = 1.0,
            q_scale: float = 1e-4) -> StudyRun:
    model, x0 = build_model(net, scenario)
    traj = simulate(model, net, scenario, x0)
    H = measurement_matrix(net, model.index)
    ms = synthesize_measurements(net, scenario, H, traj)
    cfg = est.default_config(x0, ms.sigma, est.ROBUST, m_w=m_w, mu_floor=mu_floor,
                             q_scale=q_scale)
    return StudyRun(net, scenario, model, x0, traj, H, ms, cfg)


def estimate(run: StudyRun, variants=(KF, RKF), measurements: MeasurementSeries | None = None):
    ms = measurements or run.measurements
    for tag in variants:
        cfg = run.config.with_variant(VARIANTS[tag])
        run.results[tag] = est.run_filter(run.model, run.net, run.scenario, ms, run.H, cfg, run.x0)
    return run


def run_study(net: GasNetwork, scenario: Scenario, variants=(KF, RKF), **kw) -> StudyRun:
    return estimate(prepare(net, scenario, **kw), variants)


def channel_index(net: GasNetwork, kind: str, node: int) -> int:
    return node - 1 if kind == PRESSURE else net.n_nodes + node - 1


def event_summary(net: GasNetwork, scenario: Scenario, z_true, estimates: dict) -> dict:
    """Event-window errors per filter, keyed by a readable label.

    Bad data: max absolute error of the hit channel over its event instants.
    Bias: mean absolute error over the interval, across the biased channels
    (source pressures excluded).
    """
    out = {}
    hits: dict[tuple[str, int], list[int]] = {}
    for ev in scenario.bad_data_events:
        hits.setdefault((ev.kind, ev.node), []).append(scenario.step_of(ev.t_hours))
    for (kind, node), steps in hits.items():
        c = channel_index(net, kind, node)
        out[f"bad_data max |err| {kind}_node{node}"] = {
            tag: event_window_error(zh, z_true, steps, c, "max") for tag, zh in estimates.items()
        }
    sources = {n.id for n in net.sources}
    for ev in scenario.bias_events:
        k0, k1 = scenario.step_of(ev.t_start_hours), scenario.step_of(ev.t_end_hours)
        nodes = ev.nodes if ev.nodes is not None else [n.id for n in net.nodes]
        cols = [channel_index(net, ev.kind, n) for n in nodes
                if not (ev.kind == PRESSURE and n in sources)]
        rows = np.arange(k0 - 1, k1)
        label = f"bias mean |err| {ev.kind} {ev.t_start_hours:g}-{ev.t_end_hours:g} h"
        out[label] = {
            tag: float(np.mean(np.abs(np.asarray(zh)[np.ix_(rows, cols)]
                                      - np.asarray(z_true)[np.ix_(rows, cols)])))
            for tag, zh in estimates.items()
        }
    return out


def summary_lines(net: GasNetwork, scenario: Scenario, chans, z_meas, z_true,
                  estimates: dict) -> tuple[list[str], object]:
    """Comparison text for KF vs RKF estimates of one run, plus the Comparison.

    Works on any consistent units; event errors are reported in the units of
    the inputs.
    """
    lines = []
    if not (KF in estimates and RKF in estimates):
        return ["single variant run, no comparison"], None
    exclude = source_pressure_names(net)
    rk = channel_reports(chans, estimates[KF], z_meas, z_true, exclude)
    rr = channel_reports(chans, estimates[RKF], z_meas, z_true, exclude)
    events = event_summary(net, scenario, z_true, estimates)
    comp = compare(rk, rr, events)
    virtual = {c.name for c in chans if c.virtual}
    real = [i for i, r in enumerate(rk) if r.name not in virtual]
    ek = np.array([rk[i].epsilon for i in real])
    er = np.array([rr[i].epsilon for i in real])
    lines.append(f"non-virtual channels: {len(real)}; max eps KF {ek.max():.4f}, "
                 f"RKF {er.max():.4f}")
    lines.append(f"majority: RKF eps <= KF eps on {np.mean(er <= ek):.1%} of non-virtual "
                 f"channels (strictly smaller on {np.mean(er < ek):.1%})")
    for label, errs in events.items():
        lines.append(f"{label}: KF {errs[KF]:.6g}, RKF {errs[RKF]:.6g}")
    return lines, comp


def summarize(run: StudyRun) -> tuple[str, object]:
    """Text summary and the KF-vs-RKF comparison for a finished run."""
    ms = run.measurements
    lines, comp = summary_lines(run.net, run.scenario, ms.channels, ms.z, ms.z_true,
                                {t: r.z_hat for t, r in run.results.items()})
    head = f"seed {run.scenario.rng_seed}, {ms.n_steps} steps"
    return "\n".join([head] + lines) + "\n", comp


__all__ = [
    "FLOW",
    "KF",
    "PRESSURE",
    "RKF",
    "StudyRun",
    "estimate",
    "event_summary",
    "prepare",
    "run_study",
    "summarize",
    "summary_lines",
]
