"""Filter coefficients and estimator comparison."""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class ChannelReport:
    node: int
    kind: str
    epsilon: float  # nan when the measurement error is identically zero
    rmse_est: float
    rmse_meas: float

    @property
    def name(self) -> str:
        return f"{self.kind}_node{self.node}"

    @property
    def flagged(self) -> bool:
        return not np.isfinite(self.epsilon)


def filter_coefficient(z_hat, z_meas, z_true) -> np.ndarray:
    """Per-channel ratio of estimate error norm to measurement error norm.

    Inputs are (steps, channels). Channels whose measurement equals the truth
    at every step get ``nan``.
    """
    z_hat, z_meas, z_true = (np.asarray(a, dtype=float) for a in (z_hat, z_meas, z_true))
    if not (z_hat.shape == z_meas.shape == z_true.shape):
        raise ValueError(f"shape mismatch: {z_hat.shape}, {z_meas.shape}, {z_true.shape}")
    num = np.sqrt(np.sum((z_hat - z_true) ** 2, axis=0))
    den = np.sqrt(np.sum((z_meas - z_true) ** 2, axis=0))
    with np.errstate(divide="ignore", invalid="ignore"):
        eps = num / den
    eps[den == 0] = np.nan
    return eps


def channel_reports(channels, z_hat, z_meas, z_true, exclude=()) -> list[ChannelReport]:
    """One report per channel, skipping channel names listed in ``exclude``."""
    eps = filter_coefficient(z_hat, z_meas, z_true)
    n = np.asarray(z_true).shape[0]
    rmse_est = np.sqrt(np.sum((np.asarray(z_hat) - z_true) ** 2, axis=0) / n)
    rmse_meas = np.sqrt(np.sum((np.asarray(z_meas) - z_true) ** 2, axis=0) / n)
    return [
        ChannelReport(ch.node, ch.kind, float(eps[i]), float(rmse_est[i]), float(rmse_meas[i]))
        for i, ch in enumerate(channels)
        if ch.name not in exclude
    ]


def source_pressure_names(net) -> set[str]:
    """Channels with a pinned true value, for which no coefficient is computed."""
    return {f"p_node{n.id}" for n in net.sources}


@dataclass(frozen=True)
class Comparison:
    names: tuple[str, ...]
    difference: np.ndarray  # eps_B - eps_A per channel
    fraction_b_better: float  # share of channels with eps_B < eps_A
    fraction_b_not_worse: float
    event_errors: dict  # label -> (error_A, error_B)


def compare(report_a: list[ChannelReport], report_b: list[ChannelReport],
            event_errors: dict | None = None) -> Comparison:
    names_a = [r.name for r in report_a]
    names_b = [r.name for r in report_b]
    if names_a != names_b:
        raise ValueError("reports cover different channel sets")
    ea = np.array([r.epsilon for r in report_a])
    eb = np.array([r.epsilon for r in report_b])
    ok = np.isfinite(ea) & np.isfinite(eb)
    n = max(int(ok.sum()), 1)
    return Comparison(
        tuple(names_a),
        eb - ea,
        float(np.sum(eb[ok] < ea[ok]) / n),
        float(np.sum(eb[ok] <= ea[ok]) / n),
        dict(event_errors or {}),
    )


def event_window_error(z_hat, z_true, steps, channel, reduce: str = "max") -> float:
    """Max (or mean) absolute estimate error of one channel over 1-based ``steps``."""
    idx = np.asarray(list(steps), dtype=int) - 1
    err = np.abs(np.asarray(z_hat)[idx, channel] - np.asarray(z_true)[idx, channel])
    if reduce == "max":
        return float(err.max())
    if reduce == "mean":
        return float(err.mean())
    raise ValueError(f"reduce must be 'max' or 'mean', got {reduce!r}")


def write_table(path, net, report_kf: list[ChannelReport], report_rkf: list[ChannelReport]) -> None:
    """Rows per node with pressure and flow coefficients of both filters; blanks where not computed."""
    kf = {r.name: r.epsilon for r in report_kf}
    rkf = {r.name: r.epsilon for r in report_rkf}

    def fmt(v):
        return "" if v is None or not np.isfinite(v) else f"{v:.6f}"

    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["node", "p_eps_kf", "p_eps_rkf", "m_eps_kf", "m_eps_rkf"])
        for n in net.nodes:
            p, m = f"p_node{n.id}", f"m_node{n.id}"
            w.writerow([n.id, fmt(kf.get(p)), fmt(rkf.get(p)), fmt(kf.get(m)), fmt(rkf.get(m))])
