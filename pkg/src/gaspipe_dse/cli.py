"""Command-line driver: simulate, estimate, evaluate and the three-condition demo.

Exit codes: 0 success, 1 usage or configuration error, 2 numerical failure.
"""

from __future__ import annotations

import argparse
import csv
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from . import estimation as est
from . import study
from .metrics import channel_reports, source_pressure_names, write_table
from .network import GasNetwork, NetworkFormatError, NetworkValidationError, builtin_benchmark, load_network
from .simulator import (
    BUNDLED_SCENARIOS,
    MeasurementSeries,
    Scenario,
    ScenarioError,
    bundled_scenario,
    channels,
    from_display_units,
    load_scenario,
    serialize_scenario,
    to_display_units,
)
from .transient import SingularModelError, SteadyStateError

OUT_ENV = "GASPIPE_DSE_OUT"
DEFAULT_OUT = "gaspipe_out"

TRUTH_CSV = "truth.csv"
MEAS_CSV = "measurements.csv"
ECHO = "scenario_echo.scn"
MU_CSV = "mu_trace.csv"
REPORT_CSV = "report.csv"
SUMMARY = "summary.txt"


def estimate_csv(tag: str) -> str:
    return f"estimate_{tag}.csv"


class ConfigError(ValueError):
    """Bad manifest, missing input or inconsistent files."""


@dataclass(frozen=True)
class RunManifest:
    network: GasNetwork
    scenario: Scenario
    out_dir: Path
    variants: tuple[str, ...] = (study.KF, study.RKF)
    m_w: int = 10
    mu_floor: float = 1.0
    network_path: str | None = None  # None means the bundled benchmark
    scenario_path: str | None = None

    def __post_init__(self):
        if self.m_w < 1:
            raise ConfigError("--mw must be >= 1")
        if not self.mu_floor >= 1:
            raise ConfigError("--mu-floor must be >= 1")
        try:
            self.scenario.check_against(self.network)
        except ScenarioError as exc:
            where = self.scenario_path or "bundled scenario"
            raise ConfigError(f"{where}: {exc}") from None

    def path(self, name: str) -> Path:
        return self.out_dir / name


# --- CSV ---------------------------------------------------------------------

def _fmt(v: float) -> str:
    return repr(float(v))


def write_series(path: Path, times, names, values) -> None:
    """One row per step: ``t_s`` then the named columns, floats in repr form."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["t_s", *names])
        for t, row in zip(times, np.asarray(values)):
            w.writerow([_fmt(t), *(_fmt(v) for v in row)])


def read_series(path: Path, names, suffix: str):
    """Read a series written by :func:`write_series`; returns ``(times, values)``.

    Columns must be exactly ``t_s`` followed by ``names`` with ``suffix``.
    """
    if not path.exists():
        raise ConfigError(f"missing input {path}")
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    expected = ["t_s", *(f"{n}{suffix}" for n in names)]
    if not rows or rows[0] != expected:
        got = len(rows[0]) - 1 if rows else 0
        raise ConfigError(f"{path}: column layout does not match the network "
                          f"({got} channels, expected {len(names)})")
    try:
        data = np.array([[float(v) for v in r] for r in rows[1:]], dtype=float)
    except ValueError as exc:
        raise ConfigError(f"{path}: {exc}") from None
    if data.ndim != 2 or data.shape[1] != len(expected):
        raise ConfigError(f"{path}: ragged rows")
    return data[:, 0], data[:, 1:]


def _names(net: GasNetwork) -> list[str]:
    return [c.name for c in channels(net)]


def _check_grid(path, times, expected):
    if times.shape != expected.shape or not np.array_equal(times, expected):
        raise ConfigError(f"{path}: time column does not match the scenario grid")


# --- commands ----------------------------------------------------------------

def cmd_simulate(m: RunManifest) -> study.StudyRun:
    m.out_dir.mkdir(parents=True, exist_ok=True)
    run = study.prepare(m.network, m.scenario, m_w=m.m_w, mu_floor=m.mu_floor)
    ms = run.measurements
    names = _names(m.network)
    write_series(m.path(TRUTH_CSV), ms.times, [f"{n}_true" for n in names],
                 to_display_units(m.network, ms.z_true))
    write_series(m.path(MEAS_CSV), ms.times, [f"{n}_meas" for n in names],
                 to_display_units(m.network, ms.z))
    m.path(ECHO).write_text(serialize_scenario(m.scenario))
    return run


def _load_measurements(m: RunManifest, run: study.StudyRun) -> MeasurementSeries:
    times, z = read_series(m.path(MEAS_CSV), _names(m.network), "_meas")
    _check_grid(m.path(MEAS_CSV), times, run.measurements.times)
    z = from_display_units(m.network, z)
    z.setflags(write=False)
    return replace(run.measurements, z=z)


def cmd_estimate(m: RunManifest) -> study.StudyRun:
    if not m.path(MEAS_CSV).exists():
        run = cmd_simulate(m)
    else:
        run = study.prepare(m.network, m.scenario, m_w=m.m_w, mu_floor=m.mu_floor)
    ms = _load_measurements(m, run)
    study.estimate(run, m.variants, ms)
    names = _names(m.network)
    for tag in m.variants:
        res = run.results[tag]
        write_series(m.path(estimate_csv(tag)), ms.times, [f"{n}_{tag}" for n in names],
                     to_display_units(m.network, res.z_hat))
    if study.RKF in m.variants:
        write_series(m.path(MU_CSV), ms.times, [f"{n}_mu" for n in names],
                     run.results[study.RKF].mu)
    elif m.path(MU_CSV).exists():
        m.path(MU_CSV).unlink()
    return run


def cmd_evaluate(m: RunManifest) -> str:
    """Write the per-node coefficient table and the comparison summary; returns the summary."""
    net, sc = m.network, m.scenario
    names = _names(net)
    grid = sc.times[1:]
    t, z_true = read_series(m.path(TRUTH_CSV), names, "_true")
    _check_grid(m.path(TRUTH_CSV), t, grid)
    t, z_meas = read_series(m.path(MEAS_CSV), names, "_meas")
    _check_grid(m.path(MEAS_CSV), t, grid)
    estimates = {}
    for tag in (study.KF, study.RKF):
        p = m.path(estimate_csv(tag))
        if p.exists():
            t, estimates[tag] = read_series(p, names, f"_{tag}")
            _check_grid(p, t, grid)
    if not estimates:
        raise ConfigError(f"missing inputs: no estimate CSV in {m.out_dir}")

    chans = channels(net, sc)
    exclude = source_pressure_names(net)
    reports = {tag: channel_reports(chans, zh, z_meas, z_true, exclude)
               for tag, zh in estimates.items()}
    write_table(m.path(REPORT_CSV), net, reports.get(study.KF, []), reports.get(study.RKF, []))
    lines, _ = study.summary_lines(net, sc, chans, z_meas, z_true, estimates)
    text = "\n".join([f"seed {sc.rng_seed}, {len(grid)} steps, units bar and kg/s"] + lines) + "\n"
    m.path(SUMMARY).write_text(text)
    return text


def _run_condition(m: RunManifest) -> str:
    cmd_simulate(m)
    cmd_estimate(m)
    return cmd_evaluate(m)


def cmd_demo(m: RunManifest) -> str:
    """All bundled conditions, each in its own subdirectory, run concurrently."""
    m.out_dir.mkdir(parents=True, exist_ok=True)
    seed = m.scenario.rng_seed
    jobs = [replace(m, scenario=bundled_scenario(name).with_seed(seed), scenario_path=None,
                    out_dir=m.out_dir / name)
            for name in BUNDLED_SCENARIOS]
    with ThreadPoolExecutor(max_workers=len(jobs)) as pool:
        texts = list(pool.map(_run_condition, jobs))
    out = "".join(f"== {name} ==\n{text}\n" for name, text in zip(BUNDLED_SCENARIOS, texts))
    m.path(SUMMARY).write_text(out)
    return out


COMMANDS = {
    "simulate": cmd_simulate,
    "estimate": cmd_estimate,
    "evaluate": cmd_evaluate,
    "demo": cmd_demo,
}


# --- argument handling -------------------------------------------------------

class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def _seed(text: str) -> int:
    v = int(text)
    if not 0 <= v < 2**64:
        raise argparse.ArgumentTypeError("seed must be an unsigned 64-bit integer")
    return v


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--network", help="network file (default: bundled 30-node benchmark)")
    common.add_argument("--scenario", help="scenario file (default: bundled normal condition)")
    common.add_argument("--out", help=f"output directory (default: ${OUT_ENV} or ./{DEFAULT_OUT})")
    common.add_argument("--variant", choices=("kf", "rkf", "both"), default="both")
    common.add_argument("--seed", type=_seed, help="override the scenario seed")
    common.add_argument("--mw", type=int, default=10, help="innovation window length")
    common.add_argument("--mu-floor", type=float, default=1.0, help="lower clamp of the scalars")

    parser = _Parser(prog="gaspipe-dse", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    sub.add_parser("simulate", parents=[common], help="truth and measurement CSVs")
    sub.add_parser("estimate", parents=[common], help="KF / RKF estimate CSVs and scalar trace")
    sub.add_parser("evaluate", parents=[common], help="coefficient table and summary")
    sub.add_parser("demo", parents=[common], help="normal, bad-data and bias conditions")
    return parser


def _load(loader, path):
    try:
        return loader(path)
    except (ScenarioError, NetworkFormatError, NetworkValidationError) as exc:
        raise ConfigError(f"{path}: {exc}") from None
    except OSError as exc:
        raise ConfigError(f"{path}: {exc.strerror or exc}") from None


def manifest_from_args(args) -> RunManifest:
    net = _load(load_network, args.network) if args.network else builtin_benchmark()
    sc = _load(load_scenario, args.scenario) if args.scenario else bundled_scenario("normal")
    if args.seed is not None:
        sc = sc.with_seed(args.seed)
    out = Path(args.out or os.environ.get(OUT_ENV) or DEFAULT_OUT)
    variants = (study.KF, study.RKF) if args.variant == "both" else (args.variant,)
    return RunManifest(net, sc, out, variants, args.mw, args.mu_floor, args.network, args.scenario)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        manifest = manifest_from_args(args)
        result = COMMANDS[args.command](manifest)
    except (SingularModelError, SteadyStateError, est.FilterDivergenceError) as exc:
        print(f"gaspipe-dse: numerical failure: {exc}", file=sys.stderr)
        return 2
    except (ConfigError, ScenarioError, NetworkFormatError, NetworkValidationError,
            OSError) as exc:
        print(f"gaspipe-dse: {exc}", file=sys.stderr)
        return 1
    if isinstance(result, str):
        sys.stdout.write(result)
    print(f"outputs in {manifest.out_dir}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
