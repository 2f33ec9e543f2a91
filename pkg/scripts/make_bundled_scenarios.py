"""Regenerate the bundled demo scenarios in src/gaspipe_dse/data/."""

from pathlib import Path

from gaspipe_dse.network import builtin_benchmark
from gaspipe_dse.simulator import (
    BadDataEvent,
    BiasEvent,
    NoiseConfig,
    Scenario,
    diurnal_profile,
    serialize_scenario,
)

# mean load (kg/s) and phase of the diurnal swing (h) per loaded node
BASE_LOADS = {
    9: (1.6, 0.0), 10: (1.0, 1.0), 11: (1.3, 2.0), 12: (2.0, 0.5), 13: (1.6, 1.5),
    14: (1.3, 3.0), 15: (1.0, 2.5), 16: (1.3, 4.0), 17: (1.2, 3.5), 19: (1.4, 1.0),
    20: (1.2, 5.0), 21: (1.3, 0.0), 22: (2.1, 2.0), 24: (1.4, 4.5), 25: (1.2, 1.0),
    26: (1.0, 3.0), 27: (1.3, 5.5), 29: (1.6, 2.0), 30: (1.7, 0.5),
}
SEED = 20210
DATA = Path(__file__).resolve().parents[1] / "src" / "gaspipe_dse" / "data"

BAD_DATA = (
    [BadDataEvent("p", 30, t, v) for t, v in
     [(5, 12), (5.25, 10.7), (5.5, 13.8), (13.25, 13), (13.5, 15.5), (13.75, 23)]]
    + [BadDataEvent("m", 11, t, v) for t, v in
       [(7.5, 3), (7.75, 2.1), (8, 3), (8.25, 2.2), (15.75, 3), (16, 2.1), (16.25, 1.7)]]
)
BIAS = (BiasEvent("p", None, 10.0, 19.75, 0.2), BiasEvent("m", None, 5.0, 12.5, 0.1))


def main():
    net = builtin_benchmark()
    loads = {}
    for node in net.sinks:
        if node.id in BASE_LOADS:
            loads[node.id] = diurnal_profile(*BASE_LOADS[node.id])
        else:
            loads[node.id] = ((0.0,), (0.0,))
    normal = Scenario(900.0, 86400.0, loads, NoiseConfig(0.01, 0.02, 0.001), rng_seed=SEED)
    variants = {
        "normal": normal,
        "bad_data": Scenario(**{**normal.__dict__, "bad_data_events": tuple(BAD_DATA)}),
        "bias": Scenario(**{**normal.__dict__, "bias_events": BIAS}),
    }
    for name, sc in variants.items():
        header = f"# bundled {name} scenario for the 30-node benchmark\n\n"
        (DATA / f"{name}.scn").write_text(header + serialize_scenario(sc))


if __name__ == "__main__":
    main()
