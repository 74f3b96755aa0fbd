"""Exponential-vector identities on random test functions, plus the indicator tensor bound.

    python scripts/fock_identities.py --n-points 512 --tuples 20
"""

import argparse

import numpy as np

from covlab import fock
from covlab.config import GridConfig, ScenarioConfig
from covlab.grid import GridFunction, GridSpec
from covlab.scenarios import run_scenario


def main():
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--n-points", type=int, default=512)
    p.add_argument("--tuples", type=int, default=20)
    p.add_argument("--seed", type=int, default=20240917)
    args = p.parse_args()

    cfg = ScenarioConfig.default(
        "fock-identities",
        grid=GridConfig(16.0, args.n_points),
        seed=args.seed,
        options={"tuples": str(args.tuples)},
    )
    rep = run_scenario(cfg)
    for c in rep.checks:
        print(f"{c.name:30s} {c.category:9s} {c.residual:10.3e}  {'pass' if c.passed else 'FAIL'}")

    spec = GridSpec(8.0, 4096)
    f = GridFunction.from_callable(spec, lambda x: np.sqrt(2.0) * np.exp(-x))
    print(f"\n{'parts':>5s} {'distance':>10s} {'bound':>10s}")
    for n in (8, 16, 32, 64, 128):
        r = fock.approx_indicator_tensor(f, 1.0, 2.0, n)
        print(f"{n:5d} {r.distance:10.4e} {r.bound:10.4e}")


if __name__ == "__main__":
    main()
