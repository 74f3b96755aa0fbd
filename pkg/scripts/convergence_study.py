"""Refinement table for one scenario: residuals and observed orders per level.

    python scripts/convergence_study.py fock-identities --levels 3 --n-points 256
"""

import argparse
import warnings

from covlab.config import SCENARIOS, GridConfig, ScenarioConfig, TimeConfig
from covlab.scenarios import convergence_report


def main():
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("scenario", choices=SCENARIOS)
    p.add_argument("--levels", type=int, default=3)
    p.add_argument("--n-points", type=int, help="coarsest grid (default: the scenario default)")
    p.add_argument("--n-steps", type=int, help="coarsest time grid")
    args = p.parse_args()

    cfg = ScenarioConfig.default(args.scenario)
    if args.n_points or args.n_steps:
        cfg = ScenarioConfig.default(
            args.scenario,
            grid=GridConfig(cfg.grid.x_max, args.n_points or cfg.grid.n_points),
            time=TimeConfig(cfg.time.t_max, args.n_steps or cfg.time.n_steps),
        )
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        rep = convergence_report(cfg, args.levels)
    for w in caught:
        print(f"warning: {w.message}")

    print(f"{'check':34s} {'level':>5s} {'n':>6s} {'residual':>11s}  order")
    for r in rep.refinement:
        order = "" if r.order is None else (f"{r.order:.3f}" if isinstance(r.order, float) else r.order)
        print(f"{r.check:34s} {r.level:5d} {r.n_points:6d} {r.residual:11.3e}  {order}")
    print(f"\n{rep.timing['total_s']:.1f} s")


if __name__ == "__main__":
    main()
