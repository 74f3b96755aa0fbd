"""Right shifts lose probability through x = 0; boundary re-injection puts it back.

Prints the trace of the perturbed and unperturbed evolutions of
``psi = sqrt(2) exp(-x)`` on the time grid.
"""

import argparse

import numpy as np

from covlab.dynamics import DensityOperator
from covlab.grid import GridFunction, GridSpec
from covlab.measures import boundary_injection_measure
from covlab.semigroup import right_shift_family
from covlab.volterra import TimeGrid, march_perturbed


def main():
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--n-points", type=int, default=256)
    p.add_argument("--x-max", type=float, default=8.0)
    p.add_argument("--t-max", type=float, default=2.0)
    p.add_argument("--every", type=int, default=8, help="print every k-th step")
    args = p.parse_args()

    spec = GridSpec(args.x_max, args.n_points)
    steps = int(round(args.t_max / spec.h))
    tg = TimeGrid(steps * spec.h, steps)
    psi = GridFunction.from_callable(spec, lambda x: np.sqrt(2.0) * np.exp(-x))
    phi = GridFunction.from_callable(spec, lambda x: np.exp(-x))
    inj = boundary_injection_measure(DensityOperator.rank_one(phi * (1.0 / phi.norm())), step=tg.dt)
    pf = march_perturbed(right_shift_family(spec), inj, tg, arg=DensityOperator.rank_one(psi))
    no_event = spec.h * np.einsum("kbii->k", pf.base_orbit).real

    print(f"{'t':>7s} {'Tr perturbed':>13s} {'Tr no-event':>12s} {'exp(-2t)':>10s}")
    for k in range(0, tg.n_steps + 1, args.every):
        t = tg.times[k]
        print(f"{t:7.4f} {pf.traces[k, 0].real:13.8f} {no_event[k]:12.8f} {np.exp(-2 * t):10.8f}")
    print(f"\nmax |Tr - 1| = {np.abs(pf.traces - 1).max():.3e}")


if __name__ == "__main__":
    main()
