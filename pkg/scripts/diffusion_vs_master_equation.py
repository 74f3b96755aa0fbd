"""Convolution march against direct master-equation integration for diffusion with extinction.

The jump operator is the upwind derivative, so the error should halve when
both h and the time step halve.
"""

import argparse
import time

import numpy as np

from covlab.dynamics import DensityOperator, diffusion_jump_operators, gksl_evolve, stencil_heat_family
from covlab.grid import GridFunction, GridSpec
from covlab.measures import lindblad_jump_measure
from covlab.volterra import TimeGrid, march_perturbed


def run(n, k, x_max=8.0, t_max=0.5):
    spec, tg = GridSpec(x_max, n), TimeGrid(t_max, k)
    K, L = diffusion_jump_operators(spec)
    psi = GridFunction.from_callable(spec, lambda x: np.exp(-((x - 3.0) ** 2) / (2 * 0.49)))
    w0 = DensityOperator.rank_one(psi * (1.0 / psi.norm()))
    fam = stencil_heat_family(spec)
    pf = march_perturbed(fam, lindblad_jump_measure(fam, [L], step=tg.dt), tg, arg=w0)
    ref = gksl_evolve(K, [L], w0, t_max, k)
    err = np.linalg.norm(pf.orbit[-1, 0] - ref.states[-1]) / np.linalg.norm(ref.states[-1])
    return err, pf.traces[-1, 0].real, ref.traces[-1].real


def main():
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--n-points", type=int, nargs="+", default=[16, 32, 64])
    p.add_argument("--steps-per-point", type=float, default=6.25, help="n_steps = this * n_points")
    args = p.parse_args()

    prev = None
    print(f"{'n':>4s} {'steps':>6s} {'rel err':>10s} {'ratio':>6s} {'Tr march':>9s} {'Tr gksl':>9s} {'s':>6s}")
    for n in args.n_points:
        k = int(round(args.steps_per_point * n))
        t0 = time.perf_counter()
        err, tr, tr_ref = run(n, k)
        ratio = f"{prev / err:6.2f}" if prev else " " * 6
        print(f"{n:4d} {k:6d} {err:10.3e} {ratio} {tr:9.6f} {tr_ref:9.6f} {time.perf_counter() - t0:6.1f}")
        prev = err


if __name__ == "__main__":
    main()
