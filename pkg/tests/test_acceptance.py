"""Acceptance suite.

Each test prints one line ``criterion N: PASS|FAIL  <measured values>`` and
then asserts.  Run ``python tests/test_acceptance.py`` for the eight lines
without pytest.
"""

import functools
import time

import numpy as np
import pytest

from covlab import fock
from covlab.config import GridConfig, ScenarioConfig, TimeConfig
from covlab.dynamics import DensityOperator, diffusion_jump_operators, gksl_evolve, stencil_heat_family
from covlab.grid import GridFunction, GridSpec
from covlab.measures import lindblad_jump_measure
from covlab.scenarios import convergence_report, run_scenario
from covlab.volterra import TimeGrid, march_perturbed

MARCHING = [
    ("diffusion-gksl-match", {}),
    ("shift-trace-restoration", {}),
    ("rank-one-singular", {}),
    ("reconstruction-roundtrip", {"measure": "zero"}),
    ("reconstruction-roundtrip", {"measure": "rank-one"}),
    ("reconstruction-roundtrip", {"measure": "injection"}),
]


@functools.cache
def _report(name, options=()):
    return run_scenario(ScenarioConfig.default(name, options=dict(options)))


def report(name, options=None):
    return _report(name, tuple(sorted((options or {}).items())))


@functools.cache
def covariance_levels():
    return convergence_report(ScenarioConfig.default("covariance-suite"), 3)


def rows_for(rep, check):
    return [r for r in rep.refinement if r.check == check]


def order_ok(order, lo=1.5, hi=2.5):
    """Second order, or both levels already at the roundoff floor."""
    return order == "roundoff" or (isinstance(order, float) and lo <= order <= hi)


def checks_matching(prefix, runs=MARCHING):
    out = []
    for name, opts in runs:
        for c in report(name, opts).checks:
            if c.name.startswith(prefix):
                out.append((f"{name}{'/' + opts['measure'] if opts else ''}:{c.name}", c.residual))
    return out


def gksl_error(n, k):
    spec, tg = GridSpec(8.0, n), TimeGrid(0.5, k)
    K, L = diffusion_jump_operators(spec)
    psi = GridFunction.from_callable(spec, lambda x: np.exp(-((x - 3.0) ** 2) / (2 * 0.49)))
    w0 = DensityOperator.rank_one(psi * (1.0 / psi.norm()))
    fam = stencil_heat_family(spec)
    pf = march_perturbed(fam, lindblad_jump_measure(fam, [L], step=tg.dt), tg, arg=w0)
    ref = gksl_evolve(K, [L], w0, tg.t_max, tg.n_steps).states[-1]
    return float(np.linalg.norm(pf.orbit[-1, 0] - ref) / np.linalg.norm(ref))


# -- criteria: each returns (passed, detail) ----------------------------------


def criterion_1():
    t0 = time.perf_counter()
    e1, e2 = gksl_error(32, 200), gksl_error(64, 400)
    dt = time.perf_counter() - t0
    ok = e1 <= 1e-2 and e1 / e2 >= 2.0 and dt <= 60
    return ok, f"march vs master equation: rel err {e1:.3e} (32/200), {e2:.3e} (64/400), ratio {e1 / e2:.3f}, {dt:.1f} s"


def criterion_2():
    cfg = ScenarioConfig.default("shift-trace-restoration")
    t0 = time.perf_counter()
    rep = run_scenario(cfg)
    dt = time.perf_counter() - t0
    tr, prof = rep.check("trace-restoration").residual, rep.check("no-event-trace-profile").residual
    ok = tr <= 1e-3 and prof <= 1e-3 and dt <= 30
    return ok, (
        f"n={cfg.grid.n_points}, t<={cfg.time.t_max:g}: max|Tr-1| {tr:.3e}, "
        f"no-event vs exp(-2t) {prof:.3e}, {dt:.1f} s"
    )


def criterion_3():
    res = checks_matching("integral-identity")
    worst = max(res, key=lambda x: x[1])
    return worst[1] <= 1e-12, f"{len(res)} identity checks over {len(MARCHING)} marching runs, worst {worst[1]:.3e} ({worst[0]})"


def criterion_4():
    base = checks_matching("reconstruct-base")
    init = checks_matching("reconstruct-initial-state")
    wb, wi = max(v for _, v in base), max(v for _, v in init)
    names = sorted({n.split(":")[0] for n, _ in init})
    ok = wb <= 1e-12 and wi <= 1e-9 and {"rank-one-singular", "shift-trace-restoration"} <= set(names)
    return ok, f"base worst {wb:.3e} over {len(base)} runs, initial state worst {wi:.3e} over {', '.join(names)}"


def criterion_5():
    pairs = [("rank-one-singular", n) for n in ("scalar-vs-march", "dyson-vs-march", "dyson-vs-scalar")]
    pairs.append(("shift-trace-restoration", "dyson-vs-march"))
    vals = {f"{s}:{c}": report(s).check(c).residual for s, c in pairs}
    n = report("rank-one-singular").config.grid.n_points
    worst = max(vals.values())
    return worst <= 1e-10 and n == 256, f"n={n}: " + ", ".join(f"{k} {v:.1e}" for k, v in vals.items())


SHIFT_COVARIANCE = ["covariance-rank-one-shift", "covariance-injection-shift", "covariance-jump-shift", "covariance-fock"]
HEAT_COVARIANCE = ["covariance-bounded-heat", "covariance-generator-heat"]


def criterion_6():
    rep = covariance_levels()
    exact = [r.residual for name in SHIFT_COVARIANCE for r in rows_for(rep, name)]
    exact.append(report("rank-one-singular").check("covariance").residual)
    heat = {name: rows_for(rep, name) for name in HEAT_COVARIANCE}
    heat_max = max(r.residual for rows in heat.values() for r in rows)
    orders = [r.order for rows in heat.values() for r in rows[1:]]
    ok = all(v == 0.0 for v in exact) and heat_max <= 1e-3 and all(order_ok(o) for o in orders)
    return ok, (
        f"shift-based max {max(exact):g} over {len(exact)} residuals; heat-based max {heat_max:.2e}, "
        f"orders {sorted(set(map(str, orders)))} at n=256/512/1024"
    )


def criterion_7():
    base = ScenarioConfig.default("fock-identities")
    t0 = time.perf_counter()
    at512 = run_scenario(base)
    dt = time.perf_counter() - t0
    # orders from the 256 / 512 / 1024 ladder around the acceptance grid
    coarse = ScenarioConfig.default("fock-identities", grid=GridConfig(16.0, 256), time=TimeConfig(1.0, 32))
    conv = convergence_report(coarse, 3)
    n_tuples = int(base.option("tuples", "20"))
    exact = [c for c in at512.checks if c.category == "exact"]
    integral = [c for c in at512.checks if c.category == "integral"]
    orders = [r.order for c in integral for r in rows_for(conv, c.name)[1:]]
    d = [fock.approx_indicator_tensor(_sqrt2exp(), 1.0, 2.0, p).distance for p in (8, 16, 32, 64)]
    decreasing = all(a > b for a, b in zip(d, d[1:]))
    ok = (
        n_tuples >= 20
        and all(c.residual <= 1e-8 for c in exact)
        and all(c.residual <= 1e-3 for c in integral)
        and all(isinstance(o, float) and 1.8 <= o <= 2.2 for o in orders)
        and decreasing
        and dt <= 60
    )
    return ok, (
        f"n=512, {n_tuples} tuples: exact max {max(c.residual for c in exact):.1e}, quadrature max "
        f"{max(c.residual for c in integral):.1e}, orders {min(orders):.3f}..{max(orders):.3f}, "
        f"indicator distances {', '.join(f'{v:.4f}' for v in d)}, {dt:.1f} s"
    )


def _sqrt2exp():
    s = GridSpec(8.0, 4096)
    return GridFunction.from_callable(s, lambda x: np.sqrt(2.0) * np.exp(-x))


def criterion_8():
    rep = covariance_levels()
    shift_law = [r.residual for r in rows_for(rep, "semigroup-law-shift")]
    heat_rows = rows_for(rep, "semigroup-law-heat")
    heat_ok = all(r.residual <= 1e-3 for r in heat_rows) and all(order_ok(r.order) for r in heat_rows[1:])
    duality = checks_matching("duality")
    additivity = [r.residual for r in rep.refinement if r.check.startswith("additivity")]
    positivity = checks_matching("positivity") + [
        (r.check, r.residual) for r in rep.refinement if r.check.startswith("positivity")
    ]
    dmax = max(v for _, v in duality)
    amax = max(additivity)
    floor = -max(v for _, v in positivity)
    ok = all(v == 0.0 for v in shift_law) and heat_ok and dmax <= 1e-10 and amax <= 1e-12 and floor >= -1e-8
    return ok, (
        f"shift law max {max(shift_law):g}, heat law max {max(r.residual for r in heat_rows):.1e} "
        f"(orders {[r.order for r in heat_rows[1:]]}), duality {dmax:.1e}, additivity {amax:.1e}, "
        f"positivity floor {floor:.1e}"
    )


CRITERIA = [criterion_1, criterion_2, criterion_3, criterion_4, criterion_5, criterion_6, criterion_7, criterion_8]


def _line(i, ok, detail):
    return f"criterion {i}: {'PASS' if ok else 'FAIL'}  {detail}"


@pytest.mark.slow
@pytest.mark.parametrize("i", range(1, 9), ids=lambda i: f"criterion_{i}")
def test_criterion(i, capsys):
    ok, detail = CRITERIA[i - 1]()
    with capsys.disabled():
        print("\n" + _line(i, ok, detail))
    assert ok, detail


if __name__ == "__main__":
    for i, fn in enumerate(CRITERIA, 1):
        print(_line(i, *fn()), flush=True)
