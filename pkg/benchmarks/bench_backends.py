#!/usr/bin/env python3
"""Benchmark the compiled extension against the pure-NumPy fallback.

Times single closed-loop derivative evaluations and full scenario runs for
both backends and prints a comparison table.

Run:  python benchmarks/bench_backends.py [--quick]
"""
import argparse
import time

import numpy as np

import tvoptctl as tv
from tvoptctl import scenarios
from tvoptctl._backend import HAVE_COMPILED, make_rhs


def time_callable(fn, args_list, repeats=3):
    best = float("inf")
    for _ in range(repeats):
        start = time.perf_counter()
        for args in args_list:
            fn(*args)
        best = min(best, (time.perf_counter() - start) / len(args_list))
    return best


def bench_rhs(name, plant, objective, gains, states, quick):
    ctrl = tv.ImplicitPlanningController(gains, backend="pure")
    pure = ctrl.rhs(plant, objective)
    n = 200 if quick else 2000
    args = [(t, z) for t, z in states[:n]]
    t_pure = time_callable(pure, args)
    row = [name, f"{t_pure * 1e6:9.1f}"]
    if HAVE_COMPILED:
        fast = make_rhs(plant, objective, gains, "compiled")
        t_fast = time_callable(fast, args)
        row += [f"{t_fast * 1e6:9.1f}", f"{t_pure / t_fast:6.1f}x"]
    else:
        row += ["      n/a", "   n/a"]
    print("  {:<22} {} {} {}".format(*row))


def bench_scenario(name, spec, quick):
    if quick:
        spec = spec.override("sim.t_end", 4.0)
    t0 = time.perf_counter()
    res = scenarios.run_scenario(spec, backend="pure")
    t_pure = time.perf_counter() - t0
    assert res.trace.error is None
    row = [name, f"{t_pure:9.2f}"]
    if HAVE_COMPILED:
        t0 = time.perf_counter()
        res = scenarios.run_scenario(spec, backend="compiled")
        t_fast = time.perf_counter() - t0
        assert res.trace.error is None
        row += [f"{t_fast:9.2f}", f"{t_pure / t_fast:6.1f}x"]
    else:
        row += ["      n/a", "   n/a"]
    print("  {:<22} {} {} {}".format(*row))


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--quick", action="store_true", help="shorter runs")
    args = parser.parse_args()

    print(f"compiled extension available: {HAVE_COMPILED}")
    rng = np.random.default_rng(0)

    spec1 = scenarios.scenario_switching()
    spec2 = scenarios.scenario_multi_robot()

    print("\nper-evaluation closed-loop RHS (mean us/call):")
    print("  {:<22} {:>9} {:>9} {:>7}".format("setup", "pure", "compiled", "speedup"))
    states_wmr = [(rng.uniform(0, 20),
                   np.concatenate([rng.uniform(-6, 6, 2), rng.uniform(-3, 3, 1),
                                   rng.uniform(0.2, 2.0, 1)]))
                  for _ in range(2000)]
    bench_rhs("wmr + blend (k=2)", spec1.build_plant(), spec1.build_objective(),
              spec1.build_gains(), states_wmr, args.quick)

    states_pair = []
    for _ in range(2000):
        base = rng.uniform(-5, -2, 2)
        states_pair.append((rng.uniform(0, 20), np.concatenate(
            [base, rng.uniform(-3, 3, 1), base + rng.uniform(-0.5, 0.5, 2),
             rng.uniform(-3, 3, 1), rng.uniform(0.2, 2.0, 2)])))
    bench_rhs("wmr pair + barrier", spec2.build_plant(), spec2.build_objective(),
              spec2.build_gains(), states_pair, args.quick)

    path = tv.PolynomialPath([[0.0, 1.0, 0.0, 0.0], [0.0, 0.0, 0.0, 0.0]])
    states_int = [(rng.uniform(0, 10), rng.uniform(-3, 3, 2)) for _ in range(2000)]
    bench_rhs("integrator + quad (k=1)", tv.integrator_plant(2),
              tv.quadratic_tracking(path), tv.design_gains([-1.0], 2),
              states_int, args.quick)

    print("\nfull scenario runs (s):")
    print("  {:<22} {:>9} {:>9} {:>7}".format("scenario", "pure", "compiled", "speedup"))
    bench_scenario("switching", spec1, args.quick)
    bench_scenario("multi_robot", spec2, args.quick)


if __name__ == "__main__":
    main()
