"""Wall-clock comparison of the compiled and pure-numpy integrator backends.

    python3 benchmarks/bench_kernels.py [--repeat 3]

Each backend integrates the n=2..4 benchmark chains (closed system) and the
n=2, 3 chains under the master equation. The first compiled call includes
JIT or cache loading and is reported separately.
"""

import argparse
import time

import numpy as np

from rydanneal import AnnealSpec, IntegratorConfig, NoiseModel, Schedule, benchmark_chain
from rydanneal._accel import HAVE_NUMBA
from rydanneal.evolve import evolve_closed, evolve_open, readout


def _cases():
    noise = NoiseModel(0.1)
    for n in (2, 3, 4):
        yield f"closed n={n}", AnnealSpec(benchmark_chain(n, 470.0, 118.5), 470.0,
                                          Schedule(17.5 * n)), None
    for n in (2, 3):
        yield f"master n={n}", AnnealSpec(benchmark_chain(n, 470.0, 118.5), 470.0,
                                          Schedule(17.5 * n), noise), noise


def _run(spec, noise, cfg):
    st = evolve_closed(spec, cfg) if noise is None else evolve_open(spec, noise, cfg)
    return readout(st, 7 / 16)


def _time(fn, repeat):
    best = np.inf
    for _ in range(repeat):
        t = time.perf_counter()
        out = fn()
        best = min(best, time.perf_counter() - t)
    return best, out


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args()
    backends = [("numpy", False)] + ([("numba", True)] if HAVE_NUMBA else [])
    if HAVE_NUMBA:
        t = time.perf_counter()
        for _, spec, noise in _cases():
            _run(spec, noise, IntegratorConfig(use_numba=True))
        print(f"numba warm-up (compile or cache load): {time.perf_counter() - t:.2f} s")
    print(f"{'case':<14}" + "".join(f"{name:>12}" for name, _ in backends) + f"{'max |diff|':>14}")
    for label, spec, noise in _cases():
        times, dists = [], []
        for _, flag in backends:
            dt, dist = _time(lambda: _run(spec, noise, IntegratorConfig(use_numba=flag)), args.repeat)
            times.append(dt)
            dists.append(dist)
        diff = max(float(np.max(np.abs(d - dists[0]))) for d in dists)
        print(f"{label:<14}" + "".join(f"{t:>11.3f}s" for t in times) + f"{diff:>14.2e}")


if __name__ == "__main__":
    main()
