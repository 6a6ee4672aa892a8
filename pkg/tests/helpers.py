"""Shared fixtures-as-functions: the benchmark family and cached runs."""

from functools import lru_cache

from rydanneal import AnnealSpec, IntegratorConfig, NoiseModel, Schedule, benchmark_chain
from rydanneal.evolve import run_anneal

J_KHZ = 470.0
BX_KHZ = 470.0
DE_TOTAL_KHZ = 118.5
T_PER_QUBIT_US = 17.5
NOISE = NoiseModel(0.1)


def chain_spec(n, T=None, noise=None, **kw):
    T = T_PER_QUBIT_US * n if T is None else T
    return AnnealSpec(benchmark_chain(n, J_KHZ, DE_TOTAL_KHZ), BX_KHZ, Schedule(T), noise, **kw)


@lru_cache(maxsize=None)
def benchmark_run(n, noisy, T=None):
    spec = chain_spec(n, T, NOISE if noisy else None)
    return run_anneal(spec, NOISE if noisy else NoiseModel(0.0), IntegratorConfig(),
                      "master" if noisy else "closed")
