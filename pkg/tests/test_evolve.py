import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import oracles
from helpers import BX_KHZ, NOISE, chain_spec
from rydanneal import AnnealSpec, IsingProblem, Schedule
from rydanneal.evolve import (IntegrationError, IntegratorConfig, NoiseModel, QuantumState,
                              _profile_inverse, evolve_closed, evolve_open, evolve_trajectories,
                              readout, run_anneal)

TIGHT = IntegratorConfig(rel_tol=1e-10, abs_tol=1e-12)

# Frozen oracle outputs. Closed: exponential-midpoint propagator with 4000 and
# 8000 steps, Richardson-extrapolated. Open: full 3^n Lindblad superoperator
# with 1000 and 2000 steps, extrapolated the same way. See tests/oracles.py.
CLOSED_N2_T35 = [6.56733911747478e-06, 0.9969120332520174, 0.0030787945258535098,
                 2.60488300956325e-06]
CLOSED_N3_T52 = [4.648577276856503e-07, 7.789243264746885e-09, 0.9991737053947962,
                 2.819175424575745e-06, 2.9275123699903078e-08, 0.0008219437084242304,
                 1.0296685580912385e-06, 1.3071805825934503e-10]
OPEN_N2_SCHEDULE = [0.00944725392134321, 0.9821265418668724, 0.0062504144324937476,
                    0.0021757897792907955]
OPEN_N2_CONSTANT = [0.020580035068160547, 0.9660205598413313, 0.010573486184696279,
                    0.002825918905808562]


# -- closed system ---------------------------------------------------------------


@pytest.mark.parametrize("n, ref", [(2, CLOSED_N2_T35), (3, CLOSED_N3_T52)])
def test_closed_against_frozen_propagator(n, ref):
    dist = readout(evolve_closed(chain_spec(n), TIGHT))
    np.testing.assert_allclose(dist, ref, atol=2e-9)


def test_closed_against_live_propagator():
    p = chain_spec(2).problem
    psi = oracles.anneal_expm(p.bias, p.coupling, BX_KHZ, 35.0, 1000)
    dist = readout(evolve_closed(chain_spec(2), TIGHT))
    np.testing.assert_allclose(dist, np.abs(psi) ** 2, atol=5e-7)


def test_closed_fixed_bias_against_live_propagator():
    spec = chain_spec(2, ramp_bias=False)
    a, b = (np.abs(oracles.anneal_expm(spec.problem.bias, spec.problem.coupling, BX_KHZ, 35.0, k,
                                       ramp_bias=False)) ** 2 for k in (2000, 4000))
    np.testing.assert_allclose(readout(evolve_closed(spec, TIGHT)), b + (b - a) / 3, atol=5e-8)


def test_error_shrinks_with_tolerance():
    errs = []
    for rtol in (1e-5, 1e-7, 1e-9):
        d = readout(evolve_closed(chain_spec(2), IntegratorConfig(rel_tol=rtol, abs_tol=rtol * 1e-2)))
        errs.append(np.max(np.abs(d - CLOSED_N2_T35)))
    assert errs[0] > errs[1] > errs[2]
    assert errs[2] < 1e-7


@settings(max_examples=15)
@given(st.integers(1, 4), st.floats(1.0, 30.0), st.integers(0, 2**31))
def test_closed_norm_is_conserved(n, T, seed):
    rng = np.random.default_rng(seed)
    h = rng.uniform(-200, 200, n)
    J = np.triu(rng.uniform(-200, 200, (n, n)), 1)
    p = IsingProblem(h, J + J.T)
    st_ = evolve_closed(AnnealSpec(p, 300.0, Schedule(T)))
    assert abs(st_.total_trace() - 1.0) <= 1e-6


def test_zero_field_adiabatic_start_is_stationary():
    # with no problem term the driver ground state |+>^n only picks up a phase
    p = IsingProblem(np.zeros(3), np.zeros((3, 3)))
    dist = readout(evolve_closed(AnnealSpec(p, 470.0, Schedule(20.0)), TIGHT))
    np.testing.assert_allclose(dist, np.full(8, 1 / 8), atol=1e-9)


def test_step_budget_raises():
    with pytest.raises(IntegrationError):
        evolve_closed(chain_spec(2), IntegratorConfig(max_steps=5))


# -- master equation ---------------------------------------------------------------


@pytest.mark.parametrize("profile, ref", [("schedule", OPEN_N2_SCHEDULE), ("constant", OPEN_N2_CONSTANT)])
def test_open_against_frozen_lindblad(profile, ref):
    noise = NoiseModel(0.1, profile)
    dist = readout(evolve_open(chain_spec(2, noise=noise), noise, TIGHT), noise.readout_split)
    np.testing.assert_allclose(dist, ref, atol=2e-9)


def test_open_against_live_lindblad():
    p = chain_spec(2).problem
    rho = oracles.lindblad_bruteforce(p.bias, p.coupling, BX_KHZ, 35.0, 0.3, 250)
    ref = oracles.readout_3level(rho, 2, 7 / 16)
    noise = NoiseModel(0.3)
    dist = readout(evolve_open(chain_spec(2, noise=noise), noise, TIGHT), 7 / 16)
    np.testing.assert_allclose(dist, ref, atol=5e-6)


@pytest.mark.parametrize("profile, weight", [("schedule", 0.5), ("constant", 1.0)])
def test_leaked_mass_has_closed_form(profile, weight):
    noise = NoiseModel(0.1, profile)
    st_ = evolve_open(chain_spec(2, noise=noise), noise)
    survive = math.exp(-2 * math.pi * 0.1e-3 * 35.0 * weight)
    assert st_.leaked_mass == pytest.approx(1 - survive**2, rel=1e-7)
    np.testing.assert_allclose(st_.leak_ledger(), 1 - survive, rtol=1e-7)
    assert abs(st_.total_trace() - 1.0) <= 1e-6


def test_open_without_noise_equals_closed():
    spec = chain_spec(3)
    a = readout(evolve_closed(spec, TIGHT))
    b = readout(evolve_open(spec, NoiseModel(0.0), TIGHT))
    np.testing.assert_allclose(a, b, atol=1e-8)


def test_success_decreases_with_noise():
    ps = []
    for g in (0.0, 0.05, 0.1, 0.2, 0.4):
        noise = NoiseModel(g)
        ps.append(run_anneal(chain_spec(2, noise=noise), noise, method="master").success_probability)
    assert all(b < a for a, b in zip(ps, ps[1:]))


def test_blocks_are_positive_and_hermitian():
    noise = NoiseModel(1.0)
    st_ = evolve_open(chain_spec(3, noise=noise), noise)
    for b in st_.blocks.values():
        np.testing.assert_allclose(b, b.conj().T, atol=1e-14)
        assert np.linalg.eigvalsh(b)[0] > -1e-9


def test_master_equation_size_limit():
    p = IsingProblem(np.ones(8), np.zeros((8, 8)))
    with pytest.raises(ValueError):
        evolve_open(AnnealSpec(p, 100.0, Schedule(1.0)), NOISE)


# -- readout ----------------------------------------------------------------------


def test_fully_leaked_qubit_reads_one_with_split():
    st_ = QuantumState(1, {0: np.zeros((2, 2)), 1: np.ones((1, 1))}, False)
    np.testing.assert_allclose(readout(st_, 7 / 16), [9 / 16, 7 / 16])


def test_partially_leaked_pair_readout():
    # atom 0 leaked, atom 1 coherent in |1>
    blk = np.array([[0.0, 0.0], [0.0, 1.0]])
    st_ = QuantumState(2, {0: np.zeros((4, 4)), 1: blk, 2: np.zeros((2, 2)), 3: np.zeros((1, 1))}, False)
    # index = bit0 + 2 * bit1
    np.testing.assert_allclose(readout(st_, 0.25), [0, 0, 0.75, 0.25])


def test_strong_noise_approaches_leak_readout():
    noise = NoiseModel(100.0, "constant", readout_split=7 / 16)
    p = IsingProblem([50.0], [[0.0]])
    dist = readout(evolve_open(AnnealSpec(p, 100.0, Schedule(20.0)), noise), 7 / 16)
    np.testing.assert_allclose(dist, [9 / 16, 7 / 16], atol=1e-4)


# -- trajectories ------------------------------------------------------------------


def test_profile_inverse_matches_integral():
    spec = chain_spec(2, T=35.0)
    for target in (0.0, 1.0, 10.0, 17.4):
        t = _profile_inverse(spec, "schedule", target)
        assert spec.schedule.b_integral(0.0, t) == pytest.approx(target, abs=1e-12)
    assert _profile_inverse(spec, "schedule", 17.6) is None
    assert _profile_inverse(spec, "constant", 3.0) == 3.0


def test_trajectories_match_master_equation():
    noise = NoiseModel(1.0)
    spec = chain_spec(2, noise=noise)
    ref = readout(evolve_open(spec, noise), noise.readout_split)
    tr = evolve_trajectories(spec, noise, n_traj=3000, seed=11)
    # mean of the per-trajectory distributions has a much smaller spread
    sigma = np.sqrt(ref * (1 - ref) / tr.n_traj)
    assert np.all(np.abs(tr.histogram - ref) <= 4 * sigma + 1e-12)
    assert np.all(np.abs(tr.mean_distribution - ref) <= 4 * sigma + 1e-12)
    assert tr.n_leaked_traj > 0


def test_trajectory_leak_fraction_matches_ledger():
    noise = NoiseModel(2.0, "constant")
    spec = chain_spec(2, noise=noise)
    tr = evolve_trajectories(spec, noise, n_traj=4000, seed=3)
    p_leak = 1 - math.exp(-2 * (2 * math.pi * 2.0e-3 * 35.0))
    sigma = math.sqrt(p_leak * (1 - p_leak) / 4000)
    assert abs(tr.n_leaked_traj / 4000 - p_leak) <= 4 * sigma


def test_trajectories_independent_of_threads():
    spec = chain_spec(2, noise=NoiseModel(1.0))
    a = evolve_trajectories(spec, n_traj=500, seed=5, threads=1)
    b = evolve_trajectories(spec, n_traj=500, seed=5, threads=4)
    np.testing.assert_array_equal(a.counts, b.counts)
    np.testing.assert_array_equal(a.mean_distribution, b.mean_distribution)
    c = evolve_trajectories(spec, n_traj=500, seed=6, threads=1)
    assert not np.array_equal(a.counts, c.counts)


def test_noiseless_trajectories_sample_the_closed_state():
    spec = chain_spec(2)
    tr = evolve_trajectories(spec, NoiseModel(0.0), n_traj=200, seed=1)
    assert tr.n_jumps == 0
    np.testing.assert_allclose(tr.mean_distribution, readout(evolve_closed(spec)), atol=1e-12)


def test_trajectory_input_validation():
    with pytest.raises(ValueError):
        evolve_trajectories(chain_spec(2), NOISE, n_traj=0)


# -- driver ------------------------------------------------------------------------


def test_run_anneal_auto_and_json():
    res = run_anneal(chain_spec(2, noise=NOISE))
    assert res.method == "master"
    doc = res.to_json()
    for key in ("spec", "noise", "method", "ground_state", "final_distribution",
                "success_probability", "leaked_mass", "integrator_stats"):
        assert key in doc
    assert doc["ground_state"] == "10"
    assert sum(doc["final_distribution"].values()) == pytest.approx(1.0, abs=1e-6)
    assert run_anneal(chain_spec(2)).method == "closed"
    with pytest.raises(ValueError):
        run_anneal(chain_spec(2), method="rk4")


@pytest.mark.parametrize("kw", [dict(gamma_max_khz=-1.0), dict(time_profile="cosine"),
                                dict(readout_split=1.5)])
def test_noise_validation(kw):
    with pytest.raises(ValueError):
        NoiseModel(**kw)
