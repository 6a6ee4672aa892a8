import csv
import math

import mpmath as mp
import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

import oracles
from rydanneal.dressing import (SWEEP_COLUMNS, AdiabaticConnectionError, DressingError,
                                DressingParams, TailModel, diagonalize_pair, j_at_distance,
                                j_closed_form, j_perturbative, scattering_and_merit, sweep,
                                write_sweep_csv)

omegas = st.floats(1e-3, 100.0)
deltas = st.floats(1e-3, 100.0).flatmap(lambda d: st.sampled_from([d, -d]))


def _rel(a, b):
    return abs(a - b) / abs(b)


# frozen high-precision value of the coupling at the operating point
J_10_8_MHZ = -0.68221007022973


def test_operating_point_coupling_against_mpmath():
    ref = float(oracles.j_coupling_mp(10.0, 8.0))
    assert ref == pytest.approx(J_10_8_MHZ, rel=1e-13)
    assert _rel(j_closed_form(10.0, 8.0), ref) < 1e-14
    assert _rel(diagonalize_pair(DressingParams(10.0, 8.0)).j_coupling, ref) < 1e-13


@given(omegas, deltas)
def test_closed_form_matches_high_precision(o, d):
    ref = float(oracles.j_coupling_mp(o, d, dps=80))
    assert _rel(j_closed_form(o, d), ref) < 1e-13


@given(omegas, deltas)
def test_diagonalisation_matches_closed_form(o, d):
    # J = E2 - 2 E1 from correctly rounded levels: error is a few ulps of E1
    r = diagonalize_pair(DressingParams(o, d))
    ulp = math.ulp(abs(r.single_light_shift))
    assert abs(r.j_coupling - j_closed_form(o, d)) <= 1e-11 * abs(r.j_coupling) + 4 * ulp


@given(omegas, deltas)
def test_light_shifts_against_mpmath_eigenvalues(o, d):
    with mp.workdps(40):
        h1 = mp.matrix([[0, o / 2], [o / 2, -d]])
        e1 = sorted(mp.eigsy(h1)[0])
        h2 = mp.matrix([[0, o / mp.sqrt(2)], [o / mp.sqrt(2), -d]])
        e2 = sorted(mp.eigsy(h2)[0])
    k = 1 if d > 0 else 0  # bare |g> is the upper level when d > 0
    r = diagonalize_pair(DressingParams(o, d))
    assert r.single_light_shift == pytest.approx(float(e1[k]), rel=1e-12, abs=1e-12 * o)
    assert r.pair_light_shift == pytest.approx(float(e2[k]), rel=1e-12, abs=1e-12 * o)


def test_signs_follow_detuning():
    assert j_closed_form(10.0, 8.0) < 0
    assert j_closed_form(10.0, -8.0) > 0
    assert j_closed_form(10.0, -8.0) == -j_closed_form(10.0, 8.0)
    assert j_closed_form(0.0, 5.0) == 0.0


def test_perturbative_limit():
    o, d = 0.1, 20.0
    assert _rel(j_closed_form(o, d), j_perturbative(o, d)) < 1e-4


def test_single_atom_populations():
    r = diagonalize_pair(DressingParams(10.0, 8.0))
    s1 = math.hypot(8.0, 10.0)
    assert r.rydberg_admixture_single == pytest.approx((1 - 8.0 / s1) / 2, rel=1e-12)
    s2 = math.sqrt(64 + 200)
    assert r.rydberg_admixture_pair == pytest.approx((1 - 8.0 / s2) / 2, rel=1e-12)
    assert r.dressed_gap == pytest.approx(s2, rel=1e-12)


def test_resonant_saturation():
    r = diagonalize_pair(DressingParams(10.0, 1e-9))
    assert r.rydberg_admixture_single == pytest.approx(0.5, abs=1e-9)
    rate, _ = scattering_and_merit(DressingParams(10.0, 1e-9, gamma_line=0.53))
    assert rate == pytest.approx(0.53 / 2, rel=1e-6)


def test_exact_resonance_is_ambiguous():
    with pytest.raises(AdiabaticConnectionError):
        diagonalize_pair(DressingParams(10.0, 0.0))


def test_rate_and_merit():
    r = diagonalize_pair(DressingParams(10.0, 8.0, gamma_line=0.53))
    assert r.scattering_rate == pytest.approx(0.53 * r.rydberg_admixture_pair, rel=1e-14)
    assert r.kappa == pytest.approx(abs(r.j_coupling) * 1e3 / r.scattering_rate, rel=1e-14)
    assert math.isinf(diagonalize_pair(DressingParams(10.0, 8.0, gamma_line=0.0)).kappa)


@given(st.floats(0.5, 50.0), st.floats(0.5, 50.0), st.floats(-200.0, -1e-3))
def test_finite_blockade_against_mpmath(o, d, v):
    # repulsive-branch-free reading: V <= 0 keeps |rr> below the resonance for d > 0
    with mp.workdps(40):
        c = o / mp.sqrt(2)
        h = mp.matrix([[0, c, 0], [c, -d, c], [0, c, -2 * d + v]])
        w, vecs = mp.eigsy(h)
    order = sorted(range(3), key=lambda i: w[i])
    e_ref = float(w[order[2]])  # bare |gg> = 0 is the top level
    r = diagonalize_pair(DressingParams(o, d, v_dd=v))
    assert r.pair_light_shift == pytest.approx(e_ref, rel=1e-11, abs=1e-11 * o)
    vec = vecs[:, order[2]]
    n_ref = float(abs(vec[1]) ** 2 + 2 * abs(vec[2]) ** 2)
    assert r.rydberg_admixture_pair == pytest.approx(n_ref, abs=1e-10)


def test_large_v_recovers_perfect_blockade():
    p_inf = diagonalize_pair(DressingParams(10.0, 8.0))
    p_big = diagonalize_pair(DressingParams(10.0, 8.0, v_dd=-1e7))
    assert p_big.j_coupling == pytest.approx(p_inf.j_coupling, rel=1e-5)


def test_no_blockade_means_no_coupling():
    r = diagonalize_pair(DressingParams(10.0, 8.0, v_dd=0.0))
    assert abs(r.j_coupling) < 1e-12


@pytest.mark.parametrize("kw", [dict(omega_r=0.0, delta_r=1.0), dict(omega_r=1.0, delta_r=math.nan),
                                dict(omega_r=1.0, delta_r=1.0, gamma_line=-1.0),
                                dict(omega_r=1.0, delta_r=1.0, v_dd=math.nan)])
def test_invalid_params(kw):
    with pytest.raises(DressingError):
        DressingParams(**kw)


def test_tail_model():
    tail = TailModel("vdw", 8.0, -0.47)
    assert tail.k == 6
    assert TailModel("forster", 8.0, -0.47).k == 3
    assert j_at_distance(tail, 4.0) == -0.47
    assert j_at_distance(tail, 16.0) == pytest.approx(-0.47 / 64)
    with pytest.raises(DressingError):
        TailModel("dipole", 8.0, 1.0)
    with pytest.raises(DressingError):
        j_at_distance(tail, 0.0)


def test_sweep_and_csv(tmp_path):
    rows = sweep({"omega_mhz": [5.0, 10.0], "delta_mhz": {"start": -8, "stop": 8, "num": 3},
                  "vdd_mhz": "inf"})
    assert len(rows) == 6
    zero = [r for r in rows if r[1] == 0.0]
    assert zero and all(math.isnan(r[3]) for r in zero)
    path = tmp_path / "s.csv"
    write_sweep_csv(rows, path)
    with open(path) as fh:
        lines = list(csv.reader(fh))
    assert tuple(lines[0]) == SWEEP_COLUMNS
    assert float(lines[-1][3]) == pytest.approx(j_closed_form(10.0, 8.0), rel=1e-12)


@pytest.mark.parametrize("o, d", [(1e-6, 1.0), (1e-4, 50.0), (1e-3, -1e3)])
def test_tiny_coupling_closed_form_exact_diagonalisation_ulp_bound(o, d):
    ref = float(oracles.j_coupling_mp(o, d, dps=120))
    assert _rel(j_closed_form(o, d), ref) < 1e-13
    r = diagonalize_pair(DressingParams(o, d))
    assert abs(r.j_coupling - ref) <= 4 * math.ulp(abs(r.single_light_shift))
    assert np.isfinite(j_perturbative(o, d))
