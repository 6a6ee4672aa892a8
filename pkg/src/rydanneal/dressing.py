"""Rydberg-dressed pair interaction.

Two atoms are each driven from |g> to |r> with Rabi frequency Omega and
detuning Delta = omega_L - omega_gr. In the frame rotating with the laser
the single-atom Hamiltonian is ``[[0, Omega/2], [Omega/2, -Delta]]``. The
pair is treated in the symmetric subspace {|gg>, |B>, |rr>} with
|B> = (|gr> + |rg>)/sqrt(2); |B> couples to both neighbours with
``Omega/sqrt(2)`` and |rr> carries the blockade shift ``V_dd``.

All laser-scale quantities are in MHz; linewidths and scattering rates are
in kHz.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass
from fractions import Fraction
from pathlib import Path

import numpy as np

CS_100P32_LINEWIDTH_KHZ = 0.530


class DressingError(ValueError):
    """Invalid dressing parameters or eigensolver failure."""


class AdiabaticConnectionError(DressingError):
    """The bare ground level is degenerate, so its dressed partner is undefined."""


@dataclass(frozen=True)
class DressingParams:
    omega_r: float
    delta_r: float
    gamma_line: float = CS_100P32_LINEWIDTH_KHZ
    v_dd: float = math.inf

    def __post_init__(self):
        for name in ("omega_r", "delta_r", "gamma_line"):
            v = float(getattr(self, name))
            if not math.isfinite(v):
                raise DressingError(f"{name} must be finite, got {v}")
            object.__setattr__(self, name, v)
        v = float(self.v_dd)
        if math.isnan(v):
            raise DressingError("v_dd is NaN")
        object.__setattr__(self, "v_dd", v)
        if self.omega_r <= 0:
            raise DressingError("omega_r must be positive")
        if self.gamma_line < 0:
            raise DressingError("gamma_line must be non-negative")

    @property
    def perfect_blockade(self):
        return math.isinf(self.v_dd)


@dataclass(frozen=True)
class DressedPairResult:
    """Dressed-pair observables. Energies in MHz, ``scattering_rate`` in kHz."""

    j_coupling: float
    single_light_shift: float
    pair_light_shift: float
    rydberg_admixture_single: float
    rydberg_admixture_pair: float
    scattering_rate: float
    kappa: float
    dressed_gap: float


def _unpack(p, delta_r):
    if isinstance(p, DressingParams):
        return p.omega_r, p.delta_r
    if delta_r is None:
        raise TypeError("pass DressingParams or (omega_r, delta_r)")
    return float(p), float(delta_r)


def j_closed_form(p, delta_r=None):
    """Perfect-blockade coupling ``E_pair - 2 E_single`` in MHz.

    Evaluated as ``-sgn(D) W^4 / ((s1+s2)(s1+|D|)(s2+|D|))`` with
    ``s1 = sqrt(D^2+W^2)``, ``s2 = sqrt(D^2+2W^2)``, which is algebraically
    ``(D + s2 - 2 s1)/2`` for ``D >= 0`` but free of cancellation. ``D = 0``
    takes the ``D > 0`` branch. Accepts ``omega_r = 0``.
    """
    omega, delta = _unpack(p, delta_r)
    if omega == 0.0:
        return 0.0
    ad = abs(delta)
    w2 = omega * omega
    s1 = math.sqrt(delta * delta + w2)
    s2 = math.sqrt(delta * delta + 2.0 * w2)
    sgn = 1.0 if delta >= 0 else -1.0
    return -sgn * w2 * w2 / ((s1 + s2) * (s1 + ad) * (s2 + ad))


def j_perturbative(omega_r, delta_r):
    return -omega_r**4 / (8.0 * delta_r**3)


# -- tridiagonal eigenproblems ------------------------------------------------


# Exact arithmetic: every double is an integer multiple of 2**-1074, so
# scaling by 2**_FIX turns sums and products of doubles into Python ints.
_FIX = 1100


def _fix(x):
    num, den = float(x).as_integer_ratio()
    return num << (_FIX - den.bit_length() + 1)


def _charpoly(diag, csq, e):
    """``det(H - e) * 2**(m*_FIX)`` of a symmetric tridiagonal matrix.

    ``diag`` and ``e`` are fixed-point ints, ``csq`` (squared couplings)
    carry the doubled scale ``2**(2*_FIX)``. Exact.
    """
    p_prev, p = 1, diag[0] - e
    for k in range(1, len(diag)):
        p_prev, p = p, (diag[k] - e) * p - csq[k - 1] * p_prev
    return p


def _polish(diag, csq, e, slope):
    """Round ``e`` to the nearest double of the exact eigenvalue.

    One Newton step with an exact residual, then the float neighbour with
    the smallest exact residual wins.
    """
    r = _charpoly(diag, csq, _fix(e))
    if slope != 0.0:
        e = e - float(Fraction(r, 1 << (len(diag) * _FIX))) / slope
    cands = (math.nextafter(e, -math.inf), e, math.nextafter(e, math.inf))
    return min(cands, key=lambda c: abs(_charpoly(diag, csq, _fix(c))))


def _connected_level(diag, csq, level=0):
    """Dressed eigenpair adiabatically connected to bare level ``level``.

    ``diag`` and ``csq`` are exact fixed-point ints (see :func:`_charpoly`).
    An irreducible tridiagonal matrix has simple eigenvalues, so no level
    crossing can occur while the couplings are switched on: the dressed state
    keeps the rank its bare level has in the sorted bare spectrum.
    """
    if len(set(diag)) < len(diag):
        raise AdiabaticConnectionError(
            f"degenerate bare levels {[float(Fraction(x, 1 << _FIX)) for x in diag]}")
    rank = sorted(diag).index(diag[level])
    h = np.diag([float(Fraction(x, 1 << _FIX)) for x in diag])
    for k, c2 in enumerate(csq):
        h[k, k + 1] = h[k + 1, k] = math.sqrt(float(Fraction(c2, 1 << (2 * _FIX))))
    try:
        w, v = np.linalg.eigh(h)
    except np.linalg.LinAlgError as exc:  # pragma: no cover
        raise DressingError(f"eigensolver failed: {exc}") from exc
    if not np.all(np.isfinite(w)):
        raise DressingError("eigensolver returned non-finite values")
    e = float(w[rank])
    others = np.delete(w, rank)
    # d/de det(H - e) = -prod_{k != rank} (w_k - e)
    e = _polish(diag, csq, e, -float(np.prod(others - e)))
    return e, v[:, rank] ** 2, float(np.min(np.abs(others - e)))


def _single(omega, delta):
    return _connected_level([0, -_fix(delta)], [_fix(omega) ** 2 >> 2])


def _pair(omega, delta, v_dd):
    csq = _fix(omega) ** 2 >> 1
    if math.isinf(v_dd):
        e, pop, gap = _connected_level([0, -_fix(delta)], [csq])
        return e, pop[1], gap
    diag = [0, -_fix(delta), _fix(v_dd) - 2 * _fix(delta)]
    e, pop, gap = _connected_level(diag, [csq, csq])
    return e, pop[1] + 2.0 * pop[2], gap


def diagonalize_pair(p: DressingParams) -> DressedPairResult:
    """Numerically diagonalise the single atom and the pair.

    ``rydberg_admixture_pair`` is the mean number of Rydberg excitations in
    the dressed pair state (bright population plus twice the |rr>
    population); at perfect blockade it is the bright-state population.
    """
    e1, pop1, _ = _single(p.omega_r, p.delta_r)
    e2, npair, gap = _pair(p.omega_r, p.delta_r, p.v_dd)
    # e2 and 2*e1 lie within a factor of two of each other, so this is exact
    j = e2 - 2.0 * e1
    rate, kappa = _rate_and_kappa(j, npair, p.gamma_line)
    return DressedPairResult(
        j_coupling=j,
        single_light_shift=e1,
        pair_light_shift=e2,
        rydberg_admixture_single=float(pop1[1]),
        rydberg_admixture_pair=float(npair),
        scattering_rate=rate,
        kappa=kappa,
        dressed_gap=gap,
    )


def _rate_and_kappa(j_mhz, n_ryd, gamma_line_khz):
    rate = float(n_ryd) * gamma_line_khz
    kappa = math.inf if rate == 0.0 else abs(j_mhz) * 1e3 / rate
    return rate, kappa


def scattering_and_merit(p: DressingParams):
    """``(gamma_r / 2pi in kHz, kappa = |J| / gamma_r)`` for the dressed pair."""
    r = diagonalize_pair(p)
    return r.scattering_rate, r.kappa


# -- long-range tail ---------------------------------------------------------

_REGIMES = {"forster": 3, "vdw": 6, "van-der-waals": 6}


@dataclass(frozen=True)
class TailModel:
    """``J(r)`` flat at ``reference_coupling`` inside ``r0``, ``r^-k`` beyond."""

    regime: str
    reference_distance: float
    reference_coupling: float

    def __post_init__(self):
        if self.regime not in _REGIMES:
            raise DressingError(f"regime must be one of {sorted(_REGIMES)}")
        if not self.reference_distance > 0:
            raise DressingError("reference_distance must be positive")

    @property
    def k(self):
        return _REGIMES[self.regime]


def j_at_distance(tail: TailModel, r):
    if not r > 0:
        raise DressingError(f"distance must be positive, got {r}")
    if r <= tail.reference_distance:
        return tail.reference_coupling
    return tail.reference_coupling * (tail.reference_distance / r) ** tail.k


# -- sweeps ------------------------------------------------------------------

SWEEP_COLUMNS = ("omega_mhz", "delta_mhz", "vdd_mhz", "j_mhz", "admixture_single",
                 "admixture_pair", "gamma_khz", "kappa")


def _axis(spec):
    if isinstance(spec, dict):
        return np.linspace(spec["start"], spec["stop"], int(spec["num"])).tolist()
    if isinstance(spec, (int, float, str)):
        spec = [spec]
    return [float(x) for x in spec]


def sweep(grid):
    """Evaluate every point of a grid document.

    ``grid`` has keys ``omega_mhz``, ``delta_mhz``, optional ``vdd_mhz``
    (default ``["inf"]``) and ``gamma_line_khz``. Each axis is a list, a
    scalar, or ``{"start", "stop", "num"}``. Points whose bare ground level
    is degenerate are returned with NaN observables.
    """
    if isinstance(grid, (str, Path)):
        grid = json.loads(Path(grid).read_text())
    gamma = float(grid.get("gamma_line_khz", CS_100P32_LINEWIDTH_KHZ))
    rows = []
    for om in _axis(grid["omega_mhz"]):
        for de in _axis(grid["delta_mhz"]):
            for vd in _axis(grid.get("vdd_mhz", ["inf"])):
                try:
                    r = diagonalize_pair(DressingParams(om, de, gamma, vd))
                    vals = (r.j_coupling, r.rydberg_admixture_single, r.rydberg_admixture_pair,
                            r.scattering_rate, r.kappa)
                except AdiabaticConnectionError:
                    vals = (math.nan,) * 5
                rows.append((om, de, vd) + vals)
    return rows


def write_sweep_csv(rows, path):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(SWEEP_COLUMNS)
        for row in rows:
            w.writerow([repr(float(x)) for x in row])
