"""Spectral diagnostics along an anneal and scoring of readout distributions."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np
import scipy.sparse.linalg as spla
from scipy.optimize import minimize_scalar

from .hamiltonian import DENSE_MAX_QUBITS, AnnealSpec, build_h_b, h_of_t
from .ising import IsingProblem, SpinConfiguration, brute_force_ground
from .kernels import TWO_PI_KHZ_US

DEFAULT_GRID_POINTS = 201
SCAN_MAX_QUBITS = 10


class DegenerateGroundStateError(ValueError):
    """The oracle ground state is not unique, so success is ill-defined."""


class DegenerateFitError(ValueError):
    pass


def _lowest_two(spec, t):
    h = h_of_t(spec, t)
    if spec.n <= DENSE_MAX_QUBITS + 1:
        w = np.linalg.eigvalsh(h.to_dense())
        return float(w[0]), float(w[1])
    w = spla.eigsh(h.matrix, k=2, which="SA", tol=1e-12, return_eigenvectors=False)
    w = np.sort(w)
    return float(w[0]), float(w[1])


def _gap(spec, t):
    e0, e1 = _lowest_two(spec, t)
    return max(e1 - e0, 0.0)


@dataclass(frozen=True)
class GapScan:
    times: np.ndarray
    e0: np.ndarray
    e1: np.ndarray
    min_gap: float
    min_gap_time: float

    @property
    def gaps(self):
        return np.maximum(self.e1 - self.e0, 0.0)

    def write_csv(self, path, spec: AnnealSpec = None, plot_data=False):
        """One row per grid time; ``plot_data`` adds energies and envelopes."""
        cols = ["time_us", "gap_khz"]
        if plot_data:
            cols += ["e0_khz", "e1_khz", "a", "b"]
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(cols)
            for k, t in enumerate(self.times):
                row = [repr(float(t)), repr(float(self.gaps[k]))]
                if plot_data:
                    row += [repr(float(self.e0[k])), repr(float(self.e1[k])),
                            repr(float(spec.schedule.a(t))), repr(float(spec.schedule.b(t)))]
                w.writerow(row)

    def to_json(self):
        return {"min_gap_khz": self.min_gap, "min_gap_time_us": self.min_gap_time,
                "grid_points": int(self.times.shape[0])}


def scan_gap(spec: AnnealSpec, grid_points=DEFAULT_GRID_POINTS, refine=True) -> GapScan:
    """Lowest two levels of ``H(t)`` on a uniform grid over ``[0, T]``.

    The coarse minimum is refined by golden-section search between its grid
    neighbours. Exact crossings show up as zero gaps.
    """
    if spec.n > SCAN_MAX_QUBITS:
        raise ValueError(f"gap scans are limited to n <= {SCAN_MAX_QUBITS}")
    if grid_points < 2:
        raise ValueError("grid_points must be >= 2")
    times = np.linspace(0.0, spec.total_time, grid_points)
    pairs = np.array([_lowest_two(spec, t) for t in times])
    e0, e1 = pairs[:, 0], pairs[:, 1]
    gaps = np.maximum(e1 - e0, 0.0)
    k = int(np.argmin(gaps))
    t_min, g_min = float(times[k]), float(gaps[k])
    if refine and 0 < k < grid_points - 1 and g_min > 0:
        res = minimize_scalar(lambda t: _gap(spec, t), method="golden",
                              bracket=(times[k - 1], times[k], times[k + 1]),
                              options={"xtol": 1e-10})
        if times[k - 1] <= res.x <= times[k + 1] and res.fun < g_min:
            t_min, g_min = float(res.x), float(res.fun)
    return GapScan(times, e0, e1, g_min, t_min)


@dataclass(frozen=True)
class GapFit:
    ns: tuple
    min_gaps: tuple
    exponent: float
    prefactor: float
    residual: float

    @property
    def monotone_decreasing(self):
        return all(b < a for a, b in zip(self.min_gaps, self.min_gaps[1:]))

    def to_json(self):
        return {"n": list(self.ns), "min_gap_khz": list(self.min_gaps), "exponent": self.exponent,
                "prefactor_khz": self.prefactor, "residual": self.residual,
                "monotone_decreasing": self.monotone_decreasing}


def gap_scaling_fit(family, n_range, grid_points=DEFAULT_GRID_POINTS) -> GapFit:
    """Least-squares fit ``log(min_gap) = log(c) + k log(n)``.

    ``family`` maps ``n`` to an :class:`AnnealSpec`. Raises
    DegenerateFitError for fewer than three sizes or a vanishing gap.
    """
    ns = sorted(set(int(n) for n in n_range))
    if len(ns) < 3:
        raise DegenerateFitError("need at least three sizes")
    gaps = [scan_gap(family(n), grid_points).min_gap for n in ns]
    if min(gaps) <= 0.0:
        raise DegenerateFitError(f"zero minimum gap in {dict(zip(ns, gaps))}")
    x, y = np.log(ns), np.log(gaps)
    (k, c), res, *_ = np.polyfit(x, y, 1, full=True)
    return GapFit(tuple(ns), tuple(float(g) for g in gaps), float(k), float(math.exp(c)),
                  float(res[0]) if len(res) else 0.0)


def adiabatic_time(spec: AnnealSpec, grid_points=DEFAULT_GRID_POINTS) -> float:
    """Heuristic run time ``max_s |<1|dH/ds|0>| / gap(s)^2`` in microseconds.

    ``s = t/T``. Informational only. Returns ``inf`` if the gap closes.
    """
    T = spec.total_time
    kt = spec.schedule.times
    ka, kb = spec.schedule.knots[:, 1], spec.schedule.knots[:, 2]
    hb = build_h_b(spec.n, spec.b_x).to_dense()
    d_ramp, _ = spec.diagonals()
    best = 0.0
    for t in np.linspace(0.0, T, grid_points):
        seg = min(int(np.searchsorted(kt, t, side="right")) - 1, kt.shape[0] - 2)
        dt = kt[seg + 1] - kt[seg]
        da = (ka[seg + 1] - ka[seg]) / dt * T
        db = (kb[seg + 1] - kb[seg]) / dt * T
        w, v = np.linalg.eigh(h_of_t(spec, t).to_dense())
        gap = w[1] - w[0]
        if gap <= 0:
            return math.inf
        dh = da * hb + db * np.diag(d_ramp)
        m = abs(v[:, 1].conj() @ dh @ v[:, 0])
        best = max(best, m / gap**2)
    return best / TWO_PI_KHZ_US


# -- scoring -----------------------------------------------------------------


def trials_for_confidence(p, confidence=0.99):
    """Smallest ``k`` with ``1 - (1-p)^k >= confidence`` (``inf`` when ``p = 0``)."""
    if not 0.0 <= p <= 1.0:
        raise ValueError("probability must lie in [0, 1]")
    if not 0.0 < confidence < 1.0:
        raise ValueError("confidence must lie in (0, 1)")
    if p == 0.0:
        return math.inf
    if p == 1.0:
        return 1
    k = math.ceil(math.log1p(-confidence) / math.log1p(-p))
    # guard the ceiling against rounding on exact boundaries
    while k > 1 and 1.0 - (1.0 - p) ** (k - 1) >= confidence:
        k -= 1
    return max(int(k), 1)


@dataclass(frozen=True)
class FidelityReport:
    ground_state: str
    success_probability: float
    fidelity_closed: float
    trials_to_confidence: float
    confidence: float

    def to_json(self):
        k = self.trials_to_confidence
        return {"ground_state": self.ground_state, "success_probability": self.success_probability,
                "fidelity_closed": self.fidelity_closed, "confidence": self.confidence,
                "trials_to_confidence": None if math.isinf(k) else int(k)}


def _mass_on(dist, config: SpinConfiguration):
    if isinstance(dist, dict):
        return float(dist.get(str(config), 0.0))
    return float(np.asarray(dist)[config.index])


def fidelity_report(dist, problem: IsingProblem, confidence=0.99, closed_dist=None) -> FidelityReport:
    """Probability mass on the oracle ground state and the repetitions it implies.

    ``dist`` is an array in basis-index order or a ``{bitstring: p}`` map.
    """
    gs = brute_force_ground(problem)
    if gs.degeneracy > 1:
        raise DegenerateGroundStateError(
            f"ground state is {gs.degeneracy}-fold degenerate; inspect the degeneracy count")
    p = min(max(_mass_on(dist, gs.config), 0.0), 1.0)
    fc = math.nan if closed_dist is None else _mass_on(closed_dist, gs.config)
    return FidelityReport(str(gs.config), p, fc, trials_for_confidence(p, confidence), confidence)
