"""Many-qubit operators, annealing schedules and the interpolated Hamiltonian
``H(t) = A(t) H_B + B(t) H_P``.

Basis index bit ``i`` is qubit ``i`` (qubit 0 least significant); bit value
1 is the sigma_z = +1 eigenstate. Energies in kHz, times in microseconds.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy.sparse as sp

from .ising import DressingAssignment, IsingProblem, ProblemError, problem_from_json, qubo_to_ising

MAX_QUBITS = 14
DENSE_MAX_QUBITS = 7


class ScheduleError(ValueError):
    pass


def _check_n(n):
    if not 1 <= n <= MAX_QUBITS:
        raise ProblemError(f"qubit count {n} outside [1, {MAX_QUBITS}]")


class SparseOperator:
    """Hermitian operator in the computational basis.

    Stored dense for ``n <= DENSE_MAX_QUBITS`` and as CSR above. Both layouts
    are filled from the same ``(rows, cols, values)`` triplets, so entries are
    bit-identical whichever storage is chosen.
    """

    __slots__ = ("n", "_m")

    def __init__(self, n, matrix):
        _check_n(n)
        dim = 1 << n
        if matrix.shape != (dim, dim):
            raise ProblemError(f"operator shape {matrix.shape} does not match n={n}")
        self.n = n
        self._m = matrix

    @classmethod
    def from_triplets(cls, n, rows, cols, vals, dense=None):
        dim = 1 << n
        if dense is None:
            dense = n <= DENSE_MAX_QUBITS
        if dense:
            m = np.zeros((dim, dim))
            np.add.at(m, (rows, cols), vals)
        else:
            m = sp.csr_matrix((vals, (rows, cols)), shape=(dim, dim))
            m.sum_duplicates()
            m.sort_indices()
        return cls(n, m)

    @classmethod
    def diagonal_operator(cls, diag, dense=None):
        diag = np.asarray(diag, dtype=float)
        n = int(diag.shape[0]).bit_length() - 1
        idx = np.arange(diag.shape[0])
        return cls.from_triplets(n, idx, idx, diag, dense)

    @property
    def dim(self):
        return 1 << self.n

    @property
    def is_sparse(self):
        return sp.issparse(self._m)

    @property
    def matrix(self):
        return self._m

    def to_dense(self):
        return self._m.toarray() if self.is_sparse else np.array(self._m)

    def diagonal(self):
        return np.asarray(self._m.diagonal(), dtype=float)

    def is_diagonal(self):
        """True when no off-diagonal entry is stored nonzero."""
        if self.is_sparse:
            coo = self._m.tocoo()
            return bool(np.all((coo.row == coo.col) | (coo.data == 0)))
        return bool(np.count_nonzero(self._m - np.diag(np.diag(self._m))) == 0)

    def is_hermitian(self, atol=1e-12):
        d = self._m - self._m.conj().T
        if self.is_sparse:
            return d.nnz == 0 or float(abs(d).max()) <= atol
        return float(np.max(np.abs(d), initial=0.0)) <= atol

    def __matmul__(self, v):
        return self._m @ v

    def _combine(self, other, fn):
        if not isinstance(other, SparseOperator) or other.n != self.n:
            return NotImplemented
        return SparseOperator(self.n, fn(self._m, other._m))

    def __add__(self, other):
        return self._combine(other, lambda a, b: a + b)

    def __sub__(self, other):
        return self._combine(other, lambda a, b: a - b)

    def __mul__(self, c):
        return SparseOperator(self.n, self._m * float(c))

    __rmul__ = __mul__

    def allclose(self, other, atol=1e-12):
        return np.allclose(self.to_dense(), other.to_dense(), rtol=0.0, atol=atol)


def build_h_b(n, b_x, dense=None):
    """``-b_x * sum_i sigma_x^(i)``."""
    _check_n(n)
    idx = np.arange(1 << n)
    rows = np.repeat(idx, n)
    cols = (idx[:, None] ^ (1 << np.arange(n))[None, :]).reshape(-1)
    vals = np.full(rows.shape, -float(b_x))
    return SparseOperator.from_triplets(n, rows, cols, vals, dense)


def build_h_p(p: IsingProblem, dense=None):
    """Diagonal problem Hamiltonian; entry ``k`` is the Ising energy of basis state ``k``."""
    _check_n(p.n)
    return SparseOperator.diagonal_operator(p.energies(), dense)


def build_dressed_h_p(p: IsingProblem, assignment: DressingAssignment, physical_j_khz=-470.0,
                      dense=None):
    """Problem Hamiltonian assembled from dressed pair projectors.

    Each edge contributes a shift ``sign(J_phys) * 4|J~_ij|`` on the dressed
    pair state ``|d_i d_j>``; the single-qubit residue is cancelled by the
    assignment's compensation biases. Equals :func:`build_h_p` up to a
    constant.
    """
    _check_n(p.n)
    sj = 1.0 if physical_j_khz > 0 else -1.0
    s = 2.0 * ((np.arange(1 << p.n)[:, None] >> np.arange(p.n)) & 1) - 1.0
    diag = s @ (p.bias + assignment.compensation_khz)
    for i, j, c in p.edges():
        di, dj = assignment.edge_states[(i, j)]
        hit = (s[:, i] == 2 * di - 1) & (s[:, j] == 2 * dj - 1)
        diag = diag + sj * 4.0 * abs(c) * hit
    return SparseOperator.diagonal_operator(diag, dense)


# -- schedules ---------------------------------------------------------------


@dataclass(frozen=True)
class Schedule:
    """Piecewise-linear envelopes ``A(t)`` (transverse) and ``B(t)`` (problem).

    ``knots`` rows are ``(t, A, B)`` with strictly increasing ``t`` from 0 to
    ``total_time``, ``A`` going 1 -> 0 and ``B`` 0 -> 1 at the ends.
    """

    total_time: float
    knots: np.ndarray = None

    def __post_init__(self):
        T = float(self.total_time)
        if not (np.isfinite(T) and T > 0):
            raise ScheduleError("total_time must be positive")
        object.__setattr__(self, "total_time", T)
        k = np.array([[0.0, 1.0, 0.0], [T, 0.0, 1.0]] if self.knots is None else self.knots,
                     dtype=float)
        if k.ndim != 2 or k.shape[1] != 3 or k.shape[0] < 2:
            raise ScheduleError("knots must be a list of [t, a, b] rows (at least two)")
        if not np.all(np.isfinite(k)):
            raise ScheduleError("knots must be finite")
        if k[0, 0] != 0.0 or k[-1, 0] != T:
            raise ScheduleError("knot times must start at 0 and end at total_time")
        if np.any(np.diff(k[:, 0]) <= 0):
            raise ScheduleError("knot times must be strictly increasing")
        if (k[0, 1], k[0, 2], k[-1, 1], k[-1, 2]) != (1.0, 0.0, 0.0, 1.0):
            raise ScheduleError("envelopes must satisfy A(0)=1, B(0)=0, A(T)=0, B(T)=1")
        k.setflags(write=False)
        object.__setattr__(self, "knots", k)

    @classmethod
    def linear(cls, total_time):
        return cls(total_time)

    @property
    def is_linear(self):
        return self.knots.shape[0] == 2

    @property
    def times(self):
        return self.knots[:, 0]

    def a(self, t):
        return np.interp(t, self.knots[:, 0], self.knots[:, 1])

    def b(self, t):
        return np.interp(t, self.knots[:, 0], self.knots[:, 2])

    def b_integral(self, t0=0.0, t1=None):
        """``int_t0^t1 B(t) dt`` (exact for piecewise-linear envelopes)."""
        t1 = self.total_time if t1 is None else t1
        grid = np.unique(np.concatenate([[t0, t1], self.times[(self.times > t0) & (self.times < t1)]]))
        return float(np.trapezoid(self.b(grid), grid))

    def to_json(self):
        return "linear" if self.is_linear else self.knots.tolist()

    def segments(self, t0=0.0, t1=None):
        """Sub-intervals of ``[t0, t1]`` split at the knots."""
        t1 = self.total_time if t1 is None else t1
        inner = self.times[(self.times > t0) & (self.times < t1)]
        edges = np.concatenate([[t0], inner, [t1]])
        return list(zip(edges[:-1], edges[1:]))


# -- anneal specification ----------------------------------------------------


@dataclass(frozen=True)
class AnnealSpec:
    """Problem, transverse field and schedule of one anneal.

    With ``ramp_bias`` (default) the biases follow ``B(t)`` like the
    couplings; otherwise they are applied at full strength throughout.
    ``noise`` is an :class:`rydanneal.evolve.NoiseModel` or None.
    """

    problem: IsingProblem
    b_x: float
    schedule: Schedule
    noise: object = None
    ramp_bias: bool = True
    _diag: tuple = field(default=None, init=False, repr=False, compare=False)

    def __post_init__(self):
        if not (np.isfinite(self.b_x) and self.b_x > 0):
            raise ProblemError("b_x must be positive")
        _check_n(self.problem.n)
        object.__setattr__(self, "b_x", float(self.b_x))

    @property
    def n(self):
        return self.problem.n

    @property
    def total_time(self):
        return self.schedule.total_time

    def diagonals(self, problem=None):
        """``(d_ramp, d_fixed)``: diagonal parts scaled by ``B(t)`` and held constant."""
        p = self.problem if problem is None else problem
        hz = p.bias_diagonal()
        zz = p.coupling_diagonal()
        if self.ramp_bias:
            return hz + zz, np.zeros_like(hz)
        return zz, hz

    def to_json(self):
        return {
            "problem": self.problem.to_json(),
            "b_x_khz": self.b_x,
            "t_total_us": self.total_time,
            "schedule": self.schedule.to_json(),
            "noise": None if self.noise is None else self.noise.to_json(),
            "ramp_bias": self.ramp_bias,
        }

    @classmethod
    def from_json(cls, doc):
        if isinstance(doc, (str, Path)):
            doc = json.loads(Path(doc).read_text())
        from .evolve import NoiseModel

        prob = problem_from_json(doc["problem"])
        if not isinstance(prob, IsingProblem):
            prob = qubo_to_ising(prob)
        T = float(doc["t_total_us"])
        shape = doc.get("schedule", "linear")
        sched = Schedule(T) if shape == "linear" else Schedule(T, shape)
        noise = doc.get("noise")
        return cls(prob, float(doc["b_x_khz"]), sched,
                   None if noise is None else NoiseModel.from_json(noise),
                   bool(doc.get("ramp_bias", True)))


def h_of_t(spec: AnnealSpec, t, dense=None):
    """``A(t) H_B + B(t) H_P`` (biases constant if ``spec.ramp_bias`` is off)."""
    T = spec.total_time
    if not 0.0 <= t <= T:
        raise ScheduleError(f"t={t} outside [0, {T}]")
    a = float(spec.schedule.a(t))
    b = float(spec.schedule.b(t))
    d_ramp, d_fixed = spec.diagonals()
    n = spec.n
    idx = np.arange(1 << n)
    rows = np.concatenate([np.repeat(idx, n), idx])
    cols = np.concatenate([(idx[:, None] ^ (1 << np.arange(n))[None, :]).reshape(-1), idx])
    vals = np.concatenate([np.full(n << n, -a * spec.b_x), b * d_ramp + d_fixed])
    return SparseOperator.from_triplets(n, rows, cols, vals, dense)
