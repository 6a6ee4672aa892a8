"""QUBO and Ising problem instances, the exact QUBO -> Ising mapping, the
benchmark spin chain and a brute-force ground-state oracle.

Conventions
-----------
* Energies are in kHz (frequency units, h = 1).
* A configuration is a bitstring ``x_1 x_2 ... x_n``; bit value 1 is the
  sigma_z = +1 eigenstate, so the QUBO variable and the qubit bit coincide
  (``x_i -> (I + sigma_z)/2`` projects onto ``|1>``).
* In basis-state indices qubit 0 is the least significant bit:
  ``index = sum_i x_i << i``. Bitstrings are written qubit 0 first.
* Ising couplings are counted once per unordered pair:
  ``E(s) = sum_i h_i s_i + sum_{i<j} J_ij s_i s_j``.
"""

from __future__ import annotations

import json
from collections import deque
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

ENUMERATION_CAP = 12

CONVENTION = "bit_one_is_plus_one"
# |0> = |up> with sigma_z|up> = +|up>: same coefficients with the linear sign flipped
FLIPPED_CONVENTIONS = ("spin_up_is_plus_one", "bit_zero_is_plus_one")


class ProblemError(ValueError):
    """Invalid problem coefficients or parameters."""


class EnumerationCapError(ProblemError):
    """Instance too large for exhaustive enumeration."""


class FrustratedCouplingError(ProblemError):
    """No dressing assignment reproduces the requested coupling signs."""

    def __init__(self, edges):
        self.edges = sorted(edges)
        super().__init__(f"frustrated edges: {self.edges}")


def _frozen(a, dtype=float):
    a = np.array(a, dtype=dtype)
    a.setflags(write=False)
    return a


def _check_quadratic(mat, n, name):
    if mat.shape != (n, n):
        raise ProblemError(f"{name} must be {n}x{n}, got {mat.shape}")
    if not np.all(np.isfinite(mat)):
        raise ProblemError(f"{name} has non-finite entries")
    if np.any(np.diag(mat) != 0.0):
        raise ProblemError(f"{name} must have zero diagonal (fold x_i^2 = x_i into the linear terms)")
    if not np.array_equal(mat, mat.T):
        raise ProblemError(f"{name} must be symmetric")


def configurations(n):
    """All ``2**n`` configurations as an ``(2**n, n)`` 0/1 array in index order."""
    idx = np.arange(1 << n, dtype=np.int64)
    return ((idx[:, None] >> np.arange(n)) & 1).astype(np.int8)


def bits_to_str(bits):
    return "".join(str(int(b)) for b in bits)


def index_to_bits(index, n):
    return tuple((int(index) >> i) & 1 for i in range(n))


def bits_to_index(bits):
    return sum(int(b) << i for i, b in enumerate(bits))


@dataclass(frozen=True)
class SpinConfiguration:
    """A computational basis state. ``bits[i]`` is qubit ``i``; 1 means sigma_z = +1."""

    bits: tuple

    def __post_init__(self):
        bits = tuple(int(b) for b in self.bits)
        if any(b not in (0, 1) for b in bits):
            raise ProblemError(f"bits must be 0/1, got {self.bits}")
        object.__setattr__(self, "bits", bits)

    @classmethod
    def from_str(cls, s):
        return cls(tuple(int(c) for c in s))

    @property
    def n(self):
        return len(self.bits)

    @property
    def spins(self):
        return np.array([2 * b - 1 for b in self.bits], dtype=float)

    @property
    def index(self):
        return bits_to_index(self.bits)

    def __str__(self):
        return bits_to_str(self.bits)


@dataclass(frozen=True)
class QuboProblem:
    """``f(x) = sum_i linear_i x_i + sum_{i<j} quadratic_ij x_i x_j`` over x in {0,1}^n."""

    linear: np.ndarray
    quadratic: np.ndarray
    cap: int = ENUMERATION_CAP

    def __post_init__(self):
        lin = _frozen(self.linear)
        n = lin.shape[0]
        if lin.ndim != 1 or n < 1:
            raise ProblemError("linear must be a non-empty vector")
        if n > self.cap:
            raise EnumerationCapError(f"n={n} exceeds the enumeration cap {self.cap}")
        quad = _frozen(self.quadratic)
        _check_quadratic(quad, n, "quadratic")
        object.__setattr__(self, "linear", lin)
        object.__setattr__(self, "quadratic", quad)

    @property
    def n(self):
        return self.linear.shape[0]

    def energy(self, x):
        x = np.asarray(x, dtype=float)
        return float(self.linear @ x + 0.5 * x @ self.quadratic @ x)

    def energies(self):
        """``f`` for every configuration, in basis-index order."""
        x = configurations(self.n).astype(float)
        return x @ self.linear + 0.5 * np.einsum("ki,ij,kj->k", x, self.quadratic, x)


@dataclass(frozen=True)
class IsingProblem:
    """``E(s) = sum_i bias_i s_i + sum_{i<j} coupling_ij s_i s_j`` with s in {-1,+1}^n.

    ``energy_offset`` is the constant dropped by :func:`qubo_to_ising`, so that
    ``f(x) = E(2x - 1) + energy_offset``.
    """

    bias: np.ndarray
    coupling: np.ndarray
    energy_offset: float = 0.0
    cap: int = ENUMERATION_CAP

    def __post_init__(self):
        h = _frozen(self.bias)
        n = h.shape[0]
        if h.ndim != 1 or n < 1:
            raise ProblemError("bias must be a non-empty vector")
        if not np.all(np.isfinite(h)):
            raise ProblemError("bias has non-finite entries")
        if n > self.cap:
            raise EnumerationCapError(f"n={n} exceeds the enumeration cap {self.cap}")
        J = _frozen(self.coupling)
        _check_quadratic(J, n, "coupling")
        object.__setattr__(self, "bias", h)
        object.__setattr__(self, "coupling", J)
        object.__setattr__(self, "energy_offset", float(self.energy_offset))

    @property
    def n(self):
        return self.bias.shape[0]

    def edges(self):
        """Nonzero couplings as ``[(i, j, J_ij)]`` with ``i < j``."""
        i, j = np.nonzero(np.triu(self.coupling, 1))
        return [(int(a), int(b), float(self.coupling[a, b])) for a, b in zip(i, j)]

    def is_chain(self):
        return all(j - i == 1 for i, j, _ in self.edges())

    def energy(self, bits):
        """Ising energy (offset excluded) of a bit configuration."""
        s = 2.0 * np.asarray(bits, dtype=float) - 1.0
        return float(self.bias @ s + 0.5 * s @ self.coupling @ s)

    def bias_diagonal(self):
        s = 2.0 * configurations(self.n) - 1.0
        return s @ self.bias

    def coupling_diagonal(self):
        s = 2.0 * configurations(self.n) - 1.0
        return 0.5 * np.einsum("ki,ij,kj->k", s, self.coupling, s)

    def energies(self):
        """Ising energies (offset excluded) of every basis state, index order."""
        return self.bias_diagonal() + self.coupling_diagonal()

    def restricted(self, active):
        """Sub-problem on the atoms in ``active`` (terms touching others dropped)."""
        active = list(active)
        return IsingProblem(self.bias[active], self.coupling[np.ix_(active, active)], cap=self.cap)

    def __add__(self, other):
        return IsingProblem(self.bias + other.bias, self.coupling + other.coupling,
                            self.energy_offset + other.energy_offset, cap=max(self.cap, other.cap))

    # -- serialization ---------------------------------------------------

    def to_json(self):
        return {
            "kind": "ising",
            "n": self.n,
            "linear_khz": self.bias.tolist(),
            "quadratic_khz": self.coupling.tolist(),
            "energy_offset_khz": self.energy_offset,
            "convention": CONVENTION,
        }


def qubo_to_json(q):
    return {
        "kind": "qubo",
        "n": q.n,
        "linear_khz": q.linear.tolist(),
        "quadratic_khz": q.quadratic.tolist(),
        "convention": CONVENTION,
    }


def problem_from_json(doc, cap=ENUMERATION_CAP):
    """Parse a problem document into an :class:`IsingProblem` or :class:`QuboProblem`."""
    if isinstance(doc, (str, Path)):
        doc = json.loads(Path(doc).read_text())
    for key in ("n", "linear_khz", "quadratic_khz", "convention"):
        if key not in doc:
            raise ProblemError(f"problem document is missing '{key}'")
    conv = doc["convention"]
    if conv != CONVENTION and conv not in FLIPPED_CONVENTIONS:
        raise ProblemError(f"unknown convention '{conv}'")
    n = int(doc["n"])
    lin = np.asarray(doc["linear_khz"], dtype=float)
    quad = np.asarray(doc["quadratic_khz"], dtype=float)
    if lin.shape != (n,):
        raise ProblemError(f"linear_khz has length {lin.shape}, expected {n}")
    kind = doc.get("kind", "ising")
    if kind == "qubo":
        # binary variables: the spin convention only relabels the readout
        return QuboProblem(lin, quad, cap=cap)
    if kind != "ising":
        raise ProblemError(f"unknown problem kind '{kind}'")
    if conv in FLIPPED_CONVENTIONS:
        lin = -lin
    return IsingProblem(lin, quad, doc.get("energy_offset_khz", 0.0), cap=cap)


# -- operations -------------------------------------------------------------


def qubo_to_ising(q: QuboProblem) -> IsingProblem:
    """Substitute ``x_i -> (1 + s_i)/2``.

    Gives ``J~ = J/4``, ``h~_i = h_i/2 + sum_j J~_ij`` and the constant
    ``sum_i h_i/2 + sum_{i<j} J_ij/4`` in ``energy_offset``.
    """
    coupling = q.quadratic / 4.0
    bias = q.linear / 2.0 + coupling.sum(axis=1)
    offset = q.linear.sum() / 2.0 + np.triu(coupling, 1).sum()
    return IsingProblem(bias, coupling, float(offset), cap=q.cap)


def benchmark_chain(n, coupling_khz, delta_e_total_khz=None, *, delta_e_khz=None,
                    ising_coupling_scale=1.0, cap=ENUMERATION_CAP) -> IsingProblem:
    """Nearest-neighbour antiferromagnetic chain with equally spaced biases.

    ``h_i = i * dE`` for ``i = 1..n`` and ``J_<ij> = coupling_khz``. By
    default ``dE = delta_e_total_khz / n`` (so ``h_i = (i/n) * total``); pass
    ``delta_e_khz`` instead for a size-independent spacing. The Ising
    coupling is ``ising_coupling_scale * coupling_khz``.

    Raises ProblemError unless ``n * dE < coupling_khz``, the regime in which
    the ground state is the alternating pattern ending in 0.
    """
    if n < 2:
        raise ProblemError("benchmark chain needs n >= 2")
    if (delta_e_total_khz is None) == (delta_e_khz is None):
        raise ProblemError("give exactly one of delta_e_total_khz or delta_e_khz")
    de = delta_e_khz if delta_e_khz is not None else delta_e_total_khz / n
    if de <= 0 or coupling_khz <= 0:
        raise ProblemError("spacing and coupling must be positive")
    if not n * de < coupling_khz:
        raise ProblemError(f"n*dE = {n * de:g} kHz must be below J = {coupling_khz:g} kHz")
    bias = de * np.arange(1, n + 1)
    jt = ising_coupling_scale * coupling_khz
    coupling = np.zeros((n, n))
    i = np.arange(n - 1)
    coupling[i, i + 1] = coupling[i + 1, i] = jt
    return IsingProblem(bias, coupling, cap=cap)


def alternating_pattern(n):
    """Bitstring alternating 1/0 and ending in 0: ``1010..10`` or ``0101..10``."""
    return "".join("0" if (n - 1 - i) % 2 == 0 else "1" for i in range(n))


@dataclass(frozen=True)
class GroundState:
    config: SpinConfiguration
    energy: float
    gap: float
    degeneracy: int
    energies: np.ndarray = field(repr=False)


def brute_force_ground(p: IsingProblem, *, cap=None, chunk=1 << 16, rtol=1e-12) -> GroundState:
    """Exhaustive search over all ``2**n`` basis states.

    ``energy`` includes ``p.energy_offset``; ``gap`` is the distance to the
    next distinct energy level (0 when every state is degenerate). Ties go to
    the lexicographically smallest bitstring, and ``degeneracy`` counts them.
    The range is scanned in chunks; the result does not depend on ``chunk``.
    """
    cap = p.cap if cap is None else cap
    if p.n > cap:
        raise EnumerationCapError(f"n={p.n} exceeds the enumeration cap {cap}")
    dim = 1 << p.n
    parts = []
    for start in range(0, dim, chunk):
        idx = np.arange(start, min(dim, start + chunk), dtype=np.int64)
        s = 2.0 * ((idx[:, None] >> np.arange(p.n)) & 1) - 1.0
        parts.append(s @ p.bias + 0.5 * np.einsum("ki,ij,kj->k", s, p.coupling, s))
    e = np.concatenate(parts) + p.energy_offset
    scale = max(1.0, float(np.max(np.abs(e))))
    tol = rtol * scale
    emin = float(e.min())
    ties = np.nonzero(e <= emin + tol)[0]
    best = min(bits_to_str(index_to_bits(k, p.n)) for k in ties)
    rest = e[e > emin + tol]
    gap = float(rest.min() - emin) if rest.size else 0.0
    return GroundState(SpinConfiguration.from_str(best), emin, gap, int(ties.size), e)


@dataclass(frozen=True)
class DressingAssignment:
    """Which computational state each atom's Rydberg laser dresses.

    ``labels[i]`` is the dressed bit of atom ``i``; edge ``(i, j)`` then dresses
    the pair state ``|labels[i] labels[j]>``. ``compensation_khz`` is the
    single-qubit bias each atom needs to cancel the one-body part of the
    dressing shift.
    """

    labels: tuple
    edge_states: dict
    effective_signs: dict
    compensation_khz: np.ndarray


def sign_mask_for_couplings(p: IsingProblem, physical_j_khz=-470.0) -> DressingAssignment:
    """Choose dressed states so each edge gets the sign of ``p.coupling``.

    Dressing the pair state ``|d_i d_j>`` with shift ``J`` gives
    ``J |d_i d_j><d_i d_j| = J/4 (1 + a_i s_i + a_j s_j + a_i a_j s_i s_j)``
    with ``a = 2d - 1``. So the effective sign is ``sign(J) * a_i * a_j``: for
    ``J < 0`` an antiferromagnetic edge needs ``d_i != d_j`` and a
    ferromagnetic edge ``d_i == d_j``. The labels are found by propagating
    parities over each connected component; edges closing an inconsistent
    cycle are reported via FrustratedCouplingError.
    """
    if physical_j_khz == 0:
        raise ProblemError("physical coupling must be nonzero")
    n = p.n
    sj = 1 if physical_j_khz > 0 else -1
    adj = {i: [] for i in range(n)}
    for i, j, c in p.edges():
        # required a_i * a_j
        want = int(np.sign(c)) * sj
        adj[i].append((j, want))
        adj[j].append((i, want))
    a = [0] * n
    frustrated = set()
    for root in range(n):
        if a[root]:
            continue
        a[root] = 1  # dress |1> on the first atom of each component
        queue = deque([root])
        while queue:
            u = queue.popleft()
            for v, want in adj[u]:
                if not a[v]:
                    a[v] = want * a[u]
                    queue.append(v)
                elif a[u] * a[v] != want:
                    frustrated.add((min(u, v), max(u, v)))
    if frustrated:
        raise FrustratedCouplingError(frustrated)
    labels = tuple((x + 1) // 2 for x in a)
    edge_states = {}
    signs = {}
    comp = np.zeros(n)
    for i, j, c in p.edges():
        edge_states[(i, j)] = (labels[i], labels[j])
        signs[(i, j)] = sj * a[i] * a[j]
        scale = abs(c)
        # one-body part of |c| * 4 * projector, removed by a Raman detuning
        comp[i] -= sj * scale * a[i]
        comp[j] -= sj * scale * a[j]
    return DressingAssignment(labels, edge_states, signs, comp)


def random_ising(n, rng, *, scale_khz=200.0, density=1.0, cap=ENUMERATION_CAP):
    """Random instance with uniform coefficients in ``[-scale, scale]``."""
    h = rng.uniform(-scale_khz, scale_khz, n)
    J = np.zeros((n, n))
    for i in range(n):
        for j in range(i + 1, n):
            if rng.random() < density:
                J[i, j] = J[j, i] = rng.uniform(-scale_khz, scale_khz)
    return IsingProblem(h, J, cap=cap)

