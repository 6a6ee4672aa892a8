"""Time evolution: closed Schrodinger dynamics, the scattering master
equation in leak-resolved block form, and a trajectory sampler.

Scattering model. Atom ``i`` leaves the qubit subspace at rate
``gamma_i(t) = 2 pi * gamma_max * profile(t)`` through the jumps
``|L><0|_i`` and ``|L><1|_i``. Because both jumps share one rate, the
no-jump evolution is Hermitian up to a state-independent damping, and the
density matrix splits into blocks ``rho_S`` labelled by the set ``S`` of
leaked atoms, each acting on the remaining atoms only:

    d rho_S/dt = -i[H_S, rho_S] - sum_{i not in S} gamma_i rho_S
                 + sum_{j in S} gamma_j Tr_j rho_{S - j}

``H_S`` keeps the terms of ``H(t)`` that touch no leaked atom. At readout a
leaked atom reports 1 with probability ``readout_split``.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .hamiltonian import AnnealSpec
from .ising import IsingProblem, bits_to_str, brute_force_ground, index_to_bits

MASTER_EQUATION_MAX_QUBITS = 7

PROFILES = {"schedule": 0, "constant": 1}


class IntegrationError(RuntimeError):
    """Integrator failure or violated conservation law."""


@dataclass(frozen=True)
class NoiseModel:
    """Rydberg scattering: peak rate ``gamma_max_khz`` (gamma/2pi, per atom)."""

    gamma_max_khz: float = 0.1
    time_profile: str = "schedule"
    readout_split: float = 7.0 / 16.0

    def __post_init__(self):
        if not (math.isfinite(self.gamma_max_khz) and self.gamma_max_khz >= 0):
            raise ValueError("gamma_max_khz must be finite and >= 0")
        if self.time_profile not in PROFILES:
            raise ValueError(f"time_profile must be one of {sorted(PROFILES)}")
        if not 0.0 <= self.readout_split <= 1.0:
            raise ValueError("readout_split must lie in [0, 1]")

    @property
    def is_off(self):
        return self.gamma_max_khz == 0.0

    def rate_per_us(self):
        return kernels.TWO_PI_KHZ_US * self.gamma_max_khz

    def to_json(self):
        return {"gamma_max_khz": self.gamma_max_khz, "time_profile": self.time_profile,
                "readout_split": self.readout_split}

    @classmethod
    def from_json(cls, doc):
        return cls(float(doc.get("gamma_max_khz", 0.1)), doc.get("time_profile", "schedule"),
                   float(doc.get("readout_split", 7.0 / 16.0)))


NOISELESS = NoiseModel(0.0)


@dataclass(frozen=True)
class IntegratorConfig:
    rel_tol: float = 1e-8
    abs_tol: float = 1e-10
    max_step_us: float = math.inf
    max_steps: int = 5_000_000
    use_numba: bool = None

    def __post_init__(self):
        if not (self.rel_tol > 0 and self.abs_tol > 0):
            raise ValueError("tolerances must be positive")
        if not self.max_step_us > 0:
            raise ValueError("max_step_us must be positive")

    def backend(self):
        return kernels.select(self.use_numba)

    def to_json(self):
        return {"rel_tol": self.rel_tol, "abs_tol": self.abs_tol,
                "max_step_us": None if math.isinf(self.max_step_us) else self.max_step_us,
                "use_numba": kernels.USE_NUMBA if self.use_numba is None else bool(self.use_numba)}


@dataclass
class Stats:
    n_accepted: int = 0
    n_rejected: int = 0
    n_eval: int = 0
    n_retries: int = 0
    tol_scale: float = 1.0

    def add(self, other):
        self.n_accepted += other.n_accepted
        self.n_rejected += other.n_rejected
        self.n_eval += other.n_eval
        self.n_retries += other.n_retries
        self.tol_scale = min(self.tol_scale, other.tol_scale)

    def to_json(self):
        return {"n_accepted": self.n_accepted, "n_rejected": self.n_rejected,
                "n_eval": self.n_eval, "n_retries": self.n_retries, "tol_scale": self.tol_scale}


@dataclass
class QuantumState:
    """Final state of an anneal.

    ``blocks[S]`` is the (unnormalised) state of the atoms not in the leak
    mask ``S``: a vector when ``pure`` (only ``S = 0`` then), a density
    matrix otherwise.
    """

    n: int
    blocks: dict
    pure: bool
    stats: Stats = field(default_factory=Stats)

    @classmethod
    def from_vector(cls, psi, stats=None):
        n = int(psi.shape[0]).bit_length() - 1
        return cls(n, {0: psi}, True, stats or Stats())

    def block_trace(self, mask):
        b = self.blocks[mask]
        return float(np.vdot(b, b).real) if self.pure else float(np.trace(b).real)

    @property
    def coherent_weight(self):
        return self.block_trace(0)

    @property
    def leaked_mass(self):
        return sum(self.block_trace(m) for m in self.blocks if m != 0)

    def total_trace(self):
        return sum(self.block_trace(m) for m in self.blocks)

    def leak_ledger(self):
        """Per-atom probability of having scattered."""
        out = np.zeros(self.n)
        for m in self.blocks:
            for i in range(self.n):
                if (m >> i) & 1:
                    out[i] += self.block_trace(m)
        return out

    def vector(self):
        if not self.pure:
            raise ValueError("state is mixed")
        return self.blocks[0]


def readout(state: QuantumState, readout_split=7.0 / 16.0):
    """Probability of every logical bitstring, in basis-index order.

    Coherent atoms are measured in the computational basis; each leaked atom
    reads 1 with probability ``readout_split``.
    """
    n = state.n
    dist = np.zeros(1 << n)
    for mask, blk in state.blocks.items():
        pops = np.abs(blk) ** 2 if state.pure else np.real(np.diagonal(blk)).copy()
        active = [i for i in range(n) if not (mask >> i) & 1]
        leaked = [i for i in range(n) if (mask >> i) & 1]
        _scatter_into(dist, pops, active, leaked, readout_split)
    return dist


def _scatter_into(dist, pops, active, leaked, split):
    sub = np.arange(pops.shape[0])
    base = np.zeros(pops.shape[0], dtype=np.int64)
    for pos, atom in enumerate(active):
        base |= ((sub >> pos) & 1) << atom
    weights = [(0, 1.0)]
    for atom in leaked:
        weights = [(x | (bit << atom), w * (split if bit else 1.0 - split))
                   for x, w in weights for bit in (0, 1)]
    for x, w in weights:
        if w:
            np.add.at(dist, base | x, w * pops)


def distribution_dict(dist):
    n = int(dist.shape[0]).bit_length() - 1
    return {bits_to_str(index_to_bits(k, n)): float(dist[k]) for k in range(dist.shape[0])}


# -- integration helpers -----------------------------------------------------


def _knot_arrays(spec):
    k = spec.schedule.knots
    return (np.ascontiguousarray(k[:, 0]), np.ascontiguousarray(k[:, 1]),
            np.ascontiguousarray(k[:, 2]))


def _integrate_raw(driver, y, p, spec, t0, t1, rtol, atol, cfg, stats):
    for a, b in spec.schedule.segments(t0, t1):
        span = b - a
        y, status, na, nr, ne = driver(a, b, y, p, rtol, atol,
                                       min(cfg.max_step_us, span), cfg.max_steps)
        stats.add(Stats(na, nr, ne))
        if status == kernels.STATUS_STEP_UNDERFLOW:
            raise IntegrationError(f"step size underflow at t in [{a}, {b}] us")
        if status == kernels.STATUS_MAX_STEPS:
            raise IntegrationError(f"max_steps={cfg.max_steps} exhausted in [{a}, {b}] us")
        if not np.all(np.isfinite(y)):
            raise IntegrationError("non-finite state")
    return y


def _integrate(driver, y, p, spec, t0, t1, cfg, stats, pure=False, scale=1.0):
    """Integrate over ``[t0, t1]``, splitting at schedule knots.

    For state vectors the norm is a free error gauge. Global error of the
    stepper is proportional to its tolerance, so when the norm drifts by more
    than ``10 * rel_tol`` the interval is redone with the local tolerances
    scaled down by the observed excess.
    """
    if not pure:
        stats.tol_scale = min(stats.tol_scale, scale)
        return _integrate_raw(driver, y, p, spec, t0, t1, cfg.rel_tol * scale,
                              cfg.abs_tol * scale, cfg, stats)
    target = 10.0 * cfg.rel_tol
    n0 = float(np.vdot(y, y).real)
    for _ in range(_NORM_RETRIES):
        out = _integrate_raw(driver, y, p, spec, t0, t1, cfg.rel_tol * scale,
                             cfg.abs_tol * scale, cfg, stats)
        drift = abs(float(np.vdot(out, out).real) - n0) / n0
        if drift <= target:
            stats.tol_scale = min(stats.tol_scale, scale)
            return out
        stats.n_retries += 1
        scale *= max(min(0.5 * target / drift, 0.5), 1e-4)
    raise IntegrationError(f"norm drift {drift:.3e} exceeds {target:.3e} after "
                           f"{_NORM_RETRIES} attempts")


_NORM_RETRIES = 4


def _closed_params(spec, problem=None):
    p = spec.problem if problem is None else problem
    kt, ka, kb = _knot_arrays(spec)
    d_ramp, d_fixed = spec.diagonals(p)
    return (p.n, spec.b_x, kt, ka, kb, d_ramp, d_fixed)


def plus_state(n):
    return np.full(1 << n, 1.0 / math.sqrt(1 << n), dtype=np.complex128)


def evolve_closed(spec: AnnealSpec, cfg: IntegratorConfig = IntegratorConfig(), psi0=None):
    """Schrodinger evolution from ``|+>^n`` over ``[0, T]``."""
    driver, _ = cfg.backend()
    psi = plus_state(spec.n) if psi0 is None else np.asarray(psi0, dtype=np.complex128).copy()
    stats = Stats()
    psi = _integrate(driver, psi, _closed_params(spec), spec, 0.0, spec.total_time, cfg, stats,
                     pure=True)
    return QuantumState.from_vector(psi, stats)


# -- master equation ---------------------------------------------------------


def _popcount(x):
    return bin(x).count("1")


def _restricted(problem, active):
    if not active:
        return None
    return problem.restricted(active)


class _BlockLayout:
    """Packing of all leak blocks into one flat complex vector."""

    def __init__(self, spec: AnnealSpec):
        n = spec.n
        self.n = n
        masks = np.arange(1 << n)
        self.mask = masks.astype(np.int64)
        self.m = np.array([n - _popcount(s) for s in masks], dtype=np.int64)
        self.dim = (1 << self.m).astype(np.int64)
        self.off = np.concatenate([[0], np.cumsum(self.dim * self.dim)[:-1]]).astype(np.int64)
        self.size = int(np.sum(self.dim * self.dim))
        self.doff = np.concatenate([[0], np.cumsum(self.dim)[:-1]]).astype(np.int64)
        d_ramp, d_fixed = [], []
        for s in masks:
            active = [i for i in range(n) if not (s >> i) & 1]
            sub = _restricted(spec.problem, active)
            if sub is None:
                d_ramp.append(np.zeros(1))
                d_fixed.append(np.zeros(1))
            else:
                r, f = spec.diagonals(sub)
                d_ramp.append(r)
                d_fixed.append(f)
        self.d_ramp = np.concatenate(d_ramp)
        self.d_fixed = np.concatenate(d_fixed)
        tgt, frm, pos, atom = [], [], [], []
        for s in masks:
            for j in range(n):
                if (s >> j) & 1:
                    f = s & ~(1 << j)
                    tgt.append(s)
                    frm.append(f)
                    pos.append(sum(1 for i in range(j) if not (f >> i) & 1))
                    atom.append(j)
        as_i = lambda v: np.array(v, dtype=np.int64)  # noqa: E731
        self.src = (as_i(tgt), as_i(frm), as_i(pos), as_i(atom))

    def block(self, y, s):
        d = int(self.dim[s])
        return y[self.off[s]:self.off[s] + d * d].reshape(d, d)

    def params(self, spec, noise):
        kt, ka, kb = _knot_arrays(spec)
        gamma = np.full(self.n, noise.rate_per_us())
        return (self.n, spec.b_x, kt, ka, kb, gamma, PROFILES[noise.time_profile],
                self.mask, self.off, self.dim, self.m, self.doff, self.d_ramp, self.d_fixed,
                *self.src)


def evolve_open(spec: AnnealSpec, noise: NoiseModel = None, cfg: IntegratorConfig = IntegratorConfig(),
                positivity_tol=1e-7):
    """Integrate the leak-resolved master equation from ``|+><+|``."""
    noise = spec.noise if noise is None else noise
    noise = NOISELESS if noise is None else noise
    if spec.n > MASTER_EQUATION_MAX_QUBITS:
        raise ValueError(f"master equation limited to n <= {MASTER_EQUATION_MAX_QUBITS}; "
                         "use evolve_trajectories")
    # the trace is conserved exactly by the stepper, so borrow the tolerance
    # scale that the closed system needs to keep its norm
    scale = evolve_closed(spec, cfg).stats.tol_scale
    _, driver = cfg.backend()
    lay = _BlockLayout(spec)
    y = np.zeros(lay.size, dtype=np.complex128)
    psi = plus_state(spec.n)
    y[:psi.shape[0] ** 2] = np.outer(psi, psi.conj()).reshape(-1)
    stats = Stats()
    y = _integrate(driver, y, lay.params(spec, noise), spec, 0.0, spec.total_time, cfg, stats,
                   scale=scale)
    blocks = {}
    for s in range(1 << spec.n):
        b = lay.block(y, s)
        b = 0.5 * (b + b.conj().T)
        lo = float(np.linalg.eigvalsh(b)[0])
        if lo < -positivity_tol:
            raise IntegrationError(f"block {s} lost positivity: eigenvalue {lo:.3e}")
        blocks[s] = b
    return QuantumState(spec.n, blocks, False, stats)


# -- trajectories ------------------------------------------------------------


def _profile_inverse(spec, profile, target):
    """Smallest ``t`` with ``int_0^t profile = target``, or None past ``T``."""
    sched = spec.schedule
    if profile == "constant":
        return target if target < sched.total_time else None
    acc = 0.0
    for (t0, t1) in sched.segments():
        b0, b1 = float(sched.b(t0)), float(sched.b(t1))
        dt = t1 - t0
        seg = 0.5 * (b0 + b1) * dt
        if acc + seg >= target:
            r = target - acc
            if r <= 0.0:
                return t0
            slope = (b1 - b0) / dt
            disc = max(b0 * b0 + 2.0 * slope * r, 0.0)
            denom = b0 + math.sqrt(disc)
            tau = r / b0 if slope == 0.0 else 2.0 * r / denom
            return min(t0 + tau, t1)
        acc += seg
    return None


def _sample_leaks(spec, noise, rng):
    """Leak time of every atom (``inf`` if it survives), drawn upfront.

    The jump rate does not depend on the state, so jump times follow an
    inhomogeneous Poisson law and can be drawn before integrating.
    """
    rate = noise.rate_per_us()
    times = np.full(spec.n, math.inf)
    draws = rng.standard_exponential(spec.n)
    if rate == 0.0:
        return times
    for i in range(spec.n):
        t = _profile_inverse(spec, noise.time_profile, draws[i] / rate)
        if t is not None:
            times[i] = t
    return times


@dataclass
class TrajectoryResult:
    """Sampled histogram (``counts``) and the trajectory-averaged distribution."""

    counts: np.ndarray
    mean_distribution: np.ndarray
    n_traj: int
    n_jumps: int
    n_leaked_traj: int
    stats: Stats
    max_norm_drift: float

    @property
    def histogram(self):
        return self.counts / self.n_traj


class _TrajectoryRunner:
    """Shared, read-only data for the trajectories of one anneal.

    The jump-free evolution is computed once: its endpoint serves every
    trajectory without jumps, and states stored on a checkpoint grid let a
    trajectory start integrating from just before its first jump.
    """

    CHECKPOINTS = 64

    def __init__(self, spec, noise, cfg):
        self.spec = spec
        self.noise = noise
        self.cfg = cfg
        self.driver, _ = cfg.backend()
        self._params = {}
        self.stats = Stats()
        closed = evolve_closed(spec, cfg)
        self.final_nojump = closed.vector()
        self.stats.add(closed.stats)
        self.scale = closed.stats.tol_scale
        self.grid = np.linspace(0.0, spec.total_time, self.CHECKPOINTS + 1)
        self.states = [plus_state(spec.n)]
        if not noise.is_off:
            for t0, t1 in zip(self.grid[:-1], self.grid[1:]):
                self.states.append(_integrate(self.driver, self.states[-1],
                                              self.params(0), spec, t0, t1, cfg, self.stats,
                                              scale=self.scale))

    def params(self, mask):
        p = self._params.get(mask)
        if p is None:
            active = [i for i in range(self.spec.n) if not (mask >> i) & 1]
            p = _closed_params(self.spec, self.spec.problem.restricted(active))
            self._params[mask] = p
        return p

    def _advance(self, psi, mask, t0, t1, stats):
        return _integrate(self.driver, psi, self.params(mask), self.spec, t0, t1,
                          self.cfg, stats, pure=True, scale=self.scale)

    def run_one(self, seed_seq):
        rng = np.random.Generator(np.random.PCG64(seed_seq))
        spec, n = self.spec, self.spec.n
        leaks = _sample_leaks(spec, self.noise, rng)
        order = [i for i in np.argsort(leaks, kind="stable") if np.isfinite(leaks[i])]
        stats = Stats()
        if not order:
            psi = self.final_nojump
            mask = 0
        else:
            k = int(np.searchsorted(self.grid, leaks[order[0]], side="right")) - 1
            psi = self.states[k]
            mask, t = 0, float(self.grid[k])
            active = list(range(n))
            for atom in order:
                t_jump = float(leaks[atom])
                if t_jump > t:
                    psi = self._advance(psi, mask, t, t_jump, stats)
                t = t_jump
                psi = psi / np.linalg.norm(psi)
                pos = active.index(atom)
                psi = _measure_out(psi, len(active), pos, rng)
                active.pop(pos)
                mask |= 1 << atom
            if active and t < spec.total_time:
                psi = self._advance(psi, mask, t, spec.total_time, stats)
        norm2 = float(np.vdot(psi, psi).real)
        drift = abs(norm2 - 1.0)
        pops = np.abs(psi) ** 2 / norm2
        active = [i for i in range(n) if not (mask >> i) & 1]
        leaked = [i for i in range(n) if (mask >> i) & 1]
        dist = np.zeros(1 << n)
        _scatter_into(dist, pops, active, leaked, self.noise.readout_split)
        # one sampled outcome
        k = int(rng.choice(pops.shape[0], p=pops / pops.sum()))
        out = 0
        for pos, atom in enumerate(active):
            out |= ((k >> pos) & 1) << atom
        for atom in leaked:
            if rng.random() < self.noise.readout_split:
                out |= 1 << atom
        return out, dist, len(leaked), stats, drift


def _measure_out(psi, m, pos, rng):
    """Projectively measure qubit ``pos`` of an ``m``-qubit state and trace it out."""
    t = psi.reshape((2,) * m) if m else psi
    ax = m - 1 - pos
    p1 = float(np.sum(np.abs(np.take(t, 1, axis=ax)) ** 2))
    p0 = float(np.sum(np.abs(np.take(t, 0, axis=ax)) ** 2))
    bit = 1 if rng.random() * (p0 + p1) < p1 else 0
    sub = np.ascontiguousarray(np.take(t, bit, axis=ax)).reshape(-1)
    nrm = math.sqrt(p1 if bit else p0)
    return sub / nrm if nrm > 0 else sub


def evolve_trajectories(spec: AnnealSpec, noise: NoiseModel = None,
                        cfg: IntegratorConfig = IntegratorConfig(), n_traj=1000, seed=0,
                        threads=1):
    """Monte Carlo unravelling of :func:`evolve_open`.

    Trajectory ``k`` draws from its own stream ``SeedSequence(seed).spawn``,
    so the result does not depend on ``threads``.
    """
    noise = spec.noise if noise is None else noise
    noise = NOISELESS if noise is None else noise
    if n_traj < 1:
        raise ValueError("n_traj must be >= 1")
    runner = _TrajectoryRunner(spec, noise, cfg)
    seqs = np.random.SeedSequence(seed).spawn(n_traj)
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(runner.run_one, seqs, chunksize=64))
    else:
        results = [runner.run_one(s) for s in seqs]
    counts = np.zeros(1 << spec.n, dtype=np.int64)
    mean = np.zeros(1 << spec.n)
    stats = Stats()
    stats.add(runner.stats)
    jumps = 0
    hit = 0
    drift = 0.0
    for out, dist, nj, st, dr in results:
        counts[out] += 1
        mean += dist
        jumps += nj
        hit += nj > 0
        stats.add(st)
        drift = max(drift, dr)
    return TrajectoryResult(counts, mean / n_traj, n_traj, jumps, hit, stats, drift)


# -- driver ------------------------------------------------------------------


@dataclass
class AnnealResult:
    spec: AnnealSpec
    noise: NoiseModel
    method: str
    distribution: np.ndarray
    success_probability: float
    ground: str
    leaked_mass: float
    norm_drift: float
    stats: Stats
    extra: dict = field(default_factory=dict)

    def to_json(self):
        return {
            "spec": self.spec.to_json(),
            "noise": self.noise.to_json(),
            "method": self.method,
            "ground_state": self.ground,
            "final_distribution": distribution_dict(self.distribution),
            "success_probability": float(self.success_probability),
            "leaked_mass": float(self.leaked_mass),
            "integrator_stats": {**self.stats.to_json(), "norm_drift": float(self.norm_drift),
                                 **self.extra},
        }


def run_anneal(spec: AnnealSpec, noise: NoiseModel = None, cfg: IntegratorConfig = IntegratorConfig(),
               method="auto", n_traj=10_000, seed=0, threads=1) -> AnnealResult:
    """Anneal and score against the brute-force ground state.

    ``method`` is ``closed``, ``master``, ``trajectories`` or ``auto``
    (closed when noise is off, master equation up to
    ``MASTER_EQUATION_MAX_QUBITS``, trajectories beyond).
    """
    noise = spec.noise if noise is None else noise
    noise = NOISELESS if noise is None else noise
    if method == "auto":
        if noise.is_off:
            method = "closed"
        elif spec.n <= MASTER_EQUATION_MAX_QUBITS:
            method = "master"
        else:
            method = "trajectories"
    gs = brute_force_ground(spec.problem)
    extra = {}
    if method == "closed":
        st = evolve_closed(spec, cfg)
        dist = readout(st)
        leaked = 0.0
        drift = abs(st.total_trace() - 1.0)
        stats = st.stats
    elif method == "master":
        st = evolve_open(spec, noise, cfg)
        dist = readout(st, noise.readout_split)
        leaked = st.leaked_mass
        drift = abs(st.total_trace() - 1.0)
        stats = st.stats
    elif method == "trajectories":
        tr = evolve_trajectories(spec, noise, cfg, n_traj, seed, threads)
        dist = tr.histogram
        leaked = tr.n_leaked_traj / tr.n_traj
        drift = tr.max_norm_drift
        stats = tr.stats
        extra = {"n_traj": n_traj, "seed": seed, "n_jumps": tr.n_jumps}
    else:
        raise ValueError(f"unknown method '{method}'")
    success = float(dist[gs.config.index])
    return AnnealResult(spec, noise, method, dist, success, str(gs.config), leaked, drift, stats,
                        extra)


def ground_probability(dist, problem: IsingProblem):
    return float(dist[brute_force_ground(problem).config.index])
