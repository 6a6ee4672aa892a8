"""Reference implementations that share no code with the package.

Everything here is built from Kronecker products, ``itertools`` enumeration,
``mpmath`` and ``scipy.linalg.expm``.
"""

import itertools
from functools import reduce

import mpmath as mp
import numpy as np
from scipy.linalg import expm

W = 2 * np.pi * 1e-3  # kHz -> rad/us

SX = np.array([[0, 1], [1, 0]], dtype=complex)
SZ_BIT1_UP = np.diag([-1.0, 1.0]).astype(complex)  # basis (|0>, |1>), bit 1 is +1
I2 = np.eye(2, dtype=complex)


def kron_all(ops):
    # qubit 0 is the least significant bit, so it is the last Kronecker factor
    return reduce(np.kron, ops[::-1])


def site_op(op, i, n, eye=I2):
    ops = [eye] * n
    ops[i] = op
    return kron_all(ops)


def ising_energy_enum(h, J, bits):
    s = [2 * b - 1 for b in bits]
    n = len(s)
    e = sum(h[i] * s[i] for i in range(n))
    for i, j in itertools.combinations(range(n), 2):
        e += J[i][j] * s[i] * s[j]
    return e


def ground_by_enumeration(h, J):
    """(bitstring, energy, gap) by plain itertools enumeration."""
    n = len(h)
    rows = []
    for bits in itertools.product((0, 1), repeat=n):
        rows.append((ising_energy_enum(h, J, bits), "".join(map(str, bits))))
    rows.sort()
    e0 = rows[0][0]
    higher = [e for e, _ in rows if e > e0 + 1e-9 * max(1, abs(e0))]
    return rows[0][1], e0, (higher[0] - e0) if higher else 0.0


def h_problem_kron(h, J):
    n = len(h)
    H = np.zeros((1 << n, 1 << n), dtype=complex)
    for i in range(n):
        H += h[i] * site_op(SZ_BIT1_UP, i, n)
        for j in range(i + 1, n):
            if J[i][j]:
                H += J[i][j] * site_op(SZ_BIT1_UP, i, n) @ site_op(SZ_BIT1_UP, j, n)
    return H


def h_driver_kron(n, bx):
    return -bx * sum(site_op(SX, i, n) for i in range(n))


def j_coupling_mp(omega, delta, dps=60):
    """Closed-form coupling evaluated literally in high precision (D >= 0 branch, mirrored)."""
    with mp.workdps(dps):
        o, d = mp.mpf(omega), mp.mpf(delta)
        if d >= 0:
            return (d + mp.sqrt(d * d + 2 * o * o) - 2 * mp.sqrt(d * d + o * o)) / 2
        # the opposite detuning is the mirror image of the positive branch
        ad = -d
        return -(ad + mp.sqrt(ad * ad + 2 * o * o) - 2 * mp.sqrt(ad * ad + o * o)) / 2


def anneal_expm(h, J, bx, T, steps, ramp_bias=True):
    """Fixed-step exponential-midpoint propagation of H(t) = (1-s) H_B + s H_P."""
    n = len(h)
    HB = h_driver_kron(n, bx)
    HZ = h_problem_kron(h, np.zeros((n, n)))
    HZZ = h_problem_kron(np.zeros(n), J)
    psi = np.full(1 << n, 1 / np.sqrt(1 << n), dtype=complex)
    dt = T / steps
    for k in range(steps):
        s = (k + 0.5) / steps
        H = (1 - s) * HB + s * HZZ + (s if ramp_bias else 1.0) * HZ
        psi = expm(-1j * W * dt * H) @ psi
    return psi


# -- brute-force master equation on qubit + leaked level per atom ------------

E3 = np.eye(3, dtype=complex)


def _lift(op2):
    m = np.zeros((3, 3), dtype=complex)
    m[:2, :2] = op2
    return m


def lindblad_bruteforce(h, J, bx, T, gamma_khz, steps, profile="schedule"):
    """Full 3^n Lindblad evolution with jumps |L><q| on every atom.

    Returns the final density matrix in the base-3 product basis (digit 2 is
    the leaked level, atom 0 the least significant digit).
    """
    n = len(h)
    sx3, sz3 = _lift(SX), _lift(SZ_BIT1_UP)
    HB = -bx * sum(site_op(sx3, i, n, E3) for i in range(n))
    HZ = sum(h[i] * site_op(sz3, i, n, E3) for i in range(n))
    HZZ = sum(J[i][j] * site_op(sz3, i, n, E3) @ site_op(sz3, j, n, E3)
              for i in range(n) for j in range(i + 1, n) if J[i][j])
    if not np.ndim(HZZ):
        HZZ = np.zeros_like(HB)
    jumps = []
    for i in range(n):
        for q in (0, 1):
            L = np.zeros((3, 3), dtype=complex)
            L[2, q] = 1.0
            jumps.append(site_op(L, i, n, E3))
    d = 3 ** n
    eye = np.eye(d)

    def liouvillian(H, g):
        # row-major vec: vec(A X B) = (A kron B^T) vec(X)
        Lv = -1j * W * (np.kron(H, eye) - np.kron(eye, H.T))
        for L in jumps:
            LdL = L.conj().T @ L
            Lv += g * (np.kron(L, L.conj()) - 0.5 * np.kron(LdL, eye) - 0.5 * np.kron(eye, LdL.T))
        return Lv

    plus = np.zeros(3, dtype=complex)
    plus[:2] = 1 / np.sqrt(2)
    psi = kron_all([plus] * n)
    rho = np.outer(psi, psi.conj()).reshape(-1)
    dt = T / steps
    rate = W * gamma_khz
    for k in range(steps):
        s = (k + 0.5) / steps
        H = (1 - s) * HB + s * (HZ + HZZ)
        g = rate * (s if profile == "schedule" else 1.0)
        rho = expm(liouvillian(H, g) * dt) @ rho
    return rho.reshape(d, d)


def readout_3level(rho, n, split):
    """Logical distribution: leaked level reads 1 with probability ``split``."""
    pops = np.real(np.diag(rho))
    dist = np.zeros(1 << n)
    for idx, p in enumerate(pops):
        digits = [(idx // 3 ** i) % 3 for i in range(n)]
        outcomes = [(0, p)]
        for i, dgt in enumerate(digits):
            if dgt == 2:
                outcomes = [(x | (b << i), w * (split if b else 1 - split))
                            for x, w in outcomes for b in (0, 1)]
            else:
                outcomes = [(x | (dgt << i), w) for x, w in outcomes]
        for x, w in outcomes:
            dist[x] += w
    return dist
