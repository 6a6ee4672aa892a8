"""Hot numerical kernels: Hamiltonian/Lindbladian right-hand sides and an
adaptive Dormand-Prince 5(4) stepper.

Each right-hand side exists twice: an explicit-loop version that numba
compiles, and a vectorised numpy version used when numba is disabled. Both
share the signature ``rhs(t, y, p, out)`` where ``p`` is a tuple of arrays
and scalars packed by :mod:`rydanneal.evolve`. The stepper itself is written
in the numba-compatible subset and is compiled only on the numba path.

Units: time in microseconds, energies in kHz (ordinary frequency), so the
Schrodinger equation reads ``dpsi/dt = -i * TWO_PI_KHZ_US * H psi``.
"""

import types

import numpy as np

from ._accel import HAVE_NUMBA, USE_NUMBA, jitable, njit

TWO_PI_KHZ_US = 2.0 * np.pi * 1e-3

STATUS_OK = 0
STATUS_STEP_UNDERFLOW = 1
STATUS_MAX_STEPS = 2

# Dormand-Prince 5(4) tableau
_C2, _C3, _C4, _C5 = 1.0 / 5.0, 3.0 / 10.0, 4.0 / 5.0, 8.0 / 9.0
_A21 = 1.0 / 5.0
_A31, _A32 = 3.0 / 40.0, 9.0 / 40.0
_A41, _A42, _A43 = 44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0
_A51, _A52, _A53, _A54 = 19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0
_A61, _A62, _A63, _A64, _A65 = (
    9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0,
)
_B1, _B3, _B4, _B5, _B6 = 35.0 / 384.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0
_E1, _E3, _E4, _E5, _E6, _E7 = (
    71.0 / 57600.0, -71.0 / 16695.0, 71.0 / 1920.0, -17253.0 / 339200.0, 22.0 / 525.0, -1.0 / 40.0,
)


@jitable
def _err_norm(err, y, ynew, rtol, atol):
    sc = atol + rtol * np.maximum(np.abs(y), np.abs(ynew))
    r = np.abs(err) / sc
    return np.sqrt(np.mean(r * r))


@jitable
def _initial_h0(y0, f0, rtol, atol, span):
    sc = atol + rtol * np.abs(y0)
    d0 = np.sqrt(np.mean((np.abs(y0) / sc) ** 2))
    d1 = np.sqrt(np.mean((np.abs(f0) / sc) ** 2))
    if d0 < 1e-5 or d1 < 1e-5:
        h0 = 1e-6
    else:
        h0 = 0.01 * d0 / d1
    return min(h0, span), d1


@jitable
def _initial_h1(y0, f0, f1, h0, d1, rtol, atol, max_step, span):
    # second half of Hairer's starting-step heuristic
    sc = atol + rtol * np.abs(y0)
    d2 = np.sqrt(np.mean((np.abs(f1 - f0) / sc) ** 2)) / h0
    if max(d1, d2) <= 1e-15:
        h1 = max(1e-6, h0 * 1e-3)
    else:
        h1 = (0.01 / max(d1, d2)) ** 0.2
    return min(100.0 * h0, h1, max_step, span)


def _dopri5(t0, t1, y0, p, rtol, atol, max_step, max_steps):
    """Integrate ``y' = _RHS(t, y)`` from ``t0`` to ``t1``.

    Template: ``_RHS`` is bound per right-hand side by :func:`_bind`, so each
    compiled copy calls a fixed global and can be cached by numba.

    Returns ``(y, status, n_accepted, n_rejected, n_eval)``. A nonzero status
    means the integration stopped early; callers turn it into an exception.
    """
    y = y0.copy()
    k2 = np.empty_like(y)
    k3 = np.empty_like(y)
    k4 = np.empty_like(y)
    k5 = np.empty_like(y)
    k6 = np.empty_like(y)
    k7 = np.empty_like(y)
    span = t1 - t0
    if span <= 0.0:
        return y, STATUS_OK, 0, 0, 0
    k1 = np.empty_like(y)
    _RHS(t0, y, p, k1)
    h0, d1 = _initial_h0(y, k1, rtol, atol, span)
    _RHS(t0 + h0, y + h0 * k1, p, k2)
    h = _initial_h1(y, k1, k2, h0, d1, rtol, atol, max_step, span)
    n_eval = 2
    t = t0
    n_acc = 0
    n_rej = 0
    while t < t1:
        if n_acc + n_rej >= max_steps:
            return y, STATUS_MAX_STEPS, n_acc, n_rej, n_eval
        last = False
        if t + h >= t1 or (t1 - (t + h)) < 1e-12 * span:
            h = t1 - t
            last = True
        if h <= 1e-14 * max(abs(t), span):
            return y, STATUS_STEP_UNDERFLOW, n_acc, n_rej, n_eval

        _RHS(t + _C2 * h, y + h * _A21 * k1, p, k2)
        _RHS(t + _C3 * h, y + h * (_A31 * k1 + _A32 * k2), p, k3)
        _RHS(t + _C4 * h, y + h * (_A41 * k1 + _A42 * k2 + _A43 * k3), p, k4)
        _RHS(t + _C5 * h, y + h * (_A51 * k1 + _A52 * k2 + _A53 * k3 + _A54 * k4), p, k5)
        _RHS(t + h, y + h * (_A61 * k1 + _A62 * k2 + _A63 * k3 + _A64 * k4 + _A65 * k5), p, k6)
        ynew = y + h * (_B1 * k1 + _B3 * k3 + _B4 * k4 + _B5 * k5 + _B6 * k6)
        _RHS(t + h, ynew, p, k7)
        n_eval += 6
        err = h * (_E1 * k1 + _E3 * k3 + _E4 * k4 + _E5 * k5 + _E6 * k6 + _E7 * k7)
        en = _err_norm(err, y, ynew, rtol, atol)
        if en <= 1.0:
            t = t1 if last else t + h
            y = ynew
            k1, k7 = k7, k1
            n_acc += 1
            fac = 5.0 if en == 0.0 else min(5.0, max(0.2, 0.9 * en ** -0.2))
            h = min(h * fac, max_step)
        else:
            n_rej += 1
            h = h * max(0.2, 0.9 * en ** -0.2)
    return y, STATUS_OK, n_acc, n_rej, n_eval


# --------------------------------------------------------------------------
# Closed system: p = (n, bx, knot_t, knot_a, knot_b, diag_ramp, diag_fixed)


def closed_rhs_loop(t, y, p, out):
    n, bx, kt, ka, kb, d_ramp, d_fixed = p
    a = np.interp(t, kt, ka)
    b = np.interp(t, kt, kb)
    ax = -a * bx
    for k in range(y.shape[0]):
        sx = 0.0j
        for q in range(n):
            sx += y[k ^ (1 << q)]
        hk = ax * sx + (b * d_ramp[k] + d_fixed[k]) * y[k]
        out[k] = -1j * TWO_PI_KHZ_US * hk


def _flip_sum(psi, axes):
    acc = np.zeros_like(psi)
    for ax in axes:
        acc += np.flip(psi, axis=ax)
    return acc


def closed_rhs_numpy(t, y, p, out):
    n, bx, kt, ka, kb, d_ramp, d_fixed = p
    a = np.interp(t, kt, ka)
    b = np.interp(t, kt, kb)
    if n > 0:
        sx = _flip_sum(y.reshape((2,) * n), range(n)).reshape(-1)
    else:
        sx = np.zeros_like(y)
    out[:] = -1j * TWO_PI_KHZ_US * (-a * bx * sx + (b * d_ramp + d_fixed) * y)


# --------------------------------------------------------------------------
# Open system, block form. The density matrix is stored as one block per set
# of scattered atoms (bitmask); each block lives on the remaining atoms only.
# p = (n, bx, knot_t, knot_a, knot_b, gamma, profile_code,
#      blk_mask, blk_off, blk_dim, blk_m, blk_doff, d_ramp, d_fixed,
#      src_tgt, src_from, src_pos, src_atom)
# profile_code 0: rate follows B(t); 1: constant rate.


@jitable
def _insert_bit(x, pos, bit):
    low = x & ((1 << pos) - 1)
    return ((x >> pos) << (pos + 1)) | (bit << pos) | low


def open_rhs_loop(t, y, p, out):
    (n, bx, kt, ka, kb, gamma, profile_code, blk_mask, blk_off, blk_dim, blk_m,
     blk_doff, d_ramp, d_fixed, src_tgt, src_from, src_pos, src_atom) = p
    a = np.interp(t, kt, ka)
    b = np.interp(t, kt, kb)
    prof = b if profile_code == 0 else 1.0
    ax = -a * bx
    for s in range(blk_mask.shape[0]):
        off = blk_off[s]
        d = blk_dim[s]
        m = blk_m[s]
        doff = blk_doff[s]
        mask = blk_mask[s]
        decay = 0.0
        for i in range(n):
            if not (mask >> i) & 1:
                decay += gamma[i]
        decay *= prof
        for k in range(d):
            dk = b * d_ramp[doff + k] + d_fixed[doff + k]
            for l in range(d):
                dl = b * d_ramp[doff + l] + d_fixed[doff + l]
                rkl = y[off + k * d + l]
                sx = 0.0j
                for q in range(m):
                    sx += y[off + (k ^ (1 << q)) * d + l] - y[off + k * d + (l ^ (1 << q))]
                comm = (dk - dl) * rkl + ax * sx
                out[off + k * d + l] = -1j * TWO_PI_KHZ_US * comm - decay * rkl
    for e in range(src_tgt.shape[0]):
        tg = src_tgt[e]
        fr = src_from[e]
        pos = src_pos[e]
        rate = gamma[src_atom[e]] * prof
        dt_ = blk_dim[tg]
        df = blk_dim[fr]
        ot = blk_off[tg]
        of = blk_off[fr]
        for i in range(dt_):
            i0 = _insert_bit(i, pos, 0)
            i1 = _insert_bit(i, pos, 1)
            for j in range(dt_):
                j0 = _insert_bit(j, pos, 0)
                j1 = _insert_bit(j, pos, 1)
                out[ot + i * dt_ + j] += rate * (y[of + i0 * df + j0] + y[of + i1 * df + j1])


def open_rhs_numpy(t, y, p, out):
    (n, bx, kt, ka, kb, gamma, profile_code, blk_mask, blk_off, blk_dim, blk_m,
     blk_doff, d_ramp, d_fixed, src_tgt, src_from, src_pos, src_atom) = p
    a = np.interp(t, kt, ka)
    b = np.interp(t, kt, kb)
    prof = b if profile_code == 0 else 1.0
    for s in range(blk_mask.shape[0]):
        off, d, m, doff = blk_off[s], blk_dim[s], blk_m[s], blk_doff[s]
        rho = y[off:off + d * d]
        active = np.array([(blk_mask[s] >> i) & 1 == 0 for i in range(n)])
        decay = prof * gamma[active].sum()
        diag = b * d_ramp[doff:doff + d] + d_fixed[doff:doff + d]
        r2 = rho.reshape(d, d)
        comm = (diag[:, None] - diag[None, :]) * r2
        if m > 0:
            rt = rho.reshape((2,) * (2 * m))
            sx = _flip_sum(rt, range(m)) - _flip_sum(rt, range(m, 2 * m))
            comm = comm - a * bx * sx.reshape(d, d)
        out[off:off + d * d] = (-1j * TWO_PI_KHZ_US * comm - decay * r2).reshape(-1)
    for e in range(src_tgt.shape[0]):
        tg, fr, pos = src_tgt[e], src_from[e], src_pos[e]
        rate = gamma[src_atom[e]] * prof
        dt_, df = blk_dim[tg], blk_dim[fr]
        mf = blk_m[fr]
        rf = y[blk_off[fr]:blk_off[fr] + df * df].reshape((2,) * (2 * mf))
        # bit ``pos`` is axis mf-1-pos on the row side (C order, LSB last)
        red = np.trace(rf, axis1=mf - 1 - pos, axis2=2 * mf - 1 - pos)
        out[blk_off[tg]:blk_off[tg] + dt_ * dt_] += rate * red.reshape(-1)


# --------------------------------------------------------------------------
# Dispatch


def _bind(rhs, name):
    """Copy of the stepper template whose global ``_RHS`` is ``rhs``."""
    g = dict(_dopri5.__globals__)
    g["_RHS"] = rhs
    fn = types.FunctionType(_dopri5.__code__, g, name)
    fn.__qualname__ = name
    fn.__doc__ = _dopri5.__doc__
    return fn


def dopri5(rhs, t0, t1, y0, p, rtol, atol, max_step, max_steps):
    """Uncompiled stepper for an arbitrary ``rhs(t, y, p, out)``."""
    return _bind(rhs, "dopri5_any")(t0, t1, y0, p, rtol, atol, max_step, max_steps)


closed_driver_py = _bind(closed_rhs_numpy, "closed_driver_py")
open_driver_py = _bind(open_rhs_numpy, "open_driver_py")

if HAVE_NUMBA:
    closed_rhs_jit = njit(closed_rhs_loop)
    open_rhs_jit = njit(open_rhs_loop)
    closed_driver_jit = njit(_bind(closed_rhs_jit, "closed_driver_jit"))
    open_driver_jit = njit(_bind(open_rhs_jit, "open_driver_jit"))
else:  # pragma: no cover
    closed_rhs_jit = open_rhs_jit = closed_driver_jit = open_driver_jit = None


def select(use_numba=None):
    """Return ``(closed_driver, open_driver)`` for the requested backend.

    A driver is called as ``driver(t0, t1, y0, p, rtol, atol, max_step,
    max_steps)`` and returns what :func:`dopri5` returns.
    """
    if use_numba is None:
        use_numba = USE_NUMBA
    if use_numba:
        if not HAVE_NUMBA:
            raise RuntimeError("numba backend requested but numba is not installed")
        return closed_driver_jit, open_driver_jit
    return closed_driver_py, open_driver_py
