"""Alternating least squares sweep kernels.

Two functionally identical implementations live here: a loop-nest version
compiled by numba when available, and a vectorized numpy fallback.  Both run
the same algorithm with the same update order, normalization, ridge fallback
rule, and stopping logic, so they agree to floating-point reordering error.

A sweep updates the three factor matrices in turn by solving the regularized
normal equations on the L x L Gram matrix (the column-wise product of the two
fixed factors' Grams, which equals the Gram of their column-wise Kronecker
product), then rescales the first two factors to unit column norms, absorbing
the scales into the third, and finally evaluates the relative fit from the
explicit residual.  The explicit residual costs the same order as the sweep
itself and stays accurate when the fit approaches machine precision, where
the cheaper expanded-inner-product shortcut cancels catastrophically.
"""

from __future__ import annotations

import numpy as np
import scipy.linalg

from . import backend

# Relative pivot floor below which a Cholesky factorization is treated as
# failed, triggering the ridge fallback.
_PIVOT_RTOL = 1e-14
# Ridge magnitudes (relative to the mean Gram diagonal) tried after a failed
# factorization; both failing marks the run fatal.
_RIDGE_1 = 1e-12
_RIDGE_2 = 1e-6
# Floor used when the convergence test divides by the previous fit.
_FIT_FLOOR = 1e-30

if backend.numba_available():
    from numba import njit

    def _maybe_jit(func):
        return njit(cache=True)(func)
else:  # pragma: no cover - exercised only without numba installed
    def _maybe_jit(func):
        return func


@_maybe_jit
def _cholesky_lower(g, lo):
    # In-place lower Cholesky of hermitian g; False when a pivot falls under
    # the relative floor.
    n = g.shape[0]
    maxd = 0.0
    for i in range(n):
        d = g[i, i].real
        if d > maxd:
            maxd = d
    if maxd <= 0.0:
        return False
    tiny = _PIVOT_RTOL * maxd
    for i in range(n):
        acc = g[i, i].real
        for p in range(i):
            acc -= lo[i, p].real ** 2 + lo[i, p].imag ** 2
        if acc <= tiny:
            return False
        lii = np.sqrt(acc)
        lo[i, i] = lii
        for j in range(i + 1, n):
            s = g[j, i]
            for p in range(i):
                s -= lo[j, p] * np.conj(lo[i, p])
            lo[j, i] = s / lii
    return True


@_maybe_jit
def _chol_solve_rows(lo, rhs_rows, out):
    # Solves g @ x_j = rhs_rows[j] for every row j, writing x_j to out[j].
    n_rows, n = rhs_rows.shape
    w = np.empty(n, dtype=np.complex128)
    for j in range(n_rows):
        for i in range(n):
            s = rhs_rows[j, i]
            for p in range(i):
                s -= lo[i, p] * w[p]
            w[i] = s / lo[i, i]
        for i in range(n - 1, -1, -1):
            s = w[i]
            for p in range(i + 1, n):
                s -= np.conj(lo[p, i]) * w[p]
            w[i] = s / lo[i, i].real
        for i in range(n):
            out[j, i] = w[i]


@_maybe_jit
def _gram_hadamard(f1, f2, mu, g):
    # g = (f1^H f1) * (f2^H f2) elementwise, plus mu on the diagonal.
    n = f1.shape[1]
    for r1 in range(n):
        for r2 in range(n):
            s1 = 0.0 + 0.0j
            for i in range(f1.shape[0]):
                s1 += np.conj(f1[i, r1]) * f1[i, r2]
            s2 = 0.0 + 0.0j
            for i in range(f2.shape[0]):
                s2 += np.conj(f2[i, r1]) * f2[i, r2]
            g[r1, r2] = s1 * s2
        g[r1, r1] += mu
    return g


@_maybe_jit
def _solve_factor(gram, rhs_rows, out, lo):
    # Returns 0 on a clean solve, 1 when a ridge was needed, 2 when even the
    # ridged system would not factor.
    n = gram.shape[0]
    if _cholesky_lower(gram, lo):
        _chol_solve_rows(lo, rhs_rows, out)
        return 0
    scale = 0.0
    for i in range(n):
        scale += gram[i, i].real
    scale = scale / n if scale > 0.0 else 1.0
    for i in range(n):
        gram[i, i] += _RIDGE_1 * scale
    if _cholesky_lower(gram, lo):
        _chol_solve_rows(lo, rhs_rows, out)
        return 1
    for i in range(n):
        gram[i, i] += _RIDGE_2 * scale
    if _cholesky_lower(gram, lo):
        _chol_solve_rows(lo, rhs_rows, out)
        return 1
    return 2


@_maybe_jit
def _mttkrp_mode1(y, b, c, out):
    m, t, k = y.shape
    n = b.shape[1]
    for i in range(m):
        for r in range(n):
            out[i, r] = 0.0 + 0.0j
        for j in range(t):
            for p in range(k):
                v = y[i, j, p]
                for r in range(n):
                    out[i, r] += v * np.conj(b[j, r]) * np.conj(c[p, r])


@_maybe_jit
def _mttkrp_mode2(y, a, c, out):
    m, t, k = y.shape
    n = a.shape[1]
    for j in range(t):
        for r in range(n):
            out[j, r] = 0.0 + 0.0j
    for i in range(m):
        for j in range(t):
            for p in range(k):
                v = y[i, j, p]
                for r in range(n):
                    out[j, r] += v * np.conj(a[i, r]) * np.conj(c[p, r])


@_maybe_jit
def _mttkrp_mode3(y, a, b, out):
    m, t, k = y.shape
    n = a.shape[1]
    for p in range(k):
        for r in range(n):
            out[p, r] = 0.0 + 0.0j
    for i in range(m):
        for j in range(t):
            for p in range(k):
                v = y[i, j, p]
                for r in range(n):
                    out[p, r] += v * np.conj(a[i, r]) * np.conj(b[j, r])


@_maybe_jit
def _normalize_columns(a, b, c):
    # Unit-normalize columns of a and b, absorbing the scales into c.  A
    # column too small to normalize is left alone and contributes no scale,
    # which keeps the triple product unchanged in every branch.
    n = a.shape[1]
    for r in range(n):
        na = 0.0
        for i in range(a.shape[0]):
            na += a[i, r].real ** 2 + a[i, r].imag ** 2
        na = np.sqrt(na)
        if na > 1e-300:
            inv = 1.0 / na
            for i in range(a.shape[0]):
                a[i, r] *= inv
        else:
            na = 1.0
        nb = 0.0
        for i in range(b.shape[0]):
            nb += b[i, r].real ** 2 + b[i, r].imag ** 2
        nb = np.sqrt(nb)
        if nb > 1e-300:
            inv = 1.0 / nb
            for i in range(b.shape[0]):
                b[i, r] *= inv
        else:
            nb = 1.0
        sc = na * nb
        for i in range(c.shape[0]):
            c[i, r] *= sc


@_maybe_jit
def _fit_residual(y, a, b, c, ynorm):
    m, t, k = y.shape
    n = a.shape[1]
    acc = 0.0
    for i in range(m):
        for j in range(t):
            for p in range(k):
                s = 0.0 + 0.0j
                for r in range(n):
                    s += a[i, r] * b[j, r] * c[p, r]
                d = y[i, j, p] - s
                acc += d.real * d.real + d.imag * d.imag
    return np.sqrt(acc) / ynorm


@_maybe_jit
def als_run_loops(y, a, b, c, mu, max_sweeps, rel_tol, fit_stop, normalize):
    """Loop-nest ALS runner; compiled by numba when the backend allows.

    Factors are updated in place.  Returns (fits, converged, ridge_used,
    fatal) where fits holds the relative fit after every completed sweep.
    """
    m, t, k = y.shape
    n = a.shape[1]
    ynorm2 = 0.0
    for i in range(m):
        for j in range(t):
            for p in range(k):
                v = y[i, j, p]
                ynorm2 += v.real * v.real + v.imag * v.imag
    ynorm = np.sqrt(ynorm2)
    fits = np.empty(max_sweeps, dtype=np.float64)
    gram = np.empty((n, n), dtype=np.complex128)
    lo = np.zeros((n, n), dtype=np.complex128)
    r1 = np.empty((m, n), dtype=np.complex128)
    r2 = np.empty((t, n), dtype=np.complex128)
    r3 = np.empty((k, n), dtype=np.complex128)
    ridge = False
    fatal = False
    converged = False
    n_sweeps = 0
    e_prev = 0.0
    for sweep in range(max_sweeps):
        _gram_hadamard(c, b, mu, gram)
        _mttkrp_mode1(y, b, c, r1)
        st = _solve_factor(gram, r1, a, lo)
        if st == 2:
            fatal = True
            break
        if st == 1:
            ridge = True
        _gram_hadamard(c, a, mu, gram)
        _mttkrp_mode2(y, a, c, r2)
        st = _solve_factor(gram, r2, b, lo)
        if st == 2:
            fatal = True
            break
        if st == 1:
            ridge = True
        _gram_hadamard(b, a, mu, gram)
        _mttkrp_mode3(y, a, b, r3)
        st = _solve_factor(gram, r3, c, lo)
        if st == 2:
            fatal = True
            break
        if st == 1:
            ridge = True
        if normalize:
            _normalize_columns(a, b, c)
        e = _fit_residual(y, a, b, c, ynorm)
        fits[n_sweeps] = e
        n_sweeps += 1
        if e <= fit_stop:
            converged = True
            break
        if sweep > 0:
            floor = e_prev if e_prev > _FIT_FLOOR else _FIT_FLOOR
            if e_prev - e < rel_tol * floor:
                converged = True
                break
        e_prev = e
    return fits[:n_sweeps].copy(), converged, ridge, fatal


def _solve_factor_numpy(gram, rhs_rows):
    # Mirror of _solve_factor: same pivot rule (a Cholesky pivot under the
    # relative floor counts as failure) and the same ridge ladder.
    n = gram.shape[0]
    maxd = float(np.max(gram.diagonal().real, initial=0.0))
    scale = float(gram.diagonal().real.sum())
    scale = scale / n if scale > 0.0 else 1.0
    bumps = (0.0, _RIDGE_1 * scale, (_RIDGE_1 + _RIDGE_2) * scale)
    for attempt, bump in enumerate(bumps):
        g = gram if bump == 0.0 else gram + bump * np.eye(n)
        try:
            lo = np.linalg.cholesky(g)
        except np.linalg.LinAlgError:
            continue
        pivots = lo.diagonal().real ** 2
        if maxd > 0.0 and pivots.min() <= _PIVOT_RTOL * maxd:
            continue
        x = scipy.linalg.cho_solve((lo, True), rhs_rows.T).T
        return x, (0 if attempt == 0 else 1)
    return None, 2


def als_run_numpy(y, a, b, c, mu, max_sweeps, rel_tol, fit_stop,
                  normalize=True, half_sweep_fits=None):
    """Vectorized twin of :func:`als_run_loops`.

    Pass a list as ``half_sweep_fits`` to additionally record the relative
    fit after every individual factor update (debug instrumentation).
    """
    m, t, k = y.shape
    n = a.shape[1]
    ynorm = float(np.linalg.norm(y.ravel()))
    eye_mu = mu * np.eye(n)

    def fit_now():
        model = np.einsum("ir,jr,kr->ijk", a, b, c)
        return float(np.linalg.norm((y - model).ravel())) / ynorm

    fits = []
    ridge = False
    fatal = False
    converged = False
    e_prev = 0.0
    for sweep in range(max_sweeps):
        gram = (c.conj().T @ c) * (b.conj().T @ b) + eye_mu
        r1 = ((y.reshape(m * t, k) @ c.conj()).reshape(m, t, n)
              * b.conj()[None, :, :]).sum(axis=1)
        a, st = _step(gram, r1, a)
        if st == 2:
            fatal = True
            break
        ridge = ridge or st == 1
        if half_sweep_fits is not None:
            half_sweep_fits.append(fit_now())
        gram = (c.conj().T @ c) * (a.conj().T @ a) + eye_mu
        r2 = ((y.reshape(m * t, k) @ c.conj()).reshape(m, t, n)
              * a.conj()[:, None, :]).sum(axis=0)
        b, st = _step(gram, r2, b)
        if st == 2:
            fatal = True
            break
        ridge = ridge or st == 1
        if half_sweep_fits is not None:
            half_sweep_fits.append(fit_now())
        gram = (b.conj().T @ b) * (a.conj().T @ a) + eye_mu
        r3 = (np.tensordot(y, a.conj(), axes=(0, 0))
              * b.conj()[:, None, :]).sum(axis=0)
        c, st = _step(gram, r3, c)
        if st == 2:
            fatal = True
            break
        ridge = ridge or st == 1
        if half_sweep_fits is not None:
            half_sweep_fits.append(fit_now())
        if normalize:
            _normalize_numpy(a, b, c)
        e = fit_now()
        fits.append(e)
        if e <= fit_stop:
            converged = True
            break
        if sweep > 0:
            floor = e_prev if e_prev > _FIT_FLOOR else _FIT_FLOOR
            if e_prev - e < rel_tol * floor:
                converged = True
                break
        e_prev = e
    return (a, b, c, np.asarray(fits, dtype=float), converged, ridge, fatal)


def _step(gram, mttkrp, old):
    x, st = _solve_factor_numpy(gram, mttkrp)
    if x is None:
        return old, st
    return x, st


def _normalize_numpy(a, b, c):
    na = np.linalg.norm(a, axis=0)
    nb = np.linalg.norm(b, axis=0)
    ok_a = na > 1e-300
    ok_b = nb > 1e-300
    a[:, ok_a] /= na[ok_a]
    b[:, ok_b] /= nb[ok_b]
    c *= np.where(ok_a, na, 1.0) * np.where(ok_b, nb, 1.0)
