"""Compiled loops of the finite-volume solver.

Arrays carry ghost cells: ``W`` has shape ``(n + 2*ng, 5)``, interior cells
are ``ng .. ng+n-1``.  Per-cell work (wave speeds, Newton solves) runs in
``prange`` loops with no cross-cell reductions, so results do not depend on
the number of threads.
"""

from __future__ import annotations

import math

import numpy as np
from numba import njit, prange

from .model import _bed_flux_coefficients, _bedload, _density, _source, _transport_matrix
from .params import K_H_MIN, K_PSI

# Shu-Osher form of the four-stage, third-order SSP Runge-Kutta method:
# stage[s+1] = sum_j ALPHA[s, j] * stage[j] + BETA[s] * dt * L(stage[s])
SSPRK34_ALPHA = np.array(
    [
        [1.0, 0.0, 0.0, 0.0],
        [0.0, 1.0, 0.0, 0.0],
        [2.0 / 3.0, 0.0, 1.0 / 3.0, 0.0],
        [0.0, 0.0, 0.0, 1.0],
    ]
)
SSPRK34_BETA = np.array([0.5, 0.5, 1.0 / 6.0, 0.5])

NEWTON_FD_STEP = 1e-8


@njit(cache=True, error_model="numpy")
def _char_poly_coeffs(m):
    """det(l I - m) = l^5 + c1 l^4 + ... + c5 for the sparsity pattern of the transport matrix."""
    a21 = m[1, 0]
    a22 = m[1, 1]
    a23 = m[1, 2]
    a24 = m[1, 3]
    a25 = m[1, 4]
    a31 = m[2, 0]
    a32 = m[2, 1]
    a33 = m[2, 2]
    a34 = m[2, 3]
    a41 = m[3, 0]
    a42 = m[3, 1]
    a44 = m[3, 3]
    d1 = m[4, 0]
    d2 = m[4, 1]
    d3 = m[4, 2]
    d4 = m[4, 3]
    c1 = -(a22 + a33 + a44)
    c2 = -a21 - a23 * a32 - a24 * a42 - a25 * d2 + a33 * a44 + a22 * a33 + a22 * a44
    c3 = (
        a21 * a33 + a21 * a44 - a23 * a31 + a23 * a32 * a44 - a23 * a34 * a42
        + a24 * a33 * a42 - a24 * a41 - a25 * a32 * d3 + a25 * a33 * d2
        - a25 * a42 * d4 + a25 * a44 * d2 - a25 * d1 - a22 * a33 * a44
    )
    c4 = (
        -a21 * a33 * a44 + a23 * a31 * a44 - a23 * a34 * a41 + a24 * a33 * a41
        - a25 * a31 * d3 + a25 * a32 * a44 * d3 + a25 * a33 * a42 * d4
        - a25 * a33 * a44 * d2 + a25 * a33 * d1 - a25 * a34 * a42 * d3
        - a25 * a41 * d4 + a25 * a44 * d1
    )
    c5 = a25 * (a31 * a44 * d3 + a33 * a41 * d4 - a33 * a44 * d1 - a34 * a41 * d3)
    return c1, c2, c3, c4, c5


@njit(cache=True, error_model="numpy")
def _largest_real_root(c1, c2, c3, c4, c5):
    """Largest root of a monic quintic whose roots are all real.

    Laguerre iteration started above the Cauchy bound converges
    monotonically to the largest root for real-rooted polynomials.
    """
    x = 1.0 + max(abs(c1), abs(c2), abs(c3), abs(c4), abs(c5))
    for _ in range(100):
        p = ((((x + c1) * x + c2) * x + c3) * x + c4) * x + c5
        if p == 0.0:
            break
        dp = (((5.0 * x + 4.0 * c1) * x + 3.0 * c2) * x + 2.0 * c3) * x + c4
        d2p = ((20.0 * x + 12.0 * c1) * x + 6.0 * c2) * x + 2.0 * c3
        G = dp / p
        H = G * G - d2p / p
        disc = 4.0 * (5.0 * H - G * G)
        root = math.sqrt(disc) if disc > 0.0 else 0.0
        den = G + root if G >= 0.0 else G - root
        if den == 0.0:
            break
        step = 5.0 / den
        x -= step
        if abs(step) <= 1e-14 * (1.0 + abs(x)):
            break
    return x


@njit(cache=True, error_model="numpy")
def _spectral_radius(w, k, m):
    _transport_matrix(w, k, m)
    c1, c2, c3, c4, c5 = _char_poly_coeffs(m)
    hi = _largest_real_root(c1, c2, c3, c4, c5)
    lo = -_largest_real_root(-c1, c2, -c3, c4, -c5)
    return max(abs(hi), abs(lo))


@njit(cache=True, parallel=True, error_model="numpy")
def cell_radii(W, k, lo, hi, out, mats):
    """Spectral radius of ``A`` in cells ``lo .. hi-1``; ``mats[i]`` is scratch."""
    for i in prange(lo, hi):
        out[i] = _spectral_radius(W[i], k, mats[i])


@njit(cache=True, error_model="numpy")
def fill_ghosts(W, ng, periodic):
    n = W.shape[0] - 2 * ng
    for g in range(ng):
        for c in range(5):
            if periodic:
                W[g, c] = W[n + g, c]
                W[ng + n + g, c] = W[ng + g, c]
            else:
                W[g, c] = W[ng, c]
                W[ng + n + g, c] = W[ng + n - 1, c]


@njit(cache=True, error_model="numpy")
def _exact_fluxes(w, k):
    """Fluxes of the three rows that are in conservation form: mass, suspended sediment, bed."""
    h = w[0]
    u = w[1] / h
    c = w[3] / h
    u_b = (w[1] + w[2]) / h
    return w[1], w[3] * u, _bedload(u_b, _density(c, k), k) / (1.0 - k[K_PSI])


@njit(cache=True, error_model="numpy")
def _bed_active(w, k):
    d_h, d_q, d_c = _bed_flux_coefficients(w, k)
    return d_q != 0.0


@njit(cache=True, parallel=True, error_model="numpy")
def transport_rhs(W, k, dx, ng, radius, fluct_minus, fluct_plus, out, mats, fresh_radii=False):
    """dW/dt of the interior cells for the fluctuation scheme.

    At the interface between cells j and j+1 the fluctuation ``F`` uses
    ``A(midpoint) dW`` for the momentum and moment rows and exact flux jumps
    for the three conservative rows.  Rusanov dissipation acts on the full
    jump where bedload is active on either side; over an immobile bed it acts
    on ``(h + h_b, hu_m, h alpha_1, hc_m)`` so that lake-at-rest is exact.
    """
    n = W.shape[0] - 2 * ng
    if not fresh_radii:
        cell_radii(W, k, ng - 1, ng + n + 1, radius, mats)
    for j in prange(ng - 1, ng + n):
        wl = W[j]
        wr = W[j + 1]
        # fm[j] holds the midpoint state until it is overwritten below
        mid = fluct_minus[j]
        for c in range(5):
            mid[c] = 0.5 * (wl[c] + wr[c])
        m = mats[j]
        _transport_matrix(mid, k, m)
        fl1, fl4, fl5 = _exact_fluxes(wl, k)
        fr1, fr4, fr5 = _exact_fluxes(wr, k)
        d0 = wr[0] - wl[0]
        d1 = wr[1] - wl[1]
        d2 = wr[2] - wl[2]
        d3 = wr[3] - wl[3]
        d4 = wr[4] - wl[4]
        f0 = fr1 - fl1
        f1 = m[1, 0] * d0 + m[1, 1] * d1 + m[1, 2] * d2 + m[1, 3] * d3 + m[1, 4] * d4
        f2 = m[2, 0] * d0 + m[2, 1] * d1 + m[2, 2] * d2 + m[2, 3] * d3
        f3 = fr4 - fl4
        f4 = fr5 - fl5
        alpha = max(radius[j], radius[j + 1])
        q0 = d0
        q4 = d4
        if not (_bed_active(wl, k) or _bed_active(wr, k)):
            # immobile bed: dissipate the free surface, not the depth
            q0 = d0 + d4
            q4 = 0.0
        fm = fluct_minus[j]
        fp = fluct_plus[j]
        fm[0] = 0.5 * (f0 - alpha * q0)
        fp[0] = 0.5 * (f0 + alpha * q0)
        fm[1] = 0.5 * (f1 - alpha * d1)
        fp[1] = 0.5 * (f1 + alpha * d1)
        fm[2] = 0.5 * (f2 - alpha * d2)
        fp[2] = 0.5 * (f2 + alpha * d2)
        fm[3] = 0.5 * (f3 - alpha * d3)
        fp[3] = 0.5 * (f3 + alpha * d3)
        fm[4] = 0.5 * (f4 - alpha * q4)
        fp[4] = 0.5 * (f4 + alpha * q4)
    for i in prange(ng, ng + n):
        for c in range(5):
            out[i, c] = -(fluct_plus[i - 1, c] + fluct_minus[i, c]) / dx


@njit(cache=True, error_model="numpy")
def _first_dry(W, ng, h_min):
    n = W.shape[0] - 2 * ng
    for i in range(ng, ng + n):
        if not W[i, 0] >= h_min:
            return i - ng
    return -1


@njit(cache=True, error_model="numpy")
def ssp_rk_step(W, k, dx, dt, ng, periodic, alpha, beta, stages, rhs, radius, fm, fp, mats,
                fresh_radii=False):
    """One explicit SSP Runge-Kutta step of the transport operator, in place.

    ``fresh_radii`` says ``radius`` already holds the wave speeds of ``W``
    (ghosts filled), so the first stage can skip recomputing them.
    Returns the interior index of the first cell with h below h_min, or -1.
    """
    n_st = beta.shape[0]
    n_tot = W.shape[0]
    stages[0, :, :] = W
    for s in range(n_st):
        fill_ghosts(stages[s], ng, periodic)
        transport_rhs(stages[s], k, dx, ng, radius, fm, fp, rhs, mats, fresh_radii and s == 0)
        target = stages[s + 1]
        bdt = beta[s] * dt
        cur = stages[s]
        for i in range(ng, n_tot - ng):
            for c in range(5):
                # rows of alpha sum to one, so mix as increments on the current
                # stage; a steady state then stays bit-for-bit steady
                base = cur[i, c]
                acc = 0.0
                for j in range(s):
                    a = alpha[s, j]
                    if a != 0.0:
                        acc += a * (stages[j, i, c] - base)
                target[i, c] = base + acc + bdt * rhs[i, c]
        bad = _first_dry(target, ng, k[K_H_MIN])
        if bad >= 0:
            return bad
    W[:, :] = stages[n_st]
    fill_ghosts(W, ng, periodic)
    return -1


@njit(cache=True, error_model="numpy")
def _solve5(a, b, x):
    """Gaussian elimination with partial pivoting; a and b are overwritten."""
    n = 5
    for col in range(n):
        piv = col
        best = abs(a[col, col])
        for r in range(col + 1, n):
            if abs(a[r, col]) > best:
                best = abs(a[r, col])
                piv = r
        if best == 0.0:
            return False
        if piv != col:
            for c in range(n):
                tmp = a[col, c]
                a[col, c] = a[piv, c]
                a[piv, c] = tmp
            tmp = b[col]
            b[col] = b[piv]
            b[piv] = tmp
        for r in range(col + 1, n):
            f = a[r, col] / a[col, col]
            if f != 0.0:
                for c in range(col, n):
                    a[r, c] -= f * a[col, c]
                b[r] -= f * b[col]
    for r in range(n - 1, -1, -1):
        s = b[r]
        for c in range(r + 1, n):
            s -= a[r, c] * x[c]
        x[r] = s / a[r, r]
    return True


@njit(cache=True, error_model="numpy")
def _norm_inf(v):
    s = 0.0
    for x in v:
        if abs(x) > s:
            s = abs(x)
    return s


@njit(cache=True, error_model="numpy")
def newton_cell(w, k, dt, mode, tol, max_iter, w_old, s, sp, wp, jac, res, delta):
    """Implicit Euler ``w = w_old + dt S(w)`` for one cell, in place.

    Returns the number of Newton updates, or -1 on failure.
    """
    h_min = k[K_H_MIN]
    w_old[:] = w
    target = tol * (1.0 + _norm_inf(w_old))
    for it in range(max_iter + 1):
        if not w[0] >= h_min:
            return -1
        _source(w, k, mode, s)
        for c in range(5):
            res[c] = w[c] - w_old[c] - dt * s[c]
        if _norm_inf(res) <= target:
            return it
        if it == max_iter:
            return -1
        # forward differences, reusing S(w) from the residual
        for j in range(5):
            hj = NEWTON_FD_STEP * max(abs(w[j]), w[0])
            wp[:] = w
            wp[j] += hj
            _source(wp, k, mode, sp)
            inv = 1.0 / (wp[j] - w[j])
            for r in range(5):
                jac[r, j] = -dt * (sp[r] - s[r]) * inv
            jac[j, j] += 1.0
        if not _solve5(jac, res, delta):
            return -1
        for c in range(5):
            w[c] -= delta[c]
        if not math.isfinite(_norm_inf(w)):
            return -1
    return -1


@njit(cache=True, parallel=True, error_model="numpy")
def source_step(W, k, dt, ng, mode, tol, max_iter, cm_max, iters, clamp, vecs, mats):
    """Per-cell implicit Euler on the source; ``clamp`` receives the c_m correction applied.

    ``vecs[i]`` (at least 6 x 5) and ``mats[i]`` are per-cell scratch.
    """
    n = W.shape[0] - 2 * ng
    for i in prange(ng, ng + n):
        v = vecs[i]
        w = W[i]
        iters[i - ng] = newton_cell(w, k, dt, mode, tol, max_iter, v[0], v[1], v[2], v[3],
                                    mats[i], v[4], v[5])
        clamp[i - ng] = 0.0
        if iters[i - ng] >= 0:
            if w[3] < 0.0:
                clamp[i - ng] = -w[3]
                w[3] = 0.0
            elif w[3] > cm_max * w[0]:
                clamp[i - ng] = w[3] - cm_max * w[0]
                w[3] = cm_max * w[0]
