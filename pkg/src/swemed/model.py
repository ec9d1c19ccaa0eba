"""Closures, source terms and transport matrix of the five-equation model.

The conservative state is ``w = (h, h*u_m, h*alpha_1, h*c_m, h_b)``.  Pointwise
physics lives in small ``numba`` kernels that take the flat parameter vector
``Parameters.kernel``; the public functions below are thin wrappers, and the
solver calls the same kernels from its compiled loops.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np
from numba import njit

from .params import (
    K_D_S,
    K_EPS,
    K_G,
    K_H_MIN,
    K_MU,
    K_NU,
    K_OMEGA0,
    K_PSI,
    K_Q,
    K_RHO_S,
    K_RHO_W,
    K_S_B,
    K_THETA_C,
    K_ZFAC,
    ClosureBundle,
    Parameters,
)

CM_MAX = 1.0 - 1e-12
E_S_LIMIT = 1.3 / 4.3


class SourceMode(enum.IntEnum):
    FULL = 0
    FAST = 1
    SLOW = 2


class InadmissibleState(ValueError):
    pass


@dataclass(frozen=True)
class Primitive:
    h: float
    u_m: float
    alpha_1: float
    c_m: float
    h_b: float

    @property
    def u_b(self) -> float:
        return self.u_m + self.alpha_1

    def density(self, p: Parameters) -> float:
        return mixture_density(self.c_m, p)

    def conservative(self) -> np.ndarray:
        h = self.h
        return np.array([h, h * self.u_m, h * self.alpha_1, h * self.c_m, self.h_b])

    @classmethod
    def from_conservative(cls, w) -> "Primitive":
        w = np.asarray(w, dtype=float)
        h = float(w[0])
        return cls(h, w[1] / h, w[2] / h, w[3] / h, float(w[4]))


def conservative(h, u_m, alpha_1, c_m, h_b) -> np.ndarray:
    return Primitive(h, u_m, alpha_1, c_m, h_b).conservative()


# --- scalar kernels -------------------------------------------------------


@njit(cache=True, error_model="numpy")
def _density(c_m, k):
    return k[K_RHO_W] + c_m * (k[K_RHO_S] - k[K_RHO_W])


@njit(cache=True, error_model="numpy")
def _shields(u_b, rho, k):
    return rho * k[K_EPS] * abs(u_b) * abs(u_b) / (k[K_G] * (k[K_RHO_S] - k[K_RHO_W]) * k[K_D_S])


@njit(cache=True, error_model="numpy")
def _mpm(theta, k):
    excess = theta - k[K_THETA_C]
    if excess <= 0.0:
        return 0.0
    return 8.0 * excess * math.sqrt(excess)


@njit(cache=True, error_model="numpy")
def _bedload(u_b, rho, k):
    if u_b == 0.0:
        return 0.0
    s = 1.0 if u_b > 0.0 else -1.0
    return s * k[K_Q] * _mpm(_shields(u_b, rho, k), k)


@njit(cache=True, error_model="numpy")
def _entrainment_coefficient(u_b, k):
    z = k[K_ZFAC] * abs(u_b)
    z5 = z * z * z * z * z
    return 1.3e-7 * z5 / (1.0 + 4.3e-7 * z5)


@njit(cache=True, error_model="numpy")
def _exchange(u_b, c_m, k):
    """Entrainment and deposition rates (E, D)."""
    w0 = k[K_OMEGA0]
    E = w0 * (1.0 - k[K_PSI]) * _entrainment_coefficient(u_b, k)
    D = w0 * k[K_S_B] * c_m
    return E, D


@njit(cache=True, error_model="numpy")
def _source(w, k, mode, out):
    h = w[0]
    u_m = w[1] / h
    a1 = w[2] / h
    c_m = w[3] / h
    u_b = u_m + a1
    psi1 = 1.0 - k[K_PSI]
    E, D = _exchange(u_b, c_m, k)
    relax = 4.0 * k[K_NU] / h * a1
    if mode == 0:
        Fb = (E - D) / psi1
        fric = k[K_EPS] * abs(u_b) * u_b
        out[0] = Fb
        out[1] = -fric + Fb * u_b
        out[2] = -3.0 * (fric + relax) + 2.0 * Fb * a1
        out[3] = E - D
        out[4] = -Fb
    elif mode == 1:
        mu = k[K_MU]
        if mu < 0.0:
            mu = k[K_EPS] * abs(u_b)
        Fe = E / psi1
        out[0] = Fe
        out[1] = -mu * u_b + Fe * u_b
        out[2] = -3.0 * (mu * u_b + relax) + 2.0 * Fe * a1
        out[3] = E
        out[4] = -Fe
    else:
        Fd = D / psi1
        out[0] = -Fd
        out[1] = -Fd * u_b
        out[2] = -2.0 * Fd * a1
        out[3] = -D
        out[4] = Fd


@njit(cache=True, error_model="numpy")
def _bed_flux_coefficients(w, k):
    """Derivatives of Q_b/(1-psi) with respect to (h, hu_m | h alpha_1, hc_m)."""
    h = w[0]
    u_b = (w[1] + w[2]) / h
    c_m = w[3] / h
    rho = _density(c_m, k)
    drho = k[K_RHO_S] - k[K_RHO_W]
    theta = _shields(u_b, rho, k)
    excess = theta - k[K_THETA_C]
    if excess <= 0.0 or u_b == 0.0:
        return 0.0, 0.0, 0.0
    s = 1.0 if u_b > 0.0 else -1.0
    d_q = (
        24.0 * k[K_Q] / (1.0 - k[K_PSI]) * s
        * rho * k[K_EPS] / (k[K_G] * drho * k[K_D_S])
        * math.sqrt(excess) * u_b / h
    )
    d_h = -u_b * (1.0 + c_m * drho / (2.0 * rho)) * d_q
    d_c = u_b * (drho / (2.0 * rho)) * d_q
    return d_h, d_q, d_c


@njit(cache=True, error_model="numpy")
def _transport_matrix(w, k, out):
    h = w[0]
    u = w[1] / h
    a = w[2] / h
    c = w[3] / h
    g = k[K_G]
    rho = _density(c, k)
    beta = g * h * (k[K_RHO_S] - k[K_RHO_W]) / (2.0 * rho)
    d_h, d_q, d_c = _bed_flux_coefficients(w, k)
    out[:, :] = 0.0
    out[0, 1] = 1.0
    out[1, 0] = g * h - u * u - a * a / 3.0 - c * beta
    out[1, 1] = 2.0 * u
    out[1, 2] = 2.0 * a / 3.0
    out[1, 3] = beta
    out[1, 4] = g * h
    out[2, 0] = -2.0 * a * u - c * beta
    out[2, 1] = 2.0 * a
    out[2, 2] = u
    out[2, 3] = beta
    out[3, 0] = -c * u
    out[3, 1] = c
    out[3, 3] = u
    out[4, 0] = d_h
    out[4, 1] = d_q
    out[4, 2] = d_q
    out[4, 3] = d_c


# --- public API -----------------------------------------------------------


def _check_state(w, p: Parameters) -> np.ndarray:
    w = np.asarray(w, dtype=float)
    if w.shape != (5,):
        raise InadmissibleState(f"state must have 5 components, got shape {w.shape}")
    if not np.all(np.isfinite(w)):
        raise InadmissibleState(f"state has non-finite entries: {w}")
    if w[0] < p.h_min:
        raise InadmissibleState(f"h = {w[0]!r} below h_min = {p.h_min!r}")
    return w


def mixture_density(c_m: float, p: Parameters) -> float:
    return float(_density(float(c_m), p.kernel))


def shields_parameter(u_b: float, rho: float, p: Parameters) -> float:
    return float(_shields(float(u_b), float(rho), p.kernel))


def mpm_capacity(theta: float, p: Parameters) -> float:
    """Meyer-Peter-Muller transport capacity ``8 (theta - theta_c)_+^{3/2}``."""
    return float(_mpm(float(theta), p.kernel))


def bedload_discharge(u_b: float, rho: float, p: Parameters) -> float:
    return float(_bedload(float(u_b), float(rho), p.kernel))


def entrainment_coefficient(u_b: float, p: Parameters, cb: ClosureBundle | None = None) -> float:
    if cb is None:
        return float(_entrainment_coefficient(float(u_b), p.kernel))
    if cb.omega_0 <= 0:
        return E_S_LIMIT if u_b != 0 else 0.0
    z = cb.gamma_1 * math.sqrt(p.c_D) * abs(u_b) * cb.R_p**cb.gamma_2 / cb.omega_0
    return 1.3e-7 * z**5 / (1.0 + 4.3e-7 * z**5)


def exchange_rates(q: Primitive, p: Parameters, cb: ClosureBundle | None = None):
    """Return ``(E, D, F_b)``: entrainment, deposition, net bed exchange."""
    cb = p.closures if cb is None else cb
    E = cb.omega_0 * (1.0 - p.psi) * entrainment_coefficient(q.u_b, p, cb)
    D = cb.omega_0 * cb.S_b * q.c_m
    return E, D, (E - D) / (1.0 - p.psi)


def source_vector(w, p: Parameters, mode: SourceMode = SourceMode.FULL) -> np.ndarray:
    """Source term ``S(W)``; FAST and SLOW give the two parts of the split source.

    The SLOW vector is returned unscaled; the split source is
    ``FAST + p.delta * SLOW``.
    """
    w = _check_state(w, p)
    out = np.empty(5)
    _source(w, p.kernel, int(SourceMode(mode)), out)
    return out


def split_source(w, p: Parameters) -> np.ndarray:
    return source_vector(w, p, SourceMode.FAST) + p.delta * source_vector(w, p, SourceMode.SLOW)


def transport_matrix(w, p: Parameters) -> np.ndarray:
    w = _check_state(w, p)
    out = np.empty((5, 5))
    _transport_matrix(w, p.kernel, out)
    return out


def bed_flux(w, p: Parameters) -> float:
    """``Q_b / (1 - psi)``, the flux whose Jacobian is the last row of ``A``."""
    w = _check_state(w, p)
    h = w[0]
    rho = mixture_density(w[3] / h, p)
    return bedload_discharge((w[1] + w[2]) / h, rho, p) / (1.0 - p.psi)


def velocity_profile(u_m, alpha_1, zeta):
    zeta = np.asarray(zeta, dtype=float)
    if np.any((zeta < 0) | (zeta > 1)):
        raise ValueError("zeta must lie in [0, 1]")
    return u_m + alpha_1 * (1.0 - 2.0 * zeta)


def legendre_constants(order: int = 8) -> dict[str, float]:
    """Projection constants of the scaled linear Legendre basis, by Gauss quadrature."""
    x, wts = np.polynomial.legendre.leggauss(order)
    z = 0.5 * (x + 1.0)
    wq = 0.5 * wts

    def phi(s):
        return 1.0 - 2.0 * s

    def dphi(s):
        return -2.0 * np.ones_like(s)

    # inner integral int_0^zeta phi, itself by quadrature on [0, zeta]
    inner = np.array([np.sum(0.5 * zi * wts * phi(0.5 * zi * (x + 1.0))) for zi in z])
    return {
        "A111": 3.0 * np.sum(wq * phi(z) ** 3),
        "B111": 3.0 * np.sum(wq * dphi(z) * inner * phi(z)),
        "C11": np.sum(wq * dphi(z) ** 2),
        "G11": 3.0 * np.sum(wq * phi(z) * dphi(z)),
        "H11": 3.0 * np.sum(wq * z * phi(z) * dphi(z)),
        "K1": np.sum(wq * z * phi(z)),
    }
