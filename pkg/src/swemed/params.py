"""Physical and empirical constants of the model, plus derived closure constants."""

from __future__ import annotations

import math
from dataclasses import dataclass, field, fields
from functools import cached_property

import numpy as np

# Layout of the flat float64 vector handed to the compiled kernels.
K_G = 0
K_RHO_W = 1
K_RHO_S = 2
K_D_S = 3
K_EPS = 4
K_MU = 5  # negative means "mu = eps * |u_b| per evaluation"
K_NU = 6
K_PSI = 7
K_THETA_C = 8
K_DELTA = 9
K_H_MIN = 10
K_OMEGA0 = 11
K_S_B = 12
K_Q = 13
K_ZFAC = 14  # Z = K_ZFAC * |u_b|
K_SIZE = 15


@dataclass(frozen=True)
class ClosureBundle:
    """State-independent closure constants derived from :class:`Parameters`."""

    omega_0: float
    R_p: float
    gamma_1: float
    gamma_2: float
    S_b: float
    Q: float


@dataclass(frozen=True)
class Parameters:
    """Model constants in SI units.

    ``mu`` is the linear friction coefficient of the fast source.  ``None``
    means it is evaluated per call as ``epsilon * |u_b|``, which makes the
    fast and slow sources add up to the full source at ``delta = 1``.
    ``omega_0`` overrides the settling-velocity closure when set (used to
    switch exchange off in tests).
    """

    g: float = 9.81
    rho_w: float = 1000.0
    rho_s: float = 2650.0
    d_s: float = 1e-3
    D_sg: float = 1e-3
    nu_w: float = 1e-6
    epsilon: float = 15.0
    mu: float | None = None
    nu: float = 10.0
    psi: float = 0.4
    theta_c: float = 0.047
    c_D: float = 0.01
    delta: float = 1.0
    h_min: float = 1e-8
    omega_0: float | None = field(default=None)

    def __post_init__(self):
        for f in fields(self):
            v = getattr(self, f.name)
            if v is None:
                continue
            if not isinstance(v, (int, float)) or isinstance(v, bool) or not math.isfinite(v):
                raise ValueError(f"{f.name}: must be a finite number, got {v!r}")
        checks = [
            ("g", self.g > 0, "must be > 0"),
            ("rho_w", self.rho_w > 0, "must be > 0"),
            ("rho_s", self.rho_s > self.rho_w, "must exceed rho_w"),
            ("d_s", self.d_s > 0, "must be > 0"),
            ("D_sg", self.D_sg > 0, "must be > 0"),
            ("nu_w", self.nu_w > 0, "must be > 0"),
            ("epsilon", self.epsilon >= 0, "must be >= 0"),
            ("mu", self.mu is None or self.mu >= 0, "must be >= 0"),
            ("nu", self.nu >= 0, "must be >= 0"),
            ("psi", 0 <= self.psi < 1, "must lie in [0, 1)"),
            ("theta_c", self.theta_c >= 0, "must be >= 0"),
            ("c_D", self.c_D >= 0, "must be >= 0"),
            ("delta", 0 < self.delta <= 1, "must lie in (0, 1]"),
            ("h_min", self.h_min > 0, "must be > 0"),
            ("omega_0", self.omega_0 is None or self.omega_0 >= 0, "must be >= 0"),
        ]
        for name, ok, msg in checks:
            if not ok:
                raise ValueError(f"{name}: {msg}, got {getattr(self, name)!r}")

    @property
    def drho(self) -> float:
        return self.rho_s - self.rho_w

    @cached_property
    def closures(self) -> ClosureBundle:
        return closure_bundle(self)

    @cached_property
    def kernel(self) -> np.ndarray:
        cb = self.closures
        k = np.zeros(K_SIZE)
        k[K_G] = self.g
        k[K_RHO_W] = self.rho_w
        k[K_RHO_S] = self.rho_s
        k[K_D_S] = self.d_s
        k[K_EPS] = self.epsilon
        k[K_MU] = -1.0 if self.mu is None else self.mu
        k[K_NU] = self.nu
        k[K_PSI] = self.psi
        k[K_THETA_C] = self.theta_c
        k[K_DELTA] = self.delta
        k[K_H_MIN] = self.h_min
        k[K_OMEGA0] = cb.omega_0
        k[K_S_B] = cb.S_b
        k[K_Q] = cb.Q
        if cb.omega_0 > 0:
            k[K_ZFAC] = cb.gamma_1 * math.sqrt(self.c_D) * cb.R_p**cb.gamma_2 / cb.omega_0
        k.flags.writeable = False
        return k

    def to_dict(self) -> dict:
        return {f.name: getattr(self, f.name) for f in fields(self)}


def settling_velocity(p: Parameters) -> float:
    """Settling velocity ``sqrt(a^2 + b) - a`` with ``a = 13.95 nu_w / d_s``.

    ``b`` carries a ``rho_w`` factor under the root, which makes the result
    dimensionally odd (about 4.19 m/s at the defaults instead of about
    0.12 m/s without it).  It is kept as is; set ``omega_0`` to override.
    """
    if p.omega_0 is not None:
        return p.omega_0
    a = 13.95 * p.nu_w / p.d_s
    b = 1.09 * p.rho_w * (p.rho_s / p.rho_w - 1.0) * p.g * p.d_s
    # sqrt(a^2 + b) - a, rewritten to avoid cancellation when b << a^2
    return b / (math.sqrt(a * a + b) + a)


def particle_reynolds(p: Parameters) -> float:
    return math.sqrt((p.rho_s - p.rho_w) * p.g * p.d_s) * p.d_s / p.nu_w


def entrainment_exponents(R_p: float) -> tuple[float, float]:
    return (1.0, 0.6) if R_p > 2.36 else (0.586, 1.23)


def bradford_factor(p: Parameters) -> float:
    return 0.4 * (p.d_s / p.D_sg) ** 1.64 + 1.64


def characteristic_discharge(p: Parameters) -> float:
    return math.sqrt((p.rho_s / p.rho_w - 1.0) * p.g * p.d_s**3)


def closure_bundle(p: Parameters) -> ClosureBundle:
    R_p = particle_reynolds(p)
    g1, g2 = entrainment_exponents(R_p)
    return ClosureBundle(
        omega_0=settling_velocity(p),
        R_p=R_p,
        gamma_1=g1,
        gamma_2=g2,
        S_b=bradford_factor(p),
        Q=characteristic_discharge(p),
    )


RELAXATION_PARAMETERS = Parameters(epsilon=15.0, nu=10.0)
