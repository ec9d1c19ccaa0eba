"""Equilibrium classification and structural stability checks at water-at-rest.

Two manifolds matter: the fully-settled rest states (u_m = alpha_1 = c_m = 0),
which are equilibria of the full source, and the suspended rest states
(u_m = alpha_1 = 0, c_m > 0), which are equilibria of the fast source only.
At both, the three structural conditions (block structure of the source
Jacobian, symmetrizable transport, dissipation compatibility) are checked
mechanically.
"""

from __future__ import annotations

import enum
import json
from dataclasses import dataclass, field, replace

import numpy as np

from . import linalg
from .model import Primitive, SourceMode, source_vector, transport_matrix
from .params import Parameters

MANIFOLD_TOL = 1e-12
# Linear friction used by the fast analysis when Parameters.mu is unset.
REFERENCE_FRICTION_SPEED = 1.0
DEFAULT_XI = (0.0, 0.5, -0.5, 1.0, -1.0, 2.0, -2.0, 10.0, -10.0)


class EquilibriumKind(str, enum.Enum):
    FULLY_SETTLED_REST = "FullySettledRest"
    SUSPENDED_REST_FAST = "SuspendedRestFast"
    NOT_EQUILIBRIUM = "NotEquilibrium"


class Hyperbolicity(str, enum.Enum):
    STRICT = "StrictlyHyperbolic"
    DIAGONALIZABLE = "Hyperbolic"
    WEAK = "WeaklyHyperbolic"
    NONE = "NonHyperbolic"


class Verdict(str, enum.Enum):
    HOLDS = "holds"
    FAILS = "fails"
    NOT_APPLICABLE = "not_applicable"


class OffManifold(ValueError):
    pass


@dataclass(frozen=True)
class EquilibriumClass:
    kind: EquilibriumKind
    residual_full: float
    residual_fast: float


@dataclass(frozen=True)
class VariableOrdering:
    """Permutation ``y[i] = w[perm[i]]`` between two orderings of the state."""

    perm: tuple[int, ...]

    def __post_init__(self):
        n = len(self.perm)
        if sorted(self.perm) != list(range(n)):
            raise ValueError(f"{self.perm} is not a permutation")
        if tuple(self.perm[i] for i in self.perm) != tuple(range(n)):
            raise ValueError(f"{self.perm} is not an involution")

    @property
    def matrix(self) -> np.ndarray:
        n = len(self.perm)
        m = np.zeros((n, n))
        m[np.arange(n), self.perm] = 1.0
        return m

    def forward(self, w) -> np.ndarray:
        return np.asarray(w)[list(self.perm)]

    def inverse(self, y) -> np.ndarray:
        out = np.empty_like(np.asarray(y))
        out[list(self.perm)] = y
        return out

    def conjugate(self, m) -> np.ndarray:
        """Matrix ``m`` (acting on W-ordered vectors) rewritten in Y-ordering."""
        idx = list(self.perm)
        return np.asarray(m)[np.ix_(idx, idx)]

    def unconjugate(self, m) -> np.ndarray:
        pi = self.matrix
        return pi.T @ np.asarray(m) @ pi


# (h, hc_m, h_b, hu_m, h alpha_1)
FAST_ORDERING = VariableOrdering((0, 3, 4, 1, 2))


def fast_parameters(p: Parameters) -> Parameters:
    """Parameters with a constant linear friction, as the fast analysis needs."""
    if p.mu is not None:
        return p
    return replace(p, mu=p.epsilon * REFERENCE_FRICTION_SPEED)


def _max_abs(v) -> float:
    return float(np.max(np.abs(v)))


def classify_equilibrium(w, p: Parameters, tol: float = MANIFOLD_TOL) -> EquilibriumClass:
    res_full = _max_abs(source_vector(w, p, SourceMode.FULL))
    res_fast = _max_abs(source_vector(w, p, SourceMode.FAST))
    q = Primitive.from_conservative(w)
    at_rest = abs(q.u_m) <= tol and abs(q.alpha_1) <= tol
    if at_rest and abs(q.c_m) <= tol and res_full <= tol:
        kind = EquilibriumKind.FULLY_SETTLED_REST
    elif at_rest and q.c_m > tol and res_fast <= tol:
        kind = EquilibriumKind.SUSPENDED_REST_FAST
    else:
        kind = EquilibriumKind.NOT_EQUILIBRIUM
    return EquilibriumClass(kind, res_full, res_fast)


def rest_source_jacobian(h: float, p: Parameters) -> np.ndarray:
    """Closed-form source Jacobian at a fully-settled rest state."""
    cb = p.closures
    dep = cb.omega_0 * cb.S_b / h
    jac = np.zeros((5, 5))
    jac[0, 3] = -dep / (1.0 - p.psi)
    jac[2, 2] = -12.0 * p.nu / h**2
    jac[3, 3] = -dep
    jac[4, 3] = dep / (1.0 - p.psi)
    return jac


def fast_block(h: float, p: Parameters) -> np.ndarray:
    """The 2x2 (hu_m, h alpha_1) block of the fast source Jacobian on the suspended manifold."""
    mu = fast_parameters(p).mu
    return np.array(
        [
            [-mu / h, -mu / h],
            [-3.0 * mu / h, -(3.0 * mu / h + 12.0 * p.nu / h**2)],
        ]
    )


def source_jacobian(
    w,
    p: Parameters,
    mode: SourceMode = SourceMode.FULL,
    method: str = "analytic",
    step: float = 1e-7,
) -> np.ndarray:
    """Source Jacobian in W-ordering.

    ``method="analytic"`` is only available on the manifold belonging to
    ``mode`` (fully-settled rest for FULL, suspended rest for FAST).  FAST
    uses :func:`fast_parameters`, so the linear friction is constant.
    """
    mode = SourceMode(mode)
    if mode == SourceMode.SLOW:
        raise ValueError("Jacobians are provided for the FULL and FAST sources only")
    pm = fast_parameters(p) if mode == SourceMode.FAST else p
    w = np.asarray(w, dtype=float)
    if method == "fd":
        return linalg.fd_jacobian(lambda v: source_vector(v, pm, mode), w, step)
    if method != "analytic":
        raise ValueError(f"unknown method {method!r}")
    eq = classify_equilibrium(w, pm)
    h = w[0]
    if mode == SourceMode.FULL:
        if eq.kind != EquilibriumKind.FULLY_SETTLED_REST:
            raise OffManifold("analytic full Jacobian requires a fully-settled rest state")
        return rest_source_jacobian(h, p)
    if eq.kind != EquilibriumKind.SUSPENDED_REST_FAST:
        raise OffManifold("analytic fast Jacobian requires a suspended rest state")
    jac_y = np.zeros((5, 5))
    jac_y[3:, 3:] = fast_block(h, pm)
    return FAST_ORDERING.unconjugate(jac_y)


def adapted_variables_matrix(p: Parameters) -> tuple[np.ndarray, np.ndarray]:
    """The change of variables ``Y = P W`` that block-diagonalizes the rest Jacobian, and its inverse."""
    s = 1.0 / (1.0 - p.psi)
    P = np.array(
        [
            [1, 0, 0, -s, 0],
            [0, 1, 0, 0, 0],
            [0, 0, 0, s, 1],
            [0, 0, 1, 0, 0],
            [0, 0, 0, 1, 0],
        ],
        dtype=float,
    )
    P_inv = np.array(
        [
            [1, 0, 0, 0, s],
            [0, 1, 0, 0, 0],
            [0, 0, 0, 1, 0],
            [0, 0, 0, 0, 1],
            [0, 0, 1, 0, -s],
        ],
        dtype=float,
    )
    return P, P_inv


@dataclass(frozen=True)
class ConditionI:
    verdict: Verdict
    block: np.ndarray | None
    transformed: np.ndarray | None
    rank: int
    note: str = ""


@dataclass(frozen=True)
class Witness:
    eigenvalue: complex
    algebraic: int
    geometric: int
    eigenvector: np.ndarray | None = None
    generalized_eigenvector: np.ndarray | None = None


@dataclass(frozen=True)
class ConditionII:
    verdict: Verdict
    hyperbolicity: Hyperbolicity
    eigenvalues: np.ndarray
    symmetrizer: np.ndarray | None = None
    witness: Witness | None = None


def yong_condition_I(S_W, manifold: EquilibriumKind | EquilibriumClass, p: Parameters, tol: float = 1e-12) -> ConditionI:
    """Block condition: after a change of variables the Jacobian is ``diag(0, T)`` with ``T`` invertible."""
    kind = manifold.kind if isinstance(manifold, EquilibriumClass) else EquilibriumKind(manifold)
    S_W = np.asarray(S_W, dtype=float)
    if kind == EquilibriumKind.FULLY_SETTLED_REST:
        P, P_inv = adapted_variables_matrix(p)
        transformed = P @ S_W @ P_inv
    elif kind == EquilibriumKind.SUSPENDED_REST_FAST:
        transformed = FAST_ORDERING.conjugate(S_W)
    else:
        raise OffManifold("condition I is only defined on an equilibrium manifold")
    r = 2
    scale = max(1.0, linalg.matrix_norm(S_W))
    zero_part = transformed.copy()
    zero_part[-r:, -r:] = 0.0
    block = transformed[-r:, -r:].copy()
    s_rank = linalg.rank(S_W) if np.any(S_W) else 0
    structured = _max_abs(zero_part) <= tol * scale
    invertible = linalg.rank(block) == r if np.any(block) else False
    ok = structured and invertible and s_rank == r
    note = []
    if not structured:
        note.append(f"off-block entries up to {_max_abs(zero_part):.3e}")
    if not invertible:
        note.append("relaxation block is singular")
    if s_rank != r:
        note.append(f"rank(S_W) = {s_rank} differs from block size {r}")
    return ConditionI(Verdict.HOLDS if ok else Verdict.FAILS, block, transformed, s_rank, "; ".join(note))


def _jordan_witness(A, lam: float, alg: int, geo: int) -> Witness:
    """Eigenvector r and generalized eigenvector v with (A - lam I) v = r."""
    n = A.shape[0]
    shifted = A - lam * np.eye(n)
    kernel = linalg.nullspace(shifted)
    u, s, _ = np.linalg.svd(shifted)
    r_rank = int(np.sum(s > linalg.RANK_RTOL * max(s[0], 1e-300)))
    range_basis = u[:, :r_rank]
    # kernel direction that also lies in the range of the shifted matrix
    off_range = kernel - range_basis @ (range_basis.T @ kernel)
    _, _, vh = np.linalg.svd(off_range)
    c = vh[-1]
    r = kernel @ c
    v, *_ = np.linalg.lstsq(shifted, r, rcond=None)
    return Witness(lam, alg, geo, r, v)


def yong_condition_II(A, tol: float = 1e-9, weights=None) -> ConditionII:
    """Transport symmetrization via the eigenstructure of ``A``.

    Returns the hyperbolicity class.  For real diagonalizable ``A`` the
    symmetrizer ``L^T diag(weights) L`` built from left eigenvectors is
    verified; for weakly hyperbolic ``A`` the deficient eigenvalue and its
    Jordan chain are returned as the witness.
    """
    A = np.asarray(A, dtype=float)
    n = A.shape[0]
    norm = max(linalg.matrix_norm(A), 1.0)
    lam = linalg.eigenvalues(A)
    worst_im = int(np.argmax(np.abs(lam.imag)))
    if abs(lam[worst_im].imag) > tol * norm:
        return ConditionII(Verdict.FAILS, Hyperbolicity.NONE, lam,
                           witness=Witness(complex(lam[worst_im]), 1, 0))
    lam = lam.real
    clusters = linalg.cluster_eigenvalues(lam, norm)
    deficient = None
    left_rows = []
    for group in clusters:
        center = float(np.mean(lam[group]))
        shifted = A - center * np.eye(n)
        geo = n - linalg.rank(shifted)
        alg = len(group)
        if geo < alg:
            if deficient is None or alg - geo > deficient[1] - deficient[2]:
                deficient = (center, alg, geo)
        else:
            left_rows.extend(linalg.nullspace(shifted.T).T[:alg])
    if deficient is not None:
        center, alg, geo = deficient
        if abs(center) <= linalg.CLUSTER_RTOL * norm:
            center = 0.0
        return ConditionII(Verdict.FAILS, Hyperbolicity.WEAK, lam,
                           witness=_jordan_witness(A, center, alg, geo))
    kind = Hyperbolicity.STRICT if all(len(g) == 1 for g in clusters) else Hyperbolicity.DIAGONALIZABLE
    L = np.array(left_rows)
    omega = np.ones(n) if weights is None else np.asarray(weights, dtype=float)
    if np.any(omega <= 0):
        raise ValueError("symmetrizer weights must be positive")
    A0 = L.T @ (omega[:, None] * L)
    A0 = 0.5 * (A0 + A0.T)
    spd = linalg.symmetric_eigs(A0)[0] > 0
    commutes = np.linalg.norm(A0 @ A - A.T @ A0) <= tol * linalg.matrix_norm(A0) * norm
    ok = spd and commutes
    return ConditionII(Verdict.HOLDS if ok else Verdict.FAILS, kind, lam, symmetrizer=A0)


def yong_condition_III(A0, S_W, P, r: int, tol: float = 1e-10) -> Verdict:
    """Dissipation compatibility ``A0 S_W + S_W^T A0 <= -P^T diag(0, I_r) P``."""
    if isinstance(A0, ConditionII):
        A0 = A0.symmetrizer
    if A0 is None:
        return Verdict.NOT_APPLICABLE
    A0 = np.atleast_2d(np.asarray(A0, dtype=float))
    S_W = np.atleast_2d(np.asarray(S_W, dtype=float))
    P = np.atleast_2d(np.asarray(P, dtype=float))
    n = A0.shape[0]
    sel = np.zeros((n, n))
    sel[n - r:, n - r:] = np.eye(r)
    M = A0 @ S_W + S_W.T @ A0 + P.T @ sel @ P
    top = linalg.symmetric_eigs(0.5 * (M + M.T))[-1]
    return Verdict.HOLDS if top <= tol else Verdict.FAILS


def rest_spectrum(h: float, xi: float, p: Parameters) -> np.ndarray:
    """Closed-form eigenvalues of ``S_W - i xi A`` at a fully-settled rest state."""
    cb = p.closures
    c = np.sqrt(p.g * h) * xi
    return np.array([0.0, -cb.omega_0 * cb.S_b / h, -12.0 * p.nu / h**2, 1j * c, -1j * c])


@dataclass(frozen=True)
class SpectralScan:
    xi: np.ndarray
    eigenvalues: np.ndarray  # shape (len(xi), 5)
    max_real: np.ndarray
    closed_form_error: np.ndarray | None = None

    @property
    def overall_max_real(self) -> float:
        return float(np.max(self.max_real))


def spectral_scan(w, p: Parameters, xi_values=DEFAULT_XI) -> SpectralScan:
    """Spectrum of the linearized normal-mode problem ``S_W - i xi A`` per wavenumber."""
    w = np.asarray(w, dtype=float)
    xi = np.asarray(xi_values, dtype=float)
    eq = classify_equilibrium(w, p)
    at_rest = eq.kind == EquilibriumKind.FULLY_SETTLED_REST
    S_W = source_jacobian(w, p, method="analytic" if at_rest else "fd")
    A = transport_matrix(w, p)
    eigs = np.array([linalg.eigenvalues(S_W - 1j * x * A) for x in xi])
    errs = None
    if at_rest:
        errs = np.array([linalg.match_multisets(e, rest_spectrum(w[0], x, p)) for e, x in zip(eigs, xi)])
    return SpectralScan(xi, eigs, eigs.real.max(axis=1), errs)


@dataclass(frozen=True)
class StabilityReport:
    equilibrium: EquilibriumClass
    condition_I: ConditionI | None
    condition_II: ConditionII
    condition_III: Verdict
    spectral: SpectralScan | None = None
    checks: dict = field(default_factory=dict)
    notes: tuple[str, ...] = ()

    def to_dict(self) -> dict:
        return _jsonable(
            {
                "equilibrium": {
                    "class": self.equilibrium.kind.value,
                    "residual_full": self.equilibrium.residual_full,
                    "residual_fast": self.equilibrium.residual_fast,
                },
                "condition_I": (
                    {"verdict": Verdict.NOT_APPLICABLE.value}
                    if self.condition_I is None
                    else {
                        "verdict": self.condition_I.verdict.value,
                        "block": self.condition_I.block,
                        "rank_S_W": self.condition_I.rank,
                        "note": self.condition_I.note,
                    }
                ),
                "condition_II": {
                    "verdict": self.condition_II.verdict.value,
                    "hyperbolicity": self.condition_II.hyperbolicity.value,
                    "eigenvalues": self.condition_II.eigenvalues,
                    "symmetrizer": self.condition_II.symmetrizer,
                    "witness": None
                    if self.condition_II.witness is None
                    else {
                        "eigenvalue": complex(self.condition_II.witness.eigenvalue),
                        "algebraic_multiplicity": self.condition_II.witness.algebraic,
                        "geometric_multiplicity": self.condition_II.witness.geometric,
                        "eigenvector": self.condition_II.witness.eigenvector,
                        "generalized_eigenvector": self.condition_II.witness.generalized_eigenvector,
                    },
                },
                "condition_III": self.condition_III.value,
                "spectral_scan": None
                if self.spectral is None
                else [
                    {"xi": x, "max_real": m, "eigenvalues": list(e)}
                    for x, m, e in zip(self.spectral.xi, self.spectral.max_real, self.spectral.eigenvalues)
                ],
                "checks": self.checks,
                "notes": list(self.notes),
            }
        )

    def to_json(self, **kwargs) -> str:
        return json.dumps(self.to_dict(), **kwargs)


def _jsonable(obj):
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (complex, np.complexfloating)):
        return {"re": float(obj.real), "im": float(obj.imag)}
    if isinstance(obj, np.bool_):
        return bool(obj)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.floating):
        return float(obj)
    return obj


def rest_report(w, p: Parameters, xi_values=DEFAULT_XI) -> StabilityReport:
    eq = classify_equilibrium(w, p)
    if eq.kind != EquilibriumKind.FULLY_SETTLED_REST:
        raise OffManifold("state is not a fully-settled rest state")
    S_W = source_jacobian(w, p)
    A = transport_matrix(w, p)
    c1 = yong_condition_I(S_W, eq, p)
    c2 = yong_condition_II(A)
    P, _ = adapted_variables_matrix(p)
    c3 = yong_condition_III(c2.symmetrizer, S_W, P, 2)
    scan = spectral_scan(w, p, xi_values)
    coeffs = linalg.char_poly(A)
    gh = p.g * w[0]
    checks = {
        "char_poly": coeffs,
        "char_poly_matches": bool(np.allclose(coeffs, [1, 0, -gh, 0, 0, 0], rtol=0, atol=1e-10)),
        "kernel_dimension": int(linalg.nullspace(A).shape[1]),
    }
    notes = []
    if c3 == Verdict.NOT_APPLICABLE:
        notes.append("no symmetrizer exists, so dissipation compatibility cannot be tested")
    return StabilityReport(eq, c1, c2, c3, scan, checks, tuple(notes))


def fast_manifold_report(w, p: Parameters) -> StabilityReport:
    pf = fast_parameters(p)
    w = np.asarray(w, dtype=float)
    eq = classify_equilibrium(w, pf)
    if eq.kind != EquilibriumKind.SUSPENDED_REST_FAST:
        raise OffManifold("state is not a suspended rest state")
    q = Primitive.from_conservative(w)
    h, c = q.h, q.c_m
    gh = p.g * h
    beta = gh * p.drho / (2.0 * q.density(p))
    A = transport_matrix(w, p)
    A_y = FAST_ORDERING.conjugate(A)
    expected = np.array(
        [
            [0, 0, 0, 1, 0],
            [0, 0, 0, c, 0],
            [0, 0, 0, 0, 0],
            [gh - c * beta, beta, gh, 0, 0],
            [-c * beta, beta, 0, 0, 0],
        ]
    )
    coeffs = linalg.char_poly(A_y)
    kernel = linalg.nullspace(A_y)
    # Solving A^Y r = 0 gives r_2 = c_m r_1 and r_3 = -r_1; the vector
    # (1, 0, -1, 0, 0) is a kernel vector only in the limit c_m -> 0.
    ref = np.array([[1.0, c, -1, 0, 0], [0, 0, 0, 0, 1.0]]).T
    c_free = np.array([[1.0, 0, -1, 0, 0], [0, 0, 0, 0, 1.0]]).T

    def _in_kernel(vectors):
        return float(np.linalg.norm(vectors - kernel @ (kernel.T @ vectors)))

    checks = {
        "beta": beta,
        "transport_structure_error": float(np.max(np.abs(A_y - expected))),
        "char_poly": coeffs,
        "char_poly_matches": bool(np.allclose(coeffs, [1, 0, -gh, 0, 0, 0], rtol=0, atol=1e-10)),
        "kernel_dimension": int(kernel.shape[1]),
        "kernel_matches": bool(kernel.shape[1] == 2 and _in_kernel(ref) < 1e-10),
        "kernel_contains_c_free_vector": bool(_in_kernel(c_free) < 1e-10),
        "mu": pf.mu,
    }
    S_W = source_jacobian(w, pf, SourceMode.FAST)
    c1 = yong_condition_I(S_W, eq, pf)
    c2 = yong_condition_II(A)
    c3 = yong_condition_III(c2.symmetrizer, S_W, FAST_ORDERING.matrix, 2)
    notes = []
    if p.mu is None:
        notes.append(f"linear friction mu taken as epsilon * {REFERENCE_FRICTION_SPEED} m/s = {pf.mu}")
    return StabilityReport(eq, c1, c2, c3, None, checks, tuple(notes))


def stability_report(w, p: Parameters, xi_values=DEFAULT_XI) -> StabilityReport:
    """Report for any admissible state; manifold-specific analysis when it applies."""
    w = np.asarray(w, dtype=float)
    eq = classify_equilibrium(w, p)
    if eq.kind == EquilibriumKind.FULLY_SETTLED_REST:
        return rest_report(w, p, xi_values)
    if classify_equilibrium(w, fast_parameters(p)).kind == EquilibriumKind.SUSPENDED_REST_FAST:
        return fast_manifold_report(w, p)
    c2 = yong_condition_II(transport_matrix(w, p))
    scan = spectral_scan(w, p, xi_values)
    return StabilityReport(
        eq, None, c2, Verdict.NOT_APPLICABLE, scan,
        notes=("state is not on an equilibrium manifold; only transport and spectrum are analysed",),
    )
