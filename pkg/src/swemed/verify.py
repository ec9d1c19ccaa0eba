"""Built-in structural checks, run by ``swemed verify``."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from . import linalg
from .model import SourceMode, conservative, legendre_constants, source_vector, split_source
from .params import Parameters
from .stability import (
    EquilibriumKind,
    Verdict,
    adapted_variables_matrix,
    classify_equilibrium,
    fast_manifold_report,
    fast_parameters,
    rest_report,
    rest_spectrum,
    source_jacobian,
    spectral_scan,
)


@dataclass(frozen=True)
class CheckResult:
    name: str
    passed: bool
    detail: str


def _rest_states(rng, n):
    return [conservative(rng.uniform(0.1, 5.0), 0.0, 0.0, 0.0, rng.uniform(-1.0, 1.0)) for _ in range(n)]


def _fast_states(rng, n):
    return [conservative(rng.uniform(0.1, 5.0), 0.0, 0.0, rng.uniform(1e-6, 0.1), rng.uniform(-1.0, 1.0))
            for _ in range(n)]


def check_rest_equilibrium(p, rng):
    worst = max(np.max(np.abs(source_vector(w, p))) for w in _rest_states(rng, 50))
    off = [conservative(rng.uniform(0.1, 5), rng.uniform(0.01, 1), rng.uniform(-0.5, 0.5), 0.0, 0.0)
           for _ in range(50)]
    smallest = min(np.max(np.abs(source_vector(w, p))) for w in off)
    return worst <= 1e-14 and smallest > 0, f"max |S| at rest {worst:.1e}, min |S| off rest {smallest:.1e}"


def check_block_structure(p, rng):
    P, P_inv = adapted_variables_matrix(p)
    cb = p.closures
    worst = 0.0
    for w in _rest_states(rng, 20):
        h = w[0]
        T = P @ source_jacobian(w, p) @ P_inv
        ref = np.zeros((5, 5))
        ref[3, 3] = -12.0 * p.nu / h**2
        ref[4, 4] = -cb.omega_0 * cb.S_b / h
        worst = max(worst, float(np.max(np.abs(T - ref))))
    return worst <= 1e-12, f"max entry error {worst:.1e}"


def check_rest_weak_hyperbolicity(p, rng):
    bad = 0
    for w in _rest_states(rng, 20):
        r = rest_report(w, p, xi_values=(0.0,))
        ok = (
            r.condition_I.verdict == Verdict.HOLDS
            and r.condition_II.verdict == Verdict.FAILS
            and r.condition_II.witness is not None
            and (r.condition_II.witness.algebraic, r.condition_II.witness.geometric) == (3, 2)
            and r.checks["char_poly_matches"]
        )
        bad += not ok
    return bad == 0, f"{bad} of 20 rest states deviate"


def check_fast_weak_hyperbolicity(p, rng):
    bad = 0
    for w in _fast_states(rng, 20):
        r = fast_manifold_report(w, p)
        ok = (
            r.condition_I.verdict == Verdict.HOLDS
            and r.condition_II.verdict == Verdict.FAILS
            and (r.condition_II.witness.algebraic, r.condition_II.witness.geometric) == (3, 2)
            and r.checks["char_poly_matches"]
            and r.checks["kernel_dimension"] == 2
        )
        bad += not ok
    return bad == 0, f"{bad} of 20 suspended rest states deviate"


def check_rest_spectrum(p, rng):
    worst = 0.0
    top = -np.inf
    for _ in range(20):
        pv = Parameters(**{**p.to_dict(), "nu": rng.uniform(1.0, 20.0)})
        h = rng.uniform(0.1, 5.0)
        xi = rng.uniform(-10.0, 10.0)
        scan = spectral_scan(conservative(h, 0, 0, 0, 0), pv, (xi,))
        worst = max(worst, linalg.match_multisets(scan.eigenvalues[0], rest_spectrum(h, xi, pv)))
        top = max(top, scan.overall_max_real)
    return worst <= 1e-8 and top <= 1e-10, f"spectrum error {worst:.1e}, max Re {top:.1e}"


def check_legendre_constants(p, rng):
    got = legendre_constants()
    ref = {"A111": 0.0, "B111": 0.0, "C11": 4.0, "G11": 0.0, "H11": 1.0, "K1": -1.0 / 6.0}
    err = max(abs(got[k] - v) for k, v in ref.items())
    return err <= 1e-12, f"max error {err:.1e}"


def check_fast_slow_split(p, rng):
    worst = 0.0
    for _ in range(50):
        w = conservative(rng.uniform(0.1, 5), rng.uniform(-1, 1), rng.uniform(-0.5, 0.5),
                         rng.uniform(0, 0.1), rng.uniform(-1, 1))
        full = source_vector(w, p)
        worst = max(worst, float(np.max(np.abs(split_source(w, p) - full)) / max(1.0, np.max(np.abs(full)))))
    fast_worst = 0.0
    slow_err = 0.0
    cb = p.closures
    for w in _fast_states(rng, 20):
        fast_worst = max(fast_worst, float(np.max(np.abs(source_vector(w, p, SourceMode.FAST)))))
        slow = source_vector(w, p, SourceMode.SLOW)
        slow_err = max(slow_err, abs(slow[3] + cb.omega_0 * cb.S_b * w[3] / w[0]))
    ok = worst <= 1e-14 and fast_worst <= 1e-14 and slow_err <= 1e-14
    return ok, f"split error {worst:.1e}, fast residual {fast_worst:.1e}, deposition error {slow_err:.1e}"


def check_jacobian_oracle(p, rng):
    worst = 0.0
    for w in _rest_states(rng, 10):
        an = source_jacobian(w, p)
        fd = source_jacobian(w, p, method="fd")
        worst = max(worst, np.linalg.norm(fd - an) / np.linalg.norm(an))
    pf = fast_parameters(p)
    for w in _fast_states(rng, 10):
        an = source_jacobian(w, pf, SourceMode.FAST)
        fd = source_jacobian(w, pf, SourceMode.FAST, method="fd")
        worst = max(worst, np.linalg.norm(fd - an) / np.linalg.norm(an))
    return worst <= 1e-6, f"max relative error {worst:.1e}"


def check_manifold_classes(p, rng):
    rest = classify_equilibrium(conservative(1.0, 0, 0, 0, 0), p).kind
    fast = classify_equilibrium(conservative(1.0, 0, 0, 0.01, 0), fast_parameters(p)).kind
    ok = rest == EquilibriumKind.FULLY_SETTLED_REST and fast == EquilibriumKind.SUSPENDED_REST_FAST
    return ok, f"rest -> {rest.value}, suspended -> {fast.value}"


CHECKS: list[tuple[str, Callable]] = [
    ("rest states are the source equilibria", check_rest_equilibrium),
    ("source Jacobian block structure at rest", check_block_structure),
    ("weak hyperbolicity at rest", check_rest_weak_hyperbolicity),
    ("weak hyperbolicity on the suspended rest manifold", check_fast_weak_hyperbolicity),
    ("closed-form normal-mode spectrum at rest", check_rest_spectrum),
    ("Legendre projection constants", check_legendre_constants),
    ("fast and slow sources add up to the full source", check_fast_slow_split),
    ("analytic source Jacobians match finite differences", check_jacobian_oracle),
    ("equilibrium classification", check_manifold_classes),
]


def run_checks(p: Parameters | None = None, seed: int = 0) -> list[CheckResult]:
    p = Parameters() if p is None else p
    out = []
    for name, fn in CHECKS:
        rng = np.random.default_rng(seed)
        try:
            ok, detail = fn(p, rng)
        except Exception as exc:  # a crashing check is a failed check
            ok, detail = False, f"{type(exc).__name__}: {exc}"
        out.append(CheckResult(name, bool(ok), detail))
    return out
