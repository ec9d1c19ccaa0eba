import json
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from oracles import mp_deposition_rate
from swemed import linalg
from swemed.model import SourceMode, conservative, transport_matrix
from swemed.params import Parameters
from swemed.stability import (
    FAST_ORDERING,
    EquilibriumKind,
    Hyperbolicity,
    OffManifold,
    VariableOrdering,
    Verdict,
    adapted_variables_matrix,
    classify_equilibrium,
    fast_block,
    fast_manifold_report,
    fast_parameters,
    rest_report,
    rest_spectrum,
    source_jacobian,
    spectral_scan,
    stability_report,
    yong_condition_I,
    yong_condition_II,
    yong_condition_III,
)

heights = st.floats(0.1, 5.0)
beds = st.floats(-1.0, 1.0)
suspended = st.floats(1e-6, 0.1)


class TestClassification:
    def test_settled_rest(self, p):
        assert classify_equilibrium(conservative(1, 0, 0, 0, 0), p).kind == EquilibriumKind.FULLY_SETTLED_REST

    def test_suspended_rest_is_fast_equilibrium_only(self, p):
        eq = classify_equilibrium(conservative(1, 0, 0, 0.01, 0), p)
        assert eq.kind == EquilibriumKind.SUSPENDED_REST_FAST
        assert eq.residual_full > 0
        assert eq.residual_fast == 0.0

    def test_moving_water(self, p):
        assert classify_equilibrium(conservative(1, 0.1, 0, 0, 0), p).kind == EquilibriumKind.NOT_EQUILIBRIUM


class TestSourceJacobian:
    def test_rest_entries(self, p):
        jac = source_jacobian(conservative(1, 0, 0, 0, 0), p)
        assert jac[2, 2] == -120.0
        dep = float(mp_deposition_rate(p, 1))
        assert jac[3, 3] == pytest.approx(-dep, rel=1e-14)
        assert jac[0, 3] == pytest.approx(-dep / 0.6, rel=1e-14)
        assert jac[4, 3] == pytest.approx(dep / 0.6, rel=1e-14)
        assert np.count_nonzero(jac) == 4

    def test_rest_rank_is_two(self, p):
        assert linalg.rank(source_jacobian(conservative(1, 0, 0, 0, 0), p)) == 2

    @given(h=heights, hb=beds)
    def test_rest_matches_finite_differences(self, h, hb):
        p = Parameters()
        w = conservative(h, 0, 0, 0, hb)
        an = source_jacobian(w, p)
        fd = source_jacobian(w, p, method="fd")
        assert np.linalg.norm(fd - an) <= 1e-6 * np.linalg.norm(an)

    @given(h=heights, c=suspended, hb=beds)
    def test_fast_matches_finite_differences(self, h, c, hb):
        p = Parameters()
        w = conservative(h, 0, 0, c, hb)
        an = source_jacobian(w, p, SourceMode.FAST)
        fd = source_jacobian(w, p, SourceMode.FAST, method="fd")
        assert np.linalg.norm(fd - an) <= 1e-6 * np.linalg.norm(an)

    def test_fast_block_entries(self, p):
        mu, nu, h = 15.0, p.nu, 2.0
        b = fast_block(h, fast_parameters(p))
        np.testing.assert_array_equal(b, [[-mu / h, -mu / h], [-3 * mu / h, -(3 * mu / h + 12 * nu / h**2)]])

    def test_analytic_off_manifold_raises(self, p):
        with pytest.raises(OffManifold):
            source_jacobian(conservative(1, 0.1, 0, 0, 0), p)
        with pytest.raises(OffManifold):
            source_jacobian(conservative(1, 0, 0, 0, 0), p, SourceMode.FAST)

    def test_slow_mode_rejected(self, p):
        with pytest.raises(ValueError):
            source_jacobian(conservative(1, 0, 0, 0, 0), p, SourceMode.SLOW)


class TestConditionI:
    def test_adapted_variables_inverse(self, p):
        P, P_inv = adapted_variables_matrix(p)
        np.testing.assert_allclose(P @ P_inv, np.eye(5), atol=1e-15)

    def test_rest_block(self, p):
        w = conservative(1, 0, 0, 0, 0)
        c1 = yong_condition_I(source_jacobian(w, p), classify_equilibrium(w, p), p)
        assert c1.verdict == Verdict.HOLDS
        assert c1.rank == 2
        dep = float(mp_deposition_rate(p, 1))
        np.testing.assert_allclose(c1.block, [[-120.0, 0.0], [0.0, -dep]], rtol=1e-14, atol=1e-12)

    @given(h=heights, nu=st.floats(0.1, 50.0))
    def test_rest_block_holds_everywhere(self, h, nu):
        p = Parameters(nu=nu)
        w = conservative(h, 0, 0, 0, 0)
        c1 = yong_condition_I(source_jacobian(w, p), EquilibriumKind.FULLY_SETTLED_REST, p)
        assert c1.verdict == Verdict.HOLDS
        zero = c1.transformed.copy()
        zero[3:, 3:] = 0
        assert np.max(np.abs(zero)) <= 1e-12

    def test_fast_block_determinant(self, p):
        pf = fast_parameters(p)
        h = 1.0
        w = conservative(h, 0, 0, 0.01, 0)
        c1 = yong_condition_I(source_jacobian(w, pf, SourceMode.FAST), EquilibriumKind.SUSPENDED_REST_FAST, pf)
        assert c1.verdict == Verdict.HOLDS
        assert np.linalg.det(c1.block) == pytest.approx(12 * pf.mu * pf.nu / h**3, rel=1e-12)

    def test_zero_jacobian_fails(self, p):
        assert yong_condition_I(np.zeros((5, 5)), EquilibriumKind.FULLY_SETTLED_REST, p).verdict == Verdict.FAILS

    def test_off_manifold_raises(self, p):
        with pytest.raises(OffManifold):
            yong_condition_I(np.zeros((5, 5)), EquilibriumKind.NOT_EQUILIBRIUM, p)


class TestConditionII:
    def test_diagonal_is_strictly_hyperbolic(self):
        c2 = yong_condition_II(np.diag([1.0, 2, 3, 4, 5]))
        assert c2.verdict == Verdict.HOLDS
        assert c2.hyperbolicity == Hyperbolicity.STRICT
        np.testing.assert_allclose(c2.symmetrizer, np.eye(5), atol=1e-14)

    def test_repeated_diagonalizable(self):
        c2 = yong_condition_II(np.diag([1.0, 1, 2, 2, 3]))
        assert c2.verdict == Verdict.HOLDS
        assert c2.hyperbolicity == Hyperbolicity.DIAGONALIZABLE

    def test_rotation_is_not_hyperbolic(self):
        c2 = yong_condition_II(np.array([[0.0, 1.0], [-1.0, 0.0]]))
        assert c2.hyperbolicity == Hyperbolicity.NONE
        assert c2.verdict == Verdict.FAILS

    def test_jordan_block_witness(self):
        c2 = yong_condition_II(np.array([[2.0, 1.0], [0.0, 2.0]]))
        assert c2.hyperbolicity == Hyperbolicity.WEAK
        wit = c2.witness
        assert (wit.algebraic, wit.geometric) == (2, 1)
        assert wit.eigenvalue == pytest.approx(2.0)

    @given(h=heights, hb=beds)
    def test_rest_is_weakly_hyperbolic(self, h, hb):
        A = transport_matrix(conservative(h, 0, 0, 0, hb), Parameters())
        c2 = yong_condition_II(A)
        assert c2.verdict == Verdict.FAILS
        assert c2.hyperbolicity == Hyperbolicity.WEAK
        wit = c2.witness
        assert (wit.eigenvalue, wit.algebraic, wit.geometric) == (0.0, 3, 2)
        # Jordan chain: A r = 0 and A v = r with r != 0
        scale = np.linalg.norm(A)
        assert np.linalg.norm(A @ wit.eigenvector) <= 1e-10 * scale
        assert np.linalg.norm(A @ wit.generalized_eigenvector - wit.eigenvector) <= 1e-10 * scale

    @given(h=heights, c=suspended)
    def test_suspended_is_weakly_hyperbolic(self, h, c):
        c2 = yong_condition_II(transport_matrix(conservative(h, 0, 0, c, 0), Parameters()))
        assert c2.hyperbolicity == Hyperbolicity.WEAK
        assert (c2.witness.algebraic, c2.witness.geometric) == (3, 2)


class TestConditionIII:
    def test_scalar_dissipative(self):
        assert yong_condition_III([[1.0]], [[-1.0]], [[1.0]], 1) == Verdict.HOLDS

    def test_no_relaxation_fails(self):
        assert yong_condition_III(np.eye(3), np.zeros((3, 3)), np.eye(3), 1) == Verdict.FAILS

    def test_without_symmetrizer_not_applicable(self, p):
        c2 = yong_condition_II(transport_matrix(conservative(1, 0, 0, 0, 0), p))
        assert yong_condition_III(c2, np.zeros((5, 5)), np.eye(5), 2) == Verdict.NOT_APPLICABLE


class TestSpectrum:
    def test_zero_wavenumber(self, p):
        h = 1.0
        scan = spectral_scan(conservative(h, 0, 0, 0, 0), p, (0.0,))
        dep = float(mp_deposition_rate(p, h))
        assert linalg.match_multisets(scan.eigenvalues[0], [0, 0, 0, -dep, -120.0]) <= 1e-8

    def test_unit_wavenumber_contains_gravity_pair(self, p):
        lam = spectral_scan(conservative(1.0, 0, 0, 0, 0), p, (1.0,)).eigenvalues[0]
        for target in (1j * np.sqrt(9.81), -1j * np.sqrt(9.81)):
            assert np.min(np.abs(lam - target)) <= 1e-10

    def test_no_growing_modes_on_default_grid(self, p):
        scan = spectral_scan(conservative(1.0, 0, 0, 0, 0), p)
        assert scan.overall_max_real <= 1e-10
        assert np.max(scan.closed_form_error) <= 1e-8

    @given(h=heights, nu=st.floats(0.1, 50.0), xi=st.floats(-10, 10))
    def test_matches_closed_form(self, h, nu, xi):
        p = Parameters(nu=nu)
        scan = spectral_scan(conservative(h, 0, 0, 0, 0), p, (xi,))
        assert linalg.match_multisets(scan.eigenvalues[0], rest_spectrum(h, xi, p)) <= 1e-8
        assert scan.overall_max_real <= 1e-10

    def test_off_manifold_has_no_closed_form(self, p):
        scan = spectral_scan(conservative(1.0, 0.2, 0.0, 0.0, 0.0), p, (1.0,))
        assert scan.closed_form_error is None


class TestReordering:
    @given(st.lists(st.floats(-5, 5), min_size=5, max_size=5))
    def test_roundtrip_exact(self, y):
        y = np.array(y)
        np.testing.assert_array_equal(FAST_ORDERING.forward(FAST_ORDERING.inverse(y)), y)
        np.testing.assert_array_equal(FAST_ORDERING.inverse(FAST_ORDERING.forward(y)), y)

    def test_conjugate_matches_permutation_matrix(self, rng):
        m = rng.normal(size=(5, 5))
        pi = FAST_ORDERING.matrix
        np.testing.assert_array_equal(FAST_ORDERING.conjugate(m), pi @ m @ pi.T)
        np.testing.assert_array_equal(FAST_ORDERING.unconjugate(FAST_ORDERING.conjugate(m)), m)

    @pytest.mark.parametrize("perm", [(0, 0, 1, 2, 3), (1, 2, 0, 3, 4)])
    def test_rejects_non_involutions(self, perm):
        with pytest.raises(ValueError):
            VariableOrdering(perm)


class TestReports:
    def test_rest_report(self, p):
        r = rest_report(conservative(1, 0, 0, 0, 0.3), p)
        assert r.condition_I.verdict == Verdict.HOLDS
        assert r.condition_II.verdict == Verdict.FAILS
        assert r.condition_III == Verdict.NOT_APPLICABLE
        assert r.checks["char_poly_matches"]
        assert r.checks["kernel_dimension"] == 2

    def test_fast_report(self, p):
        r = fast_manifold_report(conservative(1, 0, 0, 0.01, 0), p)
        assert r.condition_I.verdict == Verdict.HOLDS
        assert r.condition_II.verdict == Verdict.FAILS
        assert r.checks["kernel_dimension"] == 2
        assert r.checks["kernel_matches"]
        np.testing.assert_allclose(r.checks["char_poly"], [1, 0, -9.81, 0, 0, 0], atol=1e-10)
        assert r.checks["transport_structure_error"] <= 1e-12

    def test_fast_report_beta(self, p):
        r = fast_manifold_report(conservative(1, 0, 0, 0.01, 0), p)
        ref = Fraction(981, 100) * 1650 / (2 * Fraction(10165, 10))
        assert r.checks["beta"] == pytest.approx(float(ref), rel=1e-15)

    def test_kernel_vector_depends_on_concentration(self, p):
        r = fast_manifold_report(conservative(1, 0, 0, 0.05, 0), p)
        assert r.checks["kernel_matches"]
        assert not r.checks["kernel_contains_c_free_vector"]

    @given(h=heights, c=suspended, hb=beds)
    def test_fast_report_everywhere(self, h, c, hb):
        r = fast_manifold_report(conservative(h, 0, 0, c, hb), Parameters())
        assert r.condition_I.verdict == Verdict.HOLDS
        assert r.condition_II.verdict == Verdict.FAILS
        assert (r.condition_II.witness.algebraic, r.condition_II.witness.geometric) == (3, 2)

    def test_report_requires_manifold(self, p):
        with pytest.raises(OffManifold):
            rest_report(conservative(1, 0, 0, 0.01, 0), p)
        with pytest.raises(OffManifold):
            fast_manifold_report(conservative(1, 0, 0, 0, 0), p)

    def test_general_state_report_is_json(self, p):
        r = stability_report(conservative(1, 0.3, 0.1, 0.02, 0), p)
        assert r.equilibrium.kind == EquilibriumKind.NOT_EQUILIBRIUM
        d = json.loads(r.to_json())
        assert d["condition_I"]["verdict"] == "not_applicable"
        assert d["equilibrium"]["class"] == "NotEquilibrium"

    def test_rest_report_json_roundtrip(self, p):
        d = json.loads(stability_report(conservative(1, 0, 0, 0, 0), p).to_json())
        assert d["condition_II"]["witness"]["algebraic_multiplicity"] == 3
        assert d["condition_II"]["witness"]["geometric_multiplicity"] == 2
        assert d["condition_III"] == "not_applicable"
