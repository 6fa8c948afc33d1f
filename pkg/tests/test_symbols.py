import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import U_SEP, make_state, unit_grid, vector_from
from elastostab.elasticity import MaterialParams, ReferenceState
from elastostab.grid import Grid, VectorField
from elastostab.symbols import (DNError, DNNumbers, MatrixDiffOp, StateError, build_operator, compute_sigma,
                                condition_maps, ellipticity_scan, ellipticity_test, eval_symbol, principal_part)


def planar_B(t):
    return build_operator("paper_example", dn_choice=t)


class TestSigma:
    def test_worked_example(self):
        b = planar_B((1, 3))
        assert compute_sigma(b.boundary(np.array([1.0, 0.0])), (1, 3)) == (-1, -1)

    def test_identity_rows(self):
        B = MatrixDiffOp.from_terms((3, 3), {(i, i): [((0, 0, 0), 1.0)] for i in range(3)})
        assert compute_sigma(B, (2, 2, 2)) == (-2, -2, -2)

    def test_first_order_row(self):
        B = MatrixDiffOp.from_terms((1, 2), {(0, 1): [((1, 0, 0), 1.0)]})
        assert compute_sigma(B, (1, 2)) == (-1,)

    def test_empty_row_raises(self):
        B = MatrixDiffOp.from_terms((2, 2), {(0, 0): [((0, 0, 0), 1.0)]})
        with pytest.raises(ValueError):
            compute_sigma(B, (1, 1))


class TestPrincipalPart:
    def test_planar_choices_differ(self):
        a = eval_symbol(planar_B((1, 3)).principal, [0, 0], [0.6, 0.8]).matrix
        b = eval_symbol(planar_B((1, 2)).principal, [0, 0], [0.6, 0.8]).matrix
        assert a[0, 0] == 1 and b[0, 0] == 0
        assert a[0, 1] == pytest.approx(-1.0) and b[0, 1] == pytest.approx(-1.0)
        assert np.allclose(a[1:, 0], [0.6j, 0.8j]) and np.allclose(b[1:, 0], [0.6j, 0.8j])

    def test_idempotent(self):
        b = build_operator("L_pmu", make_state(5, [U_SEP]))
        once = b.principal
        twice = principal_part(once, b.dn)
        xi = np.array([0.3, -0.4, 0.8])
        assert np.array_equal(eval_symbol(once, [0.5, 0.5, 0.5], xi).matrix,
                              eval_symbol(twice, [0.5, 0.5, 0.5], xi).matrix)

    def test_homogeneous_unchanged(self):
        b = build_operator("helmholtz")
        xi = np.array([0.2, 0.5, -0.1])
        assert np.allclose(eval_symbol(b.op, [0, 0, 0], xi).matrix, eval_symbol(b.principal, [0, 0, 0], xi).matrix)

    def test_dn_bounds_checked(self):
        L = MatrixDiffOp.from_terms((1, 1), {(0, 0): [((2, 0, 0), 1.0)]})
        with pytest.raises(DNError):
            principal_part(L, DNNumbers((0,), (1,)))
        with pytest.raises(DNError):
            DNNumbers((1,), (1,))


class TestEvalSymbol:
    def test_L_p_first_column(self):
        b = build_operator("L_p", make_state(5, [U_SEP]))
        m = eval_symbol(b.principal, [0.5, 0.5, 0.5], [1, 0, 0]).matrix
        assert np.allclose(m[:3, 0], [1j, 0, 0]) and np.allclose(m[3:, 1:], np.eye(3))

    def test_L_mu_identity_strain_rank(self):
        b = build_operator("L_mu", make_state(5, [lambda *x: x]))
        s = eval_symbol(b.principal, [0.5, 0.5, 0.5], [1, 0, 0])
        assert np.allclose(s.matrix[:3, 0], [2j, 0, 0]) and s.rank() == 4

    def test_zero_operator(self):
        L = MatrixDiffOp.from_terms((2, 2), {})
        assert np.all(eval_symbol(L, [0, 0, 0], [1, 2, 3]).matrix == 0)

    def test_zero_covector_raises(self):
        with pytest.raises(ValueError):
            eval_symbol(build_operator("helmholtz").principal, [0, 0, 0], [0, 0, 0])


class TestEllipticity:
    def test_L_p_elliptic(self):
        b = build_operator("L_p", make_state(5, [U_SEP]))
        assert ellipticity_test(b.principal, [0.3, 0.6, 0.2]).elliptic

    def test_L_mu_singular_direction(self):
        g = unit_grid(5)
        b = build_operator("L_mu", make_state(5, [lambda x1, x2, x3: (x1, x2, 0 * x3)]))
        res = ellipticity_test(b.principal, [0.5, 0.5, 0.5], candidates=np.eye(3))
        assert not res.elliptic
        assert any(abs(abs(d[2]) - 1) < 1e-12 for d in res.characteristic)
        del g

    def test_L_pmu_never_elliptic(self):
        st_ = make_state(5, [U_SEP])
        scan = ellipticity_scan(build_operator("L_pmu", st_), n_samples=16)
        assert not scan.elliptic.any()

    def test_second_measurement_restores(self):
        bad = lambda x1, x2, x3: (x1, x2, 0 * x3)  # noqa: E731
        one = build_operator("L_mu", make_state(5, [bad]))
        two = build_operator("L_mu", make_state(5, [bad, U_SEP]))
        assert not ellipticity_scan(one, n_samples=16).elliptic.any()
        assert ellipticity_scan(two, n_samples=16).elliptic.all()

    def test_missing_accelerations(self):
        with pytest.raises(StateError):
            build_operator("L_rho", make_state(4, [U_SEP]))

    def test_unknown_kind(self):
        with pytest.raises(ValueError):
            build_operator("L_xyz")


class TestBuilders:
    def test_L_mu_dn_numbers(self):
        b = build_operator("L_mu", make_state(4, [U_SEP]))
        assert b.dn.t == (1, 2, 2, 2) and b.dn.s == (0, 0, 0, -2, -2, -2)

    def test_two_measurements_shape(self):
        b = build_operator("L_mu", make_state(4, [U_SEP, lambda *x: x]))
        assert b.op.shape == (12, 7)

    def test_dynamic_L_pmurho_rho_term(self):
        g = Grid((4, 4, 4), (1 / 3,) * 3, snapshots=5, dt=0.1)
        X = np.stack(g.mesh())
        u = VectorField(g, np.stack([X * (1 + t**2) for t in g.times()]))
        st_ = ReferenceState(MaterialParams.constant(g, 0.0, 2.0, 1.5), [u])
        m = eval_symbol(build_operator("L_pmurho", st_).principal, [1 / 3, 1 / 3, 2 / 3, 0.2],
                        [0, 0, 0, 1.0]).matrix
        assert np.allclose(np.diag(m[:3, 3:]), 1.5)


class TestConditionMaps:
    def test_identity_state(self):
        rep = condition_maps(make_state(5, [lambda *x: x]))
        assert np.allclose(rep.maps["det_eps_1"], 1) and np.allclose(rep.maps["div_u_1"], 3)
        assert rep.verdict("mu") == "pass" and rep.verdict("lambda") == "pass"

    def test_singular_plane_detected(self):
        g = Grid((9, 9, 9), (1 / 8,) * 3)
        u = vector_from(g, lambda x1, x2, x3: (x1**2 - x1, x2, x3))
        rep = condition_maps(ReferenceState(MaterialParams.constant(g), [u]))
        fails = ~rep.passes["mu"]
        assert rep.verdict("mu") == "fail"
        assert np.array_equal(np.argwhere(fails)[:, 0], np.full(81, 4))

    def test_rho_unavailable_static(self):
        rep = condition_maps(make_state(4, [U_SEP]))
        assert rep.verdict("rho") == "unavailable" and rep.failing_points("rho") is None

    def test_bal_map_with_two(self):
        rep = condition_maps(make_state(4, [U_SEP, lambda *x: x]))
        assert "bal" in rep.maps

    @settings(max_examples=10, deadline=None)
    @given(st.floats(0.1, 10))
    def test_scale_invariant(self, c):
        a = condition_maps(make_state(4, [U_SEP])).passes["mu"]
        b = condition_maps(make_state(4, [lambda *x: tuple(c * v for v in U_SEP(*x))])).passes["mu"]
        assert np.array_equal(a, b)
