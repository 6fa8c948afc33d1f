import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import U_SEP, make_state
from elastostab.lopatinskii import (BoundaryFrame, FrameError, box_frames, check_built, check_generic, check_L_mu,
                                    check_L_pmu, check_L_rho, nodouble_system, nondeg_system, random_frame,
                                    stacked_g)
from elastostab.symbols import build_operator

E = np.eye(3)


def frame(nu, zeta):
    return BoundaryFrame(np.zeros(3), np.asarray(nu, float), np.asarray(zeta, float))


class TestFrame:
    def test_rejects_bad_normal(self):
        with pytest.raises(FrameError):
            frame([1, 1, 0], [0, 0, 1])

    def test_rejects_non_tangential(self):
        with pytest.raises(FrameError):
            frame([1, 0, 0], [1, 1, 0])

    def test_rejects_zero_zeta(self):
        with pytest.raises(FrameError):
            frame([1, 0, 0], [0, 0, 0])

    def test_box_frames_cover_boundary(self):
        from elastostab.grid import Grid
        g = Grid.unit_cube(4)
        pts = {f for _, f, _ in box_frames(g, n_tangent=1)}
        assert len(pts) == 4**3 - 2**3


class TestMu:
    def test_identity_generic_normal(self):
        nu = np.array([1.0, 2.0, 2.0]) / 3
        v = check_L_mu(frame(nu, [2.0, -1.0, 0.0]), np.eye(3))
        assert v.satisfied and "nu != 0" in v.branch

    def test_identity_axis_normal(self):
        # g_2 . e1 = g_3 . e1 = 0 while g_2 . e2 != 0
        v = check_L_mu(frame(E[0], E[1]), np.eye(3))
        assert v.satisfied and "forced to zero" in v.branch

    def test_forced_zero_branch(self):
        # columns 2, 3 of eps are orthogonal to nu = e1; column 2 is not orthogonal to zeta = e2
        eps = np.array([[1.0, 0, 0], [0, 1, 0], [0, 0, 1]])
        eps[0, 0] = 0.0
        v = check_L_mu(frame(E[0], E[1]), eps)
        assert v.satisfied and "forced to zero" in v.branch

    def test_zero_strain_degenerate(self):
        v = check_L_mu(frame(E[0], E[1]), np.zeros((3, 3)))
        assert v.satisfied is None and v.degenerate


class TestRho:
    def test_nonzero(self):
        assert check_L_rho(frame(E[0], E[1]), [1, 0, 0])

    def test_zero(self):
        assert not check_L_rho(frame(E[0], E[1]), [0, 0, 0])

    def test_below_tolerance(self):
        assert not check_L_rho(frame(E[0], E[1]), [0, 1e-20, 0])

    @settings(max_examples=50, deadline=None)
    @given(st.lists(st.floats(-1, 1, allow_nan=False), min_size=3, max_size=3))
    def test_equivalence(self, v):
        assert check_L_rho(frame(E[2], E[0]), v) == (np.linalg.norm(v) > 1e-12)


class TestPmu:
    def test_identity(self):
        assert not check_L_pmu(frame(E[0], E[1]), np.eye(3))

    def test_offdiagonal(self):
        eps = np.array([[0.0, 1, 0], [1, 0, 0], [0, 0, 2]])
        assert check_L_pmu(frame(E[0], E[1]), eps)

    def test_axis_eigenvector(self):
        assert not check_L_pmu(frame(E[1], E[0]), np.diag([1.0, 2, 3]))

    @settings(max_examples=30, deadline=None)
    @given(st.integers(0, 2**32 - 1), st.floats(0.01, 100))
    def test_scale_free(self, seed, c):
        rng = np.random.default_rng(seed)
        m = rng.normal(size=(3, 3))
        m = m + m.T
        f = random_frame(rng)
        assert check_L_pmu(f, m) == check_L_pmu(f, c * m)


class TestLinearSystems:
    def test_nondeg_axis_frame(self):
        A, N = nondeg_system(frame(E[2], E[0]))
        assert A.shape == (9, 6) and N.shape[1] == 1
        v = np.real_if_close(N[:, 0])
        assert np.allclose(np.abs(v), np.array([1, 0, 0, 0, 0, 1]) / np.sqrt(2), atol=1e-12)

    def test_nondeg_scaling(self, rng):
        f = random_frame(rng)
        f2 = BoundaryFrame(f.y, f.nu, 2 * f.zeta)
        _, N = nondeg_system(f2)
        target = np.r_[f2.zeta, f2.nu]
        assert abs(N[:, 0] @ target) / np.linalg.norm(target) > 1 - 1e-10

    def test_nodouble_annihilates_reduced(self, rng):
        f = random_frame(rng)
        w = np.cross(f.nu, f.zeta)
        eps = np.outer(w, w)
        A, _ = nodouble_system(f, 0.7, -1.3)
        assert np.abs(A @ stacked_g(eps, f)).max() <= 1e-12

    def test_nodouble_kernel_contains_zeta_nu(self, rng):
        f = random_frame(rng)
        A, rank = nodouble_system(f, 1.0, 1.0)
        assert np.abs(A @ np.r_[f.zeta, f.nu]).max() <= 1e-12 * np.abs(A).max()
        assert rank <= 5

    def test_nodouble_degenerate_recorded(self, rng):
        _, rank = nodouble_system(random_frame(rng), 0.0, 0.0)
        assert 0 <= rank <= 6


class TestGeneric:
    def test_worked_example(self, rng):
        for _ in range(5):
            f = random_frame(rng, 2)
            assert check_built(build_operator("paper_example", dn_choice=(1, 3)), f).status == "violated"
            assert check_built(build_operator("paper_example", dn_choice=(1, 2)), f).status == "satisfied"

    def test_helmholtz(self, rng):
        b = build_operator("helmholtz")
        assert all(check_built(b, random_frame(rng)).status == "satisfied" for _ in range(5))

    def test_no_boundary_rows_violated(self):
        b = build_operator("paper_example", dn_choice=(1, 2))
        f = BoundaryFrame(np.zeros(2), np.array([1.0, 0]), np.array([0, 1.0]))
        assert check_generic(b.principal, None, f).status == "violated"

    def test_agrees_with_analytic_mu(self, rng):
        st_ = make_state(5, [U_SEP])
        b = build_operator("L_mu", st_)
        eps = st_.strains[0].matrix()[2, 2, 2]
        for _ in range(20):
            f = random_frame(rng, y=np.array([0.5, 0.5, 0.5]))
            assert check_built(b, f).status == "satisfied"
            assert check_L_mu(f, eps).satisfied
