import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import scalar_from, unit_grid, vector_from
from elastostab.grid import (Grid, GridError, ScalarField, SymTensorField, VectorField, diff_matrix,
                             divergence, gradient, path_integral, path_integrals,
                             second_time_derivative, sobolev_norm, tensor_divergence)

coef = st.floats(-5, 5, allow_nan=False, allow_infinity=False)


class TestGrid:
    def test_rejects_short_axis(self):
        with pytest.raises(GridError):
            Grid((2, 5, 5))

    def test_rejects_nonpositive_spacing(self):
        with pytest.raises(GridError):
            Grid((4, 4, 4), (0.1, 0.0, 0.1))

    def test_dynamic_needs_dt(self):
        with pytest.raises(GridError):
            Grid((4, 4, 4), snapshots=3)

    def test_field_shape_checked(self):
        g = unit_grid(4)
        with pytest.raises(GridError):
            ScalarField(g, np.zeros((4, 4, 5)))
        with pytest.raises(GridError):
            VectorField(g, np.zeros((2, 4, 4, 4)))

    def test_symtensor_roundtrip(self, rng):
        g = unit_grid(4)
        t = SymTensorField(g, rng.standard_normal((6, 4, 4, 4)))
        m = t.matrix()
        assert np.allclose(m, np.swapaxes(m, -1, -2))
        assert np.array_equal(SymTensorField.from_matrix(g, m).values, t.values)

    def test_fields_are_immutable(self):
        f = ScalarField.zeros(unit_grid(4))
        with pytest.raises(ValueError):
            f.values[0, 0, 0] = 1.0


class TestGradient:
    def test_constant(self):
        g = unit_grid(6)
        assert np.all(gradient(scalar_from(g, lambda x1, x2, x3: 3.0 + 0 * x1)).values == 0)

    def test_unit_spacing_linear(self):
        g = Grid((5, 5, 5))
        grad = gradient(scalar_from(g, lambda x1, x2, x3: x1)).values
        assert np.allclose(grad[0], 1.0, atol=1e-14) and np.allclose(grad[1:], 0.0, atol=1e-14)

    def test_second_order_convergence(self):
        errs = []
        for n in (9, 17, 33):
            g = Grid((n, 4, 4), (2.0 / (n - 1), 1.0, 1.0))
            d = gradient(scalar_from(g, lambda x1, x2, x3: np.sin(x1))).values[0]
            x1 = g.mesh()[0]
            errs.append(np.max(np.abs(d - np.cos(x1))[1:-1]))
        ratios = np.array(errs[:-1]) / np.array(errs[1:])
        assert np.all((ratios > 3.5) & (ratios < 4.5))

    @settings(max_examples=25, deadline=None)
    @given(st.lists(coef, min_size=4, max_size=4))
    def test_affine_exact(self, c):
        g = Grid((5, 6, 7), (0.3, 0.2, 0.1), (-1.0, 0.5, 2.0))
        grad = gradient(scalar_from(g, lambda x1, x2, x3: c[0] + c[1] * x1 + c[2] * x2 + c[3] * x3)).values
        scale = max(1.0, max(abs(v) for v in c))
        for k in range(3):
            assert np.max(np.abs(grad[k] - c[k + 1])) <= 1e-12 * scale * 10


class TestDivergence:
    def test_identity_field(self):
        g = unit_grid(5)
        assert np.allclose(divergence(vector_from(g, lambda *x: x)).values, 3.0, atol=1e-13)

    def test_constant_field(self):
        g = unit_grid(5)
        assert np.allclose(divergence(vector_from(g, lambda x1, x2, x3: (1 + 0 * x1, 2 + 0 * x1, 3 + 0 * x1))).values, 0)

    def test_quadratic_interior_exact(self):
        g = unit_grid(7)
        d = divergence(vector_from(g, lambda x1, x2, x3: (x1**2, 0 * x1, 0 * x1))).values
        assert np.allclose(d, 2 * g.mesh()[0], atol=1e-12)

    def test_matches_sparse_matrix(self, rng):
        g = Grid((4, 5, 6), (0.1, 0.2, 0.3))
        v = rng.standard_normal((3,) + g.dims)
        ref = sum(diff_matrix(g, k) @ v[k].ravel() for k in range(3))
        assert np.allclose(divergence(VectorField(g, v)).values.ravel(), ref, atol=1e-12)


class TestTensorDivergence:
    def test_identity(self):
        g = unit_grid(5)
        one = np.ones(g.dims)
        t = SymTensorField(g, np.stack([one, one, one, 0 * one, 0 * one, 0 * one]))
        assert np.allclose(tensor_divergence(t).values, 0)

    def test_single_entry(self):
        g = unit_grid(5)
        x1 = g.mesh()[0]
        z = np.zeros(g.dims)
        t = SymTensorField(g, np.stack([x1, z, z, z, z, z]))
        out = tensor_divergence(t).values
        assert np.allclose(out[0], 1.0, atol=1e-13) and np.allclose(out[1:], 0.0)

    def test_polynomial_oracle(self):
        # T11 = x1^2 x2, T12 = x2 x3, T13 = x1 x3, T22 = x2^2, T23 = x1 x2, T33 = x3^2
        g = unit_grid(9)
        x1, x2, x3 = g.mesh()
        t = SymTensorField(g, np.stack([x1**2 * x2, x2**2, x3**2, x2 * x3, x1 * x3, x1 * x2]))
        out = tensor_divergence(t).values
        expect = np.stack([2 * x1 * x2 + x3 + x1, 2 * x2, x3 + x1 + 2 * x3])
        assert np.allclose(out, expect, atol=1e-12)


class TestTimeDerivative:
    def _grid(self, T=6, dt=0.1):
        return Grid((3, 3, 3), snapshots=T, dt=dt)

    def _field(self, g, fn):
        t = g.times()
        return VectorField(g, np.stack([fn(tk) * np.ones((3,) + g.dims) for tk in t]))

    def test_linear_in_time(self):
        g = self._grid()
        assert np.allclose(second_time_derivative(self._field(g, lambda t: t)).values, 0, atol=1e-10)

    def test_quadratic_exact(self):
        g = self._grid()
        assert np.allclose(second_time_derivative(self._field(g, lambda t: t**2)).values, 2.0, atol=1e-10)

    def test_sine(self):
        g = self._grid(T=40, dt=0.01)
        w = 3.0
        out = second_time_derivative(self._field(g, lambda t: np.sin(w * t))).values
        expect = -w**2 * np.sin(w * g.times())
        assert np.max(np.abs(out[1:-1, 0, 0, 0, 0] - expect[1:-1])) < 1e-3

    def test_needs_three_snapshots(self):
        with pytest.raises(GridError):
            second_time_derivative(VectorField.zeros(unit_grid(4)))


class TestSobolev:
    def test_zero(self):
        f = ScalarField.zeros(unit_grid(5))
        assert all(sobolev_norm(f, k) == 0 for k in (0, 1, 2))

    def test_constant_unit_cube(self):
        f = ScalarField(unit_grid(6), np.full((6, 6, 6), -2.5))
        assert sobolev_norm(f, 0) == pytest.approx(2.5, rel=1e-12)

    def test_order_one_quadrature(self):
        g = unit_grid(41)
        f = scalar_from(g, lambda x1, x2, x3: np.sin(x1))
        c = scalar_from(g, lambda x1, x2, x3: np.cos(x1))
        assert sobolev_norm(f, 1) ** 2 == pytest.approx(sobolev_norm(f, 0) ** 2 + sobolev_norm(c, 0) ** 2, rel=1e-3)

    def test_bad_order(self):
        with pytest.raises(ValueError):
            sobolev_norm(ScalarField.zeros(unit_grid(4)), 3)

    @settings(max_examples=20, deadline=None)
    @given(st.integers(0, 2**32 - 1))
    def test_monotone_in_order(self, seed):
        g = unit_grid(5)
        f = ScalarField(g, np.random.default_rng(seed).standard_normal(g.dims))
        n0, n1, n2 = (sobolev_norm(f, k) for k in range(3))
        assert n0 <= n1 <= n2


class TestPathIntegral:
    def test_zero(self):
        g = unit_grid(5)
        assert path_integral(VectorField.zeros(g), (0, 0, 0), (1, 1, 1)) == 0

    def test_constant(self):
        g = unit_grid(5)
        a = vector_from(g, lambda x1, x2, x3: (1 + 0 * x1, 0 * x1, 0 * x1))
        assert path_integral(a, (0, 0, 0), (0.37, 0, 0)) == pytest.approx(0.37, abs=1e-14)

    def test_outside_raises(self):
        with pytest.raises(GridError):
            path_integral(VectorField.zeros(unit_grid(4)), (0, 0, 0), (1.5, 0, 0))

    def test_conservative_field(self, rng):
        f = lambda x1, x2, x3: np.sin(2 * x1) * np.cos(x2) + x3**2  # noqa: E731
        n = 17
        g = unit_grid(n)
        a = gradient(scalar_from(g, f))
        p, x = rng.uniform(0, 1, (2, 3))
        v123 = path_integral(a, p, x)
        v321 = path_integral(a, p, x, (2, 1, 0))
        assert v123 == pytest.approx(f(*x) - f(*p), abs=5e-3)
        stencil = (1 / (n - 1)) ** 2
        assert abs(v123 - v321) <= 10 * stencil

    def test_backends_agree(self, rng):
        from elastostab import _pykernels

        try:
            from elastostab import _ckernels
        except ImportError:
            pytest.skip("compiled kernels not built")
        g = unit_grid(7)
        a = np.ascontiguousarray(rng.standard_normal((3,) + g.dims))
        s = rng.uniform(0, 1, (50, 3))
        e = rng.uniform(0, 1, (50, 3))
        args = (a, np.asarray(g.spacing), np.asarray(g.origin), s, e, np.array([1, 0, 2], dtype=np.int64))
        assert np.allclose(_pykernels.staircase_integrals(*args), _ckernels.staircase_integrals(*args),
                           atol=1e-13)

    def test_vectorized_matches_scalar(self, rng):
        g = unit_grid(6)
        a = VectorField(g, rng.standard_normal((3,) + g.dims))
        s, e = rng.uniform(0, 1, (2, 5, 3))
        many = path_integrals(a, s, e)
        assert np.allclose(many, [path_integral(a, s[i], e[i]) for i in range(5)], atol=1e-14)
