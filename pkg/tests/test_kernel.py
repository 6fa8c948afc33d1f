import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import unit_grid, vector_from
from elastostab.grid import ScalarField, SymTensorField, VectorField, gradient, tensor_divergence
from elastostab.kernel import (NearSingularStrainWarning, SingularStrainError, center_node, kernel_certificate,
                               kernel_element, kernel_vector_field, path_independence_defect, verify_kernel)


def sym_field(g, fn):
    x1, x2, x3 = g.mesh()
    m = fn(x1, x2, x3)
    return SymTensorField.from_matrix(g, m)


def scaled_identity(g, s):
    return SymTensorField.from_matrix(g, s[..., None, None] * np.eye(3))


def smooth_strain(g):
    x1, x2, x3 = g.mesh()
    m = np.zeros(g.dims + (3, 3))
    m[..., 0, 0] = 2 + np.sin(x2)
    m[..., 1, 1] = 1.5 + 0.3 * x1 * x3
    m[..., 2, 2] = 1 + x1**2
    m[..., 0, 1] = m[..., 1, 0] = 0.3 * np.cos(x3)
    m[..., 1, 2] = m[..., 2, 1] = 0.2 * x1
    return SymTensorField.from_matrix(g, m)


class TestVectorField:
    def test_constant_strain(self):
        g = unit_grid(5)
        eps = SymTensorField.from_matrix(g, np.broadcast_to(np.diag([1.0, 2, 3]) + 0.1, g.dims + (3, 3)))
        assert np.allclose(kernel_vector_field(eps).values, 0, atol=1e-13)

    def test_exponential_identity(self):
        g = unit_grid(21)
        a = kernel_vector_field(scaled_identity(g, np.exp(-g.mesh()[0]))).values
        assert np.abs(a[0] - 1).max() < 5e-3 and np.abs(a[1:]).max() < 1e-12

    def test_matches_direct_solve(self):
        g = unit_grid(7)
        eps = smooth_strain(g)
        a = kernel_vector_field(eps).values.reshape(3, -1).T
        mats = eps.matrix().reshape(-1, 3, 3)
        rhs = -tensor_divergence(eps).values.reshape(3, -1).T
        direct = np.linalg.solve(mats, rhs[..., None])[..., 0]
        assert np.abs(a - direct).max() <= 1e-10 * max(1, np.abs(direct).max())

    @settings(max_examples=10, deadline=None)
    @given(st.floats(0.01, 100))
    def test_scale_invariant(self, c):
        g = unit_grid(5)
        eps = smooth_strain(g)
        a1 = kernel_vector_field(eps).values
        a2 = kernel_vector_field(SymTensorField(g, c * eps.values)).values
        assert np.allclose(a1, a2, atol=1e-10 * max(1, np.abs(a1).max()))

    def test_singular_raises_with_locations(self):
        g = unit_grid(5)
        x1 = g.mesh()[0]
        m = np.zeros(g.dims + (3, 3))
        m[..., 0, 0] = x1 - 0.5
        m[..., 1, 1] = m[..., 2, 2] = 1
        with pytest.raises(SingularStrainError) as exc:
            kernel_vector_field(SymTensorField.from_matrix(g, m))
        assert np.allclose(exc.value.locations[:, 0], 0.5)

    def test_near_singular_warns(self):
        g = unit_grid(4)
        m = np.broadcast_to(np.diag([1.0, 1.0, 1e-9]), g.dims + (3, 3))
        with pytest.warns(NearSingularStrainWarning):
            kernel_vector_field(SymTensorField.from_matrix(g, m))

    def test_backends_agree(self, rng):
        from elastostab import _pykernels

        try:
            from elastostab import _ckernels
        except ImportError:
            pytest.skip("compiled kernels not built")
        mats = rng.normal(size=(200, 3, 3)) + 4 * np.eye(3)
        mats = np.ascontiguousarray(mats + np.swapaxes(mats, 1, 2))
        rhs = np.ascontiguousarray(rng.normal(size=(200, 3)))
        assert np.allclose(_pykernels.gram_schmidt_solve(mats, rhs), _ckernels.gram_schmidt_solve(mats, rhs),
                           atol=1e-12)


class TestElement:
    def test_zero_field(self):
        g = unit_grid(5)
        d = kernel_element(VectorField.zeros(g))
        assert np.all(d.values == 1)

    def test_constant_field(self):
        g = unit_grid(9)
        a = vector_from(g, lambda x1, x2, x3: (1 + 0 * x1, 0 * x1, 0 * x1))
        d = kernel_element(a, (0, 0, 0)).values
        assert np.allclose(d, np.exp(g.mesh()[0]), rtol=1e-13)

    def test_log_gradient(self):
        g = unit_grid(17)
        x1, x2, x3 = g.mesh()
        m = np.exp(0.5 * x1 - 0.3 * x2 + 0.2 * x3**2)
        a = gradient(ScalarField(g, np.log(m)))
        p = center_node(g)
        d = kernel_element(a, p).values
        mp = np.exp(0.5 * p[0] - 0.3 * p[1] + 0.2 * p[2] ** 2)
        assert np.abs(d - m / mp).max() < 5e-3

    def test_positive_and_normalized(self, rng):
        g = unit_grid(6)
        a = VectorField(g, rng.normal(size=(3,) + g.dims))
        p = center_node(g)
        d = kernel_element(a, p)
        idx = tuple(int(round((p[k] - g.origin[k]) / g.spacing[k])) for k in range(3))
        assert np.all(d.values > 0) and d.values[idx] == 1.0

    def test_outside_point(self):
        from elastostab.grid import GridError
        with pytest.raises(GridError):
            kernel_element(VectorField.zeros(unit_grid(4)), (2, 0, 0))


class TestVerify:
    def test_zero(self):
        g = unit_grid(5)
        assert verify_kernel(ScalarField.zeros(g), smooth_strain(g)) == 0.0

    def test_manufactured_pair(self):
        for n in (9, 17):
            g = unit_grid(n)
            m = np.exp(g.mesh()[0])
            assert verify_kernel(ScalarField(g, m), scaled_identity(g, 1 / m)) <= (1 / (n - 1)) ** 2

    def test_constant_strain_constant_kernel(self):
        g = unit_grid(6)
        eps = SymTensorField.from_matrix(g, np.broadcast_to(np.diag([1.0, 2, 3]), g.dims + (3, 3)))
        cert = kernel_certificate(eps)
        assert np.allclose(cert.delta_mu_star.values, 1.0)


class TestPathDefect:
    def test_constant(self):
        g = unit_grid(5)
        a = vector_from(g, lambda x1, x2, x3: (1 + 0 * x1, 2 + 0 * x1, -1 + 0 * x1))
        assert path_independence_defect(a) < 1e-14

    def test_gradient_field(self):
        n = 17
        g = unit_grid(n)
        a = gradient(ScalarField(g, np.sin(2 * g.mesh()[0]) * np.cos(g.mesh()[1])))
        assert path_independence_defect(a) <= 10 * (1 / (n - 1)) ** 2

    def test_rotation(self):
        g = unit_grid(9)
        a = vector_from(g, lambda x1, x2, x3: (-x2, x1, 0 * x1))
        assert path_independence_defect(a) > 0.05


def test_certificate_summary():
    g = unit_grid(6)
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        cert = kernel_certificate(smooth_strain(g))
    s = cert.summary()
    assert s["delta_mu_star_min"] > 0 and s["residual"] >= 0
