import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from acdisc.acs_core import (DomainSpec, MatrixField, block_form, callable_structure,
                             constant_structure, deviation_c1_norm, extract_H, fd_jacobian,
                             forms_residual, op_norm, pointwise_norms, random_poly_H,
                             standard_matrix, standard_structure, structure_from_H,
                             structure_from_json, structure_norms, validate_structure)
from acdisc.charts import tangent_lift
from acdisc.errors import SingularBlock, TooLarge
from acdisc.poly import Poly


def const_H(matrix, n):
    return Poly.constant(np.asarray(matrix, dtype=complex), 2 * n)


class TestStructureFromH:
    def test_zero_H_gives_standard(self):
        for n in (1, 2):
            J = structure_from_H(const_H(np.zeros((n, n)), n))
            pts = DomainSpec.ball(2 * n, resolution=5).samples()
            assert np.array_equal(J.value(pts)[0], standard_matrix(n))
            assert np.abs(J.derivative(pts)).max() == 0

    def test_imaginary_scalar_H_blocks(self):
        # H = i*eps*I: C = (1+eps)^-1 I, A = 0, B = -(1+eps) I, D = 0
        eps = 0.01
        J = structure_from_H(const_H(1j * eps * np.eye(2), 2))
        Jv = J.value(np.zeros(4))
        assert np.allclose(Jv[2:, :2], np.eye(2) / 1.01, atol=1e-15)
        assert np.allclose(Jv[:2, :2], 0, atol=1e-15)
        assert np.allclose(Jv[:2, 2:], -1.01 * np.eye(2), atol=1e-15)
        assert op_norm(Jv @ Jv + np.eye(4)) < 1e-12

    def test_random_H_is_almost_complex(self, rng):
        for n in (1, 2):
            H = random_poly_H(n, 0.004, rng)
            J = structure_from_H(H)
            pts = rng.uniform(-1, 1, (1000, 2 * n)) / np.sqrt(2 * n)
            Jv = J.value(pts)
            assert op_norm(Jv @ Jv + np.eye(2 * n)).max() < 1e-10

    def test_forms_are_type_one_zero(self, rng):
        H = random_poly_H(2, 0.01, rng)
        J = structure_from_H(H)
        x = rng.uniform(-0.5, 0.5, (50, 4))
        assert forms_residual(J, H, x) < 1e-12
        assert np.abs(extract_H(J, x) - H(x)).max() < 1e-12

    def test_exact_derivative_matches_differences(self, rng):
        J = structure_from_H(random_poly_H(2, 0.02, rng))
        x = rng.uniform(-0.5, 0.5, (20, 4))
        assert np.abs(J.derivative(x) - fd_jacobian(J.value, x)).max() < 1e-8

    def test_callable_H_matches_poly(self, rng):
        H = random_poly_H(1, 0.02, rng)
        Jp = structure_from_H(H)
        Jc = structure_from_H(lambda x: H(x), n=1)
        x = rng.uniform(-0.5, 0.5, (20, 2))
        assert np.abs(Jp.value(x) - Jc.value(x)).max() < 1e-14
        assert np.abs(Jp.derivative(x) - Jc.derivative(x)).max() < 1e-8

    def test_cap(self):
        with pytest.raises(TooLarge):
            structure_from_H(const_H([[0.5]], 1))

    def test_singular_block(self):
        with pytest.raises(SingularBlock):
            structure_from_H(const_H([[-1j]], 1), cap=2.0)


class TestValidate:
    def test_standard(self):
        rep = validate_structure(standard_structure(2), DomainSpec.ball(4))
        assert rep.max_residual == 0 and rep.passed

    def test_tangent_lift(self, rng):
        J = structure_from_H(random_poly_H(1, 0.02, rng))
        lifted = tangent_lift(J).lifted
        rep = validate_structure(lifted, DomainSpec.ball(4, 0.8, resolution=7))
        assert rep.max_residual < 1e-10

    def test_non_structure_reports_residual(self):
        M = 2 * np.eye(2)
        field = MatrixField(2, lambda x: np.broadcast_to(M, x.shape[:-1] + (2, 2)),
                            lambda x: np.zeros(x.shape[:-1] + (2, 2, 2)))
        rep = validate_structure(field, DomainSpec.ball(2, resolution=5))
        assert rep.max_residual == pytest.approx(op_norm(M @ M + np.eye(2)))
        assert not rep.passed


class TestNorms:
    def test_standard_norms(self):
        rep = structure_norms(standard_structure(2), DomainSpec.ball(4))
        assert (rep.norm0, rep.norm1, rep.c1_norm) == (1.0, 1.0, 1.0)

    def test_constant_has_no_derivative_term(self):
        J = constant_structure([[0.0, -2.0], [0.5, 0.0]])
        rep = structure_norms(J, DomainSpec.ball(2))
        assert rep.norm1 == rep.norm0 == pytest.approx(2.0)

    def test_linear_in_y_matches_hand_assembly(self):
        # H = a*y gives J - J_st = [[-a y, -a^2 y^2], [0, a y]]
        a = 0.05
        H = Poly({(0, 1): np.array([[a + 0j]])}, 2, (1, 1), complex)
        D = DomainSpec.ball(2)
        dev = deviation_c1_norm(structure_from_H(H), D)
        y = D.samples()[:, 1]
        n0 = op_norm(np.stack([np.stack([-a * y, -a ** 2 * y ** 2], -1),
                               np.stack([0 * y, a * y], -1)], -2))
        rows = np.sqrt((a ** 2 + 4 * a ** 4 * y ** 2) + a ** 2)
        assert dev == pytest.approx((n0 + rows).max(), abs=1e-8)

    @settings(max_examples=25, deadline=None)
    @given(st.floats(0.1, 3.0), st.integers(0, 3))
    def test_norm0_scales(self, s, seed):
        rng = np.random.default_rng(seed)
        M = rng.normal(size=(3, 2, 2))
        dM = rng.normal(size=(3, 2, 2, 2))
        a0, a1 = pointwise_norms(M, dM)
        b0, b1 = pointwise_norms(s * M, s * dM)
        assert np.allclose(b0, s * a0) and np.allclose(b1, s * a1)
        assert np.all(a1 >= a0)


class TestBlockForm:
    def test_standard(self):
        bf = block_form(standard_structure(2), np.zeros(4))
        assert np.array_equal(bf.A, np.zeros((2, 2))) and np.array_equal(bf.B, -np.eye(2))
        assert np.array_equal(bf.C, np.eye(2)) and np.array_equal(bf.D, np.zeros((2, 2)))
        assert bf.residual_B == 0 and bf.residual_D == 0

    def test_from_small_H(self, rng):
        J = structure_from_H(random_poly_H(2, 0.02, rng))
        for p in rng.uniform(-0.4, 0.4, (10, 4)):
            bf = block_form(J, p)
            assert bf.residual_B < 1e-10 and bf.residual_D < 1e-10

    def test_singular_C(self):
        # a rotated structure whose lower-left block vanishes
        J = constant_structure([[0, -1, 0, 0], [1, 0, 0, 0], [0, 0, 0, -1], [0, 0, 1, 0]])
        with pytest.raises(SingularBlock):
            block_form(J, np.zeros(4))


class TestDomain:
    def test_ball_contains_samples(self):
        D = DomainSpec.ball(4, 0.7, center=[0.1, 0, 0, 0])
        pts = D.samples()
        assert np.all(np.linalg.norm(pts - D.center, axis=-1) <= 0.7 * (1 + 1e-12))
        assert D.bound == pytest.approx(0.8)

    def test_projection_and_exclusion(self):
        D = DomainSpec.ball(2).excluding([0, 0], 0.25)
        x = D.project([[2.0, 0.0], [0.1, 0.0]])
        assert np.allclose(x, [[1.0, 0.0], [0.25, 0.0]])
        assert not D.contains(np.zeros(2))

    def test_json_roundtrip(self):
        D = DomainSpec((0, 0), "box", half_widths=(1, 2), resolution=9)
        assert DomainSpec.from_json(D.to_json()) == D


def test_structure_from_json():
    assert np.array_equal(structure_from_json({"n": 1, "repr": "standard"}).value(np.zeros(2)),
                          standard_matrix(1))
    J = structure_from_json({"n": 1, "repr": "constant", "entries": [[0, -2], [0.5, 0]]})
    assert J.value(np.zeros(2))[0, 1] == -2


def test_callable_structure_derivative():
    J = callable_structure(lambda x: standard_matrix(1) + 0 * x[..., :1, None], 2)
    assert np.abs(J.derivative(np.zeros((3, 2)))).max() == 0
