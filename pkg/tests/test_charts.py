import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from acdisc.acs_core import (DomainSpec, fd_jacobian, op_norm, random_poly_H, standard_matrix,
                             standard_structure, structure_from_H, validate_structure)
from acdisc.charts import (QField, build_tamed_chart, complex_q, eq10_matrices, frame_matrix,
                           lift_matrix, normalize, pushforward, real_q, tangent_lift, zero_q)
from acdisc.disc_solver import DiscGrid, solve_disc
from acdisc.errors import CannotTame
from acdisc.poly import Poly


def flat_E_structure(a=0.05):
    """H vanishing on {y = 0}: H = a (1 + 0.3i) y + a/2 x y."""
    H = Poly({(0, 1): np.array([[a * (1 + 0.3j)]]), (1, 1): np.array([[0.5 * a]])}, 2, (1, 1),
             complex)
    return structure_from_H(H)


def real_form(w):
    return np.concatenate([w.real, w.imag], axis=-1)


class TestQ:
    def test_standard_is_zero(self):
        q = zero_q(2)
        assert np.abs(q(np.random.default_rng(0).uniform(-1, 1, (10, 4)))).max() == 0

    @pytest.mark.parametrize("n", [1, 2])
    def test_antilinear_and_eq10(self, n, rng):
        J = structure_from_H(random_poly_H(n, 0.02, rng))
        x = rng.uniform(-0.5, 0.5, (50, 2 * n))
        Jv = J.value(x)
        Qr = real_q(Jv)
        Jst = standard_matrix(n)
        assert np.abs(Qr @ Jst + Jst @ Qr).max() < 1e-14
        trailing, leading = eq10_matrices(Jv)
        assert np.abs(np.linalg.solve(leading, trailing) - Qr).max() < 1e-12

    @settings(max_examples=30, deadline=None)
    @given(st.integers(0, 10**6))
    def test_complex_form(self, seed):
        rng = np.random.default_rng(seed)
        J = structure_from_H(random_poly_H(2, 0.02, rng))
        x = rng.uniform(-0.5, 0.5, 4)
        Qr = real_q(J.value(x))
        w = rng.normal(size=2) + 1j * rng.normal(size=2)
        assert np.allclose(Qr @ real_form(w), real_form(complex_q(Qr) @ np.conj(w)), atol=1e-14)

    def test_nan_propagates(self):
        Jv = np.full((2, 2), np.nan)
        assert np.all(np.isnan(real_q(Jv)))


class TestPushforward:
    def test_identity(self, rng):
        J = structure_from_H(random_poly_H(1, 0.02, rng))
        x = rng.uniform(-0.5, 0.5, (10, 2))
        Jp = pushforward(J, np.eye(2))
        assert np.array_equal(Jp.value(x), J.value(x))

    def test_frame_fixes_point(self, rng):
        J = structure_from_H(random_poly_H(2, 0.03, rng))
        p = rng.uniform(-0.3, 0.3, 4)
        P = frame_matrix(J, p)
        Jp = pushforward(J, P, p)
        assert np.abs(Jp.value(np.zeros(4)) - standard_matrix(2)).max() < 1e-14
        assert np.array_equal(frame_matrix(standard_structure(2), p), np.eye(4))

    def test_derivative(self, rng):
        J = structure_from_H(random_poly_H(2, 0.02, rng))
        P = rng.normal(size=(4, 4)) + 3 * np.eye(4)
        Jt = pushforward(J, P)
        x = rng.uniform(-0.1, 0.1, (10, 4))
        assert np.abs(Jt.derivative(x) - fd_jacobian(Jt.value, x)).max() < 1e-7


class TestTamedChart:
    def test_standard_identity_chart(self):
        ch = build_tamed_chart(standard_structure(1), [0.2, 0.0], 0.05)
        x = np.random.default_rng(1).uniform(-0.5, 0.5, (20, 2))
        assert ch.t == 1.0
        assert np.allclose(ch.z(x + [0.2, 0.0]), x, atol=1e-14)
        assert np.abs(ch.q(x)).max() == 0

    def test_ratio_bound(self, rng):
        eps = 0.5
        ch = build_tamed_chart(flat_E_structure(), [0.0, 0.0], eps)
        pts = np.concatenate([DomainSpec.ball(2).samples(), rng.uniform(-0.7, 0.7, (300, 2))])
        pts = pts[np.abs(pts[:, 1]) > 1e-3]
        ratio = op_norm(ch.structure.value(pts) - standard_matrix(1)) / np.abs(pts[:, 1])
        assert ratio.max() <= ch.c * eps * 1.05
        assert ch.deviation_c1 <= eps

    def test_q_vanishes_on_E(self):
        ch = build_tamed_chart(flat_E_structure(), [0.0, 0.0], 0.5)
        xs = np.stack([np.linspace(-0.9, 0.9, 37), np.zeros(37)], -1)
        assert np.abs(ch.q(xs)).max() <= 1e-10
        assert ch.q_on_slice <= 1e-10

    def test_pushes_structure(self, rng):
        J = flat_E_structure()
        ch = build_tamed_chart(J, [0.0, 0.0], 0.5)
        z = rng.uniform(-0.4, 0.4, (5, 2))
        q0 = ch.inverse(z)
        assert np.abs(ch.z(q0) - z).max() < 1e-12
        dz = np.swapaxes(fd_jacobian(ch.z, q0), -1, -2)
        pushed = dz @ J.value(q0) @ np.linalg.inv(dz)
        assert np.abs(pushed - ch.structure.value(z)).max() < 1e-7

    def test_cannot_tame(self, rng):
        J = structure_from_H(random_poly_H(1, 0.05, rng))
        with pytest.raises(CannotTame):
            build_tamed_chart(J, [0.0, 0.0], 1e-9, min_exponent=6)

    def test_off_E_rejected(self):
        with pytest.raises(ValueError):
            build_tamed_chart(standard_structure(1), [0.0, 0.3], 0.05)


def test_disc_satisfies_raw_system(rng):
    # a solved disc of dbar h + q(h) conj(dh) = 0 also solves the A, C block system
    J = structure_from_H(random_poly_H(1, 0.01, rng))
    q = QField(J)
    g = DiscGrid(64)
    sol = solve_disc(q, [0.05 + 0.02j], [0.4 + 0.1j], g, tol=1e-10)
    inner = (np.abs(g.zeta) <= 0.75) & g.stencil_ok
    h = sol.values[inner]
    trailing, leading = eq10_matrices(J.value(real_form(h)))
    raw = np.einsum("kij,kj->ki", leading, real_form(g.dbar(sol.values)[inner])) + \
        np.einsum("kij,kj->ki", trailing, real_form(g.d(sol.values)[inner]))
    raw = np.linalg.norm(raw, axis=1)
    complex_res = np.linalg.norm(g.dbar(sol.values)[inner] + np.einsum(
        "kij,kj->ki", q.at_complex(h), np.conj(g.d(sol.values)[inner])), axis=1)
    assert raw.max() <= 5 * max(complex_res.max(), 1e-14)
    assert raw.max() < 1e-3


class TestTangentLift:
    def test_standard(self):
        L = tangent_lift(standard_structure(1))
        w = np.random.default_rng(2).normal(size=(10, 4))
        order_std = standard_matrix(2)
        perm = lift_matrix(np.eye(2))
        assert np.array_equal(perm, np.eye(4))
        assert np.abs(L.lifted.value(w) - order_std).max() == 0

    def test_valid_and_compatible(self, rng):
        for n in (1, 2):
            J = structure_from_H(random_poly_H(n, 0.02, rng))
            L = tangent_lift(J)
            D = DomainSpec.ball(4 * n, 0.6, resolution=5)
            assert validate_structure(L.lifted, D).max_residual < 1e-10
            x = rng.uniform(-0.5, 0.5, (1000, 2 * n))
            assert np.abs(L.project(L.phi_c(L.include(x))) - L.phi(x)).max() < 1e-12

    def test_naturality(self, rng):
        J = structure_from_H(random_poly_H(1, 0.02, rng))
        P = rng.normal(size=(2, 2)) + 3 * np.eye(2)
        L = tangent_lift(J)
        Lp = tangent_lift(pushforward(J, P))
        Pc = lift_matrix(P)
        w = rng.normal(size=(20, 4)) * 0.1
        expect = np.linalg.inv(Pc) @ L.lifted.value(w @ Pc.T) @ Pc
        assert np.abs(Lp.lifted.value(w) - expect).max() < 1e-8


def test_normalize_slice(rng):
    J = structure_from_H(random_poly_H(1, 0.02, rng))
    x = np.stack([rng.uniform(-0.5, 0.5, 10), np.zeros(10)], -1)
    assert np.allclose(normalize(J, x), x)
