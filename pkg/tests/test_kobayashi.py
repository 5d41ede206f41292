import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from acdisc import constants
from acdisc.acs_core import (DomainSpec, constant_structure, random_poly_H, standard_structure,
                             structure_from_H)
from acdisc.charts import QField
from acdisc.disc_solver import DiscGrid
from acdisc.errors import EpsilonPrimeViolated, NotCertified, PreconditionFailed
from acdisc.fields import norm_sq
from acdisc.kobayashi import (BoundReport, default_trials, dilate_structure,
                              epsilon_prime_checks, localization, lower_bound,
                              lower_bound_basepoint, lower_bound_chart, upper_bound,
                              upper_bound_search)

K = constants.load_manifest()["k"]
C_PRIME = constants.load_manifest()["c_prime"]


def perturbed(seed, amp=0.0005):
    rng = np.random.default_rng(seed)
    return structure_from_H(random_poly_H(1, amp, rng, vanish_at=[0, 0]))


class TestBasepoint:
    def test_unit_disc(self, unit_disc, jst1, disc_exhaustion):
        rep = lower_bound_basepoint(unit_disc, jst1, disc_exhaustion, [0, 0], [1, 0])
        assert rep.lower == pytest.approx(2 * math.sqrt(2 / (9 * K * math.e ** 2)), rel=1e-12)
        assert rep.constants["c_m"] == pytest.approx(constants.c_m(1), rel=1e-15)
        assert rep.constants["c_prime"] == C_PRIME
        assert rep.manifest_hash == constants.manifest_hash()

    def test_homogeneous_in_v(self, unit_disc, jst1, disc_exhaustion):
        a = lower_bound_basepoint(unit_disc, jst1, disc_exhaustion, [0, 0], [1, 0]).lower
        b = lower_bound_basepoint(unit_disc, jst1, disc_exhaustion, [0, 0], [3, 0]).lower
        assert b == pytest.approx(3 * a, rel=1e-14)

    def test_below_poincare_value(self, unit_disc, jst1, disc_exhaustion):
        rep = lower_bound_basepoint(unit_disc, jst1, disc_exhaustion, [0, 0], [1, 0])
        up = upper_bound(unit_disc, None, [0, 0], [1, 0], grid=DiscGrid(32))
        assert rep.lower <= 1 <= up * 1.05

    def test_positive_u_rejected(self, unit_disc, jst1):
        with pytest.raises(PreconditionFailed) as exc:
            lower_bound_basepoint(unit_disc, jst1, norm_sq(2), [0, 0], [1, 0])
        assert any("u(p)" in f for f in exc.value.failures)


class TestUniform:
    def test_unit_disc(self, unit_disc, jst1, disc_exhaustion):
        rep = lower_bound(unit_disc, jst1, disc_exhaustion, [0, 0], [0.6, 0.8])
        assert rep.lower == pytest.approx(C_PRIME * math.exp(-2) * 2, rel=1e-12)
        assert rep.provenance == "uniform"
        checks = rep.constants["epsilon_checks"]
        assert checks["P_norm_max"] == 1 and checks["P_inv_norm_max"] == 1

    def test_frame_violation(self, unit_disc, disc_exhaustion):
        J = constant_structure([[0, -1 / 0.3], [0.3, 0]])
        with pytest.raises(EpsilonPrimeViolated) as exc:
            lower_bound(unit_disc, J, disc_exhaustion, [0, 0], [1, 0])
        assert exc.value.condition == "||P_p^-1|| <= 2"
        assert exc.value.value == pytest.approx(1 / 0.3)

    @settings(max_examples=20, deadline=None)
    @given(st.floats(0.0, 5.0))
    def test_monotone_in_depth(self, shift):
        # deeper u (larger |u(p)|, same Levi form) gives a smaller bound
        D = DomainSpec.ball(2)
        J = standard_structure(1)
        a = lower_bound(D, J, norm_sq(2, None, 1.0, -1.0), [0.1, 0], [1, 0]).lower
        b = lower_bound(D, J, norm_sq(2, None, 1.0, -1.0 - shift), [0.1, 0], [1, 0]).lower
        assert b <= a
        assert b == pytest.approx(a * math.sqrt(0.99 / (0.99 + shift)), rel=1e-12)

    def test_sandwich_perturbed(self, unit_disc, disc_exhaustion):
        J = perturbed(1)
        q = QField(J)
        rng = np.random.default_rng(7)
        grid = DiscGrid(32)
        for _ in range(20):
            p = rng.uniform(-0.4, 0.4, 2)
            v = rng.normal(size=2)
            rep = lower_bound(unit_disc, J, disc_exhaustion, p, v)
            up = upper_bound(unit_disc, q, p, v, grid=grid)
            assert rep.lower <= up
            rep.with_upper(up)

    def test_report_invariant(self):
        with pytest.raises(ValueError):
            BoundReport(2.0, 1.0, {}, np.zeros(2), np.ones(2), "uniform", upper=1.0)


class TestChart:
    def test_identity_chart(self, unit_disc, jst1, disc_exhaustion):
        a = lower_bound(unit_disc, jst1, disc_exhaustion, [0.1, 0.0], [1, 0])
        b = lower_bound_chart(jst1, unit_disc, disc_exhaustion, [0.1, 0.0], [1, 0])
        assert b.lower == a.lower and b.constants["t"] == 1.0

    def test_two_routes_after_dilation(self, unit_disc, disc_exhaustion):
        J = perturbed(1, amp=0.001)
        rep = lower_bound_chart(J, unit_disc, disc_exhaustion, [0.1, 0.0], [1, 0])
        checks = rep.constants["epsilon_checks"]
        t = rep.constants["t"]
        assert t == 0.5
        assert checks["two_route_ok"] and checks["two_route_gap"] <= 1e-8
        assert checks["lambda0_dilated"] == pytest.approx(t * t * checks["lambda0_cut"], abs=1e-8)

    def test_large_derivative_shrinks_t(self, unit_disc, disc_exhaustion):
        J = perturbed(1, amp=0.05)
        rep = lower_bound_chart(J, unit_disc, disc_exhaustion, [0.01, 0.0], [1, 0])
        assert rep.constants["t"] <= 0.125 and rep.lower > 0

    def test_dilation(self, rng):
        J = perturbed(2, amp=0.01)
        x = rng.uniform(-1, 1, (5, 2))
        Jt = dilate_structure(J, 0.5)
        assert np.array_equal(Jt.value(x), J.value(0.5 * x))
        assert np.allclose(Jt.derivative(x), 0.5 * J.derivative(0.5 * x))

    def test_epsilon_checks_standard(self, unit_disc, jst1):
        checks = epsilon_prime_checks(jst1, unit_disc)
        assert checks["pushforward_deviation_max"] == 0


class TestLocalization:
    def test_constants(self, unit_disc, jst1):
        u = norm_sq(2, None, 2.0, -1.0)
        rep = localization(u, 1.0, [0, 0], jst1, unit_disc)
        assert rep.N == pytest.approx(math.exp(-1) / math.sqrt(K), rel=1e-14)
        assert rep.s == pytest.approx(-math.expm1(-rep.N * rep.dist), rel=1e-14)
        quad = localization(u, 0.25, [0, 0], jst1, unit_disc)
        assert rep.N == pytest.approx(2 * quad.N, rel=1e-14)

    def test_s_arithmetic(self):
        assert 1 - math.exp(-math.log(2)) == pytest.approx(0.5, abs=1e-16)

    def test_not_certified(self, unit_disc, jst1):
        with pytest.raises(NotCertified):
            localization(norm_sq(2, None, 1.0, -1.0), 1.0, [0, 0], jst1, unit_disc)


class TestUpper:
    def test_unit_disc(self, unit_disc):
        s = upper_bound_search(unit_disc, None, [0, 0], [1, 0])
        assert abs(s.value - 1) <= 0.05
        assert s.value >= 1

    def test_scaling(self):
        for r in (0.5, 0.25):
            val = upper_bound(DomainSpec.ball(2, r), None, [0, 0], [1, 0], grid=DiscGrid(32))
            assert val == pytest.approx(1 / r, rel=0.05)

    def test_near_boundary(self, unit_disc):
        vals = [upper_bound(unit_disc, None, [x, 0], [1, 0], grid=DiscGrid(32))
                for x in (0.0, 0.5, 0.9)]
        assert vals[0] < vals[1] < vals[2]

    def test_monotone_containment(self, unit_disc):
        s = upper_bound_search(unit_disc, None, [0.3, 0], [1, 0], grid=DiscGrid(16),
                               exhaustive=True)
        oks = [ok for a, ok in sorted(s.trials)]
        assert oks == sorted(oks)

    def test_no_admissible_trial(self, unit_disc):
        assert upper_bound(unit_disc, None, [0, 0], [1, 0], trials=[0.1, 0.2],
                           grid=DiscGrid(16)) == math.inf

    def test_default_trials(self):
        t = default_trials()
        assert len(t) == 50 and t[0] == pytest.approx(0.02) and t[-1] == pytest.approx(50)
