"""Lower and upper estimates of the Kobayashi-Royden metric.

Lower bounds come from a strictly plurisubharmonic negative exhaustion ``u``
through the smallest Levi eigenvalue ``lambda0``; upper bounds come from
solving discs through ``p`` with prescribed derivative and checking that they
stay in the domain.
"""
from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from .acs_core import DomainSpec, StructureField, deviation_c1_norm, op_norm, pointwise_norms, \
    standard_matrix
from .charts import COND_LIMIT, QField, TamedChart
from .constants import c_m_from_k, load_manifest, manifest_hash
from .disc_solver import DiscGrid, _as_complex, solve_disc
from .errors import (AcdiscError, EpsilonPrimeViolated, NotCertified, PreconditionFailed)
from .fields import ScalarField, norm_sq
from .levi import Lambda0Result, lambda0
from .psh import epsilon_m

VERIFY_RESOLUTION = 5
TWO_ROUTE_TOL = 1e-8
SIGN_TOL = 1e-12


# --- reports -------------------------------------------------------------------------

@dataclass(frozen=True)
class BoundReport:
    lower: float
    lambda0_used: float
    constants: dict
    p: np.ndarray
    v: np.ndarray
    provenance: str
    upper: float | None = None
    lambda0: dict = field(default_factory=dict)
    manifest_hash: str = ""

    def __post_init__(self):
        if not self.lower >= 0:
            raise ValueError(f"lower bound must be nonnegative, got {self.lower}")
        if self.upper is not None and self.lower > self.upper:
            raise ValueError(f"lower {self.lower} exceeds upper {self.upper}")

    def with_upper(self, upper: float) -> "BoundReport":
        return replace(self, upper=float(upper))

    def to_json(self):
        return {
            "lower": self.lower,
            "upper": self.upper,
            "lambda0_used": self.lambda0_used,
            "constants": self.constants,
            "p": np.asarray(self.p).tolist(),
            "v": np.asarray(self.v).tolist(),
            "provenance": self.provenance,
            "lambda0": self.lambda0,
            "manifest_hash": self.manifest_hash,
        }


@dataclass(frozen=True)
class LocalizationReport:
    N: float
    s: float
    dist: float
    radius: float
    c: float
    q: np.ndarray
    k: float
    certificate: float

    def contains(self, points) -> np.ndarray:
        """Membership in ``V = {x : ||x - q|| < radius}``."""
        pts = np.asarray(points, dtype=float)
        return np.linalg.norm(pts - self.q, axis=-1) < self.radius

    def to_json(self):
        return {"N": self.N, "s": self.s, "dist": self.dist, "radius": self.radius, "c": self.c,
                "q": self.q.tolist(), "k": self.k, "certificate": self.certificate}


# --- shared checks -------------------------------------------------------------------

def _constants(k=None):
    man = load_manifest()
    k = man["k"] if k is None else float(k)
    return man, k


def _lambda_meta(res: Lambda0Result):
    meta = res.to_json()
    meta.pop("argmin_direction", None)
    return meta


def _sign_failures(u: ScalarField, D: DomainSpec, p):
    """Sign checks on ``u``: nonpositive on the closure, negative inside and at ``p``."""
    pts = D.samples()
    vals = u(pts)
    failures = []
    if np.max(vals) > SIGN_TOL:
        failures.append(f"u > 0 on the closure (max {np.max(vals):.3g})")
    inner = D.contains(pts, slack=-1e-9)
    if np.any(inner) and np.max(vals[inner]) >= 0:
        failures.append("u is not negative inside D")
    up = float(u(np.asarray(p, dtype=float)))
    if not up < 0:
        failures.append(f"u(p) = {up:.3g} is not negative")
    return failures, up


def _require_positive(lam: Lambda0Result):
    if not lam.value > 0:
        raise PreconditionFailed([f"u is not strictly plurisubharmonic (lambda0 = {lam.value:.6g})"])


def _vnorm(v) -> float:
    v = np.asarray(v)
    return float(np.linalg.norm(v))


# --- basepoint estimate --------------------------------------------------------------

def lower_bound_basepoint(D: DomainSpec, J: StructureField, u: ScalarField, p, v,
                          k=None) -> BoundReport:
    """``c_m sqrt(lambda0) ||v|| / sqrt|u(p)|`` when ``J(p)`` is standard and ``J`` is
    ``epsilon_m``-close to standard on ``D``."""
    man, k = _constants(k)
    p = np.asarray(p, dtype=float)
    m = D.bound
    eps = epsilon_m(m)
    failures = []
    gap = float(op_norm(J.value(p) - standard_matrix(J.n)))
    if gap > 1e-10:
        failures.append(f"J(p) differs from J_st by {gap:.3g}")
    dev = deviation_c1_norm(J, D)
    if dev > eps:
        failures.append(f"||J - J_st||_C1 = {dev:.3g} exceeds epsilon_m = {eps:.3g}")
    sign, up = _sign_failures(u, D, p)
    failures += sign
    if failures:
        raise PreconditionFailed(failures)
    lam = lambda0(J, u, D)
    _require_positive(lam)
    cm = c_m_from_k(k, m)
    lower = cm * math.sqrt(lam.value) * _vnorm(v) / math.sqrt(abs(up))
    consts = {"c_prime": man["c_prime"], "c_m": cm, "k": k, "m": m, "t": None,
              "epsilon_checks": {"epsilon_m": eps, "deviation_c1": dev, "basepoint_gap": gap}}
    return BoundReport(lower, lam.value, consts, p, np.asarray(v), "basepoint", None,
                       _lambda_meta(lam), manifest_hash(man))


# --- uniform estimate ----------------------------------------------------------------

def epsilon_prime_checks(J: StructureField, D: DomainSpec, points=None,
                         verify_resolution=VERIFY_RESOLUTION) -> dict:
    """Check the three frame-matrix conditions at each verification point.

    For each point ``p`` the frame ``P_p`` must be invertible with ``||P_p||`` and
    ``||P_p^{-1}||`` at most 2, and the structure in the coordinates
    ``P_p^{-1} x`` must be ``epsilon_2``-close to standard in ``C^1`` over the
    image of ``D``. Raises :class:`EpsilonPrimeViolated` on the first failing
    condition, naming the worst point.
    """
    n = J.n
    eps2 = epsilon_m(2)
    pts = D.with_resolution(verify_resolution).samples() if points is None else points
    pts = np.atleast_2d(np.asarray(pts, dtype=float))
    xs = D.samples()
    Jx = J.value(xs)
    dJx = J.derivative(xs)
    Jst = standard_matrix(n)
    Jp = J.value(pts)
    I = np.eye(2 * n)
    P = np.concatenate([np.broadcast_to(I[:, :n], Jp.shape[:-1] + (n,)), Jp[..., :, :n]],
                       axis=-1)
    cond = np.linalg.cond(P)
    bad = ~np.isfinite(cond) | (cond > COND_LIMIT)
    if np.any(bad):
        i = int(np.argmax(np.where(np.isfinite(cond), cond, np.inf)))
        raise EpsilonPrimeViolated("P_p invertible", pts[i], float(cond[i]))
    Pi = np.linalg.inv(P)
    pn = op_norm(P)
    pin = op_norm(Pi)
    for name, vals in (("||P_p|| <= 2", pn), ("||P_p^-1|| <= 2", pin)):
        i = int(np.argmax(vals))
        if vals[i] > 2:
            raise EpsilonPrimeViolated(name, pts[i], float(vals[i]))
    devs = np.empty(len(pts))
    for i in range(len(pts)):
        val = Pi[i] @ Jx @ P[i] - Jst
        # d/dxi_k of Pi J(P xi) P = Pi (sum_l P_lk dJ/dx_l) P
        der = Pi[i] @ np.einsum("...lab,lk->...kab", dJx, P[i]) @ P[i]
        devs[i] = float(np.max(pointwise_norms(val, der)[1]))
    i = int(np.argmax(devs))
    if devs[i] > eps2:
        raise EpsilonPrimeViolated("||P_p^-1 J P_p - J_st||_C1 <= epsilon_2", pts[i],
                                   float(devs[i]))
    return {"epsilon_2": eps2, "P_norm_max": float(pn.max()), "P_inv_norm_max": float(pin.max()),
            "pushforward_deviation_max": float(devs.max()), "verification_points": len(pts)}


def lower_bound(D: DomainSpec, J: StructureField, u: ScalarField, p, v, k=None,
                verify_resolution=VERIFY_RESOLUTION) -> BoundReport:
    """``c' e^{-2t} sqrt(lambda0) ||v|| / sqrt|u(p)|`` for ``D`` inside the unit ball,
    bounded by ``t``, once the frame conditions are verified."""
    man, k = _constants(k)
    p = np.asarray(p, dtype=float)
    t = D.bound
    if t > 1 + 1e-12:
        raise PreconditionFailed([f"D is not inside the unit ball (bound {t:.6g})"])
    checks = epsilon_prime_checks(J, D, np.vstack([p, D.with_resolution(verify_resolution)
                                                   .samples()]))
    sign, up = _sign_failures(u, D, p)
    if sign:
        raise PreconditionFailed(sign)
    lam = lambda0(J, u, D)
    _require_positive(lam)
    cp = 0.25 * math.sqrt(2 / (9 * k))
    lower = cp * math.exp(-2 * t) * math.sqrt(lam.value) * _vnorm(v) / math.sqrt(abs(up))
    # frame conditions are checked against epsilon_2, so the basepoint constant is c_2
    consts = {"c_prime": cp, "c_m": c_m_from_k(k, 2), "k": k, "m": 2, "t": t,
              "epsilon_checks": checks}
    return BoundReport(lower, lam.value, consts, p, np.asarray(v), "uniform", None,
                       _lambda_meta(lam), manifest_hash(man))


# --- chart estimate ------------------------------------------------------------------

def dilate_structure(J: StructureField, t) -> StructureField:
    """``w -> J(t w)``: the structure in the coordinates ``z / t``."""
    t = float(t)
    return StructureField(J.dim, lambda w: J.value(t * np.asarray(w)),
                          lambda w: t * J.derivative(t * np.asarray(w)),
                          J.representation, J.regularity)


def _cut_domain(D: DomainSpec, t):
    """``D`` intersected with the ball of radius ``t``, when that is again a ball."""
    if D.shape != "ball":
        raise PreconditionFailed(["chart estimates need a ball domain"])
    c = np.asarray(D.center)
    cn = float(np.linalg.norm(c))
    if cn + t <= D.radius + 1e-12:
        return DomainSpec.ball(D.dim, t, None, D.resolution)
    if cn + D.radius <= t + 1e-12:
        return D
    raise PreconditionFailed([f"D meets the radius-{t:g} ball in a non-ball region"])


def _scaled_ball(D: DomainSpec, s):
    return DomainSpec.ball(D.dim, D.radius * s, np.asarray(D.center) * s, D.resolution)


def lower_bound_chart(chart, D: DomainSpec, u: ScalarField, p, v, k=None, max_exponent=20,
                      verify_resolution=VERIFY_RESOLUTION) -> BoundReport:
    """Chart version of :func:`lower_bound` with a dilation ``t`` chosen by verification.

    ``chart`` is a :class:`TamedChart` or the structure ``z_*J`` itself; ``D``,
    ``u``, ``p`` and ``v`` are given in chart coordinates. ``t`` is the largest of
    ``1, 1/2, ...`` for which the dilated data pass the frame conditions and
    ``||p|| < t``. The smallest Levi eigenvalue is computed on the dilated data
    and, independently, as ``t^2`` times the value on the undilated cut domain.
    """
    Jz = chart.structure if isinstance(chart, TamedChart) else chart
    man, k = _constants(k)
    p = np.asarray(p, dtype=float)
    gap = float(op_norm(Jz.value(np.zeros(Jz.dim)) - standard_matrix(Jz.n)))
    if gap > 1e-10:
        raise PreconditionFailed([f"z_*J(0) differs from J_st by {gap:.3g}"])
    pn = float(np.linalg.norm(p))
    last = None
    for e in range(max_exponent + 1):
        t = 2.0 ** -e
        if pn >= t:
            break
        cut = _cut_domain(D, t)
        Dt = _scaled_ball(cut, 1 / t)
        Jt = dilate_structure(Jz, t)
        try:
            checks = epsilon_prime_checks(Jt, Dt, np.vstack([p / t, Dt.with_resolution(
                verify_resolution).samples()]))
        except EpsilonPrimeViolated as exc:
            last = exc
            continue
        break
    else:
        t = None
    if t is None or pn >= t:
        if last is not None:
            raise last
        raise PreconditionFailed([f"p lies outside every admissible dilation (||p|| = {pn:.3g})"])
    ut = u.compose_affine(t * np.eye(u.dim))
    sign, up = _sign_failures(ut, Dt, p / t)
    if sign:
        raise PreconditionFailed(sign)
    lam_dil = lambda0(Jt, ut, Dt)
    lam_cut = lambda0(Jz, u, cut, step_tol=1e-7 * t)
    _require_positive(lam_dil)
    route_gap = abs(lam_dil.value - t ** 2 * lam_cut.value)
    m_dil = Dt.bound
    cp = 0.25 * math.sqrt(2 / (9 * k))
    vt = _vnorm(v) / t
    lower = cp * math.exp(-2 * m_dil) * math.sqrt(lam_dil.value) * vt / math.sqrt(abs(up))
    checks = dict(checks, two_route_gap=route_gap,
                  two_route_ok=bool(route_gap <= TWO_ROUTE_TOL * max(1.0, abs(lam_dil.value))),
                  lambda0_cut=lam_cut.value, lambda0_dilated=lam_dil.value,
                  deviation_c1_dilated=deviation_c1_norm(Jt, Dt))
    consts = {"c_prime": cp, "c_m": c_m_from_k(k, 2), "k": k, "m": 2, "t": t,
              "domain_bound": m_dil,
              "epsilon_checks": checks}
    return BoundReport(lower, lam_dil.value, consts, p, np.asarray(v), "chart", None,
                       _lambda_meta(lam_dil), manifest_hash(man))


# --- localization --------------------------------------------------------------------

def localization(u: ScalarField, c, q, J: StructureField, D: DomainSpec, k=None) -> LocalizationReport:
    """Disc-size constants at ``q`` for a ball chart.

    ``N = e^{-1} k^{-1/2} sqrt(c / |u(q)|)`` and ``s = 1 - exp(-N dist)`` with
    ``dist = 1 - ||q||``. The constant ``c`` is certified by requiring
    ``u - c ||x||^2`` to have a positive smallest Levi eigenvalue on ``D``.
    """
    _, k = _constants(k)
    q = np.asarray(q, dtype=float)
    c = float(c)
    uq = float(u(q))
    failures = []
    if not uq < 0:
        failures.append(f"u(q) = {uq:.3g} is not negative")
    if not c > 0:
        failures.append(f"c = {c} must be positive")
    dist = 1.0 - float(np.linalg.norm(q))
    if not dist > 0:
        failures.append("q lies outside the unit ball")
    if failures:
        raise PreconditionFailed(failures)
    cert = lambda0(J, u - norm_sq(u.dim, None, c), D).value
    if not cert > 0:
        raise NotCertified(f"u - {c:g} ||x||^2 is not strictly psh (lambda0 = {cert:.6g})")
    N = math.exp(-1) / math.sqrt(k) * math.sqrt(c / abs(uq))
    s = 1.0 - math.exp(-N * dist)
    return LocalizationReport(N, s, dist, dist, c, q, k, cert)


# --- upper bound ---------------------------------------------------------------------

@dataclass(frozen=True)
class UpperBoundSearch:
    value: float
    trials: tuple
    refined: tuple

    @property
    def admissible(self):
        return [a for a, ok in self.trials + self.refined if ok]


def default_trials(count=50, lo=0.02, hi=50.0) -> np.ndarray:
    return np.geomspace(lo, hi, count)


def _disc_inside(D: DomainSpec, q, p, v, alpha, grid, tol, margin) -> bool:
    try:
        sol = solve_disc(q, p, np.asarray(v) / alpha, grid, tol)
    except AcdiscError:
        return False
    vals = sol.values
    pts = np.concatenate([vals.real, vals.imag], axis=1)
    return bool(np.all(D.contains(pts, slack=margin)))


def upper_bound_search(D: DomainSpec, q: QField | None, p, v, trials=None, grid=None,
                       tol=1e-9, jobs=1, margin=1e-9, exhaustive=False) -> UpperBoundSearch:
    """Smallest trial ``alpha`` whose disc with ``dh/dx(0) = v/alpha`` stays in ``D``.

    Containment is checked on all grid nodes (they reach the unit circle at
    the four axis points). Trials are scanned from the largest down and,
    containment being monotone in ``alpha``, the scan stops at the first disc
    that leaves ``D`` unless ``exhaustive``. The list is then refined once with
    a geometric grid between the best admissible value and its inadmissible
    neighbour.
    """
    grid = grid or DiscGrid()
    n = D.dim // 2
    p = _as_complex(p, n)
    v = _as_complex(v, n)
    trials = np.sort(np.asarray(default_trials() if trials is None else trials, dtype=float))

    def work(a):
        return _disc_inside(D, q, p, v, a, grid, tol, margin)

    def run(alphas):
        alphas = [float(a) for a in alphas[::-1]]
        if exhaustive:
            if jobs > 1:
                with ThreadPoolExecutor(jobs) as ex:
                    oks = list(ex.map(work, alphas))
            else:
                oks = [work(a) for a in alphas]
            return tuple(zip(alphas, oks))
        out = []
        for a in alphas:
            ok = work(a)
            out.append((a, ok))
            if not ok:
                break
        return tuple(out)

    first = run(trials)
    good = [a for a, ok in first if ok]
    if not good:
        return UpperBoundSearch(float("inf"), first, ())
    best = min(good)
    below = [a for a, ok in first if not ok and a < best]
    refined = ()
    if below:
        finer = np.geomspace(max(below), best, len(trials))[1:-1]
        refined = run(finer)
        good = [a for a, ok in refined if ok]
        if good:
            best = min(good)
    return UpperBoundSearch(float(best), first, refined)


def upper_bound(D: DomainSpec, q: QField | None, p, v, trials=None, grid=None, tol=1e-9,
                jobs=1, exhaustive=False) -> float:
    """Disc-based upper bound of the metric; ``inf`` when no trial disc fits."""
    return upper_bound_search(D, q, p, v, trials, grid, tol, jobs, exhaustive=exhaustive).value


__all__ = [
    "BoundReport",
    "LocalizationReport",
    "UpperBoundSearch",
    "default_trials",
    "dilate_structure",
    "epsilon_prime_checks",
    "localization",
    "lower_bound",
    "lower_bound_basepoint",
    "lower_bound_chart",
    "upper_bound",
    "upper_bound_search",
]
