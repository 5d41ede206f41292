"""Strictly plurisubharmonic barriers with explicit constants.

Contains the cutoff ``theta`` with its curvature constant ``k``, the perturbation
size ``epsilon_m`` under which the Levi form of ``||x - p||^2`` stays in
``[7/2, 9/2]``, the logarithmic barrier builder, the deflation ``w - delta ||x-p||^2``,
the minimal curvature of a flattened totally real submanifold, and the
sum-of-squares function of a set of defining functions.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.special import expit

from .acs_core import (DomainSpec, StructureField, deviation_c1_norm, op_norm, standard_matrix,
                       standard_structure)
from .errors import (DeltaTooLarge, DegenerateDefiningFunctions, EmptyAtlas, InvalidCutoff,
                     NonPositive, NotCertified, PreconditionFailed)
from .fields import ScalarField, norm_field, norm_sq, sum_y_sq
from .levi import Lambda0Result, _min_eigs, lambda0

EXCLUSION_RADIUS = 1e-4


def epsilon_m(m) -> float:
    """Admissible ``||J - J_st||_{C^1}`` for a domain bounded by ``m``."""
    m = float(m)
    if m <= 0:
        raise NonPositive(f"m must be positive, got {m}")
    return min(1 / (32 * (1 + m)), 1 / (32 * m * (1 + m)))


# --- cutoff --------------------------------------------------------------------------

@dataclass(frozen=True)
class Cutoff:
    """A cutoff ``theta`` on ``[0, inf)`` with its first two derivatives."""

    name: str
    value_fn: Callable = field(repr=False)
    d1_fn: Callable = field(repr=False)
    d2_fn: Callable = field(repr=False)

    def __call__(self, x):
        return self.value_fn(np.asarray(x, dtype=float))

    def d1(self, x):
        return self.d1_fn(np.asarray(x, dtype=float))

    def d2(self, x):
        return self.d2_fn(np.asarray(x, dtype=float))


def _blend_parts(x):
    """``s``, ``sigma`` and the derivatives of ``sigma`` w.r.t. ``s`` on the blend interval."""
    s = 3 * (x - 1 / 3)
    inner = (s > 0) & (s < 1)
    sc = np.where(inner, s, 0.5)
    f = 1 / sc - 1 / (1 - sc)
    f1 = -1 / sc ** 2 - 1 / (1 - sc) ** 2
    f2 = 2 / sc ** 3 - 2 / (1 - sc) ** 3
    sig = expit(-f)
    sig1 = -sig * (1 - sig) * f1
    sig2 = -sig1 * (1 - 2 * sig) * f1 - sig * (1 - sig) * f2
    sig = np.where(inner, sig, np.where(s >= 1, 1.0, 0.0))
    sig1 = np.where(inner, sig1, 0.0)
    sig2 = np.where(inner, sig2, 0.0)
    return sig, sig1, sig2


def _blend_value(x):
    sig, _, _ = _blend_parts(x)
    return np.where(x >= 2 / 3, 1.0, x + sig * (1 - x))


def _blend_d1(x):
    sig, sig1, _ = _blend_parts(x)
    return np.where(x >= 2 / 3, 0.0, 1 - sig + 3 * sig1 * (1 - x))


def _blend_d2(x):
    _, sig1, sig2 = _blend_parts(x)
    return np.where(x >= 2 / 3, 0.0, 9 * sig2 * (1 - x) - 6 * sig1)


def default_cutoff() -> Cutoff:
    """Identity below 1/3, one above 2/3, smooth logistic-type blend in between."""
    return Cutoff("default-blend-v1", _blend_value, _blend_d1, _blend_d2)


def validate_cutoff(theta: Cutoff, samples=10_000, tol=1e-12):
    lo = np.linspace(1e-6, 1 / 3, samples // 4)
    if np.max(np.abs(theta(lo) - lo)) > tol:
        raise InvalidCutoff("theta(x) must equal x on [0, 1/3]")
    hi = np.linspace(2 / 3, 2.0, samples // 4)
    if np.max(np.abs(theta(hi) - 1)) > tol:
        raise InvalidCutoff("theta(x) must equal 1 for x >= 2/3")
    xs = np.linspace(1e-6, 1.0, samples)
    vals = theta(xs)
    if np.any(np.diff(vals) < -tol):
        raise InvalidCutoff("theta must be nondecreasing")
    if np.any(vals <= 0):
        raise InvalidCutoff("theta must be positive on (0, 1]")


def k_constant(theta: Cutoff | None = None, samples=10_000) -> float:
    """``4 max(sup |theta'/theta|, sup |(theta'' theta - theta'^2)/theta^2|)`` over ``[1/3, 1]``."""
    theta = default_cutoff() if theta is None else theta
    validate_cutoff(theta)
    x = np.linspace(1 / 3, 1.0, samples)
    t, t1, t2 = theta(x), theta.d1(x), theta.d2(x)
    r1 = np.max(np.abs(t1 / t))
    r2 = np.max(np.abs((t2 * t - t1 ** 2) / t ** 2))
    return float(4 * max(r1, r2))


# --- barrier builders ---------------------------------------------------------------

@dataclass(frozen=True)
class PshBuilderParams:
    p: tuple
    r: float
    A: float
    B: float
    theta: Cutoff = field(default_factory=default_cutoff, repr=False)
    k: float | None = None

    def resolved_k(self) -> float:
        return k_constant(self.theta) if self.k is None else float(self.k)


@dataclass(frozen=True)
class PshResult:
    field: ScalarField
    certificate: Lambda0Result
    details: dict


def log_barrier(params: PshBuilderParams) -> ScalarField:
    """``ln theta(||x-p||^2/r^2) + A ||x-p|| + B ||x-p||^2/r^2``."""
    p = np.asarray(params.p, dtype=float)
    dim = p.size
    r2 = params.r ** 2
    theta = params.theta

    def s_of(x):
        d = x - p
        return np.sum(d ** 2, axis=-1) / r2, d

    def value(x):
        s, _ = s_of(x)
        return np.log(theta(s))

    def grad(x):
        s, d = s_of(x)
        phi1 = theta.d1(s) / theta(s)
        return phi1[..., None] * 2 * d / r2

    def hess(x):
        s, d = s_of(x)
        t, t1, t2 = theta(s), theta.d1(s), theta.d2(s)
        phi1 = t1 / t
        phi2 = (t2 * t - t1 ** 2) / t ** 2
        gs = 2 * d / r2
        outer = gs[..., :, None] * gs[..., None, :]
        return phi2[..., None, None] * outer + phi1[..., None, None] * (2 / r2) * np.eye(dim)

    log_part = ScalarField(dim, value, grad, hess, "composite")
    u = log_part + params.A * norm_field(dim, p) + norm_sq(dim, p, params.B / r2)
    return ScalarField(dim, u.value_fn, u.grad_fn, u.hess_fn, "composite")


def _check_standard_at(J: StructureField, p, tol=1e-10):
    return float(op_norm(J.value(np.asarray(p, dtype=float)) - standard_matrix(J.n))) <= tol


def psh_log_builder(params: PshBuilderParams, J: StructureField, D: DomainSpec,
                    exclusion=EXCLUSION_RADIUS) -> PshResult:
    """Build the logarithmic barrier at ``p`` and certify its strict plurisubharmonicity."""
    k = params.resolved_k()
    m = D.bound
    eps = epsilon_m(m)
    dev = deviation_c1_norm(J, D)
    failures = []
    if not _check_standard_at(J, params.p):
        failures.append("J(p) != J_st")
    if dev > eps:
        failures.append(f"||J - J_st||_C1 = {dev:.3g} exceeds epsilon_m = {eps:.3g}")
    if not params.A > 1:
        failures.append(f"A = {params.A} must exceed 1")
    if params.B < k:
        failures.append(f"B = {params.B} must be at least k = {k:.6g}")
    if failures:
        raise PreconditionFailed(failures)
    u = log_barrier(params)
    cert = lambda0(J, u, D.excluding(params.p, exclusion))
    if not cert.value > 0:
        raise NotCertified(f"barrier certificate lambda0 = {cert.value:.6g} is not positive")
    return PshResult(u, cert, {"k": k, "m": m, "epsilon_m": eps, "deviation_c1": dev,
                               "exclusion": exclusion})


def psh_deflate(w: ScalarField, delta, p, J: StructureField, D: DomainSpec,
                lambda_w: float | None = None) -> PshResult:
    """``w - delta ||x-p||^2`` with the certificate ``lambda0(w) - (9/2) delta``."""
    delta = float(delta)
    lam_w = lambda0(J, w, D).value if lambda_w is None else float(lambda_w)
    failures = []
    if lam_w < 0:
        failures.append(f"w is not plurisubharmonic (lambda0 = {lam_w:.6g})")
    eps = epsilon_m(D.bound)
    dev = deviation_c1_norm(J, D)
    if dev > eps:
        failures.append(f"||J - J_st||_C1 = {dev:.3g} exceeds epsilon_m = {eps:.3g}")
    if failures:
        raise PreconditionFailed(failures)
    if delta > 2 / 9 * lam_w:
        raise DeltaTooLarge(f"delta = {delta} exceeds (2/9) lambda0(w) = {2 / 9 * lam_w:.6g}")
    if delta == 0:
        out = w
    else:
        out = w - norm_sq(w.dim, p, delta)
    measured = lambda0(J, out, D)
    guaranteed = lam_w - 4.5 * delta
    return PshResult(out, measured, {"lambda0_w": lam_w, "guaranteed": guaranteed,
                                     "delta": delta})


def minimal_curvature(charts) -> float:
    """Minimum over chart structures of the smallest Levi eigenvalue of ``sum y_i^2`` on the unit ball."""
    charts = list(charts)
    if not charts:
        raise EmptyAtlas("at least one chart is required")
    values = []
    for J in charts:
        values.append(lambda0(J, sum_y_sq(J.n), DomainSpec.ball(J.dim)).value)
    return float(min(values))


# --- defining functions -----------------------------------------------------------

@dataclass(frozen=True)
class DefiningRho:
    field: ScalarField
    tube_radius: float
    tube_lambda0: float
    gram_min: float
    zero_set: np.ndarray


def _stack_r(rs, x):
    vals = np.stack([r.value(x) for r in rs], axis=-1)
    grads = np.stack([r.gradient(x) for r in rs], axis=-2)
    return vals, grads


def zero_set_samples(rs, n, resolution=9, radius=0.7, iters=30):
    """Points of ``{r = 0}`` near ``R^n``, by Newton's method in ``y`` from a grid on ``R^n``."""
    axes = [np.linspace(-radius, radius, resolution)] * n
    xs = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, n)
    xs = xs[np.linalg.norm(xs, axis=-1) <= radius]
    pts = np.concatenate([xs, np.zeros_like(xs)], axis=-1)
    for _ in range(iters):
        vals, grads = _stack_r(rs, pts)
        jy = grads[..., n:]
        try:
            step = np.linalg.solve(jy, vals[..., None])[..., 0]
        except np.linalg.LinAlgError:
            break
        pts[:, n:] -= step
        if np.max(np.abs(step)) < 1e-14:
            break
    return pts


def defining_rho(rs, J: StructureField | None = None, D: DomainSpec | None = None,
                 gram_tol=1e-8, tube_start=0.5, min_tube=1e-4) -> DefiningRho:
    """``rho = sum r_i^2`` with a positivity check of its Levi form on a tube around ``{r = 0}``.

    The Levi form is taken for ``J`` (default ``J_st``). The tube is
    ``{x in D : ||r(x)|| <= delta}``; ``delta`` is halved from
    ``tube_start`` until the smallest Levi eigenvalue over the tube samples is positive.
    """
    rs = list(rs)
    n = len(rs)
    dim = rs[0].dim
    if dim != 2 * n:
        raise DegenerateDefiningFunctions(f"need n = {dim // 2} defining functions, got {n}")

    def value(x):
        return sum(r.value(x) ** 2 for r in rs)

    def grad(x):
        return sum(2 * r.value(x)[..., None] * r.gradient(x) for r in rs)

    def hess(x):
        out = 0
        for r in rs:
            g = r.gradient(x)
            out = out + 2 * (g[..., :, None] * g[..., None, :] + r.value(x)[..., None, None]
                             * r.hessian(x))
        return out

    rho = ScalarField(dim, value, grad, hess, "composite")
    try:
        zs = zero_set_samples(rs, n)
    except np.linalg.LinAlgError as exc:
        raise DegenerateDefiningFunctions("zero set cannot be sampled") from exc
    _, grads = _stack_r(rs, zs)
    gram = np.linalg.det(grads @ np.swapaxes(grads, -1, -2))
    gmin = float(np.min(gram))
    if not np.isfinite(gmin) or gmin <= gram_tol:
        raise DegenerateDefiningFunctions(f"Gram determinant {gmin:.3g} <= {gram_tol}")

    J = standard_structure(n) if J is None else J
    D = DomainSpec.ball(dim) if D is None else D
    pts = np.concatenate([D.samples(), zs])
    return _tube(rho, rs, J, pts, zs, gmin, tube_start, min_tube)


def _tube(rho, rs, J, pts, zs, gmin, tube_start, min_tube):
    vals, _ = _stack_r(rs, pts)
    dist = np.linalg.norm(vals, axis=-1)
    eigs = _min_eigs(J, rho, pts)
    delta = tube_start
    while delta >= min_tube:
        inside = dist <= delta
        lam = float(np.min(eigs[inside]))
        if lam > 0:
            return DefiningRho(rho, delta, lam, gmin, zs)
        delta /= 2
    raise NotCertified("Levi form of rho is not positive on any sampled tube")
