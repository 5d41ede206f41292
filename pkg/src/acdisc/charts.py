"""Tamed charts along a flattened totally real submanifold ``E = {y = 0}``.

A chart is the composite of a translation to ``p``, the frame change ``P_p``
(which makes the structure standard at the origin), the normalization

    phi(x, y) = (x - A C^{-1} y, C^{-1} y)

built from the blocks of the structure, and a dilation by ``1/t``. In the new
coordinates the structure is standard along ``{y* = 0}``, and the disc equation
takes the form ``dbar h + q(h) conj(dh) = 0``.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .acs_core import (DEFAULT_FD_STEP, DomainSpec, MatrixField, StructureField,
                       callable_structure, deviation_c1_norm, op_norm, standard_matrix)
from .errors import CannotTame, NoDerivatives, SingularBlock, SingularLeadingMatrix, SingularMatrix

COND_LIMIT = 1e12


# --- linear changes of variables ---------------------------------------------------

def frame_matrix(J: StructureField, p) -> np.ndarray:
    """Columns ``e_1..e_n, J(p) e_1..J(p) e_n``; conjugates ``J(p)`` to ``J_st``."""
    n = J.n
    Jp = J.value(np.asarray(p, dtype=float))
    P = np.concatenate([np.eye(2 * n)[:, :n], Jp[:, :n]], axis=1)
    if np.linalg.cond(P) > COND_LIMIT:
        raise SingularMatrix("frame matrix is not invertible")
    return P


def pushforward(J: StructureField, P, shift=None) -> StructureField:
    """The structure ``x -> P^{-1} J(P x + shift) P`` of the coordinates ``P^{-1}(q - shift)``."""
    P = np.asarray(P, dtype=float)
    if np.linalg.cond(P) > COND_LIMIT:
        raise SingularMatrix("P is not invertible")
    Pi = np.linalg.inv(P)
    b = np.zeros(P.shape[0]) if shift is None else np.asarray(shift, dtype=float)

    def value(x):
        return Pi @ J.value(x @ P.T + b) @ P

    def deriv(x):
        dJ = J.derivative(x @ P.T + b)
        # chain rule: d/dx_k = sum_l P_lk d/dq_l
        dJ = np.einsum("...lij,lk->...kij", dJ, P)
        return Pi @ dJ @ P

    return StructureField(J.dim, value, deriv, J.representation, J.regularity)


# --- Q coefficient -----------------------------------------------------------------

def real_q(Jv: np.ndarray) -> np.ndarray:
    """``(J + J_st)^{-1} (J - J_st)``, the real form of the disc-equation coefficient.

    Entries at points where ``J`` is undefined (NaN) stay NaN.
    """
    n = Jv.shape[-1] // 2
    Jst = standard_matrix(n)
    lead = Jv + Jst
    finite = np.all(np.isfinite(lead), axis=(-2, -1))
    safe = np.where(finite[..., None, None], lead, np.eye(2 * n))
    try:
        inv = np.linalg.inv(safe)
    except np.linalg.LinAlgError as exc:
        raise SingularLeadingMatrix("J + J_st is singular") from exc
    # 1-norm condition numbers; cheaper than an SVD per point
    cond = np.abs(safe).sum(axis=-2).max(axis=-1) * np.abs(inv).sum(axis=-2).max(axis=-1)
    if np.any(cond > COND_LIMIT) or not np.all(np.isfinite(inv)):
        raise SingularLeadingMatrix("J + J_st is singular")
    out = inv @ np.where(finite[..., None, None], Jv - Jst, 0.0)
    return np.where(finite[..., None, None], out, np.nan)


def complex_q(Qr: np.ndarray) -> np.ndarray:
    """Complex ``n x n`` matrix ``q`` with ``Qr w = q conj(w)`` (``Qr`` anticommutes with ``J_st``)."""
    n = Qr.shape[-1] // 2
    return Qr[..., :n, :n] + 1j * Qr[..., n:, :n]


def eq10_matrices(Jv: np.ndarray):
    """Real coefficient matrices of ``dh/dzeta`` and ``dh/dzeta-bar`` built from the ``A, C`` blocks."""
    n = Jv.shape[-1] // 2
    A = Jv[..., :n, :n]
    C = Jv[..., n:, :n]
    Ci = np.linalg.inv(C)
    K = A @ Ci
    eye = np.eye(n)
    trailing = np.concatenate([np.concatenate([eye - Ci, -K], -1),
                               np.concatenate([-K, -eye + Ci], -1)], -2)
    leading = np.concatenate([np.concatenate([eye + Ci, -K], -1),
                              np.concatenate([K, eye + Ci], -1)], -2)
    return trailing, leading


@dataclass(frozen=True)
class QField:
    """The coefficient ``q`` of ``dbar h + q(h) conj(dh) = 0`` for a structure."""

    structure: StructureField = field(repr=False)
    scale: float = 1.0

    @property
    def n(self) -> int:
        return self.structure.n

    def real(self, x):
        return self.scale * real_q(self.structure.value(np.asarray(x, dtype=float)))

    def __call__(self, x):
        return complex_q(self.real(x))

    def at_complex(self, h):
        """``q`` at complex points ``h = x + i y`` of shape ``(..., n)``."""
        h = np.asarray(h)
        return self(np.concatenate([h.real, h.imag], axis=-1))

    def scaled(self, s) -> "QField":
        return QField(self.structure, self.scale * float(s))


def zero_q(n) -> QField:
    from .acs_core import standard_structure
    return QField(standard_structure(n))


def q_coefficient(chart: "TamedChart", point) -> np.ndarray:
    return chart.q(np.asarray(point, dtype=float))


# --- normalization -----------------------------------------------------------------

def _normalization_parts(J1: StructureField, xi):
    """``K = A C^{-1}``, ``L = C^{-1}`` and their derivatives at frame points ``xi``."""
    n = J1.n
    Jv = J1.value(xi)
    A = Jv[..., :n, :n]
    C = Jv[..., n:, :n]
    L = np.linalg.inv(C)
    K = A @ L
    return K, L, Jv


def _normalization_jacobian(J1: StructureField, xi):
    n = J1.n
    K, L, Jv = _normalization_parts(J1, xi)
    dJ = J1.derivative(xi)
    dA = dJ[..., :n, :n]
    dC = dJ[..., n:, :n]
    Le = L[..., None, :, :]
    dL = -Le @ dC @ Le
    A = Jv[..., None, :n, :n]
    dK = dA @ Le + A @ dL
    y = xi[..., n:]
    # column k of the correction: (-(dK_k) y, (dL_k) y)
    top = -np.einsum("...kij,...j->...ik", dK, y)
    bottom = np.einsum("...kij,...j->...ik", dL, y)
    eye = np.broadcast_to(np.eye(n), K.shape)
    zero = np.zeros_like(K)
    base = np.concatenate([np.concatenate([eye, -K], -1), np.concatenate([zero, L], -1)], -2)
    return base + np.concatenate([top, bottom], -2), Jv


def normalize(J1: StructureField, xi):
    K, L, _ = _normalization_parts(J1, xi)
    n = J1.n
    x, y = xi[..., :n], xi[..., n:]
    return np.concatenate([x - np.einsum("...ij,...j->...i", K, y),
                           np.einsum("...ij,...j->...i", L, y)], axis=-1)


def normalize_inverse(J1: StructureField, zeta, tol=1e-14, max_iter=200):
    """Solve ``phi(xi) = zeta`` by the fixed point ``xi_y = C(xi) y*``, ``xi_x = x* + K(xi) xi_y``.

    Points where the iteration does not settle are returned as NaN.
    """
    n = J1.n
    zeta = np.asarray(zeta, dtype=float)
    xs, ys = zeta[..., :n], zeta[..., n:]
    xi = zeta.copy()
    for _ in range(max_iter):
        K, L, Jv = _normalization_parts(J1, xi)
        C = Jv[..., n:, :n]
        new_y = np.einsum("...ij,...j->...i", C, ys)
        new_x = xs + np.einsum("...ij,...j->...i", K, new_y)
        new = np.concatenate([new_x, new_y], axis=-1)
        change = np.max(np.abs(new - xi)) if new.size else 0.0
        xi = new
        if change <= tol * (1 + np.max(np.abs(zeta), initial=0.0)):
            return xi
        if not np.all(np.isfinite(xi)):
            break
    resid = np.linalg.norm(normalize(J1, np.nan_to_num(xi)) - zeta, axis=-1)
    bad = ~(resid <= 1e-10 * (1 + np.linalg.norm(zeta, axis=-1)))
    xi = np.where(bad[..., None], np.nan, xi)
    return xi


# --- tamed chart -------------------------------------------------------------------

@dataclass(frozen=True)
class TamedChart:
    n: int
    p: np.ndarray
    P: np.ndarray
    t: float
    epsilon: float
    frame_structure: StructureField = field(repr=False)
    structure: StructureField = field(repr=False)
    q: QField = field(repr=False)
    c: float = 0.0
    c_structure: float = 0.0
    c_q: float = 0.0
    deviation_c1: float = 0.0
    slice_residual: float = 0.0
    q_on_slice: float = 0.0

    def z(self, points):
        """Chart coordinates of base points."""
        pts = np.asarray(points, dtype=float)
        xi = np.linalg.solve(self.P, (pts - self.p)[..., None])[..., 0]
        return normalize(self.frame_structure, xi) / self.t

    def inverse(self, zs):
        zs = np.asarray(zs, dtype=float)
        xi = normalize_inverse(self.frame_structure, self.t * zs)
        return self.p + xi @ self.P.T

    def to_json(self):
        return {
            "n": self.n, "p": self.p.tolist(), "P": self.P.tolist(), "t": self.t,
            "epsilon": self.epsilon, "c": self.c, "c_structure": self.c_structure,
            "c_q": self.c_q, "deviation_c1": self.deviation_c1,
            "slice_residual": self.slice_residual, "q_on_slice": self.q_on_slice,
        }


def normalized_structure(J1: StructureField, t=1.0, fd_step=DEFAULT_FD_STEP) -> StructureField:
    """``z_* J`` on chart coordinates for the frame structure ``J1`` and dilation ``t``."""

    def value(zs):
        xi = normalize_inverse(J1, t * zs)
        dphi, Jv = _normalization_jacobian(J1, np.nan_to_num(xi))
        out = dphi @ Jv @ np.linalg.inv(dphi)
        return np.where(np.isnan(xi[..., :1, None]), np.nan, out)

    return callable_structure(value, J1.dim, fd_step, J1.regularity, "chart")


def _chart_checks(J3: StructureField, q: QField, eps: float, D: DomainSpec):
    n = J3.n
    pts = D.samples()
    Jst = standard_matrix(n)
    dev = op_norm(J3.value(pts) - Jst)
    qn = op_norm(q(pts))
    ynorm = np.linalg.norm(pts[:, n:], axis=-1)
    off = ynorm > 1e-12
    c_s = float(np.max(dev[off] / (eps * ynorm[off]))) if np.any(off) else 0.0
    c_q = float(np.max(qn[off] / (eps * ynorm[off]))) if np.any(off) else 0.0
    slice_pts = pts.copy()
    slice_pts[:, n:] = 0.0
    s_res = float(np.max(op_norm(J3.value(slice_pts) - Jst)))
    s_q = float(np.max(op_norm(q(slice_pts))))
    return c_s, c_q, s_res, s_q


def build_tamed_chart(J: StructureField, p, epsilon, min_exponent=20,
                      D: DomainSpec | None = None) -> TamedChart:
    """Tamed chart at ``p in E = {y = 0}`` with ``||z_*J - J_st||_{C^1(B)} <= epsilon``.

    The dilation ``t`` is the largest of ``1, 1/2, ..., 2^-min_exponent`` meeting
    the bound on the samples of ``D`` (default: unit ball).
    """
    n = J.n
    p = np.asarray(p, dtype=float)
    if np.any(np.abs(p[n:]) > 1e-12):
        raise ValueError("p must lie on E = {y = 0}")
    D = DomainSpec.ball(J.dim) if D is None else D
    try:
        P = frame_matrix(J, p)
    except SingularMatrix as exc:
        raise SingularBlock("C block of J(p) is singular") from exc
    J1 = pushforward(J, P, p)
    for e in range(min_exponent + 1):
        t = 2.0 ** -e
        J3 = normalized_structure(J1, t)
        try:
            dev = deviation_c1_norm(J3, D)
        except np.linalg.LinAlgError:
            continue
        if np.isfinite(dev) and dev <= epsilon:
            q = QField(J3)
            c_s, c_q, s_res, s_q = _chart_checks(J3, q, epsilon, D)
            return TamedChart(n, p, P, t, float(epsilon), J1, J3, q, max(c_s, c_q), c_s, c_q,
                              float(dev), s_res, s_q)
    raise CannotTame(f"no dilation t >= 2^-{min_exponent} reaches epsilon = {epsilon:g}")


# --- tangent lift ------------------------------------------------------------------

def _split_lift(w, n):
    x, X, y, Y = w[..., :n], w[..., n:2 * n], w[..., 2 * n:3 * n], w[..., 3 * n:]
    return np.concatenate([x, y], -1), np.concatenate([X, Y], -1)


def _lift_blocks(J: StructureField, w):
    n = J.n
    base, V = _split_lift(w, n)
    Jv = J.value(base)
    dJ = J.derivative(base)
    if dJ is None or not np.all(np.isfinite(dJ)):
        raise NoDerivatives("structure derivatives are unavailable")
    contracted = np.einsum("...k,...kij->...ij", V, dJ)
    return Jv, contracted


def _blk(M, n):
    return M[..., :n, :n], M[..., :n, n:], M[..., n:, :n], M[..., n:, n:]


def _lift_value(J: StructureField, w):
    n = J.n
    Jv, dV = _lift_blocks(J, w)
    A, B, C, D = _blk(Jv, n)
    al, be, ga, de = _blk(dV, n)
    Z = np.zeros_like(A)
    rows = [[A, Z, B, Z], [al, A, be, B], [C, Z, D, Z], [ga, C, de, D]]
    return np.concatenate([np.concatenate(r, -1) for r in rows], -2)


@dataclass(frozen=True)
class TangentLift:
    base: StructureField = field(repr=False)
    lifted: StructureField = field(repr=False)

    def phi(self, points):
        """Base normalization ``(x - A C^{-1} y, C^{-1} y)``."""
        return normalize(self.base, np.asarray(points, dtype=float))

    def phi_c(self, w):
        """Lifted normalization in the coordinate order ``(x, X, y, Y)``."""
        n = self.base.n
        w = np.asarray(w, dtype=float)
        Jv, dV = _lift_blocks(self.base, w)
        A, _, C, _ = _blk(Jv, n)
        al, _, ga, _ = _blk(dV, n)
        Z = np.zeros_like(A)
        At = np.concatenate([np.concatenate([A, Z], -1), np.concatenate([al, A], -1)], -2)
        Ct = np.concatenate([np.concatenate([C, Z], -1), np.concatenate([ga, C], -1)], -2)
        Cti = np.linalg.inv(Ct)
        lo, hi = w[..., :2 * n], w[..., 2 * n:]
        top = lo - np.einsum("...ij,...j->...i", At @ Cti, hi)
        bottom = np.einsum("...ij,...j->...i", Cti, hi)
        return np.concatenate([top, bottom], -1)

    def include(self, points):
        """``(x, y) -> (x, 0, y, 0)``."""
        n = self.base.n
        pts = np.asarray(points, dtype=float)
        z = np.zeros(pts.shape[:-1] + (n,))
        return np.concatenate([pts[..., :n], z, pts[..., n:], z], -1)

    def project(self, w):
        n = self.base.n
        w = np.asarray(w, dtype=float)
        return np.concatenate([w[..., :n], w[..., 2 * n:3 * n]], -1)


def tangent_lift(J: StructureField, fd_step=DEFAULT_FD_STEP) -> TangentLift:
    try:
        J.derivative(np.zeros(J.dim))
    except (TypeError, NotImplementedError) as exc:
        raise NoDerivatives("structure derivatives are unavailable") from exc
    lifted = callable_structure(lambda w: _lift_value(J, w), 2 * J.dim, fd_step,
                                J.regularity - 1, "tangent_lift")
    return TangentLift(J, lifted)


def lift_matrix(P) -> np.ndarray:
    """Block action of a constant linear map on the lifted coordinates ``(x, X, y, Y)``."""
    P = np.asarray(P, dtype=float)
    dim = P.shape[0]
    n = dim // 2
    big = np.zeros((2 * dim, 2 * dim))
    order = np.r_[np.arange(n), 2 * n + np.arange(n), n + np.arange(n), 3 * n + np.arange(n)]
    # in (base, fibre) order the map is diag(P, P)
    bf = np.zeros((2 * dim, 2 * dim))
    bf[:dim, :dim] = P
    bf[dim:, dim:] = P
    # position j of (x, X, y, Y) holds (base, fibre) coordinate order[j]
    big[:, :] = bf[np.ix_(order, order)]
    return big


__all__ = [
    "QField", "TamedChart", "TangentLift", "build_tamed_chart",
    "complex_q", "eq10_matrices", "frame_matrix", "lift_matrix", "normalize",
    "normalize_inverse", "normalized_structure", "pushforward", "q_coefficient", "real_q",
    "tangent_lift", "zero_q",
]
