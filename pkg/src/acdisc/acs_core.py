"""Almost complex structures on domains of R^{2n}.

Coordinates are ordered ``(x_1..x_n, y_1..y_n)`` and the standard structure is
``[[0, -I], [I, 0]]``.  All field evaluations are vectorized: a batch of points
of shape ``(..., 2n)`` yields values of shape ``(..., 2n, 2n)`` and first
derivatives of shape ``(..., 2n, 2n, 2n)`` indexed ``[..., k, i, j]`` for
``dJ_ij / dx_k``.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .errors import SingularBlock, TooLarge
from .poly import Poly

DEFAULT_FD_STEP = 1e-5
DEFAULT_H_CAP = 0.25


def standard_matrix(n: int) -> np.ndarray:
    eye = np.eye(n)
    zero = np.zeros((n, n))
    return np.block([[zero, -eye], [eye, zero]])


def op_norm(m):
    """Largest singular value over the trailing two axes."""
    m = np.asarray(m)
    if m.shape[-1] == 0:
        return np.zeros(m.shape[:-2])
    return np.linalg.norm(m, ord=2, axis=(-2, -1))


def fd_jacobian(fn, x, step=DEFAULT_FD_STEP):
    """Central differences of a batched function; derivative axis after the batch."""
    x = np.asarray(x, dtype=float)
    dim = x.shape[-1]
    parts = []
    for k in range(dim):
        e = np.zeros(dim)
        e[k] = step
        parts.append((fn(x + e) - fn(x - e)) / (2 * step))
    return np.stack(parts, axis=x.ndim - 1)


@dataclass(frozen=True)
class MatrixField:
    """A field of real square matrices with first-derivative access."""

    dim: int
    value_fn: Callable = field(repr=False)
    deriv_fn: Callable = field(repr=False)
    representation: str = "callable"
    regularity: float = np.inf

    def value(self, x):
        return self.value_fn(np.asarray(x, dtype=float))

    def derivative(self, x):
        return self.deriv_fn(np.asarray(x, dtype=float))

    def __call__(self, x):
        return self.value(x)

    def minus(self, m):
        """Field ``self - m`` for a constant matrix ``m``."""
        m = np.asarray(m, dtype=float)
        return MatrixField(self.dim, lambda x: self.value_fn(x) - m, self.deriv_fn,
                           self.representation, self.regularity)


@dataclass(frozen=True)
class StructureField(MatrixField):
    """An almost complex structure J (validity is checked by ``validate_structure``)."""

    @property
    def n(self) -> int:
        return self.dim // 2

    def deviation(self) -> MatrixField:
        """The perturbation ``H = J - J_st``."""
        return self.minus(standard_matrix(self.n))


def constant_structure(matrix) -> StructureField:
    m = np.array(matrix, dtype=float)
    dim = m.shape[0]
    if m.shape != (dim, dim) or dim % 2:
        raise ValueError("structure matrix must be square of even size")

    def value(x):
        return np.broadcast_to(m, x.shape[:-1] + m.shape).copy()

    def deriv(x):
        return np.zeros(x.shape[:-1] + (dim, dim, dim))

    return StructureField(dim, value, deriv, "constant")


def standard_structure(n: int) -> StructureField:
    return constant_structure(standard_matrix(n))


def poly_structure(poly: Poly, regularity=np.inf) -> StructureField:
    if poly.shape != (poly.dim, poly.dim):
        raise ValueError("polynomial entries must form a dim x dim matrix")
    return StructureField(poly.dim, poly, poly.gradient, "poly", regularity)


def callable_structure(fn, dim, fd_step=DEFAULT_FD_STEP, regularity=np.inf,
                       representation="callable") -> StructureField:
    """Opaque structure; derivatives by central differences."""
    return StructureField(dim, fn, lambda x: fd_jacobian(fn, x, fd_step),
                          representation, regularity)


@dataclass(frozen=True)
class DomainSpec:
    """A ball or an axis box in R^{2n}, with grid sampling for scans.

    ``exclude`` lists ``(center, radius)`` balls removed from the domain.
    """

    center: tuple
    shape: str = "ball"
    radius: float = 1.0
    half_widths: tuple | None = None
    resolution: int | None = None
    exclude: tuple = ()

    def __post_init__(self):
        object.__setattr__(self, "center", tuple(float(c) for c in self.center))
        if self.shape not in ("ball", "box"):
            raise ValueError(f"unknown domain shape {self.shape!r}")
        if self.shape == "box":
            if self.half_widths is None:
                object.__setattr__(self, "half_widths", (self.radius,) * self.dim)
            object.__setattr__(self, "half_widths", tuple(float(h) for h in self.half_widths))
        if self.resolution is not None and self.resolution < 2:
            raise ValueError("resolution must be >= 2 per axis")
        object.__setattr__(self, "exclude", tuple(
            (tuple(float(c) for c in ctr), float(r)) for ctr, r in self.exclude))

    @classmethod
    def ball(cls, dim, radius=1.0, center=None, resolution=None):
        return cls(tuple(center) if center is not None else (0.0,) * dim,
                   "ball", radius, None, resolution)

    @property
    def dim(self) -> int:
        return len(self.center)

    @property
    def grid_resolution(self) -> int:
        if self.resolution is not None:
            return self.resolution
        return {1: 81, 2: 41, 4: 13, 6: 7}.get(self.dim, 5)

    @property
    def bound(self) -> float:
        """``m``: an upper bound of ``||x||`` over the closure."""
        c = np.asarray(self.center)
        if self.shape == "ball":
            return float(np.linalg.norm(c) + self.radius)
        corner = np.abs(c) + np.asarray(self.half_widths)
        return float(np.linalg.norm(corner))

    @property
    def spacing(self) -> float:
        half = self.radius if self.shape == "ball" else max(self.half_widths)
        return 2 * half / (self.grid_resolution - 1)

    def with_resolution(self, resolution):
        return DomainSpec(self.center, self.shape, self.radius, self.half_widths,
                          resolution, self.exclude)

    def excluding(self, center, radius):
        return DomainSpec(self.center, self.shape, self.radius, self.half_widths,
                          self.resolution, self.exclude + ((tuple(center), radius),))

    def contains(self, x, slack=1e-12):
        x = np.asarray(x, dtype=float)
        c = np.asarray(self.center)
        if self.shape == "ball":
            inside = np.linalg.norm(x - c, axis=-1) <= self.radius * (1 + slack)
        else:
            inside = np.all(np.abs(x - c) <= np.asarray(self.half_widths) * (1 + slack), axis=-1)
        for ctr, r in self.exclude:
            inside &= np.linalg.norm(x - np.asarray(ctr), axis=-1) >= r
        return inside

    def samples(self) -> np.ndarray:
        res = self.grid_resolution
        c = np.asarray(self.center)
        if self.shape == "ball":
            halves = (self.radius,) * self.dim
        else:
            halves = self.half_widths
        axes = [np.linspace(ci - h, ci + h, res) for ci, h in zip(c, halves)]
        pts = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, self.dim)
        return pts[self.contains(pts)]

    def project(self, x):
        """Nearest-point style projection into the (closed) domain."""
        x = np.array(x, dtype=float)
        c = np.asarray(self.center)
        if self.shape == "ball":
            d = x - c
            r = np.linalg.norm(d, axis=-1, keepdims=True)
            scale = np.where(r > self.radius, self.radius / np.maximum(r, 1e-300), 1.0)
            x = c + d * scale
        else:
            h = np.asarray(self.half_widths)
            x = np.clip(x, c - h, c + h)
        for ctr, rad in self.exclude:
            ctr = np.asarray(ctr)
            d = x - ctr
            r = np.linalg.norm(d, axis=-1, keepdims=True)
            push = (r < rad)[..., 0]
            if np.any(push):
                safe = np.where(r > 0, r, 1.0)
                unit = np.where(r > 0, d / safe, np.eye(self.dim)[0])
                x[push] = (ctr + rad * unit)[push]
        return x

    def to_json(self):
        out = {"center": list(self.center), "shape": self.shape}
        if self.shape == "ball":
            out["radius"] = self.radius
        else:
            out["half_widths"] = list(self.half_widths)
        if self.resolution is not None:
            out["resolution"] = self.resolution
        if self.exclude:
            out["exclude"] = [[list(c), r] for c, r in self.exclude]
        return out

    @classmethod
    def from_json(cls, data):
        return cls(tuple(data["center"]), data.get("shape", "ball"), data.get("radius", 1.0),
                   tuple(data["half_widths"]) if "half_widths" in data else None,
                   data.get("resolution"), tuple((tuple(c), r) for c, r in data.get("exclude", [])))


# --- structures from a (1,0)-form perturbation -----------------------------------

def _blocks_from_H(Hv, dH, n):
    eye = np.eye(n)
    R, S = Hv.real, Hv.imag
    Sp = S + eye
    try:
        C = np.linalg.inv(Sp)
    except np.linalg.LinAlgError as exc:
        raise SingularBlock("I + S is singular") from exc
    A = -R @ C
    B = -(eye + A @ A) @ Sp
    D = -C @ A @ Sp
    J = _bmat(A, B, C, D)
    if dH is None:
        return J, None
    Ce = C[..., None, :, :]
    Ae = A[..., None, :, :]
    Spe = Sp[..., None, :, :]
    dR, dS = dH.real, dH.imag
    dC = -Ce @ dS @ Ce
    dA = -dR @ Ce - R[..., None, :, :] @ dC
    dB = -(dA @ Ae + Ae @ dA) @ Spe - (eye + Ae @ Ae) @ dS
    dD = -(dC @ Ae @ Spe + Ce @ dA @ Spe + Ce @ Ae @ dS)
    return J, _bmat(dA, dB, dC, dD)


def _bmat(A, B, C, D):
    top = np.concatenate([A, B], axis=-1)
    bottom = np.concatenate([C, D], axis=-1)
    return np.concatenate([top, bottom], axis=-2)


def structure_from_H(H, n=None, domain: DomainSpec | None = None, cap=DEFAULT_H_CAP,
                     fd_step=DEFAULT_FD_STEP) -> StructureField:
    """The unique structure near J_st whose (1,0)-forms are ``dz + H dy``.

    ``H`` is a :class:`Poly` with complex ``n x n`` coefficients (exact
    derivatives) or a batched callable (derivatives by central differences).
    The cap on ``sup ||H||`` and the invertibility of ``I + Im H`` are checked
    on the samples of ``domain`` (default: unit ball).
    """
    if isinstance(H, Poly):
        n = H.shape[0]
        h_value, h_deriv = H, H.gradient
        rep = "from_H"
    else:
        if n is None:
            raise ValueError("n is required for a callable H")
        h_value = H
        h_deriv = lambda x: fd_jacobian(H, x, fd_step)  # noqa: E731
        rep = "from_H_callable"
    dim = 2 * n
    domain = domain or DomainSpec.ball(dim, 1.0, resolution=5)
    pts = domain.samples()
    hs = h_value(pts)
    size = np.linalg.norm(hs, ord=2, axis=(-2, -1))
    if size.max() > cap:
        raise TooLarge(f"sup ||H|| = {size.max():.4g} exceeds cap {cap}")
    conds = np.linalg.cond(hs.imag + np.eye(n))
    if not np.all(np.isfinite(conds)) or conds.max() > 1e12:
        raise SingularBlock("I + S is numerically singular on the domain")

    def value(x):
        return _blocks_from_H(h_value(x), None, n)[0]

    def deriv(x):
        return _blocks_from_H(h_value(x), h_deriv(x), n)[1]

    return StructureField(dim, value, deriv, rep)


def extract_H(J: StructureField, x):
    """Recover ``H`` with ``dz + H dy`` spanning the (1,0)-forms of ``J`` at ``x``."""
    n = J.n
    Jv = J.value(x)
    A = Jv[..., :n, :n]
    C = Jv[..., n:, :n]
    try:
        Ci = np.linalg.inv(C)
    except np.linalg.LinAlgError as exc:
        raise SingularBlock("C block is singular") from exc
    return (1j * np.eye(n) - A) @ Ci - 1j * np.eye(n)


# --- validation, norms, blocks ---------------------------------------------------

@dataclass(frozen=True)
class ValidationReport:
    max_residual: float
    worst_point: tuple
    tol: float
    sample_count: int

    @property
    def passed(self) -> bool:
        return self.max_residual <= self.tol


def validate_structure(J: MatrixField, D: DomainSpec, tol=1e-10) -> ValidationReport:
    pts = D.samples()
    vals = J.value(pts)
    res = op_norm(vals @ vals + np.eye(J.dim))
    i = int(np.argmax(res))
    return ValidationReport(float(res[i]), tuple(pts[i]), tol, len(pts))


def pointwise_norms(values, derivs):
    """Return ``(||M_p||_0, ||M_p||_1)`` arrays for a field given by values/derivatives.

    The derivative term groups ``dM_ij/dx_k`` by the row ``i`` into matrices
    indexed ``(j, k)``.
    """
    n0 = op_norm(values)
    # derivs[..., k, i, j] -> blocks[..., i, j, k]
    blocks = np.moveaxis(derivs, -3, -1)
    per_row = op_norm(blocks)
    n1 = n0 + np.sqrt(np.sum(per_row ** 2, axis=-1))
    return n0, n1


@dataclass(frozen=True)
class NormReport:
    norm0: float
    norm1: float
    c1_norm: float


def structure_norms(J: MatrixField, D: DomainSpec) -> NormReport:
    pts = D.samples()
    n0, n1 = pointwise_norms(J.value(pts), J.derivative(pts))
    return NormReport(float(n0.max()), float(n1.max()), float(n1.max()))


def deviation_c1_norm(J: StructureField, D: DomainSpec) -> float:
    """``||J - J_st||_{C^1(D)}`` over the domain samples."""
    return structure_norms(J.deviation(), D).c1_norm


@dataclass(frozen=True)
class BlockForm:
    A: np.ndarray
    B: np.ndarray
    C: np.ndarray
    D: np.ndarray
    residual_B: float
    residual_D: float


def block_form(J: StructureField, p) -> BlockForm:
    n = J.n
    Jv = J.value(np.asarray(p, dtype=float))
    A, B = Jv[:n, :n], Jv[:n, n:]
    C, D = Jv[n:, :n], Jv[n:, n:]
    if np.linalg.cond(C) > 1e12:
        raise SingularBlock("C block is not invertible")
    Ci = np.linalg.inv(C)
    rb = op_norm(B + (np.eye(n) + A @ A) @ Ci)
    rd = op_norm(D + C @ A @ Ci)
    return BlockForm(A, B, C, D, float(rb), float(rd))


def forms_residual(J: StructureField, H, x):
    """``|| Omega J - i Omega ||`` for ``Omega = [I, iI + H]`` (zero iff dz + H dy is (1,0))."""
    n = J.n
    Hv = H(np.asarray(x, dtype=float))
    omega = np.concatenate([np.broadcast_to(np.eye(n), Hv.shape), 1j * np.eye(n) + Hv], axis=-1)
    return np.abs(omega @ J.value(x) - 1j * omega).max()


# --- scene files -------------------------------------------------------------------

def structure_from_json(data) -> StructureField:
    n = int(data["n"])
    dim = 2 * n
    rep = data.get("repr", "constant")
    if rep == "standard":
        return standard_structure(n)
    if rep == "constant":
        return constant_structure(data["entries"])
    if rep == "poly":
        return poly_structure(Poly.from_json(data["entries"], dim, (dim, dim)))
    if rep == "from_H":
        H = Poly.from_json(data["H"], dim, (n, n))
        H = Poly(H.coeffs, dim, (n, n), complex)
        domain = DomainSpec.from_json(data["domain"]) if "domain" in data else None
        return structure_from_H(H, domain=domain, cap=data.get("cap", DEFAULT_H_CAP))
    raise ValueError(f"unknown structure representation {rep!r}")


def multi_indices(dim, max_degree):
    for e in itertools.product(range(max_degree + 1), repeat=dim):
        if sum(e) <= max_degree:
            yield e


def random_poly_H(n, amplitude, rng, degree=2, vanish_at=None) -> Poly:
    """Random complex polynomial ``H`` with coefficients of size ``amplitude``.

    With ``vanish_at`` the constant term is chosen so that ``H`` vanishes there.
    """
    dim = 2 * n
    coeffs = {}
    for e in multi_indices(dim, degree):
        coeffs[e] = amplitude * (rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n)))
    poly = Poly(coeffs, dim, (n, n), complex)
    if vanish_at is not None:
        shift = poly(np.asarray(vanish_at, dtype=float))
        coeffs[(0,) * dim] = coeffs[(0,) * dim] - shift
        poly = Poly(coeffs, dim, (n, n), complex)
    return poly
