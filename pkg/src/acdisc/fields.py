"""Real scalar fields with gradient and Hessian access."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .acs_core import DEFAULT_FD_STEP, fd_jacobian
from .poly import Poly


@dataclass(frozen=True)
class ScalarField:
    dim: int
    value_fn: Callable = field(repr=False)
    grad_fn: Callable = field(repr=False)
    hess_fn: Callable = field(repr=False)
    representation: str = "callable"

    def value(self, x):
        return self.value_fn(np.asarray(x, dtype=float))

    def gradient(self, x):
        return self.grad_fn(np.asarray(x, dtype=float))

    def hessian(self, x):
        return self.hess_fn(np.asarray(x, dtype=float))

    def __call__(self, x):
        return self.value(x)

    def __add__(self, other):
        if isinstance(other, (int, float)):
            c = float(other)
            return ScalarField(self.dim, lambda x: self.value_fn(x) + c, self.grad_fn,
                               self.hess_fn, self.representation)
        return ScalarField(
            self.dim,
            lambda x: self.value_fn(x) + other.value_fn(x),
            lambda x: self.grad_fn(x) + other.grad_fn(x),
            lambda x: self.hess_fn(x) + other.hess_fn(x),
            "composite",
        )

    __radd__ = __add__

    def __mul__(self, s):
        s = float(s)
        return ScalarField(self.dim, lambda x: s * self.value_fn(x), lambda x: s * self.grad_fn(x),
                           lambda x: s * self.hess_fn(x), self.representation)

    __rmul__ = __mul__

    def __neg__(self):
        return self * -1.0

    def __sub__(self, other):
        return self + (-other if isinstance(other, ScalarField) else -float(other))

    def compose_affine(self, P, shift=None):
        """The field ``x -> u(P x + shift)``."""
        P = np.asarray(P, dtype=float)
        b = np.zeros(P.shape[0]) if shift is None else np.asarray(shift, dtype=float)

        def inner(x):
            return x @ P.T + b

        return ScalarField(
            P.shape[1],
            lambda x: self.value_fn(inner(x)),
            lambda x: self.grad_fn(inner(x)) @ P,
            lambda x: P.T @ self.hess_fn(inner(x)) @ P,
            self.representation,
        )


def poly_field(poly: Poly) -> ScalarField:
    if poly.shape != ():
        raise ValueError("scalar polynomial required")
    return ScalarField(poly.dim, poly, poly.gradient, poly.hessian, "poly")


def callable_field(fn, dim, fd_step=DEFAULT_FD_STEP) -> ScalarField:
    grad = lambda x: fd_jacobian(fn, x, fd_step)  # noqa: E731
    hess = lambda x: fd_jacobian(grad, x, fd_step)  # noqa: E731
    return ScalarField(dim, fn, grad, lambda x: 0.5 * (hess(x) + np.swapaxes(hess(x), -1, -2)))


def norm_sq(dim, center=None, scale=1.0, offset=0.0) -> ScalarField:
    """``scale * ||x - center||^2 + offset``."""
    c = np.zeros(dim) if center is None else np.asarray(center, dtype=float)

    def value(x):
        return scale * np.sum((x - c) ** 2, axis=-1) + offset

    def grad(x):
        return 2 * scale * (x - c)

    def hess(x):
        return np.broadcast_to(2 * scale * np.eye(dim), x.shape[:-1] + (dim, dim)).copy()

    return ScalarField(dim, value, grad, hess, "poly")


def sum_y_sq(n) -> ScalarField:
    """``y_1^2 + ... + y_n^2``, the model squared distance to R^n."""
    dim = 2 * n
    mask = np.r_[np.zeros(n), np.ones(n)]

    def value(x):
        return np.sum(mask * x ** 2, axis=-1)

    def grad(x):
        return 2 * mask * x

    def hess(x):
        return np.broadcast_to(np.diag(2 * mask), x.shape[:-1] + (dim, dim)).copy()

    return ScalarField(dim, value, grad, hess, "poly")


def norm_field(dim, center=None) -> ScalarField:
    """``||x - center||`` (smooth off the center)."""
    c = np.zeros(dim) if center is None else np.asarray(center, dtype=float)

    def value(x):
        return np.linalg.norm(x - c, axis=-1)

    def grad(x):
        d = x - c
        return d / np.linalg.norm(d, axis=-1, keepdims=True)

    def hess(x):
        d = x - c
        r = np.linalg.norm(d, axis=-1)[..., None, None]
        return (np.eye(dim) - d[..., :, None] * d[..., None, :] / r ** 2) / r

    return ScalarField(dim, value, grad, hess, "composite")


def log_norm(dim, center=None) -> ScalarField:
    """``ln ||x - center||``."""
    c = np.zeros(dim) if center is None else np.asarray(center, dtype=float)

    def value(x):
        return np.log(np.linalg.norm(x - c, axis=-1))

    def grad(x):
        d = x - c
        return d / np.sum(d ** 2, axis=-1, keepdims=True)

    def hess(x):
        d = x - c
        r2 = np.sum(d ** 2, axis=-1)[..., None, None]
        return (np.eye(dim) - 2 * d[..., :, None] * d[..., None, :] / r2) / r2

    return ScalarField(dim, value, grad, hess, "composite")


def field_from_json(data, dim) -> ScalarField:
    rep = data.get("repr", "poly")
    if rep == "poly":
        return poly_field(Poly.from_json(data["coeffs"], dim, ()))
    if rep == "norm_sq":
        return norm_sq(dim, data.get("center"), data.get("scale", 1.0), data.get("offset", 0.0))
    if rep == "sum_y_sq":
        return sum_y_sq(dim // 2) * data.get("scale", 1.0) + data.get("offset", 0.0)
    raise ValueError(f"unknown scalar field representation {rep!r}")
