"""Dense multivariate polynomials with array-valued coefficients.

A polynomial in ``dim`` real variables is stored as a mapping from exponent
tuples to coefficient arrays of a common shape.  Derivatives are exact.
"""
from __future__ import annotations

from functools import cached_property

import numpy as np


class Poly:
    def __init__(self, coeffs, dim, shape=None, dtype=None):
        items = {}
        for exps, c in dict(coeffs).items():
            exps = tuple(int(e) for e in exps)
            if len(exps) != dim or min(exps, default=0) < 0:
                raise ValueError(f"bad exponent {exps} for dim {dim}")
            items[exps] = np.asarray(c)
        if shape is None:
            if not items:
                raise ValueError("shape required for the zero polynomial")
            shape = next(iter(items.values())).shape
        if dtype is None:
            dtype = np.result_type(float, *items.values()) if items else float
        self.dim = dim
        self.shape = tuple(shape)
        self.dtype = np.dtype(dtype)
        self.coeffs = {
            e: np.broadcast_to(c, self.shape).astype(self.dtype) for e, c in items.items()
        }

    @classmethod
    def constant(cls, value, dim):
        value = np.asarray(value)
        return cls({(0,) * dim: value}, dim, value.shape)

    @classmethod
    def linear(cls, coeff_per_var, dim, const=None):
        """``const + sum_k coeff_per_var[k] * x_k``."""
        coeffs = {}
        shape = np.asarray(coeff_per_var[0]).shape
        if const is not None:
            coeffs[(0,) * dim] = np.asarray(const)
        for k, c in enumerate(coeff_per_var):
            e = [0] * dim
            e[k] = 1
            coeffs[tuple(e)] = np.asarray(c)
        return cls(coeffs, dim, shape)

    @property
    def degree(self):
        return max((sum(e) for e in self.coeffs), default=0)

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        batch = x.shape[:-1]
        out = np.zeros(batch + self.shape, dtype=self.dtype)
        if not self.coeffs:
            return out
        maxe = max(max(e) for e in self.coeffs)
        # powers[d][k] = x_d ** k
        powers = [[np.ones(batch)] for _ in range(self.dim)]
        for d in range(self.dim):
            for _ in range(maxe):
                powers[d].append(powers[d][-1] * x[..., d])
        extra = (np.newaxis,) * len(self.shape)
        for e, c in self.coeffs.items():
            mono = np.ones(batch)
            for d, k in enumerate(e):
                if k:
                    mono = mono * powers[d][k]
            out = out + mono[(...,) + extra] * c
        return out

    def deriv(self, k):
        return self._derivs[k]

    @cached_property
    def _derivs(self):
        result = []
        for k in range(self.dim):
            coeffs = {}
            for e, c in self.coeffs.items():
                if e[k] == 0:
                    continue
                ne = list(e)
                ne[k] -= 1
                ne = tuple(ne)
                coeffs[ne] = coeffs.get(ne, 0) + e[k] * c
            result.append(Poly(coeffs, self.dim, self.shape, self.dtype))
        return result

    def gradient(self, x):
        """Array of shape ``batch + (dim,) + shape``."""
        return np.stack([d(x) for d in self._derivs], axis=np.asarray(x).ndim - 1)

    def hessian(self, x):
        """Array of shape ``batch + (dim, dim) + shape``."""
        rows = [np.stack([self.deriv(i).deriv(j)(x) for j in range(self.dim)],
                         axis=np.asarray(x).ndim - 1) for i in range(self.dim)]
        return np.stack(rows, axis=np.asarray(x).ndim - 1)

    def scale(self, s):
        return Poly({e: s * c for e, c in self.coeffs.items()}, self.dim, self.shape)

    def __add__(self, other):
        coeffs = dict(self.coeffs)
        for e, c in other.coeffs.items():
            coeffs[e] = coeffs.get(e, 0) + c
        return Poly(coeffs, self.dim, self.shape)

    def to_json(self):
        out = {}
        for e, c in self.coeffs.items():
            key = ",".join(str(i) for i in e)
            if np.iscomplexobj(c):
                out[key] = {"re": c.real.tolist(), "im": c.imag.tolist()}
            else:
                out[key] = c.tolist()
        return out

    @classmethod
    def from_json(cls, data, dim, shape=None):
        coeffs = {}
        for key, val in data.items():
            exps = tuple(int(s) for s in key.split(",")) if key else ()
            if isinstance(val, dict):
                c = np.asarray(val["re"], float) + 1j * np.asarray(val.get("im", 0.0), float)
            else:
                c = np.asarray(val, float)
            coeffs[exps] = c
        return cls(coeffs, dim, shape)
