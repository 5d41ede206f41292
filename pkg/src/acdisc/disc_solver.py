"""Pseudo-holomorphic discs on a uniform grid of the closed unit disc.

Discs are complex ``n``-vectors ``h = x + i y`` sampled at the grid nodes and
solve ``dbar h + q(h) conj(dh) = 0``. The solver iterates

    h <- a + b zeta + P(-q(h) conj(dh)),

where ``P`` is the solid Cauchy transform (a right inverse of ``dbar``) and the
affine part ``a + b zeta`` is re-fitted at every step so that ``h(0) = p`` and
``dh/dx(0) = v`` hold exactly.
"""
from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
from scipy import integrate, sparse
from scipy.signal import fftconvolve

from .errors import MaxIter, NoContraction, NotAttached, PreconditionFailed, RegionTooSmall

DEFAULT_N = 64
DEFAULT_TOL = 1e-7
DEFAULT_MAX_ITER = 200


# --- cell integrals --------------------------------------------------------------------

def _cell_area(x0, x1, y0, y1):
    """Area of the rectangle ``[x0,x1] x [y0,y1]`` inside the closed unit disc."""
    if x0 >= 1 or x1 <= -1:
        return 0.0

    def chord(x):
        s = np.sqrt(max(0.0, 1 - x * x))
        return max(0.0, min(y1, s) - max(y0, -s))

    a, b = max(x0, -1.0), min(x1, 1.0)
    pts = [v for yy in (y0, y1) if abs(yy) < 1 for v in (np.sqrt(1 - yy * yy), -np.sqrt(1 - yy * yy))
           if a < v < b]
    val, _ = integrate.quad(chord, a, b, points=sorted(pts) or None, epsabs=1e-15,
                            epsrel=1e-13, limit=200)
    return val


def _antiderivative(u, v):
    """Corner function whose mixed second difference integrates ``1/(u + iv)``."""
    r2 = u * u + v * v
    with np.errstate(divide="ignore", invalid="ignore"):
        log = np.where(r2 > 0, np.log(np.where(r2 > 0, r2, 1.0)), 0.0)
        f1 = np.where(u != 0, u * np.arctan(v / np.where(u != 0, u, 1.0)), 0.0) + 0.5 * v * log
        f2 = np.where(v != 0, v * np.arctan(u / np.where(v != 0, v, 1.0)), 0.0) + 0.5 * u * log
    return f1 - 1j * f2


def square_kernel(d, h):
    """``-(1/pi)`` times the integral of ``1/w`` over the square of side ``h`` centred at ``d``."""
    d = np.asarray(d, dtype=complex)
    u0, u1 = d.real - h / 2, d.real + h / 2
    v0, v1 = d.imag - h / 2, d.imag + h / 2
    F = _antiderivative
    total = F(u1, v1) - F(u0, v1) - F(u1, v0) + F(u0, v0)
    return -total / np.pi


# --- grid --------------------------------------------------------------------------------

@dataclass(frozen=True)
class DiscGrid:
    """Nodes ``(i/N, j/N)`` of the closed unit disc with exact cell-area weights."""

    N: int = DEFAULT_N

    @property
    def h(self) -> float:
        return 1.0 / self.N

    @cached_property
    def _index(self):
        N = self.N
        r = np.arange(-N, N + 1)
        I, J = np.meshgrid(r, r, indexing="ij")
        inside = I ** 2 + J ** 2 <= N ** 2
        return I[inside], J[inside], inside

    @property
    def i(self):
        return self._index[0]

    @property
    def j(self):
        return self._index[1]

    @property
    def mask(self):
        """Boolean ``(2N+1, 2N+1)`` array of nodes inside the disc."""
        return self._index[2]

    @property
    def size(self) -> int:
        return len(self.i)

    @cached_property
    def zeta(self) -> np.ndarray:
        return (self.i + 1j * self.j) * self.h

    @cached_property
    def lookup(self) -> np.ndarray:
        N = self.N
        out = -np.ones((2 * N + 1, 2 * N + 1), dtype=int)
        out[self.i + N, self.j + N] = np.arange(self.size)
        return out

    def node(self, i, j) -> int:
        return int(self.lookup[i + self.N, j + self.N])

    @property
    def origin(self) -> int:
        return self.node(0, 0)

    @cached_property
    def mirror(self) -> np.ndarray:
        """Index of the conjugate node ``conj(zeta)``."""
        return self.lookup[self.i + self.N, -self.j + self.N]

    @cached_property
    def weights(self) -> np.ndarray:
        """Cell areas inside the disc; slivers of outside cells go to the nearest node."""
        N, h = self.N, self.h
        w = np.full(self.size, h * h)
        near = (np.abs(self.i) + 1) ** 2 + (np.abs(self.j) + 1) ** 2 > N ** 2
        for k in np.flatnonzero(near):
            x, y = self.i[k] * h, self.j[k] * h
            w[k] = _cell_area(x - h / 2, x + h / 2, y - h / 2, y + h / 2)
        r = np.arange(-N - 1, N + 2)
        for a in r:
            for b in r:
                if a * a + b * b <= N * N:
                    continue
                x, y = a * h, b * h
                if (abs(x) - h / 2) ** 2 + (abs(y) - h / 2) ** 2 >= 1:
                    continue
                area = _cell_area(x - h / 2, x + h / 2, y - h / 2, y + h / 2)
                if area > 0:
                    z = x + 1j * y
                    w[int(np.argmin(np.abs(self.zeta - z)))] += area
        return w

    @cached_property
    def boundary(self) -> np.ndarray:
        M = int(round(2 * np.pi / self.h))
        return np.exp(2j * np.pi * np.arange(M) / M)

    def to_full(self, values) -> np.ndarray:
        """Scatter node values into the ``(2N+1, 2N+1, ...)`` array (zeros outside)."""
        values = np.asarray(values)
        N = self.N
        out = np.zeros((2 * N + 1, 2 * N + 1) + values.shape[1:], dtype=values.dtype)
        out[self.i + N, self.j + N] = values
        return out

    # finite differences

    def _diff_matrix(self, axis):
        N, h = self.N, self.h
        rows, cols, vals = [], [], []
        lk = self.lookup

        def at(i, j):
            if abs(i) > N or abs(j) > N:
                return -1
            return lk[i + N, j + N]

        for k in range(self.size):
            i, j = self.i[k], self.j[k]
            step = (1, 0) if axis == 0 else (0, 1)

            def nb(s):
                return at(i + s * step[0], j + s * step[1])

            p1, m1, p2, m2 = nb(1), nb(-1), nb(2), nb(-2)
            if p1 >= 0 and m1 >= 0:
                entries = [(p1, 0.5), (m1, -0.5)]
            elif p1 >= 0 and p2 >= 0:
                entries = [(k, -1.5), (p1, 2.0), (p2, -0.5)]
            elif m1 >= 0 and m2 >= 0:
                entries = [(k, 1.5), (m1, -2.0), (m2, 0.5)]
            elif p1 >= 0:
                entries = [(k, -1.0), (p1, 1.0)]
            elif m1 >= 0:
                entries = [(k, 1.0), (m1, -1.0)]
            else:
                entries = []
            for c, v in entries:
                rows.append(k)
                cols.append(c)
                vals.append(v / h)
        return sparse.csr_matrix((vals, (rows, cols)), shape=(self.size, self.size))

    @cached_property
    def Dx(self):
        return self._diff_matrix(0)

    @cached_property
    def stencil_ok(self) -> np.ndarray:
        """Nodes where both partial derivatives have a stencil (all but the four axis tips)."""
        return (np.diff(self.Dx.indptr) > 0) & (np.diff(self.Dy.indptr) > 0)

    @cached_property
    def Dy(self):
        return self._diff_matrix(1)

    def d(self, values):
        """``d/dzeta`` of node values."""
        return 0.5 * (self.Dx @ values - 1j * (self.Dy @ values))

    def dbar(self, values):
        return 0.5 * (self.Dx @ values + 1j * (self.Dy @ values))

    # Cauchy-Green operator

    @cached_property
    def _kernel(self):
        N, h = self.N, self.h
        r = np.arange(-2 * N, 2 * N + 1)
        A, B = np.meshgrid(r, r, indexing="ij")
        G = square_kernel(h * (A + 1j * B), h)
        return G[::-1, ::-1].copy()

    @cached_property
    def fractions(self) -> np.ndarray:
        return self.weights / self.h ** 2

    def cauchy_p(self, f) -> np.ndarray:
        """``P f`` at the nodes; ``f`` has shape ``(size,)`` or ``(size, m)``."""
        f = np.asarray(f, dtype=complex)
        vec = f.ndim == 1
        F = f[:, None] if vec else f
        dens = F * self.fractions[:, None]
        out = np.empty_like(dens)
        for c in range(dens.shape[1]):
            full = self.to_full(dens[:, c])
            conv = fftconvolve(full, self._kernel, mode="valid")
            out[:, c] = conv[self.i + self.N, self.j + self.N]
        return out[:, 0] if vec else out

    def cauchy_p_at(self, f, points, chunk=256) -> np.ndarray:
        """``P f`` at arbitrary points by direct summation of the cell kernels."""
        f = np.asarray(f, dtype=complex)
        vec = f.ndim == 1
        F = (f[:, None] if vec else f) * self.fractions[:, None]
        points = np.atleast_1d(np.asarray(points, dtype=complex))
        out = np.empty((len(points), F.shape[1]), dtype=complex)
        for s in range(0, len(points), chunk):
            z = points[s:s + chunk]
            G = square_kernel(self.zeta[None, :] - z[:, None], self.h)
            out[s:s + chunk] = G @ F
        return out[:, 0] if vec else out

    def cauchy_t(self, f):
        """``T f = d(P f)/dzeta``."""
        return self.d(self.cauchy_p(f))

    def interior(self, margin=4):
        """Nodes with ``|zeta| <= 1 - margin h``."""
        return np.abs(self.zeta) <= 1 - margin * self.h


# --- solutions ---------------------------------------------------------------------------

@dataclass(frozen=True)
class DiscSolution:
    grid: DiscGrid = field(repr=False)
    values: np.ndarray = field(repr=False)
    residual: float
    pde_residual: float
    iterations: int
    converged: bool
    center: np.ndarray
    direction: np.ndarray
    ratios: tuple = ()
    density: np.ndarray | None = field(default=None, repr=False)
    affine: tuple | None = field(default=None, repr=False)
    q: object = field(default=None, repr=False)
    symmetric: bool = False
    log: tuple = ()

    @property
    def n(self) -> int:
        return self.values.shape[1]

    @property
    def contraction(self) -> float:
        """Largest step-to-step ratio after the first two iterations (NaN if too short)."""
        r = [x for x in self.ratios[1:] if np.isfinite(x)]
        return float(max(r)) if r else float("nan")

    def evaluate(self, points) -> np.ndarray:
        """Values at arbitrary points of the closed disc."""
        points = np.atleast_1d(np.asarray(points, dtype=complex))
        a, b = self.affine
        out = a[None, :] + b[None, :] * points[:, None]
        if self.density is not None:
            out = out + self.grid.cauchy_p_at(self.density, points)
        return out

    def boundary_values(self):
        return self.evaluate(self.grid.boundary)

    def real_values(self) -> np.ndarray:
        """Values as points of ``R^{2n}`` in the order ``(x, y)``."""
        return np.concatenate([self.values.real, self.values.imag], axis=1)


def pde_residual(grid: DiscGrid, values, q, nodes=None) -> np.ndarray:
    """Pointwise ``|dbar h + q(h) conj(dh)|`` by finite differences."""
    dh = grid.d(values)
    res = grid.dbar(values)
    if q is not None:
        Q = q.at_complex(values)
        res = res + np.einsum("kij,kj->ki", Q, np.conj(dh))
    r = np.linalg.norm(res, axis=1)
    return r if nodes is None else r[nodes]


def _as_complex(v, n=None):
    v = np.asarray(v)
    if np.iscomplexobj(v):
        return v.astype(complex)
    v = v.astype(float)
    if n is not None and v.size == 2 * n:
        return v[:n] + 1j * v[n:]
    return v.astype(complex)


def _symmetrize(grid: DiscGrid, values):
    return 0.5 * (values + np.conj(values[grid.mirror]))


def solve_disc(q, p, v, grid: DiscGrid | None = None, tol=DEFAULT_TOL,
               max_iter=DEFAULT_MAX_ITER, symmetric=False, raise_on_max_iter=True,
               stall=5) -> DiscSolution:
    """Fixed-point solve with ``h(0) = p`` and ``dh/dx(0) = v``.

    With ``symmetric`` the coefficient below the diameter is the reflected one,
    ``conj(q(conj h))``, and every iterate is projected onto maps with
    ``h(conj zeta) = conj(h(zeta))``.

    ``q`` is a :class:`~acdisc.charts.QField` (or ``None`` for the standard
    structure); ``p`` and ``v`` are complex ``n``-vectors or real ``2n``-vectors.
    """
    grid = grid or DiscGrid()
    n = q.n if q is not None else None
    p = _as_complex(p, n)
    v = _as_complex(v, n)
    n = p.size
    zeta = grid.zeta
    o = grid.origin
    h = p[None, :] + v[None, :] * zeta[:, None]
    if symmetric:
        h = _symmetrize(grid, h)
    ratios, log = [], []
    dist_prev = None
    bad = 0
    w = np.zeros_like(h)
    f = np.zeros_like(h)
    a, b = p.copy(), v.copy()
    converged = False
    it = 0
    for it in range(1, max_iter + 1):
        if q is None:
            f = np.zeros_like(h)
            w = np.zeros_like(h)
        else:
            try:
                Q = reflected_coefficient(grid, q, h) if symmetric else q.at_complex(h)
            except np.linalg.LinAlgError as exc:
                raise NoContraction(f"coefficient undefined along the iterate at step {it}") from exc
            f = -np.einsum("kij,kj->ki", Q, np.conj(grid.d(h)))
            w = grid.cauchy_p(f)
        a = p - w[o]
        b = v - (grid.Dx @ w)[o]
        new = a[None, :] + b[None, :] * zeta[:, None] + w
        if symmetric:
            new = _symmetrize(grid, new)
        if not np.all(np.isfinite(new)):
            raise NoContraction(f"iterates became non-finite at step {it}")
        dist = float(np.max(np.abs(new - h)))
        h = new
        log.append(dist)
        if dist_prev is not None and dist_prev > 0:
            ratio = dist / dist_prev
            ratios.append(ratio)
            bad = bad + 1 if ratio >= 1 else 0
            if bad >= stall:
                raise NoContraction(f"step ratio >= 1 for {stall} consecutive iterations")
        dist_prev = dist
        if dist <= tol:
            converged = True
            break
    if not converged and raise_on_max_iter:
        raise MaxIter(f"no convergence within {max_iter} iterations (last step {log[-1]:.3g})")
    if symmetric and q is not None:
        pres = _reflected_residual(grid, h, q)[grid.interior()]
    else:
        pres = pde_residual(grid, h, q, grid.interior())
    return DiscSolution(grid, h, float(log[-1]) if log else 0.0, float(np.max(pres)), it,
                        converged, p, v, tuple(ratios), f if q is not None else None, (a, b), q,
                        symmetric, tuple(log))


def solve_attached_disc(q, anchor, direction, grid: DiscGrid | None = None, tol=DEFAULT_TOL,
                        max_iter=DEFAULT_MAX_ITER, **kw) -> DiscSolution:
    """Disc with its diameter on ``{y* = 0}``, through a real anchor along a real direction."""
    n = q.n if q is not None else None
    p = _as_complex(anchor, n)
    v = _as_complex(direction, n)
    failures = []
    if np.max(np.abs(p.imag), initial=0.0) > 1e-12:
        failures.append("anchor has a nonzero y*-component")
    if np.max(np.abs(v.imag), initial=0.0) > 1e-12:
        failures.append("direction has a nonzero y*-component")
    if failures:
        raise PreconditionFailed(failures)
    return solve_disc(q, p.real, v.real, grid, tol, max_iter, symmetric=True, **kw)


# --- reflection --------------------------------------------------------------------------

@dataclass(frozen=True)
class ReflectionReport:
    solution: DiscSolution
    interior_residual: float
    band_residual: float
    full_residual: float
    diameter_offset: float

    @property
    def band_ratio(self) -> float:
        if self.interior_residual == 0:
            return 0.0 if self.band_residual == 0 else float("inf")
        return self.band_residual / self.interior_residual


def reflected_coefficient(grid: DiscGrid, q, g) -> np.ndarray:
    """``q(g)`` above the diameter and ``conj(q(conj g))`` below."""
    upper = q.at_complex(g)
    lower = np.conj(q.at_complex(np.conj(g)))
    return np.where((grid.j < 0)[:, None, None], lower, upper)


def _reflected_residual(grid: DiscGrid, g, q) -> np.ndarray:
    A = reflected_coefficient(grid, q, g)
    return np.linalg.norm(grid.dbar(g) + np.einsum("kij,kj->ki", A, np.conj(grid.d(g))), axis=1)


def reflect_extend(sol: DiscSolution, tol=1e-6, band=2, margin=4) -> ReflectionReport:
    """Extend the upper half of ``sol`` by ``g(zeta) = conj(h(conj zeta))``."""
    grid = sol.grid
    h = sol.values
    diam = grid.j == 0
    offset = float(np.max(np.abs(h[diam].imag)))
    if offset > tol:
        raise NotAttached(f"diameter y*-components reach {offset:.3g} > {tol:g}")
    g = np.where((grid.j < 0)[:, None], np.conj(h[grid.mirror]), h)
    g = np.where(diam[:, None], g.real.astype(complex), g)
    if sol.q is None:
        res = np.linalg.norm(grid.dbar(g), axis=1)
    else:
        res = _reflected_residual(grid, g, sol.q)
    inner = grid.interior(margin)
    in_band = inner & (np.abs(grid.j) <= band)
    out = DiscSolution(grid, g, sol.residual, float(np.max(res[inner])), sol.iterations,
                       sol.converged, sol.center, sol.direction, sol.ratios, sol.density,
                       sol.affine, sol.q, True, sol.log)
    return ReflectionReport(out, float(np.max(res[inner])), float(np.max(res[in_band])),
                            float(np.max(res)), offset)


# --- Hoelder norms -----------------------------------------------------------------------

@dataclass(frozen=True)
class Region:
    """``{|zeta - center| <= radius}`` intersected with the closed disc, optionally ``Im >= 0``."""

    center: complex = 0.0
    radius: float = 0.5
    upper: bool = False

    def nodes(self, grid: DiscGrid) -> np.ndarray:
        z = grid.zeta
        sel = np.abs(z - self.center) <= self.radius + 1e-12
        if self.upper:
            sel &= grid.j >= 0
        return np.flatnonzero(sel)

    def to_json(self):
        c = complex(self.center)
        return {"center": [c.real, c.imag], "radius": self.radius, "upper": self.upper}


@dataclass(frozen=True)
class HolderReport:
    beta: float
    order: int
    seminorm: float
    sup_norm: float
    total: float
    pair_count: int
    exhaustive: bool


def _derivatives(grid: DiscGrid, values, order):
    """List of stacked partial derivatives of orders ``0..order``."""
    vals = np.asarray(values)
    if vals.ndim == 1:
        vals = vals[:, None]
    out = [vals]
    cur = vals
    for _ in range(order):
        cur = np.concatenate([grid.Dx @ cur, grid.Dy @ cur], axis=1)
        out.append(cur)
    return out


def holder_norm(grid: DiscGrid, values, region: Region, beta=0.5, order=0,
                max_pairs=10_000_000, sample_pairs=1_000_000, seed=0,
                chunk=2048) -> HolderReport:
    """``C^{order + beta}`` norm of node values over a region.

    The seminorm of the top derivative uses all node pairs at distance at least
    ``2h`` when there are at most ``max_pairs`` of them, and a seeded random
    sample of ``sample_pairs`` pairs otherwise.
    """
    if isinstance(values, DiscSolution):
        values = values.values
    nodes = region.nodes(grid)
    if len(nodes) < 10:
        raise RegionTooSmall(f"region holds {len(nodes)} nodes (< 10)")
    derivs = _derivatives(grid, values, order)
    sup = max(float(np.max(np.linalg.norm(d[nodes], axis=1))) for d in derivs)
    top = derivs[-1][nodes]
    z = grid.zeta[nodes]
    m = len(nodes)
    min_sep = 2 * grid.h - 1e-12
    best = 0.0
    count = 0
    exhaustive = m * (m - 1) // 2 <= max_pairs
    if exhaustive:
        for s in range(0, m, chunk):
            zi = z[s:s + chunk, None]
            dz = np.abs(zi - z[None, :])
            dv = np.linalg.norm(top[s:s + chunk, None, :] - top[None, :, :], axis=2)
            idx = np.arange(s, min(s + chunk, m))[:, None] < np.arange(m)[None, :]
            ok = idx & (dz >= min_sep)
            count += int(ok.sum())
            if np.any(ok):
                best = max(best, float(np.max(dv[ok] / dz[ok] ** beta)))
    else:
        rng = np.random.default_rng(seed)
        a = rng.integers(0, m, sample_pairs)
        b = rng.integers(0, m, sample_pairs)
        dz = np.abs(z[a] - z[b])
        ok = dz >= min_sep
        dv = np.linalg.norm(top[a[ok]] - top[b[ok]], axis=1)
        count = int(ok.sum())
        if count:
            best = float(np.max(dv / dz[ok] ** beta))
    return HolderReport(float(beta), int(order), best, sup, sup + best, count, exhaustive)


# --- dumps -------------------------------------------------------------------------------

def disc_header(sol: DiscSolution, extra=None) -> dict:
    head = {
        "grid_N": sol.grid.N,
        "nodes": sol.grid.size,
        "n": sol.n,
        "residual": sol.residual,
        "pde_residual": sol.pde_residual,
        "iterations": sol.iterations,
        "converged": sol.converged,
        "symmetric": sol.symmetric,
        "center": [[c.real, c.imag] for c in np.atleast_1d(sol.center)],
        "direction": [[c.real, c.imag] for c in np.atleast_1d(sol.direction)],
        "convergence_log": list(sol.log),
    }
    if extra:
        head.update(extra)
    return head


def write_disc(sol: DiscSolution, csv_path, json_path=None, extra=None):
    if sol.symmetric and sol.q is not None:
        res = _reflected_residual(sol.grid, sol.values, sol.q)
    else:
        res = pde_residual(sol.grid, sol.values, sol.q)
    res = np.where(sol.grid.stencil_ok, res, np.nan)
    with open(csv_path, "w", newline="") as fh:
        wr = csv.writer(fh)
        cols = ["zeta_re", "zeta_im"]
        for k in range(sol.n):
            cols += [f"x{k + 1}", f"y{k + 1}"]
        wr.writerow(cols + ["residual"])
        for idx in range(sol.grid.size):
            z = sol.grid.zeta[idx]
            row = [f"{z.real:.6f}", f"{z.imag:.6f}"]
            for k in range(sol.n):
                c = sol.values[idx, k]
                row += [f"{c.real:.12e}", f"{c.imag:.12e}"]
            wr.writerow(row + [f"{res[idx]:.6e}"])
    if json_path is not None:
        with open(json_path, "w") as fh:
            json.dump(disc_header(sol, extra), fh, indent=2, sort_keys=True)
