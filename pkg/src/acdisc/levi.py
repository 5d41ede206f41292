"""Levi forms of scalar fields for an almost complex structure, and their
smallest eigenvalue over a domain.

The Levi form of ``u`` at ``x`` is the quadratic form

    X -> X^T D X + (J X)^T D (J X) + X^T (A - A^T) J X,

with ``D`` the real Hessian of ``u`` and ``A_jk = sum_i du/dx_i dJ_ij/dx_k``.
Its symmetric matrix is obtained by polarization, so the minimum over unit
vectors at a point is an exact symmetric eigenvalue problem; only the spatial
minimum needs a search.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .acs_core import DomainSpec, StructureField, op_norm, pointwise_norms, standard_matrix
from .fields import ScalarField


def _sym(m):
    return 0.5 * (m + np.swapaxes(m, -1, -2))


def levi_matrices(J: StructureField, u: ScalarField, x) -> np.ndarray:
    """Symmetric Levi matrices at a batch of points, shape ``(..., 2n, 2n)``."""
    x = np.asarray(x, dtype=float)
    Jv = J.value(x)
    dJ = J.derivative(x)
    D = u.hessian(x)
    g = u.gradient(x)
    # A[j, k] = sum_i g_i dJ[k, i, j]
    A = np.einsum("...i,...kij->...jk", g, dJ)
    JT = np.swapaxes(Jv, -1, -2)
    return _sym(D) + JT @ D @ Jv + _sym((A - np.swapaxes(A, -1, -2)) @ Jv)


def levi_form(J: StructureField, u: ScalarField, x, X) -> np.ndarray:
    """Direct (unpolarized) evaluation of the Levi form on vectors ``X``."""
    x = np.asarray(x, dtype=float)
    X = np.asarray(X, dtype=float)
    Jv = J.value(x)
    D = u.hessian(x)
    A = np.einsum("...i,...kij->...jk", u.gradient(x), J.derivative(x))
    JX = np.einsum("...ij,...j->...i", Jv, X)
    t1 = np.einsum("...i,...ij,...j->...", X, D, X)
    t2 = np.einsum("...i,...ij,...j->...", JX, D, JX)
    t3 = np.einsum("...i,...ij,...j->...", X, A - np.swapaxes(A, -1, -2), JX)
    return t1 + t2 + t3


@dataclass(frozen=True)
class LeviEvaluation:
    point: np.ndarray
    matrix: np.ndarray
    min_eig: float
    max_eig: float


def levi_matrix(J: StructureField, u: ScalarField, p) -> LeviEvaluation:
    p = np.asarray(p, dtype=float)
    M = levi_matrices(J, u, p)
    w = np.linalg.eigvalsh(M)
    return LeviEvaluation(p, M, float(w[0]), float(w[-1]))


def levi_perturbation_bound(J: StructureField, u: ScalarField, p) -> float:
    """Lower bound for the smallest Levi eigenvalue from the size of ``H = J - J_st``.

    Uses the standard-structure Levi form, the extreme Hessian eigenvalues and
    the pointwise norms ``||H||_0`` and ``||H||_1``.
    """
    p = np.asarray(p, dtype=float)
    n = J.n
    H = J.deviation()
    h0, h1 = pointwise_norms(H.value(p), H.derivative(p))
    D = u.hessian(p)
    eig_d = np.linalg.eigvalsh(_sym(D))
    rho = np.max(np.abs(eig_d))
    mu = eig_d[0]
    Jst = standard_matrix(n)
    base = np.linalg.eigvalsh(_sym(D) + Jst.T @ D @ Jst)[0]
    grad_norm = np.linalg.norm(u.gradient(p))
    return float(base - 2 * rho * h0 + min(mu, 0.0) * h0 ** 2
                 - 2 * grad_norm * (1 + h0) * h1)


def classical_lower_bounds(p_norm, h0, h1):
    """Closed-form lower bounds for the Levi forms of ``||z||``, ``ln||z||`` and ``||z||^2``."""
    r = float(p_norm)
    return {
        "norm": 1 / r - 2 / r * h0 - 2 * (1 + h0) * h1,
        "log_norm": -2 / r ** 2 * h0 - h0 ** 2 / r ** 2 - 2 / r * (1 + h0) * h1,
        "norm_sq": 4 - 4 * h0 - 4 * r * (1 + h0) * h1,
    }


def rank_one_eigenvalues(lam, V):
    """Eigenvalues of ``lam (I - V V^T)``: ``lam (1 - ||V||^2)`` on ``V`` and ``lam`` elsewhere."""
    V = np.asarray(V, dtype=float)
    return lam * (1 - V @ V), lam


@dataclass(frozen=True)
class Lambda0Result:
    value: float
    argmin_point: np.ndarray
    argmin_direction: np.ndarray
    grid_min: float
    refined: bool
    grid_count: int

    def to_json(self):
        return {
            "value": self.value,
            "argmin_point": self.argmin_point.tolist(),
            "argmin_direction": self.argmin_direction.tolist(),
            "grid_min": self.grid_min,
            "refined": self.refined,
            "grid_count": self.grid_count,
        }


def _min_eigs(J, u, pts):
    vals = np.linalg.eigvalsh(levi_matrices(J, u, pts))[..., 0]
    return np.where(np.isnan(vals), np.inf, vals)


def _compass_descent(objective, domain, x, fx, step, step_tol, moves_per_level=20,
                     max_iter=5000):
    """Batched coordinate pattern search from several starting points at once.

    A move is accepted only if it lowers the objective by ``1e-4 step^2 max(1, |f|)``;
    otherwise the step halves. At most ``moves_per_level`` moves are taken per
    step size, so the loop ends after roughly ``log2(step / step_tol)`` levels.
    """
    x = np.array(x, dtype=float)
    fx = np.array(fx, dtype=float)
    k, dim = x.shape
    step = np.full(k, float(step))
    moves = np.zeros(k, dtype=int)
    dirs = np.vstack([np.eye(dim), -np.eye(dim)])
    for _ in range(max_iter):
        active = step >= step_tol
        if not np.any(active):
            break
        idx = np.flatnonzero(active)
        trial = domain.project(x[idx, None, :] + step[idx, None, None] * dirs)
        vals = objective(trial.reshape(-1, dim)).reshape(len(idx), -1)
        j = np.argmin(vals, axis=1)
        best = vals[np.arange(len(idx)), j]
        ok = best < fx[idx] - 1e-4 * step[idx] ** 2 * np.maximum(1.0, np.abs(fx[idx]))
        acc = idx[ok]
        x[acc] = trial[ok, j[ok]]
        fx[acc] = best[ok]
        moves[acc] += 1
        shrink = np.concatenate([idx[~ok], acc[moves[acc] >= moves_per_level]])
        step[shrink] *= 0.5
        moves[shrink] = 0
    return x, fx


def lambda0(J: StructureField, u: ScalarField, D: DomainSpec, k_best=8, step_tol=1e-7,
            refine=True) -> Lambda0Result:
    """Smallest Levi eigenvalue of ``u`` over the closure of ``D``.

    Grid scan over the domain samples, then pattern-search descent with a
    shrinking step from the ``k_best`` lowest grid points (ties broken by sample
    index).
    """
    pts = D.samples()
    vals = _min_eigs(J, u, pts)
    order = np.argsort(vals, kind="stable")
    grid_min = float(vals[order[0]])
    best_x, best_f = pts[order[0]], grid_min
    if refine:
        starts = order[:k_best]
        xs, fs = _compass_descent(lambda y: _min_eigs(J, u, y), D, pts[starts], vals[starts],
                                  D.spacing / 2, step_tol)
        i = int(np.argmin(fs))
        if fs[i] < best_f:
            best_x, best_f = xs[i], float(fs[i])
    M = levi_matrices(J, u, best_x)
    w, vecs = np.linalg.eigh(M)
    direction = vecs[:, 0]
    return Lambda0Result(float(w[0]), np.asarray(best_x), direction / np.linalg.norm(direction),
                         grid_min, bool(refine), len(pts))


def lambda0_bruteforce(J, u, D: DomainSpec) -> float:
    """Plain grid minimum (no descent); used as an independent check."""
    return float(np.min(_min_eigs(J, u, D.samples())))


__all__ = [
    "LeviEvaluation",
    "Lambda0Result",
    "classical_lower_bounds",
    "lambda0",
    "lambda0_bruteforce",
    "levi_form",
    "levi_matrices",
    "levi_matrix",
    "levi_perturbation_bound",
    "op_norm",
    "rank_one_eigenvalues",
]
