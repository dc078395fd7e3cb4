"""Minimum-dual-norm points of small polyhedra {x : G x <= c}.

The Euclidean case goes through the dual of min 0.5||x||^2 s.t. Gx <= c, a
bound-constrained QP solved by accelerated projected gradient.  The
constraint matrix is shared across many right-hand sides (one per unit dual
direction), so the Gram matrix is factored once and all directions are
iterated as a batch.  Solutions are polished onto the feasible set
(most-violated projections), so reported norms are always realized by a
feasible point; diverging dual iterates flag primal infeasibility.  The
polyhedral norms (q in {1, inf}) use projected subgradient descent from
multiple starts around the Euclidean solution.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

_FEAS_TOL = 1e-11
_DIVERGED = 1e12


@dataclass(frozen=True)
class MinNormSolution:
    x: np.ndarray
    value: float
    feasible: bool


class PolyhedronProjector:
    """Shared machinery for min ||x||_2 over {x : Gx <= c} with varying c."""

    def __init__(self, G: np.ndarray):
        self.G = np.atleast_2d(np.asarray(G, dtype=float))
        self.n_cons, self.dim = self.G.shape
        self.M = self.G @ self.G.T
        self.row_sq = np.sum(self.G * self.G, axis=1)
        self.row_sq[self.row_sq == 0.0] = 1.0
        z = np.ones(self.n_cons)
        for _ in range(14):
            w = self.M @ z
            nw = float(np.linalg.norm(w))
            if nw == 0.0:
                break
            z = w / nw
        self.L = max(float(z @ (self.M @ z)), 1e-12) * 1.05

    def _polish(self, X: np.ndarray, C: np.ndarray, passes: int = 200) -> np.ndarray:
        """Columnwise most-violated projections; returns a feasibility mask."""
        n_dirs = X.shape[1]
        ok = np.zeros(n_dirs, dtype=bool)
        scale = 1.0 + np.max(np.abs(C), axis=0)
        cols = np.arange(n_dirs)
        for _ in range(passes):
            V = self.G @ X - C
            worst = np.argmax(V, axis=0)
            viol = V[worst, cols]
            ok = viol <= _FEAS_TOL * scale
            if ok.all():
                break
            active = ~ok
            X[:, active] -= self.G[worst[active]].T * (viol[active] / self.row_sq[worst[active]])
        V = self.G @ X - C
        ok = np.max(V, axis=0) <= 1e-8 * scale
        return ok

    def solve_batch(self, C: np.ndarray, max_iter: int = 400,
                    warm: np.ndarray | None = None) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Minimize 0.5||x||^2 s.t. Gx <= C[:, k] for every column k.

        Returns (X, feasible, lam): one primal solution per column plus the
        dual iterates for warm starts.  Infeasible columns surface through the
        polish step, which cannot reach feasibility for them.
        """
        C = np.atleast_2d(np.asarray(C, dtype=float))
        n_dirs = C.shape[1]
        lam = np.zeros((self.n_cons, n_dirs)) if warm is None else warm.copy()
        y = lam.copy()
        t = 1.0
        for it in range(max_iter):
            grad = self.M @ y
            grad += C
            lam_new = y - grad / self.L
            np.maximum(lam_new, 0.0, out=lam_new)
            t_new = 0.5 * (1.0 + math.sqrt(1.0 + 4.0 * t * t))
            y = lam_new + ((t - 1.0) / t_new) * (lam_new - lam)
            lam_old = lam
            lam, t = lam_new, t_new
            if (it & 15) == 15:
                # clamp diverging duals (infeasible columns) before they overflow;
                # the polish step flags those columns as infeasible afterwards
                np.clip(lam, 0.0, _DIVERGED, out=lam)
                np.clip(y, -_DIVERGED, _DIVERGED, out=y)
                step = float(np.max(np.abs(lam - lam_old)))
                if step <= 1e-12 * (1.0 + float(np.max(lam))):
                    break
        X = -(self.G.T @ lam)
        feasible = self._polish(X, C)
        np.clip(lam, 0.0, _DIVERGED, out=lam)
        return X, feasible, lam

    def solve_one(self, c: np.ndarray, warm: np.ndarray | None = None,
                  max_iter: int = 400) -> MinNormSolution:
        w = warm.reshape(-1, 1) if warm is not None else None
        X, ok, _ = self.solve_batch(c.reshape(-1, 1), max_iter=max_iter, warm=w)
        x = X[:, 0]
        if not ok[0]:
            return MinNormSolution(x, math.inf, False)
        return MinNormSolution(x, float(np.linalg.norm(x)), True)


def _q_norm(x: np.ndarray, q: float) -> float:
    if q == 1.0:
        return float(np.sum(np.abs(x)))
    if q == 2.0:
        return float(np.linalg.norm(x))
    return float(np.max(np.abs(x))) if x.size else 0.0


def _q_subgradient(x: np.ndarray, q: float) -> np.ndarray:
    if q == 1.0:
        return np.sign(x)
    if q == 2.0:
        n = float(np.linalg.norm(x))
        return x / n if n > 0 else np.zeros_like(x)
    g = np.zeros_like(x)
    if x.size:
        i = int(np.argmax(np.abs(x)))
        g[i] = math.copysign(1.0, x[i])
    return g


def min_dual_norm_point(G: np.ndarray, c: np.ndarray, q: float,
                        n_starts: int = 16, seed: int = 0) -> MinNormSolution:
    """Minimize the q-norm over {x : Gx <= c}; q in {1, 2, inf}."""
    G = np.atleast_2d(np.asarray(G, dtype=float))
    if G.size == 0:
        return MinNormSolution(np.zeros(G.shape[1] if G.ndim == 2 else 0), 0.0, True)
    c = np.asarray(c, dtype=float)
    proj = PolyhedronProjector(G)
    sol = proj.solve_one(c)
    if q == 2.0 or not sol.feasible:
        return sol

    def polish(x):
        X = x.reshape(-1, 1).copy()
        ok = proj._polish(X, c.reshape(-1, 1), passes=80)
        return X[:, 0], bool(ok[0])

    rng = np.random.default_rng(seed)
    x0 = sol.x
    best, best_val = x0, _q_norm(x0, q)
    radius = max(best_val, 1e-6)
    n = G.shape[1]
    for s in range(n_starts):
        x = x0 if s == 0 else x0 + rng.standard_normal(n) * radius * 0.5
        x, ok = polish(x)
        if not ok:
            continue
        step0 = max(_q_norm(x, q), 1e-8)
        for it in range(1, 201):
            g = _q_subgradient(x, q)
            x_try, ok = polish(x - (0.5 * step0 / math.sqrt(it)) * g)
            if ok and _q_norm(x_try, q) < _q_norm(x, q):
                x = x_try
        val = _q_norm(x, q)
        if val < best_val:
            best, best_val = x, val
    return MinNormSolution(best, best_val, True)
