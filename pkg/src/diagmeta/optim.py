"""Derivative-free and quasi-Newton minimizers plus finite-difference helpers.

Both minimizers treat a non-finite objective value as a rejected point.
"""

import enum
from dataclasses import dataclass

import numpy as np

from .errors import OptimizationError

__all__ = [
    "Status",
    "OptResult",
    "nelder_mead",
    "bfgs",
    "numeric_gradient",
    "numeric_jacobian",
    "numeric_hessian",
]


class Status(str, enum.Enum):
    CONVERGED = "converged"
    MAX_ITER = "max-iter"
    BOUNDARY = "boundary"
    DEGENERATE = "degenerate"


@dataclass
class OptResult:
    x: np.ndarray
    fun: float
    status: Status
    evals: int
    iterations: int
    restarts: int = 0
    method: str = "nelder-mead"
    interior: bool = True

    @property
    def converged(self):
        return self.status is Status.CONVERGED


class _Counted:
    def __init__(self, f):
        self.f = f
        self.n = 0

    def __call__(self, x):
        self.n += 1
        try:
            v = float(self.f(x))
        except (ArithmeticError, ValueError, np.linalg.LinAlgError):
            return np.inf
        return v if np.isfinite(v) else np.inf


def nelder_mead(f, x0, ftol=1e-10, xtol=1e-8, max_evals=None, initial_step=0.25):
    """Minimize ``f`` with the Nelder-Mead simplex method.

    Coefficients: reflection 1, expansion 2, contraction 0.5, shrink 0.5.
    Converged once the spread of simplex values is below ``ftol`` and every
    vertex lies within ``xtol`` (max-norm) of the best one.
    """
    x0 = np.asarray(x0, dtype=float).ravel()
    k = len(x0)
    fc = _Counted(f)
    f0 = fc(x0)
    if not np.isfinite(f0):
        raise OptimizationError("objective is not finite at the starting point")
    max_evals = max_evals or 5000 * k

    sim = np.empty((k + 1, k))
    sim[0] = x0
    for i in range(k):
        v = x0.copy()
        v[i] += initial_step * max(1.0, abs(x0[i]))
        sim[i + 1] = v
    fs = np.empty(k + 1)
    fs[0] = f0
    for i in range(1, k + 1):
        fs[i] = fc(sim[i])

    it = 0
    status = Status.MAX_ITER
    while fc.n < max_evals:
        order = np.argsort(fs, kind="stable")
        sim, fs = sim[order], fs[order]
        spread = fs[-1] - fs[0]
        size = np.max(np.abs(sim[1:] - sim[0]))
        if np.isfinite(spread) and spread <= ftol and size <= xtol:
            status = Status.CONVERGED
            break
        it += 1
        centroid = sim[:-1].mean(axis=0)
        worst = sim[-1]
        xr = centroid + (centroid - worst)
        fr = fc(xr)
        if fr < fs[0]:
            xe = centroid + 2.0 * (xr - centroid)
            fe = fc(xe)
            if fe < fr:
                sim[-1], fs[-1] = xe, fe
            else:
                sim[-1], fs[-1] = xr, fr
            continue
        if fr < fs[-2]:
            sim[-1], fs[-1] = xr, fr
            continue
        if fr < fs[-1]:
            xcon = centroid + 0.5 * (xr - centroid)
            fcon = fc(xcon)
            if fcon <= fr:
                sim[-1], fs[-1] = xcon, fcon
                continue
        else:
            xcon = centroid + 0.5 * (worst - centroid)
            fcon = fc(xcon)
            if fcon < fs[-1]:
                sim[-1], fs[-1] = xcon, fcon
                continue
        # shrink toward the best vertex
        sim[1:] = sim[0] + 0.5 * (sim[1:] - sim[0])
        for i in range(1, k + 1):
            fs[i] = fc(sim[i])

    best = int(np.argmin(fs))
    return OptResult(sim[best].copy(), float(fs[best]), status, fc.n, it)


def _steps(x, h):
    return h * np.maximum(1.0, np.abs(x))


def numeric_gradient(f, x, h=1e-5):
    """Central-difference gradient with relative step ``h * max(1, |x_i|)``."""
    x = np.asarray(x, dtype=float)
    steps = _steps(x, h)
    g = np.empty_like(x)
    for i, hi in enumerate(steps):
        e = np.zeros_like(x)
        e[i] = hi
        g[i] = (f(x + e) - f(x - e)) / (2.0 * hi)
    return g


def numeric_jacobian(F, x, h=1e-5):
    """Central-difference Jacobian of a vector function; shape (len(F(x)), len(x))."""
    x = np.asarray(x, dtype=float)
    steps = _steps(x, h)
    cols = []
    for i, hi in enumerate(steps):
        e = np.zeros_like(x)
        e[i] = hi
        cols.append((np.asarray(F(x + e)) - np.asarray(F(x - e))) / (2.0 * hi))
    return np.column_stack(cols)


def numeric_hessian(f, x, h=1e-4):
    """Central second differences, symmetrized as (H + H^T) / 2."""
    x = np.asarray(x, dtype=float)
    k = len(x)
    steps = _steps(x, h)
    f0 = f(x)
    H = np.empty((k, k))
    for i in range(k):
        ei = np.zeros(k)
        ei[i] = steps[i]
        H[i, i] = (f(x + ei) - 2.0 * f0 + f(x - ei)) / steps[i] ** 2
        for j in range(i + 1, k):
            ej = np.zeros(k)
            ej[j] = steps[j]
            H[i, j] = (
                f(x + ei + ej) - f(x + ei - ej) - f(x - ei + ej) + f(x - ei - ej)
            ) / (4.0 * steps[i] * steps[j])
            H[j, i] = H[i, j]
    return 0.5 * (H + H.T)


def _line_search(fc, x, fx, g, p, c1=1e-4, max_halvings=50):
    """Backtracking Armijo search seeded with a quadratic-interpolation step."""
    slope = float(g @ p)
    alpha = 1.0
    best = None
    for _ in range(max_halvings):
        fa = fc(x + alpha * p)
        if np.isfinite(fa):
            if fa <= fx + c1 * alpha * slope:
                best = (alpha, fa)
            curv = fa - fx - slope * alpha
            if curv > 0:
                aq = -slope * alpha * alpha / (2.0 * curv)
                if 1e-3 * alpha < aq < 1e3 * alpha and abs(aq - alpha) > 1e-12 * alpha:
                    fq = fc(x + aq * p)
                    if np.isfinite(fq) and fq <= fx + c1 * aq * slope:
                        if best is None or fq < best[1]:
                            best = (aq, fq)
            if best is not None:
                if curv <= 0 and best[0] >= 1.0:
                    best = _expand(fc, x, fx, slope, p, best, c1)
                return best
            alpha = min(0.5 * alpha, max(0.1 * alpha, aq if curv > 0 else 0.5 * alpha))
        else:
            alpha *= 0.5
    return None


def _expand(fc, x, fx, slope, p, best, c1, max_doublings=10):
    alpha, fa = best
    for _ in range(max_doublings):
        trial = 2.0 * alpha
        ft = fc(x + trial * p)
        if not (np.isfinite(ft) and ft < fa and ft <= fx + c1 * trial * slope):
            break
        alpha, fa = trial, ft
    return alpha, fa


def bfgs(f, x0, grad=None, gtol=1e-6, max_iter=500, h=1e-5):
    """Minimize ``f`` with BFGS; ``grad`` defaults to central differences."""
    x = np.asarray(x0, dtype=float).ravel().copy()
    k = len(x)
    fc = _Counted(f)
    grad = grad or (lambda z: numeric_gradient(fc, z, h))
    fx = fc(x)
    if not np.isfinite(fx):
        raise OptimizationError("objective is not finite at the starting point")
    g = grad(x)
    Hinv = np.eye(k)
    status = Status.MAX_ITER
    it = 0
    first = True
    while it < max_iter:
        if np.all(np.isfinite(g)) and np.max(np.abs(g)) < gtol:
            status = Status.CONVERGED
            break
        if not np.all(np.isfinite(g)):
            break
        it += 1
        p = -Hinv @ g
        if g @ p >= 0:
            Hinv = np.eye(k)
            p = -g
        found = _line_search(fc, x, fx, g, p)
        if found is None:
            break
        alpha, f_new = found
        s = alpha * p
        x_new = x + s
        g_new = grad(x_new)
        y = g_new - g
        sy = float(s @ y)
        if sy > 1e-12 * np.linalg.norm(s) * np.linalg.norm(y):
            if first:
                Hinv = (sy / float(y @ y)) * np.eye(k)
                first = False
            rho = 1.0 / sy
            V = np.eye(k) - rho * np.outer(s, y)
            Hinv = V @ Hinv @ V.T + rho * np.outer(s, s)
        else:
            Hinv = np.eye(k)
            first = True
        x, fx, g = x_new, f_new, g_new
    return OptResult(x, float(fx), status, fc.n, it, method="bfgs")
