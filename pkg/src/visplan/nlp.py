"""Limited-memory BFGS with a backtracking Armijo line search."""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass
from typing import Callable

import numpy as np


@dataclass
class SolveOptions:
    memory: int = 8
    max_iters: int = 500
    gtol: float = 1e-5
    c1: float = 1e-4
    backtrack: float = 0.5
    max_backtracks: int = 60


@dataclass
class SolveResult:
    argmin: np.ndarray
    value: float
    gradient_norm: float
    iterations: int
    status: str  # "converged" | "max_iters" | "line_search_failed"
    history: list[float]

    @property
    def converged(self) -> bool:
        return self.status == "converged"


Objective = Callable[[np.ndarray], tuple[float, np.ndarray]]


def minimize(objective: Objective, x0, opts: SolveOptions | None = None, callback=None) -> SolveResult:
    """Minimise a C1 function given as ``x -> (value, gradient)``.

    ``history`` holds the objective value of every accepted iterate and is
    monotonically non-increasing.
    """
    opts = opts or SolveOptions()
    x = np.array(x0, dtype=float).ravel()
    if not np.all(np.isfinite(x)):
        raise ValueError("x0 must be finite")
    f, g = objective(x)
    f = float(f)
    g = np.asarray(g, dtype=float).ravel()
    if not np.isfinite(f) or not np.all(np.isfinite(g)):
        raise ValueError("objective or gradient not finite at x0")
    s_hist: deque[np.ndarray] = deque(maxlen=opts.memory)
    y_hist: deque[np.ndarray] = deque(maxlen=opts.memory)
    rho_hist: deque[float] = deque(maxlen=opts.memory)
    history = [f]
    gnorm = float(np.linalg.norm(g))
    status = "max_iters"
    it = 0
    while it < opts.max_iters:
        if gnorm <= opts.gtol:
            status = "converged"
            break
        # two-loop recursion
        q = -g.copy()
        alphas = []
        for s, y, rho in zip(reversed(s_hist), reversed(y_hist), reversed(rho_hist)):
            a = rho * float(s @ q)
            alphas.append(a)
            q -= a * y
        if s_hist:
            s, y = s_hist[-1], y_hist[-1]
            q *= float(s @ y) / float(y @ y)
        else:
            q /= max(gnorm, 1.0)
        for (s, y, rho), a in zip(zip(s_hist, y_hist, rho_hist), reversed(alphas)):
            b = rho * float(y @ q)
            q += (a - b) * s
        d = q
        slope = float(g @ d)
        if slope >= 0:
            # not a descent direction: drop the memory and fall back to steepest descent
            s_hist.clear(), y_hist.clear(), rho_hist.clear()
            d = -g / max(gnorm, 1.0)
            slope = float(g @ d)
        step = 1.0
        accepted = False
        for _ in range(opts.max_backtracks):
            x_new = x + step * d
            f_new, g_new = objective(x_new)
            f_new = float(f_new)
            if np.isfinite(f_new) and f_new <= f + opts.c1 * step * slope:
                accepted = True
                break
            step *= opts.backtrack
        if not accepted:
            if s_hist:
                # retry once from steepest descent before giving up
                s_hist.clear(), y_hist.clear(), rho_hist.clear()
                continue
            status = "line_search_failed"
            break
        g_new = np.asarray(g_new, dtype=float).ravel()
        s = x_new - x
        y = g_new - g
        sy = float(s @ y)
        if sy > 1e-12 * float(np.linalg.norm(s) * np.linalg.norm(y)) and sy > 0:
            s_hist.append(s)
            y_hist.append(y)
            rho_hist.append(1.0 / sy)
        x, f, g = x_new, f_new, g_new
        gnorm = float(np.linalg.norm(g))
        history.append(f)
        it += 1
        if callback is not None:
            callback(x, f, g)
    else:
        if gnorm <= opts.gtol:
            status = "converged"
    return SolveResult(x, f, gnorm, it, status, history)
