"""Adam and L-BFGS over flat parameter vectors."""
from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

LossGrad = Callable[[np.ndarray], tuple]


class LineSearchStall(RuntimeError):
    """The line search could not find an acceptable step."""


# -- Adam ------------------------------------------------------------------

@dataclass
class AdamState:
    m: np.ndarray
    v: np.ndarray
    step: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def zeros(cls, n: int, **kw) -> "AdamState":
        return cls(np.zeros(n), np.zeros(n), **kw)


def adam_step(params: np.ndarray, grad: np.ndarray, state: AdamState, lr: float) -> np.ndarray:
    """One bias-corrected Adam update; returns the new parameters, updates ``state`` in place."""
    if params.shape != grad.shape or grad.shape != state.m.shape:
        raise ValueError("parameter, gradient and moment shapes differ")
    if not np.all(np.isfinite(grad)):
        raise FloatingPointError("non-finite gradient")
    state.step += 1
    b1, b2 = state.beta1, state.beta2
    state.m *= b1
    state.m += (1 - b1) * grad
    state.v *= b2
    state.v += (1 - b2) * grad * grad
    mhat = state.m / (1 - b1 ** state.step)
    vhat = state.v / (1 - b2 ** state.step)
    return params - (lr * mhat / (np.sqrt(vhat) + state.eps)).astype(params.dtype)


class Adam:
    def __init__(self, lr: float = 1e-3, beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        if lr < 0:
            raise ValueError("learning rate must be non-negative")
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.state: AdamState | None = None

    def step(self, fun: LossGrad, x: np.ndarray) -> tuple[np.ndarray, float]:
        """Evaluate at ``x`` and take one step; returns (new x, loss at x)."""
        if self.state is None or self.state.m.shape != x.shape:
            self.state = AdamState.zeros(x.size, beta1=self.beta1, beta2=self.beta2, eps=self.eps)
        f, g = fun(x)
        return adam_step(x, np.asarray(g, dtype=float), self.state, self.lr), f


# -- L-BFGS ----------------------------------------------------------------

def _cubic_interpolate(x1, f1, g1, x2, f2, g2, bounds=None):
    """Minimiser of the cubic through two points with slopes, clipped to ``bounds``."""
    xmin_bound, xmax_bound = bounds if bounds is not None else ((x1, x2) if x1 <= x2 else (x2, x1))
    d1 = g1 + g2 - 3 * (f1 - f2) / (x1 - x2)
    d2_square = d1 * d1 - g1 * g2
    if d2_square >= 0:
        d2 = np.sqrt(d2_square)
        if x1 <= x2:
            pos = x2 - (x2 - x1) * ((g2 + d2 - d1) / (g2 - g1 + 2 * d2))
        else:
            pos = x1 - (x1 - x2) * ((g1 + d2 - d1) / (g1 - g2 + 2 * d2))
        return min(max(pos, xmin_bound), xmax_bound)
    return (xmin_bound + xmax_bound) / 2.0


def strong_wolfe(fun: LossGrad, x: np.ndarray, t: float, d: np.ndarray, f: float, g: np.ndarray,
                 gtd: float, c1: float = 1e-4, c2: float = 0.9, tolerance_change: float = 1e-9,
                 max_ls: int = 25):
    """Bracketing + zoom line search satisfying the strong Wolfe conditions.

    Returns:
        (f_new, g_new, t, n_evals)
    """
    d_norm = np.max(np.abs(d))
    f_new, g_new = fun(x + t * d)
    evals = 1
    gtd_new = float(g_new @ d)

    t_prev, f_prev, g_prev, gtd_prev = 0.0, f, g, gtd
    done = False
    ls_iter = 0
    while ls_iter < max_ls:
        if f_new > f + c1 * t * gtd or (ls_iter > 1 and f_new >= f_prev):
            bracket = [t_prev, t]
            bracket_f = [f_prev, f_new]
            bracket_g = [g_prev, g_new]
            bracket_gtd = [gtd_prev, gtd_new]
            break
        if abs(gtd_new) <= -c2 * gtd:
            bracket, bracket_f, bracket_g = [t], [f_new], [g_new]
            done = True
            break
        if gtd_new >= 0:
            bracket = [t_prev, t]
            bracket_f = [f_prev, f_new]
            bracket_g = [g_prev, g_new]
            bracket_gtd = [gtd_prev, gtd_new]
            break
        min_step = t + 0.01 * (t - t_prev)
        max_step = t * 10
        tmp = t
        t = _cubic_interpolate(t_prev, f_prev, gtd_prev, t, f_new, gtd_new, bounds=(min_step, max_step))
        t_prev, f_prev, g_prev, gtd_prev = tmp, f_new, g_new, gtd_new
        f_new, g_new = fun(x + t * d)
        evals += 1
        gtd_new = float(g_new @ d)
        ls_iter += 1
    else:
        bracket = [0.0, t]
        bracket_f = [f, f_new]
        bracket_g = [g, g_new]
        bracket_gtd = [gtd, gtd_new]

    insuf_progress = False
    low_pos, high_pos = (0, 1) if bracket_f[0] <= bracket_f[-1] else (1, 0)
    while not done and ls_iter < max_ls:
        if abs(bracket[1] - bracket[0]) * d_norm < tolerance_change:
            break
        t = _cubic_interpolate(bracket[0], bracket_f[0], bracket_gtd[0],
                               bracket[1], bracket_f[1], bracket_gtd[1])
        eps = 0.1 * (max(bracket) - min(bracket))
        if min(max(bracket) - t, t - min(bracket)) < eps:
            if insuf_progress or t >= max(bracket) or t <= min(bracket):
                t = max(bracket) - eps if abs(t - max(bracket)) < abs(t - min(bracket)) else min(bracket) + eps
                insuf_progress = False
            else:
                insuf_progress = True
        else:
            insuf_progress = False
        f_new, g_new = fun(x + t * d)
        evals += 1
        gtd_new = float(g_new @ d)
        ls_iter += 1
        if f_new > f + c1 * t * gtd or f_new >= bracket_f[low_pos]:
            bracket[high_pos], bracket_f[high_pos] = t, f_new
            bracket_g[high_pos], bracket_gtd[high_pos] = g_new, gtd_new
            low_pos, high_pos = (0, 1) if bracket_f[0] <= bracket_f[1] else (1, 0)
        else:
            if abs(gtd_new) <= -c2 * gtd:
                done = True
            elif gtd_new * (bracket[high_pos] - bracket[low_pos]) >= 0:
                bracket[high_pos], bracket_f[high_pos] = bracket[low_pos], bracket_f[low_pos]
                bracket_g[high_pos], bracket_gtd[high_pos] = bracket_g[low_pos], bracket_gtd[low_pos]
            bracket[low_pos], bracket_f[low_pos] = t, f_new
            bracket_g[low_pos], bracket_gtd[low_pos] = g_new, gtd_new
    t = bracket[low_pos]
    return bracket_f[low_pos], bracket_g[low_pos], t, evals


@dataclass
class LbfgsState:
    history: int = 50
    s: deque = field(default_factory=deque)
    y: deque = field(default_factory=deque)
    rho: deque = field(default_factory=deque)
    f: float | None = None
    g: np.ndarray | None = None
    n_iter: int = 0
    n_evals: int = 0
    fallbacks: int = 0


class LBFGS:
    """Limited-memory BFGS with two-loop recursion and a strong-Wolfe line search.

    Args:
        history: number of stored curvature pairs.
        tolerance_grad: stop when the max-abs gradient falls below this.
        tolerance_change: stop when the step or the loss change falls below this.
    """

    def __init__(self, history: int = 50, tolerance_grad: float = 1e-12,
                 tolerance_change: float = 1e-14, max_ls: int = 25):
        if history < 1:
            raise ValueError("history must be at least 1")
        self.history = history
        self.tolerance_grad = tolerance_grad
        self.tolerance_change = tolerance_change
        self.max_ls = max_ls
        self.state = LbfgsState(history)
        self.converged = False
        self._restarted = False

    def direction(self, g: np.ndarray) -> np.ndarray:
        st = self.state
        q = -g.copy()
        alphas = []
        for s, y, rho in zip(reversed(st.s), reversed(st.y), reversed(st.rho)):
            a = rho * float(s @ q)
            alphas.append(a)
            q -= a * y
        if st.s:
            s, y = st.s[-1], st.y[-1]
            q *= float(s @ y) / float(y @ y)
        for (s, y, rho), a in zip(zip(st.s, st.y, st.rho), reversed(alphas)):
            b = rho * float(y @ q)
            q += (a - b) * s
        return q

    def step(self, fun: LossGrad, x: np.ndarray) -> tuple[np.ndarray, float]:
        """One quasi-Newton iteration; returns (new x, loss at new x).

        Raises:
            LineSearchStall: no decrease could be found along the search
                direction nor along steepest descent.
        """
        st = self.state
        x = np.asarray(x, dtype=float)
        begin = getattr(fun, "begin_step", None)
        if begin is not None and begin(x):
            st.g = None
        if st.g is None:
            st.f, st.g = fun(x)
            st.g = np.asarray(st.g, dtype=float)
            st.n_evals += 1
        f, g = st.f, st.g
        if np.max(np.abs(g)) <= self.tolerance_grad:
            self.converged = True
            return x, f
        d = self.direction(g)
        gtd = float(g @ d)
        if gtd > -self.tolerance_change or not np.isfinite(gtd):
            # curvature information is unusable: restart from steepest descent
            st.s.clear(), st.y.clear(), st.rho.clear()
            st.fallbacks += 1
            d = -g
            gtd = float(g @ d)
        t = min(1.0, 1.0 / np.sum(np.abs(g))) if st.n_iter == 0 and not st.s else 1.0

        def fg(z):
            fz, gz = fun(z)
            return fz, np.asarray(gz, dtype=float)

        f_new, g_new, t, evals = strong_wolfe(fg, x, t, d, f, g, gtd, max_ls=self.max_ls,
                                              tolerance_change=self.tolerance_change)
        st.n_evals += evals
        if not f_new < f:
            if st.s:
                # retry once along steepest descent with a fresh memory
                st.s.clear(), st.y.clear(), st.rho.clear()
                st.fallbacks += 1
                d = -g
                gtd = float(g @ d)
                t0 = min(1.0, 1.0 / np.sum(np.abs(g)))
                f_new, g_new, t, evals = strong_wolfe(fg, x, t0, d, f, g, gtd, max_ls=self.max_ls,
                                                      tolerance_change=self.tolerance_change)
                st.n_evals += evals
            if not f_new < f:
                raise LineSearchStall(f"no decrease from loss {f:.6e}")
        s = t * d
        x_new = x + s
        y = g_new - g
        ys = float(y @ s)
        if ys > 1e-10 * float(s @ s) and ys > 0:
            if len(st.s) == st.history:
                st.s.popleft(), st.y.popleft(), st.rho.popleft()
            st.s.append(s), st.y.append(y), st.rho.append(1.0 / ys)
        if abs(f_new - f) < self.tolerance_change or np.max(np.abs(s)) < self.tolerance_change:
            if st.s and not getattr(self, "_restarted", False):
                # stalled with curvature memory (e.g. at a kink): restart once before giving up
                st.s.clear(), st.y.clear(), st.rho.clear()
                self._restarted = True
            else:
                self.converged = True
        else:
            self._restarted = False
        st.f, st.g = f_new, g_new
        st.n_iter += 1
        return x_new, f_new
