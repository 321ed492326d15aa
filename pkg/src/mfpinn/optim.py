"""Optimizers over flat parameter vectors honoring per-layer freeze masks.

Both optimizers index only the tunable entries of a
:class:`~mfpinn.network.ParamSet`; frozen entries are never read for updates
and never written, so they stay bitwise identical across any number of steps.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field

import numpy as np

from .errors import DomainError, EvaluationError, NumericalError
from .tape import GradRecord


@dataclass
class RmsPropState:
    """Squared-gradient accumulator plus hyperparameters for one run."""

    learning_rate: float
    rho: float
    epsilon: float
    indices: np.ndarray
    acc: np.ndarray
    iteration: int = 0


def rmsprop_init(params, learning_rate, rho=0.9, epsilon=1e-8):
    """Fresh state sized to the tunable entries of ``params``."""
    if learning_rate <= 0:
        raise DomainError(f"learning rate must be positive: {learning_rate}")
    if not 0 < rho < 1:
        raise DomainError(f"decay rho must lie in (0, 1): {rho}")
    if epsilon <= 0:
        raise DomainError(f"epsilon must be positive: {epsilon}")
    idx = params.tunable_indices()
    if idx.size == 0:
        raise DomainError("all layers are frozen; nothing to optimize")
    return RmsPropState(learning_rate, rho, epsilon, idx, np.zeros(idx.size))


def rmsprop_step(state, params, grad):
    """One in-place update from a full-layout gradient record."""
    g = grad.grad if isinstance(grad, GradRecord) else np.asarray(grad)
    if g.shape != params.values.shape:
        raise DomainError(
            f"gradient shape {g.shape} does not match parameter vector "
            f"{params.values.shape}")
    gs = g[state.indices]
    if not np.all(np.isfinite(gs)):
        raise NumericalError(
            f"non-finite gradient at iteration {state.iteration}")
    state.acc *= state.rho
    state.acc += (1.0 - state.rho) * gs * gs
    params.values[state.indices] -= (
        state.learning_rate * gs / np.sqrt(state.acc + state.epsilon))
    state.iteration += 1
    return params


@dataclass
class LbfgsConfig:
    max_iterations: int = 100
    gradient_tolerance: float = 1e-9
    memory: int = 10
    c1: float = 1e-4
    c2: float = 0.9
    max_line_search: int = 30

    def validate(self):
        if self.max_iterations < 0:
            raise DomainError("max_iterations must be non-negative")
        if self.memory < 1:
            raise DomainError("memory must be at least 1")
        if not 0 < self.c1 < self.c2 < 1:
            raise DomainError(
                f"need 0 < c1 < c2 < 1, got c1={self.c1}, c2={self.c2}")
        if self.gradient_tolerance <= 0:
            raise DomainError("gradient_tolerance must be positive")
        if self.max_line_search < 1:
            raise DomainError("max_line_search must be at least 1")


@dataclass
class WolfeResult:
    step: float
    loss: float
    grad: np.ndarray
    evaluations: int
    success: bool


@dataclass
class LbfgsResult:
    params: object
    loss: float
    grad_norm: float
    iterations: int
    reason: str
    evaluations: int
    trace: list = field(default_factory=list)


def _cubic_min(a, fa, dfa, b, fb, dfb):
    """Minimizer of the cubic fitting values and slopes at ``a`` and ``b``."""
    if a == b:
        return None
    d1 = dfa + dfb - 3.0 * (fa - fb) / (a - b)
    disc = d1 * d1 - dfa * dfb
    if disc < 0.0:
        return None
    d2 = np.sign(b - a) * np.sqrt(disc)
    denom = dfb - dfa + 2.0 * d2
    if denom == 0.0:
        return None
    x = b - (b - a) * (dfb + d2 - d1) / denom
    return float(x) if np.isfinite(x) else None


def wolfe_line_search(objective, point, direction, c1=1e-4, c2=0.9,
                      max_steps=30, initial_step=1.0, f0=None, g0=None):
    """Strong-Wolfe step along ``direction`` from ``point``.

    ``objective(x)`` returns ``(loss, grad)`` at a flat vector ``x``.
    Bracketing doubles the trial step until the minimum is straddled, then a
    zoom phase shrinks the bracket with cubic interpolation (bisection when
    the fit is untrustworthy).  Evaluations that blow up numerically count as
    infinite loss, which simply drives the bracket back toward zero.

    Returns a :class:`WolfeResult`; ``success`` is False when the evaluation
    budget runs out before both conditions hold.
    """
    point = np.asarray(point, dtype=float)
    direction = np.asarray(direction, dtype=float)
    evals = 0

    def phi(alpha):
        nonlocal evals
        evals += 1
        try:
            f, g = objective(point + alpha * direction)
        except (EvaluationError, NumericalError):
            return np.inf, None, np.inf
        df = float(np.dot(g, direction))
        if not np.isfinite(f):
            return np.inf, g, np.inf
        return f, g, df

    if f0 is None or g0 is None:
        f0, g0, df0 = phi(0.0)
    else:
        df0 = float(np.dot(g0, direction))
    if not np.isfinite(f0):
        raise NumericalError("line search started from non-finite loss")
    if df0 >= 0.0:
        raise DomainError(
            f"search direction is not a descent direction (slope {df0:g})")

    def done(alpha, f, g, df):
        # One interpolation pass toward the 1-D minimizer when the accepted
        # slope is still steep.  The cubic fit is exact on quadratic slices,
        # which is what makes full-memory L-BFGS terminate like CG there.
        if evals < max_steps and abs(df) > 0.05 * abs(df0):
            a_ref = _cubic_min(0.0, f0, df0, alpha, f, df)
            if (a_ref is not None and 0.0 < a_ref <= 10.0 * alpha
                    and abs(a_ref - alpha) > 1e-12 * alpha):
                f_r, g_r, df_r = phi(a_ref)
                if (f_r <= f0 + c1 * a_ref * df0 and abs(df_r) <= -c2 * df0
                        and f_r <= f):
                    return WolfeResult(a_ref, f_r, g_r, evals, True)
        return WolfeResult(alpha, f, g, evals, True)

    def zoom(lo, f_lo, df_lo, hi, f_hi, df_hi):
        while evals < max_steps:
            a_j = _cubic_min(lo, f_lo, df_lo, hi, f_hi, df_hi) \
                if np.isfinite(f_hi) else None
            width = abs(hi - lo)
            inner_lo, inner_hi = sorted((lo, hi))
            if (a_j is None or not inner_lo + 0.1 * width <= a_j
                    <= inner_hi - 0.1 * width):
                a_j = 0.5 * (lo + hi)
            f_j, g_j, df_j = phi(a_j)
            if f_j > f0 + c1 * a_j * df0 or f_j >= f_lo:
                hi, f_hi, df_hi = a_j, f_j, df_j
            else:
                if abs(df_j) <= -c2 * df0:
                    return done(a_j, f_j, g_j, df_j)
                if df_j * (hi - lo) >= 0.0:
                    hi, f_hi, df_hi = lo, f_lo, df_lo
                lo, f_lo, df_lo = a_j, f_j, df_j
            if abs(hi - lo) <= 1e-14 * max(1.0, abs(lo)):
                break
        return WolfeResult(lo, f_lo, None, evals, False)

    a_prev, f_prev, df_prev = 0.0, f0, df0
    alpha = float(initial_step)
    first = True
    while evals < max_steps:
        f_a, g_a, df_a = phi(alpha)
        if f_a > f0 + c1 * alpha * df0 or (not first and f_a >= f_prev):
            return zoom(a_prev, f_prev, df_prev, alpha, f_a, df_a)
        if abs(df_a) <= -c2 * df0:
            return done(alpha, f_a, g_a, df_a)
        if df_a >= 0.0:
            return zoom(alpha, f_a, df_a, a_prev, f_prev, df_prev)
        a_prev, f_prev, df_prev = alpha, f_a, df_a
        alpha *= 2.0
        first = False
    return WolfeResult(a_prev, f_prev, None, evals, False)


def _two_loop(g, mem):
    """L-BFGS two-loop recursion: approximate inverse-Hessian times ``g``."""
    q = g.copy()
    alphas = []
    for s, y, rho in reversed(mem):
        a = rho * np.dot(s, q)
        alphas.append(a)
        q -= a * y
    if mem:
        s, y, _ = mem[-1]
        q *= np.dot(s, y) / np.dot(y, y)
    for (s, y, rho), a in zip(mem, reversed(alphas)):
        b = rho * np.dot(y, q)
        q += (a - b) * s
    return q


def lbfgs_minimize(objective, params, config=None):
    """Limited-memory BFGS over the tunable entries of ``params``.

    ``objective(params)`` returns a :class:`~mfpinn.tape.GradRecord` for the
    full flat layout.  Runs until the gradient two-norm over tunable entries
    drops below tolerance, the iteration budget ends, or a line search fails;
    the result carries the best parameters seen either way, with the stopping
    ``reason`` (``"gradient_tolerance"``, ``"max_iterations"``, or
    ``"line_search_failure"``) and a per-iteration trace of
    ``(iteration, loss, gradient norm, step length)`` rows.
    """
    config = config or LbfgsConfig()
    config.validate()
    work = params.copy()
    idx = work.tunable_indices()
    if idx.size == 0:
        raise DomainError("all layers are frozen; nothing to optimize")

    evals = 0

    def subeval(x):
        nonlocal evals
        work.values[idx] = x
        rec = objective(work)
        evals += 1
        return rec.value, rec.grad[idx]

    x = work.values[idx].copy()
    f, g = subeval(x)
    gnorm = float(np.linalg.norm(g))
    trace = [(0, f, gnorm, 0.0)]
    mem = deque(maxlen=config.memory)
    reason = "max_iterations"
    it = 0
    while it < config.max_iterations:
        if gnorm <= config.gradient_tolerance:
            reason = "gradient_tolerance"
            break
        d = -_two_loop(g, mem)
        slope = float(np.dot(d, g))
        if slope >= 0.0:
            # stale curvature; fall back to steepest descent
            mem.clear()
            d = -g
            slope = -float(np.dot(g, g))
        init_step = 1.0 if mem else min(1.0, 1.0 / max(gnorm, 1e-12))
        ls = wolfe_line_search(
            subeval, x, d,
            c1=config.c1, c2=config.c2, max_steps=config.max_line_search,
            initial_step=init_step, f0=f, g0=g)
        if not ls.success:
            if np.isfinite(ls.loss) and ls.loss < f and ls.step > 0.0:
                # keep the best point the failed search produced
                x = x + ls.step * d
                work.values[idx] = x
                f2, g2 = subeval(x)
                f, g = f2, g2
                gnorm = float(np.linalg.norm(g))
                it += 1
                trace.append((it, f, gnorm, ls.step))
            reason = "line_search_failure"
            break
        x_new = x + ls.step * d
        s = x_new - x
        y = ls.grad - g
        sy = float(np.dot(s, y))
        if sy > 1e-10 * np.linalg.norm(s) * np.linalg.norm(y):
            mem.append((s, y, 1.0 / sy))
        x, f, g = x_new, ls.loss, ls.grad
        gnorm = float(np.linalg.norm(g))
        it += 1
        trace.append((it, f, gnorm, ls.step))
    else:
        if gnorm <= config.gradient_tolerance:
            reason = "gradient_tolerance"
    work.values[idx] = x
    return LbfgsResult(work, f, gnorm, it, reason, evals, trace)
