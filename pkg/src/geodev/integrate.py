"""Initial-value ODE integration with cubic Hermite dense output.

Two schemes are provided: classical fixed-step RK4 and the Dormand-Prince
5(4) embedded pair with PI step-size control.  Both return a
:class:`Trajectory` that stores node values *and* node derivatives, so the
dense output is a piecewise cubic Hermite interpolant.  The derivative of
that interpolant is fourth-order accurate at interval midpoints, which is
where downstream residual checks sample by default.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Callable, Optional

import numpy as np

from .errors import NonFiniteState, StepUnderflow

Rhs = Callable[[float, np.ndarray], np.ndarray]


@dataclass(frozen=True)
class OdeProblem:
    rhs: Rhs
    s_span: tuple
    y0: np.ndarray

    @property
    def state_dim(self) -> int:
        return int(np.size(self.y0))


@dataclass(frozen=True)
class IntegratorOptions:
    """Integrator selection shared by the geometric modules.

    ``min_nodes`` caps the adaptive step at ``|span| / min_nodes`` so that
    dense output keeps a usable resolution even on problems where the error
    estimate alone would allow a single giant step (straight lines).
    """

    method: str = "adaptive"
    steps: int = 1000
    rtol: float = 1e-10
    atol: float = 1e-12
    min_nodes: Optional[int] = 100

    def __post_init__(self):
        if self.method not in ("adaptive", "rk4"):
            raise ValueError(f"unknown integrator {self.method!r}")

    def halved(self) -> "IntegratorOptions":
        """Same scheme with step sizes halved.

        For the adaptive scheme the step cap is halved and both tolerances
        are divided by 2**5, which halves tolerance-limited steps of a
        fifth-order method.
        """
        if self.method == "rk4":
            return replace(self, steps=2 * self.steps)
        return replace(self, min_nodes=2 * (self.min_nodes or 100),
                       rtol=self.rtol / 32.0, atol=self.atol / 32.0)


class Trajectory:
    """Ordered samples ``(s_k, y_k, f_k)`` with cubic Hermite dense output.

    ``f_k`` is the stored derivative dy/ds at node ``k``.  Nodes are kept in
    increasing order of ``s`` regardless of the integration direction.
    Evaluating at a node returns the stored value bitwise.
    """

    def __init__(self, s, y, f):
        s = np.asarray(s, dtype=float)
        y = np.asarray(y, dtype=float)
        f = np.asarray(f, dtype=float)
        if s.ndim != 1 or len(s) < 1:
            raise ValueError("s must be a non-empty 1-d array")
        if y.shape != f.shape or y.shape[0] != len(s):
            raise ValueError("y and f must have shape (len(s), ...)")
        if len(s) > 1 and s[1] < s[0]:
            s, y, f = s[::-1], y[::-1], f[::-1]
        if len(s) > 1 and np.any(np.diff(s) <= 0):
            raise ValueError("node parameters must be strictly monotone")
        self.s = np.ascontiguousarray(s)
        self.y = np.ascontiguousarray(y)
        self.f = np.ascontiguousarray(f)

    def __len__(self):
        return len(self.s)

    @property
    def span(self):
        return float(self.s[0]), float(self.s[-1])

    def columns(self, index) -> "Trajectory":
        """Trajectory restricted to state components ``index`` (last axis)."""
        return Trajectory(self.s, self.y[..., index], self.f[..., index])

    def _locate(self, s):
        s = np.asarray(s, dtype=float)
        lo, hi = self.s[0], self.s[-1]
        slack = 1e-12 * max(1.0, hi - lo)
        if np.any(s < lo - slack) or np.any(s > hi + slack):
            raise ValueError(f"evaluation point outside trajectory span [{lo}, {hi}]")
        k = np.clip(np.searchsorted(self.s, s, side="right") - 1, 0, max(len(self.s) - 2, 0))
        return s, k

    def _eval(self, s, which):
        s_arr, k = self._locate(s)
        scalar = s_arr.ndim == 0
        s_arr = np.atleast_1d(s_arr)
        k = np.atleast_1d(k)
        out = np.empty((len(s_arr),) + self.y.shape[1:])
        for i, (si, ki) in enumerate(zip(s_arr, k)):
            out[i] = self._eval_one(si, ki, which)
        return out[0] if scalar else out

    def _eval_one(self, si, k, which):
        exact = np.nonzero(self.s == si)[0]
        if exact.size:
            j = exact[0]
            return self.y[j] if which == 0 else self.f[j]
        if len(self.s) == 1:
            raise ValueError("single-node trajectory can only be evaluated at its node")
        s0, s1 = self.s[k], self.s[k + 1]
        h = s1 - s0
        t = (si - s0) / h
        y0, y1, f0, f1 = self.y[k], self.y[k + 1], self.f[k], self.f[k + 1]
        if which == 0:
            t2, t3 = t * t, t * t * t
            return ((2 * t3 - 3 * t2 + 1) * y0 + (t3 - 2 * t2 + t) * h * f0
                    + (-2 * t3 + 3 * t2) * y1 + (t3 - t2) * h * f1)
        t2 = t * t
        return ((6 * t2 - 6 * t) * (y0 - y1) / h
                + (3 * t2 - 4 * t + 1) * f0 + (3 * t2 - 2 * t) * f1)

    def __call__(self, s):
        return self._eval(s, 0)

    def derivative(self, s):
        return self._eval(s, 1)

    def midpoints(self, samples: Optional[int] = None) -> np.ndarray:
        """Interval midpoints, thinned to at most ``samples`` evenly spread ones."""
        if len(self.s) < 2:
            return self.s.copy()
        mids = 0.5 * (self.s[:-1] + self.s[1:])
        if samples is not None and samples < len(mids):
            idx = np.unique(np.linspace(0, len(mids) - 1, samples).round().astype(int))
            mids = mids[idx]
        return mids

    @classmethod
    def merge(cls, left: "Trajectory", right: "Trajectory") -> "Trajectory":
        """Join two trajectories sharing an end node (left ends where right starts)."""
        if left.s[-1] != right.s[0]:
            raise ValueError("trajectories do not share a junction node")
        return cls(np.concatenate([left.s, right.s[1:]]),
                   np.concatenate([left.y, right.y[1:]]),
                   np.concatenate([left.f, right.f[1:]]))


def _check_finite(k, s):
    if not np.all(np.isfinite(k)):
        raise NonFiniteState(f"non-finite derivative at s={s}")


def rk4_endpoint(rhs: Rhs, y0, s0: float, s1: float, steps: int):
    """Classical RK4 from s0 to s1, returning only the final state.

    ``y0`` may carry leading batch axes; ``rhs`` must broadcast over them.
    """
    y = np.array(y0, dtype=float)
    h = (s1 - s0) / steps
    s = s0
    for i in range(steps):
        k1 = rhs(s, y)
        k2 = rhs(s + 0.5 * h, y + 0.5 * h * k1)
        k3 = rhs(s + 0.5 * h, y + 0.5 * h * k2)
        k4 = rhs(s + h, y + h * k3)
        y = y + (h / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
        s = s0 + (i + 1) * h
    _check_finite(y, s1)
    return y


def rk4_fixed(problem: OdeProblem, steps: int) -> Trajectory:
    """Classical fourth-order Runge-Kutta with ``steps`` equal steps."""
    if steps < 1:
        raise ValueError("steps must be >= 1")
    s0, s1 = map(float, problem.s_span)
    h = (s1 - s0) / steps
    y = np.array(problem.y0, dtype=float)
    rhs = problem.rhs
    k1 = np.asarray(rhs(s0, y), dtype=float)
    _check_finite(k1, s0)
    ss, ys, fs = [s0], [y], [k1]
    for i in range(steps):
        s = ss[-1]
        k2 = rhs(s + 0.5 * h, y + 0.5 * h * k1)
        _check_finite(k2, s)
        k3 = rhs(s + 0.5 * h, y + 0.5 * h * k2)
        _check_finite(k3, s)
        k4 = rhs(s + h, y + h * k3)
        _check_finite(k4, s)
        y = y + (h / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
        s_new = s0 + (i + 1) * h if i + 1 < steps else s1
        k1 = np.asarray(rhs(s_new, y), dtype=float)
        _check_finite(k1, s_new)
        ss.append(s_new)
        ys.append(y)
        fs.append(k1)
    return Trajectory(ss, ys, fs)


# Dormand-Prince 5(4) tableau.
_C = np.array([0.0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1.0, 1.0])
_A = [
    [],
    [1 / 5],
    [3 / 40, 9 / 40],
    [44 / 45, -56 / 15, 32 / 9],
    [19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729],
    [9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656],
    [35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84],
]
_E = np.array([71 / 57600, 0.0, -71 / 16695, 71 / 1920, -17253 / 339200, 22 / 525, -1 / 40])


def _initial_step(rhs, s0, y0, f0, direction, rtol, atol, span):
    scale = atol + rtol * np.abs(y0)
    d0 = np.sqrt(np.mean((y0 / scale) ** 2))
    d1 = np.sqrt(np.mean((f0 / scale) ** 2))
    if d1 == 0.0:
        # Constant initial slope; probe curvature with a step of the full span.
        h0 = span
    else:
        h0 = 0.01 * d0 / d1 if (d0 >= 1e-5 and d1 >= 1e-5) else 1e-6
        h0 = min(h0, span)
    y1 = y0 + direction * h0 * f0
    f1 = rhs(s0 + direction * h0, y1)
    if not np.all(np.isfinite(f1)):
        return min(span, 1e-6)
    d2 = np.sqrt(np.mean(((f1 - f0) / scale) ** 2)) / h0
    if d1 == 0.0 and d2 == 0.0:
        return span
    if max(d1, d2) <= 1e-15:
        h1 = max(1e-6, h0 * 1e-3)
    else:
        h1 = (0.01 / max(d1, d2)) ** 0.2
    return min(100 * h0, h1, span)


def rk_adaptive(problem: OdeProblem, rtol: float = 1e-10, atol: float = 1e-12,
                max_step: Optional[float] = None, max_steps: int = 1_000_000) -> Trajectory:
    """Dormand-Prince 5(4) with PI step control.

    Raises :class:`StepUnderflow` when the step falls below
    ``1e-14 * |span|``; on a finite-time blow-up this triggers well before the
    state overflows.
    """
    if rtol <= 0 or atol <= 0:
        raise ValueError("rtol and atol must be positive")
    rhs = problem.rhs
    s0, s1 = map(float, problem.s_span)
    span = abs(s1 - s0)
    direction = 1.0 if s1 >= s0 else -1.0
    y = np.array(problem.y0, dtype=float)
    f = np.asarray(rhs(s0, y), dtype=float)
    _check_finite(f, s0)
    ss, ys, fs = [s0], [y], [f]
    if span == 0.0:
        return Trajectory(ss, ys, fs)
    hmax = span if max_step is None else min(max_step, span)
    h = min(_initial_step(rhs, s0, y, f, direction, rtol, atol, span), hmax)
    h_min = 1e-14 * span
    s = s0
    err_prev = 1e-4
    rejected = False
    for _ in range(max_steps):
        remaining = abs(s1 - s)
        if remaining <= 1e-15 * span:
            break
        h = min(h, remaining)
        if h < h_min:
            raise StepUnderflow(f"step size underflow at s={s}", s=s)
        hs = direction * h
        ks = [f]
        finite = True
        for i in range(1, 7):
            yi = y + hs * sum(a * k for a, k in zip(_A[i], ks))
            ki = np.asarray(rhs(s + _C[i] * hs, yi), dtype=float)
            if not np.all(np.isfinite(ki)):
                finite = False
                break
            ks.append(ki)
        if not finite:
            h *= 0.25
            rejected = True
            continue
        y_new = y + hs * sum(a * k for a, k in zip(_A[6], ks[:6]))
        err_vec = hs * sum(e * k for e, k in zip(_E, ks))
        scale = atol + rtol * np.maximum(np.abs(y), np.abs(y_new))
        err = float(np.sqrt(np.mean((err_vec / scale) ** 2)))
        if err <= 1.0:
            s_new = s1 if h == remaining else s + hs
            s = s_new
            y, f = y_new, ks[6]
            ss.append(s)
            ys.append(y)
            fs.append(f)
            if err == 0.0:
                fac = 5.0
            else:
                fac = 0.9 * err ** (-0.7 / 5) * err_prev ** (0.4 / 5)
                fac = min(5.0, max(0.2, fac))
            if rejected:
                fac = min(fac, 1.0)
            h = min(h * fac, hmax)
            err_prev = max(err, 1e-4)
            rejected = False
        else:
            h *= max(0.2, 0.9 * err ** (-0.2))
            rejected = True
    else:
        raise StepUnderflow(f"exceeded {max_steps} steps at s={s}", s=s)
    return Trajectory(ss, ys, fs)


def solve(problem: OdeProblem, options: IntegratorOptions = IntegratorOptions(),
          s_init: Optional[float] = None) -> Trajectory:
    """Integrate ``problem`` with the scheme selected in ``options``.

    When ``s_init`` lies strictly inside ``s_span`` the initial state is
    taken to live at ``s_init`` and the problem is integrated in both
    directions; the two halves are merged into one trajectory.
    """
    a, b = map(float, problem.s_span)
    if s_init is None or s_init == a:
        return _solve_one(problem, options, abs(b - a))
    if s_init == b:
        return _solve_one(replace(problem, s_span=(b, a)), options, abs(b - a))
    lo, hi = min(a, b), max(a, b)
    if not lo < s_init < hi:
        raise ValueError("s_init must lie inside s_span")
    total = hi - lo
    left = _solve_one(replace(problem, s_span=(s_init, lo)), options, total)
    right = _solve_one(replace(problem, s_span=(s_init, hi)), options, total)
    return Trajectory.merge(left, right)


def _solve_one(problem, options, total_span):
    span = abs(problem.s_span[1] - problem.s_span[0])
    if options.method == "rk4":
        steps = max(1, int(round(options.steps * span / total_span))) if total_span > 0 else 1
        return rk4_fixed(problem, steps)
    max_step = None
    if options.min_nodes:
        max_step = total_span / options.min_nodes
    return rk_adaptive(problem, options.rtol, options.atol, max_step=max_step)
