"""Geodesics, parallel frames and the exponential map."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .connection import ConnectionChart
from .integrate import IntegratorOptions, OdeProblem, Trajectory, solve
from .residuals import ResidualReport


@dataclass(frozen=True)
class GeodesicPath:
    """Sampled solution of the geodesic equation.

    The trajectory state is ``(X^0..X^{n-1}, V^0..V^{n-1})`` with ``V = dX/ds``.
    ``s_init`` is the parameter at which the initial data was imposed; the
    trajectory reproduces it exactly there.
    """

    chart: ConnectionChart
    trajectory: Trajectory
    s_init: float

    @property
    def n(self) -> int:
        return self.chart.dim

    @property
    def s(self) -> np.ndarray:
        return self.trajectory.s

    @property
    def s_span(self):
        return self.trajectory.span

    @property
    def initial_state(self):
        y = self.trajectory(self.s_init)
        return y[: self.n], y[self.n:]

    def position(self, s):
        return self.trajectory(s)[..., : self.n]

    def velocity(self, s):
        return self.trajectory(s)[..., self.n:]

    def acceleration(self, s):
        """d^2X/ds^2 from differentiating the dense output of the velocity."""
        return self.trajectory.derivative(s)[..., self.n:]

    def node_acceleration(self):
        return self.trajectory.f[:, self.n:]


def geodesic_rhs(chart: ConnectionChart):
    n = chart.dim

    def rhs(s, y):
        x, v = y[..., :n], y[..., n:]
        G = chart.christoffel(x)
        a = -np.einsum("...mns,...n,...s->...m", G, v, v)
        return np.concatenate([v, a], axis=-1)

    return rhs


def integrate_geodesic(chart: ConnectionChart, x0, v0, s_span,
                       opts: IntegratorOptions = IntegratorOptions(),
                       s_init: Optional[float] = None) -> GeodesicPath:
    """Solve the geodesic equation with ``X(s_init) = x0``, ``X'(s_init) = v0``.

    ``s_init`` defaults to ``s_span[0]``.
    """
    return integrate_geodesics(chart, [(x0, v0)], s_span, opts, s_init)[0]


def integrate_geodesics(chart: ConnectionChart, initial_data: Sequence, s_span,
                        opts: IntegratorOptions = IntegratorOptions(),
                        s_init: Optional[float] = None) -> list:
    """Integrate several geodesics as one system so they share one s-grid."""
    n = chart.dim
    y0 = []
    for x0, v0 in initial_data:
        x0 = np.asarray(x0, dtype=float)
        v0 = np.asarray(v0, dtype=float)
        if x0.shape != (n,) or v0.shape != (n,):
            raise ValueError(f"initial data must be {n}-vectors")
        if not np.any(v0):
            raise ValueError("geodesic initial velocity must be non-zero")
        chart.require(x0)
        y0.append(np.concatenate([x0, v0]))
    s_span = (float(s_span[0]), float(s_span[1]))
    s0 = s_span[0] if s_init is None else float(s_init)
    problem = OdeProblem(geodesic_rhs(chart), s_span, np.array(y0))
    traj = solve(problem, opts, s_init=s0)
    return [GeodesicPath(chart, Trajectory(traj.s, traj.y[:, i], traj.f[:, i]), s0)
            for i in range(len(y0))]


def geodesic_residual(path: GeodesicPath, samples: Optional[int] = None) -> ResidualReport:
    """Sup of ``|X'' + G(X)(X', X')|`` at interval midpoints of the stored path."""
    s = path.trajectory.midpoints(samples)
    x, v = path.position(s), path.velocity(s)
    a = path.acceleration(s)
    G = path.chart.christoffel(x)
    r = a + np.einsum("...mns,...n,...s->...m", G, v, v)
    return ResidualReport("geodesic", s, r)


@dataclass(frozen=True)
class FrameField:
    """Vectors parallel-transported along a geodesic, integrated jointly with it.

    Joint state rows: ``X``, ``X'``, ``e_1``, ..., ``e_k``.
    """

    chart: ConnectionChart
    trajectory: Trajectory
    s_init: float

    @property
    def n(self) -> int:
        return self.chart.dim

    @property
    def k(self) -> int:
        return self.trajectory.y.shape[1] - 2

    @property
    def base(self) -> GeodesicPath:
        t = self.trajectory
        N = len(t)
        return GeodesicPath(self.chart, Trajectory(t.s, t.y[:, :2].reshape(N, -1),
                                                   t.f[:, :2].reshape(N, -1)), self.s_init)

    def vectors(self, s):
        return self.trajectory(s)[..., 2:, :]

    def field(self, i: int) -> Trajectory:
        return Trajectory(self.trajectory.s, self.trajectory.y[:, 2 + i], self.trajectory.f[:, 2 + i])

    def transport_residual(self, samples: Optional[int] = None) -> ResidualReport:
        t = self.trajectory
        s = t.midpoints(samples)
        y, dy = t(s), t.derivative(s)
        G = self.chart.christoffel(y[:, 0])
        r = dy[:, 2:] + np.einsum("tmns,tn,tks->tkm", G, y[:, 1], y[:, 2:])
        return ResidualReport("parallel_transport", s, r)

    def independence(self, s) -> np.ndarray:
        """|det [X', e_1, ..., e_k]| at ``s`` (square frames only)."""
        y = np.atleast_2d(self.trajectory(np.atleast_1d(s)).reshape(-1, self.k + 2, self.n))
        return np.abs(np.linalg.det(y[:, 1:]))


def frame_rhs(chart: ConnectionChart):
    def rhs(s, y):
        x, v, e = y[..., 0, :], y[..., 1, :], y[..., 2:, :]
        G = chart.christoffel(x)
        a = -np.einsum("...mns,...n,...s->...m", G, v, v)
        de = -np.einsum("...mns,...n,...ks->...km", G, v, e)
        return np.concatenate([v[..., None, :], a[..., None, :], de], axis=-2)

    return rhs


def parallel_transport(path: GeodesicPath, e0, s0: Optional[float] = None,
                       opts: IntegratorOptions = IntegratorOptions(),
                       s_span=None) -> FrameField:
    """Transport the vectors ``e0`` (rows, given at ``X(s0)``) along ``path``.

    The base geodesic is re-integrated together with the frame from its state
    at ``s0`` (default: the path's own ``s_init``, where that state is exact).
    """
    n = path.n
    e0 = np.atleast_2d(np.asarray(e0, dtype=float))
    if e0.shape[1] != n or not np.all(np.isfinite(e0)):
        raise ValueError(f"frame vectors must be finite {n}-vectors")
    s0 = path.s_init if s0 is None else float(s0)
    x0, v0 = path.trajectory(s0)[:n], path.trajectory(s0)[n:]
    span = path.s_span if s_span is None else (float(s_span[0]), float(s_span[1]))
    y0 = np.vstack([x0, v0, e0])
    traj = solve(OdeProblem(frame_rhs(path.chart), span, y0), opts, s_init=s0)
    return FrameField(path.chart, traj, s0)


def exp_map(chart: ConnectionChart, base, v, opts: IntegratorOptions = IntegratorOptions()):
    """``X(1)`` of the geodesic with ``X(0) = base`` and ``X'(0) = v``."""
    base = np.asarray(base, dtype=float)
    v = np.asarray(v, dtype=float)
    chart.require(base)
    if not np.any(v):
        return base.copy()
    if chart.flat:
        return base + v
    path = integrate_geodesic(chart, base, v, (0.0, 1.0), opts)
    return path.position(1.0)
