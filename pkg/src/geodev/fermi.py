"""Fermi coordinates along a geodesic (Prop. 1) and their affine transitions (Prop. 2).

A :class:`FermiChart` is a :class:`~geodev.chartmap.ChartMap` from Fermi
coordinates ``y = (s, z^1..z^{n-1})`` to the ambient chart,
``f(s, z) = exp_{X(s)}(z^i e_i(s))`` (Eq. fermiDef).  The map is only known
through shooting, so its jets are central finite differences of ``f``; the
connection in Fermi coordinates follows from the inverse transformation rule
(:func:`~geodev.chartmap.connection_from_parameterization`).
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .chartmap import ChartMap, connection_from_parameterization
from .connection import FD_OFFSETS, FD_WEIGHTS, ConnectionChart
from .deviation import DeviationKind, DeviationPath
from .errors import (DegenerateFrame, DomainEscape, GeodevError, InjectivityFailure,
                     InsufficientOverlap, NotGraphLike)
from .geodesic import FrameField, GeodesicPath, frame_rhs, geodesic_rhs, parallel_transport
from .integrate import IntegratorOptions, Trajectory, rk4_endpoint
from .residuals import ResidualReport

SHOOT_STEPS = 32
AXIS_SUBSTEPS = 4
JET_STEP = 1e-3
CONNECTION_FD_STEP = 1e-2
MIN_RHO = 1e-4
ROUND_TRIP_TOL = 1e-8
_SECOND_WEIGHTS = np.array([-1.0, 16.0, -30.0, 16.0, -1.0]) / 12.0


def _fd_jets(F, y, h):
    """``F`` and its first two derivatives at points ``y`` from one batched stencil.

    ``F`` maps an array ``(..., P, n)`` of stencil points to ``(..., P, m)``
    values and receives the whole stencil of each point at once, so callers
    can keep per-point state (the axis anchor) fixed across it.
    """
    y = np.asarray(y, dtype=float)
    n = y.shape[-1]
    offs = []
    for a in range(n):
        for o in FD_OFFSETS:
            d = np.zeros(n)
            d[a] = o * h
            offs.append(d)
    pairs = list(itertools.combinations(range(n), 2))
    for a, b in pairs:
        for o1, o2 in itertools.product(FD_OFFSETS, FD_OFFSETS):
            d = np.zeros(n)
            d[a], d[b] = o1 * h, o2 * h
            offs.append(d)
    offs = np.vstack([np.zeros(n)] + offs)
    vals = F(y[..., None, :] + offs)
    center = vals[..., 0, :]
    k = len(FD_OFFSETS)
    axial = vals[..., 1:1 + n * k, :].reshape(y.shape[:-1] + (n, k, -1))
    jet1 = np.einsum("o,...aom->...ma", FD_WEIGHTS, axial) / h
    m = center.shape[-1]
    jet2 = np.zeros(y.shape[:-1] + (m, n, n))
    for a in range(n):
        five = np.concatenate([axial[..., a, :2, :], center[..., None, :], axial[..., a, 2:, :]], axis=-2)
        jet2[..., :, a, a] = np.einsum("o,...om->...m", _SECOND_WEIGHTS, five) / h ** 2
    mixed = vals[..., 1 + n * k:, :].reshape(y.shape[:-1] + (len(pairs), k, k, -1))
    for p, (a, b) in enumerate(pairs):
        val = np.einsum("i,j,...ijm->...m", FD_WEIGHTS, FD_WEIGHTS, mixed[..., p, :, :, :]) / h ** 2
        jet2[..., :, a, b] = jet2[..., :, b, a] = val
    return center, jet1, jet2


class FermiChart(ChartMap):
    """Fermi coordinates along ``frame.base`` on ``interval x {|z| < rho}``.

    ``frame`` carries the axis geodesic and the transported vectors
    ``e_1..e_{n-1}`` on one grid.  For flat ambient charts the exponential map
    is a straight line, so ``f`` and its jets are used in closed form.
    """

    def __init__(self, ambient: ConnectionChart, frame: FrameField, interval, rho: float,
                 s0: float, shoot_steps: int = SHOOT_STEPS, jet_step: float = JET_STEP,
                 connection_fd_step: float = CONNECTION_FD_STEP):
        super().__init__(ambient.dim)
        self.ambient = ambient
        self.frame = frame
        self.interval = (float(interval[0]), float(interval[1]))
        self.rho = float(rho)
        self.s0 = float(s0)
        self.shoot_steps = int(shoot_steps)
        self.jet_step = float(jet_step)
        self.name = f"fermi({ambient.name})"
        self._closed_form = bool(ambient.flat)
        y0 = frame.trajectory(self.s0).reshape(-1, self.dim)
        self._x0, self._v0, self._e0 = y0[0], y0[1], y0[2:]
        self._nodes = frame.trajectory.y.reshape(len(frame.trajectory), -1, self.dim)
        self.induced_connection = connection_from_parameterization(
            ambient, self, fd_step=connection_fd_step, domain_check=self._induced_domain,
            name=f"fermi({ambient.name})")

    # -- geometry --------------------------------------------------------
    @property
    def base(self) -> GeodesicPath:
        return self.frame.base

    def axis_geodesic(self) -> GeodesicPath:
        """The central geodesic written in Fermi coordinates, ``(s, 0..0)``."""
        s = self.frame.trajectory.s
        n = self.dim
        y = np.zeros((len(s), 2 * n))
        y[:, 0] = s
        y[:, n] = 1.0
        f = np.zeros_like(y)
        f[:, 0] = 1.0
        return GeodesicPath(self.induced_connection, Trajectory(s, y, f), self.s0)

    def contains(self, y):
        y = np.asarray(y, dtype=float)
        a, b = self.interval
        return ((y[..., 0] >= a) & (y[..., 0] <= b)
                & (np.linalg.norm(y[..., 1:], axis=-1) < self.rho))

    def _induced_domain(self, y):
        a, b = self.interval
        pad = 0.05 * (b - a)
        return ((y[..., 0] >= a - pad) & (y[..., 0] <= b + pad)
                & (np.linalg.norm(y[..., 1:], axis=-1) <= 1.05 * self.rho))

    def _anchor(self, s):
        ns = self.frame.trajectory.s
        k = np.clip(np.searchsorted(ns, s), 1, len(ns) - 1)
        return np.where(np.abs(ns[k - 1] - s) <= np.abs(ns[k] - s), k - 1, k)

    def _axis_state(self, s, anchor):
        """Axis point, velocity and frame at ``s``, transported from node ``anchor`` by RK4."""
        rhs = frame_rhs(self.ambient)
        y = self._nodes[anchor].copy()
        h = ((s - self.frame.trajectory.s[anchor]) / AXIS_SUBSTEPS)[..., None, None]
        for _ in range(AXIS_SUBSTEPS):
            k1 = rhs(0.0, y)
            k2 = rhs(0.0, y + 0.5 * h * k1)
            k3 = rhs(0.0, y + 0.5 * h * k2)
            k4 = rhs(0.0, y + h * k3)
            y = y + (h / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
        return y

    def _evaluate(self, y, anchor=None):
        y = np.asarray(y, dtype=float)
        n = self.dim
        if self._closed_form:
            return (self._x0 + (y[..., :1] - self.s0) * self._v0
                    + np.einsum("...i,im->...m", y[..., 1:], self._e0))
        if anchor is None:
            anchor = self._anchor(y[..., 0])
        axis = self._axis_state(y[..., 0], np.broadcast_to(anchor, y.shape[:-1]))
        v = np.einsum("...i,...im->...m", y[..., 1:], axis[..., 2:, :])
        state = np.concatenate([axis[..., 0, :], v], axis=-1)
        return rk4_endpoint(geodesic_rhs(self.ambient), state, 0.0, 1.0, self.shoot_steps)[..., :n]

    def forward(self, y):
        return self._evaluate(y)

    def _stencil_jets(self, y):
        y = np.asarray(y, dtype=float)
        anchor = self._anchor(y[..., 0])[..., None]
        return _fd_jets(lambda pts: self._evaluate(pts, anchor), y, self.jet_step)

    def jet1(self, y):
        y = np.asarray(y, dtype=float)
        if self._closed_form:
            J = np.vstack([self._v0, self._e0]).T
            return np.broadcast_to(J, y.shape[:-1] + J.shape).copy()
        return self._stencil_jets(y)[1]

    def jet2(self, y):
        y = np.asarray(y, dtype=float)
        if self._closed_form:
            return np.zeros(y.shape[:-1] + (self.dim,) * 3)
        return self._stencil_jets(y)[2]

    def jet3(self, y):
        y = np.asarray(y, dtype=float)
        n = self.dim
        if self._closed_form:
            return np.zeros(y.shape[:-1] + (n,) * 4)
        h = self.jet_step
        cols = []
        for a in range(n):
            d = np.zeros(n)
            d[a] = h
            cols.append(sum(w * self.jet2(y + o * d) for o, w in zip(FD_OFFSETS, FD_WEIGHTS)) / h)
        raw = np.stack(cols, axis=-1)
        # Symmetrize over the three lower indices.
        perms = itertools.permutations(range(3))
        return sum(np.moveaxis(raw, [-3, -2, -1], [-3 + p[0], -3 + p[1], -3 + p[2]])
                   for p in perms) / 6.0

    def newton_seed(self, x):
        """Nearest axis node, corrected by the linearization ``x ~ X_k + J_k (dy)``."""
        x = np.asarray(x, dtype=float)
        X = self._nodes[:, 0]
        k = np.argmin(np.linalg.norm(x[..., None, :] - X, axis=-1), axis=-1)
        J = np.swapaxes(self._nodes[k, 1:], -1, -2)
        dy = np.linalg.solve(J, (x - X[k])[..., None])[..., 0]
        seed = dy.copy()
        seed[..., 0] += self.frame.trajectory.s[k]
        return seed

    def descriptor(self) -> dict:
        return {"ambient": self.ambient.name, "interval": list(self.interval), "rho": self.rho,
                "s0": self.s0, "x0": self._x0.tolist(), "v0": self._v0.tolist(),
                "frame0": self._e0.tolist(), "closed_form": self._closed_form,
                "shoot_steps": self.shoot_steps, "jet_step": self.jet_step}


def _round_trip_ok(fc: FermiChart, pts) -> bool:
    try:
        x = fc.forward(pts)
        if not np.all(fc.ambient.contains(x)):
            return False
        back = fc.backward(x)
    except GeodevError:
        return False
    if np.any(np.abs(back - pts) > ROUND_TRIP_TOL * (1.0 + np.abs(pts))):
        return False
    J = fc.jet1(pts)
    return bool(np.all(np.abs(np.linalg.det(J)) > 1e-8))


def build_fermi(chart: ConnectionChart, X: GeodesicPath, frame0, interval=None, rho: float = 0.5,
                opts: IntegratorOptions = IntegratorOptions(), s0: Optional[float] = None,
                checks: int = 24, seed: int = 0) -> FermiChart:
    """Fermi chart along ``X`` with ``e_i(s0) = frame0[i]``.

    ``rho`` is halved until ``checks`` random round trips
    ``backward(forward(p)) = p`` succeed, down to ``1e-4``.
    """
    n = chart.dim
    a, b = X.s_span if interval is None else (float(interval[0]), float(interval[1]))
    if not a < b:
        raise ValueError("interval must be non-empty")
    s0 = a + 0.1 * (b - a) if s0 is None else float(s0)
    frame0 = np.atleast_2d(np.asarray(frame0, dtype=float))
    if frame0.shape != (n - 1, n):
        raise DegenerateFrame(f"need {n - 1} frame vectors of dimension {n}")
    M = np.vstack([X.velocity(s0), frame0])
    scale = np.prod(np.linalg.norm(M, axis=1))
    if scale == 0 or abs(np.linalg.det(M)) <= 1e-10 * scale:
        raise DegenerateFrame("frame vectors are not complementary to the tangent at s0")
    frame = parallel_transport(X, frame0, s0=s0, opts=opts, s_span=(a, b))
    rng = np.random.default_rng(seed)
    s_pts = rng.uniform(a, b, checks)
    dirs = rng.normal(size=(checks, n - 1))
    dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
    radii = rng.uniform(0.0, 1.0, checks) ** (1.0 / (n - 1))
    r = float(rho)
    while r >= MIN_RHO:
        fc = FermiChart(chart, frame, (a, b), r, s0)
        pts = np.column_stack([s_pts, 0.999 * r * radii[:, None] * dirs])
        if _round_trip_ok(fc, pts):
            return fc
        r *= 0.5
    raise InjectivityFailure(f"no Fermi radius >= {MIN_RHO} passed the round-trip checks")


def gamma_on_axis(fc: FermiChart, samples: int = 50) -> ResidualReport:
    """Induced coefficients at ``(s, 0)`` for ``samples`` parameters across the interval."""
    a, b = fc.interval
    s = np.linspace(a, b, samples)
    y = np.zeros((samples, fc.dim))
    y[:, 0] = s
    G = fc.induced_connection.christoffel(y)
    return ResidualReport("gamma_on_axis", s, G)


@dataclass(frozen=True)
class FermiTransition:
    A: float
    B: float
    T: np.ndarray
    fit_residual: float
    unconstrained_z_offset: float
    samples: int

    def to_dict(self) -> dict:
        return {"A": self.A, "B": self.B, "T": self.T.tolist(), "fit_residual": self.fit_residual,
                "unconstrained_z_offset": self.unconstrained_z_offset, "samples": self.samples}


def fermi_transition(a: FermiChart, b: FermiChart, sample_points=40, seed: int = 0) -> FermiTransition:
    """Least-squares fit of ``b.backward(a.forward(.))`` by ``(As + B, T z)``.

    ``sample_points`` is either an array of Fermi-``a`` points or a count of
    random points drawn inside ``a``'s box (shrunk by half for margin).
    Points that do not land inside ``b``'s box are discarded.
    """
    n = a.dim
    if np.isscalar(sample_points):
        rng = np.random.default_rng(seed)
        cnt = int(sample_points)
        lo, hi = a.interval
        mid, half = 0.5 * (lo + hi), 0.25 * (hi - lo)
        pts = np.column_stack([rng.uniform(mid - half, mid + half, cnt),
                               rng.uniform(-1, 1, (cnt, n - 1)) * 0.5 * a.rho / np.sqrt(n - 1)])
    else:
        pts = np.atleast_2d(np.asarray(sample_points, dtype=float))
    q, keep = [], []
    for p in pts:
        try:
            qq = b.backward(a.forward(p))
        except GeodevError:
            continue
        if b.contains(qq):
            q.append(qq)
            keep.append(p)
    if len(keep) < n + 2:
        raise InsufficientOverlap(f"only {len(keep)} sample points lie in both Fermi charts")
    p = np.array(keep)
    q = np.array(q)
    ones = np.ones(len(p))
    (A, B), *_ = np.linalg.lstsq(np.column_stack([p[:, 0], ones]), q[:, 0], rcond=None)
    Tt, *_ = np.linalg.lstsq(p[:, 1:], q[:, 1:], rcond=None)
    T = Tt.T
    res_s = q[:, 0] - (A * p[:, 0] + B)
    res_z = q[:, 1:] - p[:, 1:] @ T.T
    fit = float(max(np.max(np.abs(res_s)), np.max(np.abs(res_z))))
    full, *_ = np.linalg.lstsq(np.column_stack([p[:, 1:], p[:, 0], ones]), q[:, 1:], rcond=None)
    offset = float(np.max(np.abs(full[-2:])))
    return FermiTransition(float(A), float(B), T, fit, offset, len(p))


def fermi_xi(fc: FermiChart, x: GeodesicPath) -> DeviationPath:
    """Eq. FermiXi: the geodesic ``x`` written as ``(s, z(s))`` in ``fc``, as ``xi = (0, z)``.

    ``x`` is reparameterized by the Fermi coordinate ``s``; derivatives come
    from the chain rule through the jets of ``f`` and the geodesic equation.
    """
    n = fc.dim
    t = x.trajectory
    pos, vel = t.y[:, :n], t.y[:, n:]
    acc = t.f[:, n:]
    try:
        y = fc.backward(pos)
    except GeodevError as exc:
        raise NotGraphLike(f"geodesic cannot be inverted in the Fermi chart: {exc}") from exc
    order = np.argsort(y[:, 0]) if y[-1, 0] < y[0, 0] else np.arange(len(y))
    sig = y[order, 0]
    if np.any(np.diff(sig) <= 0):
        raise NotGraphLike("Fermi parameter is not monotone along the geodesic")
    if not np.all(fc.contains(y)):
        raise NotGraphLike("geodesic leaves the Fermi box")
    J, H = fc.jet1(y), fc.jet2(y)
    P = np.linalg.inv(J)
    yd = np.einsum("kab,kb->ka", P, vel)
    ydd = np.einsum("kab,kb->ka", P, acc - np.einsum("kabc,kb,kc->ka", H, yd, yd))
    sd, sdd = yd[:, :1], ydd[:, :1]
    if np.any(np.abs(sd) < 1e-12):
        raise NotGraphLike("x is tangent to a Fermi slice")
    zp = yd[:, 1:] / sd
    zpp = (ydd[:, 1:] * sd - yd[:, 1:] * sdd) / sd ** 3
    zero = np.zeros((len(y), 1))
    xi = np.hstack([zero, y[:, 1:]])[order]
    xid = np.hstack([zero, zp])[order]
    xidd = np.hstack([zero, zpp])[order]
    axis = _axis_on_nodes(fc, sig)
    traj = Trajectory(sig, np.hstack([xi, xid]), np.hstack([xid, xidd]))
    return DeviationPath(axis, traj, DeviationKind.EXACT_DIFFERENCE)


def _axis_on_nodes(fc: FermiChart, s) -> GeodesicPath:
    n = fc.dim
    y = np.zeros((len(s), 2 * n))
    y[:, 0] = s
    y[:, n] = 1.0
    f = np.zeros_like(y)
    f[:, 0] = 1.0
    s_init = float(np.clip(fc.s0, s[0], s[-1]))
    if s_init not in s:
        s_init = float(s[0])
    return GeodesicPath(fc.induced_connection, Trajectory(s, y, f), s_init)


def change_frame(frame0, M):
    """Frame ``E M``: new vector ``i`` is ``sum_j M[j, i] e_j`` (rows in, rows out).

    With this convention the Fermi transition of Prop. 2 has ``T = M^{-1}``
    (Eq. jkasd).
    """
    frame0 = np.atleast_2d(np.asarray(frame0, dtype=float))
    M = np.asarray(M, dtype=float)
    return M.T @ frame0
