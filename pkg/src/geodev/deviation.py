"""Geodesic deviation: Jacobi, generalized Jacobi and exact deviation equations.

The pointwise kernels act on already-evaluated coefficient arrays and never
integrate anything, so they double as residual checks for candidate
solutions produced elsewhere.  Shapes broadcast over leading batch axes:
``G`` is ``(..., n, n, n)``, ``dG`` is ``(..., n, n, n, n)`` (derivative index
last) and every vector argument is ``(..., n)``.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .connection import ConnectionChart, curvature
from .errors import GridMismatch
from .geodesic import GeodesicPath, integrate_geodesics
from .integrate import IntegratorOptions, OdeProblem, Trajectory, solve
from .residuals import ResidualReport


class DeviationKind(str, enum.Enum):
    JACOBI = "jacobi"
    GJE = "gje"
    EXACT_ODE = "exact_ode"
    EXACT_DIFFERENCE = "exact_difference"


# ------------------------------------------------------------- kernels

def jacobi_operator(G, dG, V, xi, xid, xidd):
    """xi'' + dG(xi; V, V) + 2 G(V, xi')."""
    return (xidd
            + np.einsum("...mnst,...t,...n,...s->...m", dG, xi, V, V)
            + 2.0 * np.einsum("...mns,...s,...n->...m", G, V, xid))


def delta_operator(G, dG, V, xi, xid):
    """Excess of the generalized operator over the Jacobi one."""
    return (np.einsum("...mns,...n,...s->...m", G, xid, xid)
            + 2.0 * np.einsum("...mnsa,...a,...n,...s->...m", dG, xi, V, xid)
            + np.einsum("...mnsa,...a,...n,...s->...m", dG, xi, xid, xid))


def gje_operator(G, dG, V, xi, xid, xidd):
    """Generalized Jacobi operator, written out in its own (undecomposed) form."""
    W = V + xid
    return (xidd
            + np.einsum("...mnr,...r,...n->...m", G, xid, 2.0 * V + xid)
            + np.einsum("...mrnt,...t,...r,...n->...m", dG, xi, W, W))


def exact_operator(G_base, G_near, V, xid, xidd):
    """xi'' + G(X + xi)(X' + xi', X' + xi') - G(X)(X', X')."""
    W = V + xid
    return (xidd
            + np.einsum("...mns,...n,...s->...m", G_near, W, W)
            - np.einsum("...mns,...n,...s->...m", G_base, V, V))


# ---------------------------------------------------- chart-level operators

def _coefficients(chart, base, s):
    X = base.position(s)
    return X, base.velocity(s), chart.christoffel(X), chart.christoffel_derivative(X)


def op_J(chart: ConnectionChart, base: GeodesicPath, xi, xidot, xiddot, s):
    _, V, G, dG = _coefficients(chart, base, s)
    return jacobi_operator(G, dG, V, np.asarray(xi, float), np.asarray(xidot, float), np.asarray(xiddot, float))


def op_Delta(chart: ConnectionChart, base: GeodesicPath, xi, xidot, s):
    _, V, G, dG = _coefficients(chart, base, s)
    return delta_operator(G, dG, V, np.asarray(xi, float), np.asarray(xidot, float))


def op_G(chart: ConnectionChart, base: GeodesicPath, xi, xidot, xiddot, s):
    _, V, G, dG = _coefficients(chart, base, s)
    return gje_operator(G, dG, V, np.asarray(xi, float), np.asarray(xidot, float), np.asarray(xiddot, float))


# ------------------------------------------------------------ paths

@dataclass(frozen=True)
class DeviationPath:
    """``(xi, xi')`` sampled along ``base``; state layout ``(xi^0.., xi'^0..)``."""

    base: GeodesicPath
    trajectory: Trajectory
    kind: DeviationKind

    @property
    def n(self) -> int:
        return self.base.n

    @property
    def chart(self) -> ConnectionChart:
        return self.base.chart

    @property
    def s(self):
        return self.trajectory.s

    def xi(self, s):
        return self.trajectory(s)[..., : self.n]

    def xidot(self, s):
        return self.trajectory(s)[..., self.n:]

    def xiddot(self, s):
        return self.trajectory.derivative(s)[..., self.n:]

    def node_values(self):
        n = self.n
        t = self.trajectory
        return t.y[:, :n], t.y[:, n:], t.f[:, n:]


def deviation_from_samples(base: GeodesicPath, s, xi, xidot, xiddot,
                           kind: DeviationKind = DeviationKind.JACOBI) -> DeviationPath:
    """Wrap externally computed node data (closed forms, transforms) as a path."""
    xi, xidot, xiddot = (np.asarray(a, dtype=float) for a in (xi, xidot, xiddot))
    traj = Trajectory(s, np.concatenate([xi, xidot], -1), np.concatenate([xidot, xiddot], -1))
    return DeviationPath(base, traj, kind)


def _deviation_rhs(chart: ConnectionChart, kind: DeviationKind):
    def rhs(s, y):
        X, V, xi, xid = y[..., 0, :], y[..., 1, :], y[..., 2, :], y[..., 3, :]
        G = chart.christoffel(X)
        A = -np.einsum("...mns,...n,...s->...m", G, V, V)
        zero = np.zeros_like(xi)
        if kind is DeviationKind.JACOBI:
            xidd = -jacobi_operator(G, chart.christoffel_derivative(X), V, xi, xid, zero)
        elif kind is DeviationKind.GJE:
            xidd = -gje_operator(G, chart.christoffel_derivative(X), V, xi, xid, zero)
        else:
            xidd = -exact_operator(G, chart.christoffel(X + xi), V, xid, zero)
        return np.stack([V, A, xid, xidd], axis=-2)

    return rhs


def _integrate(chart, base, xi0, xidot0, kind, opts):
    n = chart.dim
    x0, v0 = base.initial_state
    xi0 = np.asarray(xi0, dtype=float)
    xidot0 = np.asarray(xidot0, dtype=float)
    if xi0.shape != (n,) or xidot0.shape != (n,):
        raise ValueError(f"initial deviation data must be {n}-vectors")
    y0 = np.stack([x0, v0, xi0, xidot0])
    traj = solve(OdeProblem(_deviation_rhs(chart, kind), base.s_span, y0), opts, s_init=base.s_init)
    N = len(traj)
    new_base = GeodesicPath(chart, Trajectory(traj.s, traj.y[:, :2].reshape(N, -1),
                                              traj.f[:, :2].reshape(N, -1)), base.s_init)
    dev = Trajectory(traj.s, traj.y[:, 2:].reshape(N, -1), traj.f[:, 2:].reshape(N, -1))
    return DeviationPath(new_base, dev, kind)


def integrate_jacobi(chart: ConnectionChart, base: GeodesicPath, xi0, xidot0,
                     opts: IntegratorOptions = IntegratorOptions()) -> DeviationPath:
    """Jacobi field with data imposed at ``base.s_init``.

    The base geodesic is integrated jointly with the field from its own
    initial data, so the returned path carries a fresh base on the same grid.
    """
    return _integrate(chart, base, xi0, xidot0, DeviationKind.JACOBI, opts)


def integrate_gje(chart: ConnectionChart, base: GeodesicPath, xi0, xidot0,
                  opts: IntegratorOptions = IntegratorOptions()) -> DeviationPath:
    """Generalized Jacobi field; only locally solvable, so may raise StepUnderflow."""
    return _integrate(chart, base, xi0, xidot0, DeviationKind.GJE, opts)


def integrate_exact_ode(chart: ConnectionChart, base: GeodesicPath, xi0, xidot0,
                        opts: IntegratorOptions = IntegratorOptions()) -> DeviationPath:
    """Exact deviation equation, coefficients evaluated at ``X + xi``."""
    return _integrate(chart, base, xi0, xidot0, DeviationKind.EXACT_ODE, opts)


def exact_by_difference(chart: ConnectionChart, X: GeodesicPath, x: GeodesicPath) -> DeviationPath:
    """Coordinate difference ``x - X`` of two geodesics on one s-grid."""
    if not np.array_equal(X.s, x.s):
        raise GridMismatch("geodesics do not share an s-grid")
    tX, tx = X.trajectory, x.trajectory
    traj = Trajectory(tX.s, tx.y - tX.y, tx.f - tX.f)
    return DeviationPath(X, traj, DeviationKind.EXACT_DIFFERENCE)


def jacobi_from_variation(chart: ConnectionChart, family: Callable, eps: float, s_span,
                          opts: IntegratorOptions = IntegratorOptions(),
                          s_init: Optional[float] = None) -> DeviationPath:
    """Variation field of a one-parameter geodesic family by central difference.

    ``family(e)`` returns the initial data ``(x0, v0)`` at ``s_init`` of the
    member with parameter ``e``.  The three members ``-eps, 0, +eps`` are
    integrated as one system so the difference quotient sees a common grid.
    """
    minus, mid, plus = integrate_geodesics(chart, [family(-eps), family(0.0), family(eps)],
                                           s_span, opts, s_init)
    tm, tp = minus.trajectory, plus.trajectory
    traj = Trajectory(tp.s, (tp.y - tm.y) / (2 * eps), (tp.f - tm.f) / (2 * eps))
    return DeviationPath(mid, traj, DeviationKind.JACOBI)


_OPERATOR_FOR_KIND = {
    DeviationKind.JACOBI: "jacobi",
    DeviationKind.GJE: "gje",
    DeviationKind.EXACT_ODE: "exact",
    DeviationKind.EXACT_DIFFERENCE: "exact",
}


def deviation_residual(dev: DeviationPath, samples: Optional[int] = None,
                       operator: Optional[str] = None, s=None) -> ResidualReport:
    """Residual of ``operator`` (default: the one matching ``dev.kind``).

    Samples the interval midpoints of the deviation trajectory unless explicit
    parameters ``s`` are given.
    """
    operator = operator or _OPERATOR_FOR_KIND[dev.kind]
    s = dev.trajectory.midpoints(samples) if s is None else np.atleast_1d(np.asarray(s, float))
    chart = dev.chart
    X, V = dev.base.position(s), dev.base.velocity(s)
    xi, xid, xidd = dev.xi(s), dev.xidot(s), dev.xiddot(s)
    G = chart.christoffel(X)
    if operator == "exact":
        r = exact_operator(G, chart.christoffel(X + xi), V, xid, xidd)
    else:
        dG = chart.christoffel_derivative(X)
        if operator == "jacobi":
            r = jacobi_operator(G, dG, V, xi, xid, xidd)
        elif operator == "gje":
            r = gje_operator(G, dG, V, xi, xid, xidd)
        elif operator == "delta":
            r = delta_operator(G, dG, V, xi, xid)
        else:
            raise ValueError(f"unknown operator {operator!r}")
    return ResidualReport(operator, s, r)


def covariant_jacobi_residual(chart: ConnectionChart, base: GeodesicPath, dev: DeviationPath,
                              samples: Optional[int] = None, s=None) -> ResidualReport:
    """``D^2 xi/ds^2 + R(xi, X') X'`` built from covariant derivatives along ``base``."""
    s = dev.trajectory.midpoints(samples) if s is None else np.atleast_1d(np.asarray(s, float))
    X, V, A = base.position(s), base.velocity(s), base.acceleration(s)
    xi, xid, xidd = dev.xi(s), dev.xidot(s), dev.xiddot(s)
    G = chart.christoffel(X)
    dG = chart.christoffel_derivative(X)
    Dxi = xid + np.einsum("...mab,...a,...b->...m", G, V, xi)
    dGds = np.einsum("...mabt,...t->...mab", dG, V)
    d_Dxi = (xidd + np.einsum("...mab,...a,...b->...m", dGds, V, xi)
             + np.einsum("...mab,...a,...b->...m", G, A, xi)
             + np.einsum("...mab,...a,...b->...m", G, V, xid))
    D2xi = d_Dxi + np.einsum("...mab,...a,...b->...m", G, V, Dxi)
    R = curvature(chart, X)
    RxVV = np.einsum("...mnrs,...n,...r,...s->...m", R, V, xi, V)
    return ResidualReport("covariant_jacobi", s, D2xi + RxVV)
