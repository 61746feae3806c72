"""Coordinate changes with third-order jets, connection pullback and pushforwards.

A :class:`ChartMap` sends old coordinates ``x`` to new coordinates ``x~``.
Jets are indexed like the connection arrays: ``jet1[..., mu, nu]`` is
``dx~^mu/dx^nu``, ``jet2[..., mu, nu, sigma]`` and ``jet3[..., mu, nu, rho,
sigma]`` are the higher partials, symmetric in their lower indices.
Every evaluator broadcasts over leading batch axes.
"""

from __future__ import annotations

import itertools
from typing import Optional

import numpy as np

from .connection import ConnectionChart
from .deviation import DeviationPath
from .errors import DomainEscape, HessianNotZero, InversionFailure, SingularJacobian
from .geodesic import GeodesicPath
from .integrate import Trajectory
from .residuals import ResidualReport

NEWTON_TOL = 1e-12
NEWTON_MAX_ITER = 50
PULL_FD_STEP = 1e-4
_COND_LIMIT = 1e12


class ChartMap:
    """Smooth coordinate change ``x -> x~`` with jets up to third order.

    Subclasses implement :meth:`forward` and the three jets; :meth:`backward`
    defaults to damped Newton iteration seeded at the query point.
    """

    name = "map"

    def __init__(self, dim: int):
        if dim < 1:
            raise ValueError("map dimension must be positive")
        self.dim = int(dim)

    # -- interface -------------------------------------------------------
    def forward(self, x):
        raise NotImplementedError

    def jet1(self, x):
        raise NotImplementedError

    def jet2(self, x):
        raise NotImplementedError

    def jet3(self, x):
        raise NotImplementedError

    def contains(self, x):
        """Whether ``x`` lies in the source domain of the map."""
        x = np.asarray(x, dtype=float)
        return np.all(np.isfinite(x), axis=-1)

    def newton_seed(self, xt):
        return np.array(xt, dtype=float, copy=True)

    # -- derived ---------------------------------------------------------
    def backward(self, xt):
        """Solve ``forward(x) = xt`` by damped Newton iteration.

        Iterates past the tolerance ``1e-12 (1 + |xt|)`` until the residual
        stops decreasing (machine precision) or 50 iterations elapse.
        """
        xt = np.asarray(xt, dtype=float)
        x = self.newton_seed(xt)
        scale = NEWTON_TOL * (1.0 + np.linalg.norm(xt, axis=-1))
        r = self.forward(x) - xt
        nr = np.linalg.norm(r, axis=-1)
        for _ in range(NEWTON_MAX_ITER):
            J = self.jet1(x)
            try:
                dx = np.linalg.solve(J, r[..., None])[..., 0]
            except np.linalg.LinAlgError as exc:
                raise SingularJacobian(f"{self.name}: singular Jacobian during inversion") from exc
            t = np.ones(nr.shape)
            for _ in range(30):
                trial = x - t[..., None] * dx
                r_trial = self.forward(trial) - xt
                n_trial = np.linalg.norm(r_trial, axis=-1)
                worse = ~(n_trial < nr) & (nr > scale)
                if not np.any(worse):
                    break
                t = np.where(worse, 0.5 * t, t)
            improved = n_trial < nr
            if not np.any(improved):
                break
            x = np.where(improved[..., None], trial, x)
            r = np.where(improved[..., None], r_trial, r)
            nr = np.where(improved, n_trial, nr)
        if not np.all(nr <= scale):
            raise InversionFailure(f"{self.name}: Newton inversion did not converge "
                                   f"(residual {float(np.max(nr)):.3e})")
        return x

    def inverse_jets(self, xt):
        """Jets of the inverse map at ``xt``: ``(x, dx/dx~, d2x/dx~2, d3x/dx~3)``."""
        x = self.backward(xt)
        J, H, K = self.jet1(x), self.jet2(x), self.jet3(x)
        return (x,) + _inverse_jets(J, H, K)

    def inverse(self) -> "ChartMap":
        return InverseMap(self)

    def __repr__(self):
        return f"{type(self).__name__}(dim={self.dim}, name={self.name!r})"


def _invert(J):
    cond = np.linalg.cond(J)
    if not np.all(np.isfinite(cond)) or np.any(cond > _COND_LIMIT):
        raise SingularJacobian("map Jacobian is singular or ill-conditioned")
    return np.linalg.inv(J)


def _inverse_jets(J, H, K):
    """Jets of ``psi = phi^{-1}`` from the jets of ``phi`` at the preimage point."""
    P = _invert(J)
    HPP = np.einsum("...mpq,...pb,...qc->...mbc", H, P, P)
    P2 = -np.einsum("...am,...mbc->...abc", P, HPP)
    inner = (np.einsum("...mpqr,...pb,...qc,...rd->...mbcd", K, P, P, P)
             + np.einsum("...mpq,...pbd,...qc->...mbcd", H, P2, P)
             + np.einsum("...mpq,...pb,...qcd->...mbcd", H, P, P2)
             + np.einsum("...mpq,...pbc,...qd->...mbcd", H, P2, P))
    P3 = -np.einsum("...am,...mbcd->...abcd", P, inner)
    return P, P2, P3


class InverseMap(ChartMap):
    """Inverse of a map, with jets from the analytic inverse-function formulas.

    ``forward_fn`` optionally supplies a closed form for the inverse; without
    it the forward direction is Newton inversion of ``inner``.
    """

    def __init__(self, inner: ChartMap, forward_fn=None, name: Optional[str] = None,
                 contains_fn=None):
        super().__init__(inner.dim)
        self.inner = inner
        self._forward_fn = forward_fn
        self._contains_fn = contains_fn
        self.name = name or f"inverse({inner.name})"

    def forward(self, x):
        x = np.asarray(x, dtype=float)
        if self._forward_fn is not None:
            return self._forward_fn(x)
        return self.inner.backward(x)

    def backward(self, xt):
        return self.inner.forward(xt)

    def contains(self, x):
        x = np.asarray(x, dtype=float)
        if self._contains_fn is not None:
            return np.asarray(self._contains_fn(x), dtype=bool)
        return super().contains(x)

    def _jets(self, x):
        y = self.forward(x)
        return _inverse_jets(self.inner.jet1(y), self.inner.jet2(y), self.inner.jet3(y))

    def jet1(self, x):
        return self._jets(x)[0]

    def jet2(self, x):
        return self._jets(x)[1]

    def jet3(self, x):
        return self._jets(x)[2]

    def inverse(self) -> ChartMap:
        return self.inner


class IdentityMap(ChartMap):
    name = "identity"

    def forward(self, x):
        return np.array(x, dtype=float, copy=True)

    def backward(self, xt):
        return np.array(xt, dtype=float, copy=True)

    def jet1(self, x):
        x = np.asarray(x, dtype=float)
        return np.broadcast_to(np.eye(self.dim), x.shape[:-1] + (self.dim,) * 2).copy()

    def jet2(self, x):
        x = np.asarray(x, dtype=float)
        return np.zeros(x.shape[:-1] + (self.dim,) * 3)

    def jet3(self, x):
        x = np.asarray(x, dtype=float)
        return np.zeros(x.shape[:-1] + (self.dim,) * 4)

    def inverse(self):
        return self


class AffineMap(ChartMap):
    """``x~ = Lambda x + C`` with constant invertible ``Lambda``."""

    name = "affine"

    def __init__(self, Lambda, C=None):
        Lambda = np.asarray(Lambda, dtype=float)
        if Lambda.ndim != 2 or Lambda.shape[0] != Lambda.shape[1]:
            raise ValueError("Lambda must be a square matrix")
        super().__init__(Lambda.shape[0])
        self.Lambda = Lambda
        self.C = np.zeros(self.dim) if C is None else np.asarray(C, dtype=float)
        if self.C.shape != (self.dim,):
            raise ValueError("C must be a vector matching Lambda")
        self._Linv = _invert(Lambda)

    def forward(self, x):
        return np.asarray(x, dtype=float) @ self.Lambda.T + self.C

    def backward(self, xt):
        return (np.asarray(xt, dtype=float) - self.C) @ self._Linv.T

    def jet1(self, x):
        x = np.asarray(x, dtype=float)
        return np.broadcast_to(self.Lambda, x.shape[:-1] + self.Lambda.shape).copy()

    def jet2(self, x):
        x = np.asarray(x, dtype=float)
        return np.zeros(x.shape[:-1] + (self.dim,) * 3)

    def jet3(self, x):
        x = np.asarray(x, dtype=float)
        return np.zeros(x.shape[:-1] + (self.dim,) * 4)

    def inverse(self):
        return AffineMap(self._Linv, -self._Linv @ self.C)


def t_tensor(n: int) -> np.ndarray:
    """``T^mu_{tau rho sigma} = d^mu_tau d_{rho sigma} + d^mu_rho d_{tau sigma} + d^mu_sigma d_{tau rho}``."""
    d = np.eye(n)
    return (np.einsum("mt,rs->mtrs", d, d) + np.einsum("mr,ts->mtrs", d, d)
            + np.einsum("ms,tr->mtrs", d, d))


class CubicCounterexampleMap(ChartMap):
    """``x~ = x + (1/6) T(x, x, x) = x + x |x|^2 / 2`` from the proof of Prop. 4."""

    name = "cubic_counterexample"

    def __init__(self, n: int = 3):
        if n < 3:
            raise ValueError("the cubic counterexample needs dimension >= 3")
        super().__init__(n)
        self.T = t_tensor(n)

    def forward(self, x):
        x = np.asarray(x, dtype=float)
        return x + 0.5 * x * np.sum(x * x, axis=-1, keepdims=True)

    def jet1(self, x):
        x = np.asarray(x, dtype=float)
        q = np.sum(x * x, axis=-1)[..., None, None]
        return (1.0 + 0.5 * q) * np.eye(self.dim) + x[..., :, None] * x[..., None, :]

    def jet2(self, x):
        x = np.asarray(x, dtype=float)
        return np.einsum("ijkl,...l->...ijk", self.T, x)

    def jet3(self, x):
        x = np.asarray(x, dtype=float)
        return np.broadcast_to(self.T, x.shape[:-1] + self.T.shape).copy()


# ---------------------------------------------------------------- separable

def _factor_derivative(kind: str, order: int, t):
    if kind == "one":
        return np.ones_like(t) if order == 0 else np.zeros_like(t)
    if kind == "id":
        return t if order == 0 else (np.ones_like(t) if order == 1 else np.zeros_like(t))
    if kind == "sin":
        return np.sin(t + 0.5 * np.pi * order)
    if kind == "cos":
        return np.cos(t + 0.5 * np.pi * order)
    raise ValueError(f"unknown factor {kind!r}")


class SeparableMap(ChartMap):
    """Components ``x~^mu = prod_nu f_{mu nu}(x^nu)`` with ``f`` in {1, id, sin, cos}.

    Covers the polar and spherical parameterizations of Cartesian space;
    every partial derivative is a product of one-variable derivatives.
    """

    def __init__(self, factors, name="separable", contains_fn=None, seed_fn=None):
        factors = [list(row) for row in factors]
        super().__init__(len(factors[0]))
        self.factors = factors
        self.name = name
        self._contains_fn = contains_fn
        self._seed_fn = seed_fn

    def newton_seed(self, xt):
        if self._seed_fn is None:
            return super().newton_seed(xt)
        return np.asarray(self._seed_fn(np.asarray(xt, dtype=float)), dtype=float)

    def contains(self, x):
        x = np.asarray(x, dtype=float)
        ok = super().contains(x)
        if self._contains_fn is not None:
            ok = ok & np.asarray(self._contains_fn(x), dtype=bool)
        return ok

    def _component(self, mu, orders, x):
        out = np.ones(x.shape[:-1])
        for nu, kind in enumerate(self.factors[mu]):
            out = out * _factor_derivative(kind, orders[nu], x[..., nu])
        return out

    def _jet(self, x, k):
        x = np.asarray(x, dtype=float)
        n = self.dim
        out = np.zeros(x.shape[:-1] + (len(self.factors),) + (n,) * k)
        for mu in range(len(self.factors)):
            for idx in itertools.product(range(n), repeat=k):
                orders = np.bincount(np.array(idx, dtype=int), minlength=n) if k else np.zeros(n, int)
                out[(Ellipsis, mu) + idx] = self._component(mu, orders, x)
        return out

    def forward(self, x):
        return self._jet(x, 0)

    def jet1(self, x):
        return self._jet(x, 1)

    def jet2(self, x):
        return self._jet(x, 2)

    def jet3(self, x):
        return self._jet(x, 3)


def _positive_radius(x):
    return x[..., 0] > 1e-6


def cartesian_from_polar() -> SeparableMap:
    """``(r, theta) -> (r cos theta, r sin theta)``.

    Inversion is seeded with the principal branch, so ``backward`` returns
    ``theta`` in ``(-pi, pi]`` and ``r > 0``.
    """
    return SeparableMap([["id", "cos"], ["id", "sin"]], name="cartesian_from_polar",
                        contains_fn=_positive_radius, seed_fn=lambda xt: _polar_forward(xt))


def _polar_forward(x):
    return np.stack([np.hypot(x[..., 0], x[..., 1]), np.arctan2(x[..., 1], x[..., 0])], axis=-1)


def polar_map() -> InverseMap:
    """Cartesian ``(x, y) -> (r, theta)``, the chart change of the paper's §3.1 example."""
    return InverseMap(cartesian_from_polar(), forward_fn=_polar_forward, name="polar",
                      contains_fn=lambda x: np.hypot(x[..., 0], x[..., 1]) > 1e-6)


def cartesian_from_spherical() -> SeparableMap:
    """``(r, phi, theta) -> (r sin phi cos theta, r sin phi sin theta, r cos phi)``."""
    return SeparableMap([["id", "sin", "cos"], ["id", "sin", "sin"], ["id", "cos", "one"]],
                        name="cartesian_from_spherical",
                        contains_fn=lambda x: (x[..., 0] > 1e-6) & (np.abs(np.sin(x[..., 1])) > 1e-6),
                        seed_fn=lambda xt: _spherical_forward(xt))


def _spherical_forward(x):
    r = np.linalg.norm(x, axis=-1)
    return np.stack([r, np.arccos(np.clip(x[..., 2] / r, -1.0, 1.0)),
                     np.arctan2(x[..., 1], x[..., 0])], axis=-1)


def spherical_map() -> InverseMap:
    """Cartesian ``(x, y, z) -> (r, phi, theta)`` matching ``euclidean_spherical3``."""
    return InverseMap(cartesian_from_spherical(), forward_fn=_spherical_forward, name="spherical",
                      contains_fn=lambda x: np.hypot(x[..., 0], x[..., 1]) > 1e-6)


# -------------------------------------------------------------- polynomial

class PolynomialMap(ChartMap):
    """``x~^mu = sum of coeff * prod x^exponents`` over the supplied terms.

    Each term is ``{"mu": int, "exponents": [...], "coeff": float}``; jets
    come from differentiating the monomials exactly.
    """

    name = "polynomial"

    def __init__(self, dim: int, terms):
        super().__init__(dim)
        self.terms = []
        for t in terms:
            exps = np.array([int(e) for e in t["exponents"]])
            mu = int(t["mu"])
            if exps.shape != (dim,) or np.any(exps < 0) or not 0 <= mu < dim:
                raise ValueError(f"malformed polynomial map term: {t}")
            self.terms.append((mu, exps, float(t["coeff"])))

    def _jet(self, x, k):
        x = np.asarray(x, dtype=float)
        n = self.dim
        out = np.zeros(x.shape[:-1] + (n,) + (n,) * k)
        for idx in itertools.product(range(n), repeat=k):
            orders = np.bincount(np.array(idx, dtype=int), minlength=n) if k else np.zeros(n, int)
            for mu, exps, c in self.terms:
                if np.any(orders > exps):
                    continue
                coef = c
                for e, o in zip(exps, orders):
                    for j in range(o):
                        coef *= e - j
                out[(Ellipsis, mu) + idx] += coef * np.prod(x ** (exps - orders), axis=-1)
        return out

    def forward(self, x):
        return self._jet(x, 0)

    def jet1(self, x):
        return self._jet(x, 1)

    def jet2(self, x):
        return self._jet(x, 2)

    def jet3(self, x):
        return self._jet(x, 3)


def map_from_spec(spec, dim: Optional[int] = None) -> ChartMap:
    """Build a map from its JSON description (see the README for the kinds)."""
    if not isinstance(spec, dict) or "kind" not in spec:
        raise ValueError(f"map spec must be an object with a 'kind': {spec!r}")
    kind = spec["kind"]
    if kind == "affine":
        return AffineMap(spec["Lambda"], spec.get("C"))
    if kind == "cubic_counterexample":
        return CubicCounterexampleMap(int(spec.get("n", dim or 3)))
    if kind == "polynomial":
        return PolynomialMap(int(spec.get("dim", dim or 0)), spec.get("terms", []))
    if kind == "polar":
        return polar_map()
    if kind == "cartesian_from_polar":
        return cartesian_from_polar()
    if kind == "spherical":
        return spherical_map()
    if kind == "cartesian_from_spherical":
        return cartesian_from_spherical()
    if kind == "identity":
        return IdentityMap(int(spec.get("n", dim or 2)))
    raise ValueError(f"unknown map kind {kind!r}")


# ------------------------------------------------------------ connections

def pull_connection(chart: ConnectionChart, m: ChartMap) -> ConnectionChart:
    """The connection of ``chart`` expressed in the coordinates ``x~ = m(x)``.

    ``G~(x~) = (J G(x) - H)(J^{-1}, J^{-1})`` at ``x = m.backward(x~)``, which
    is Eq. gammaSymbTrans solved for ``G~``.  Its derivative is left to
    fourth-order finite differences with step 1e-4.
    """
    if m.dim != chart.dim:
        raise ValueError("map and chart dimensions differ")

    def gamma(xt):
        x = m.backward(xt)
        J, H = m.jet1(x), m.jet2(x)
        P = _invert(J)
        G = chart.christoffel(x)
        A = np.einsum("...la,...anm->...lnm", J, G) - H
        Gt = np.einsum("...lnm,...na,...mb->...lab", A, P, P)
        return 0.5 * (Gt + np.swapaxes(Gt, -1, -2))

    def domain(xt):
        xt = np.asarray(xt, dtype=float)
        try:
            x = m.backward(xt)
        except (InversionFailure, SingularJacobian):
            return np.zeros(xt.shape[:-1], dtype=bool)
        return chart.contains(x) & m.contains(x)

    flat = chart.flat and isinstance(m, (AffineMap, IdentityMap))
    return ConnectionChart(dim=chart.dim, gamma=gamma, domain_check=domain,
                           name=f"{chart.name}|{m.name}", flat=flat, fd_step=PULL_FD_STEP)


# ----------------------------------------------------------- pushforwards

def push_geodesic(path: GeodesicPath, m: ChartMap,
                  target: Optional[ConnectionChart] = None) -> GeodesicPath:
    """Image of a geodesic node by node: ``X~ = m(X)``, ``X~' = J X'``,
    ``X~'' = J X'' + H(X', X')``."""
    target = pull_connection(path.chart, m) if target is None else target
    n = path.n
    t = path.trajectory
    X, V, A = t.y[:, :n], t.y[:, n:], t.f[:, n:]
    if not np.all(m.contains(X)):
        raise DomainEscape(f"geodesic leaves the domain of map {m.name!r}")
    J, H = m.jet1(X), m.jet2(X)
    Vt = np.einsum("kab,kb->ka", J, V)
    At = np.einsum("kab,kb->ka", J, A) + np.einsum("kabc,kb,kc->ka", H, V, V)
    traj = Trajectory(t.s, np.concatenate([m.forward(X), Vt], -1), np.concatenate([Vt, At], -1))
    return GeodesicPath(target, traj, path.s_init)


def _base_nodes(base: GeodesicPath, s):
    return base.position(s), base.velocity(s), base.acceleration(s)


def push_tensorial(dev: DeviationPath, m: ChartMap, base: Optional[GeodesicPath] = None,
                   target: Optional[ConnectionChart] = None) -> DeviationPath:
    """Tensorial rule ``xi~ = J(X) xi`` with its s-derivatives by the product rule."""
    base = dev.base if base is None else base
    s = dev.s
    X, V, A = _base_nodes(base, s)
    if not np.all(m.contains(X)):
        raise DomainEscape(f"base geodesic leaves the domain of map {m.name!r}")
    xi, xid, xidd = dev.node_values()
    J, H, K = m.jet1(X), m.jet2(X), m.jet3(X)
    xi_t = np.einsum("kab,kb->ka", J, xi)
    xid_t = np.einsum("kab,kb->ka", J, xid) + np.einsum("kabc,kb,kc->ka", H, V, xi)
    xidd_t = (np.einsum("kab,kb->ka", J, xidd)
              + 2.0 * np.einsum("kabc,kb,kc->ka", H, V, xid)
              + np.einsum("kabc,kb,kc->ka", H, A, xi)
              + np.einsum("kabcd,kb,kc,kd->ka", K, V, V, xi))
    new_base = push_geodesic(base, m, target)
    traj = Trajectory(s, np.concatenate([xi_t, xid_t], -1), np.concatenate([xid_t, xidd_t], -1))
    return DeviationPath(new_base, traj, dev.kind)


def push_exact(dev: DeviationPath, m: ChartMap, X: Optional[GeodesicPath] = None,
               Xt: Optional[GeodesicPath] = None,
               target: Optional[ConnectionChart] = None) -> DeviationPath:
    """Eq. nonLinearTransForEGDE: ``xi~ = m(X + xi) - X~`` with chain-rule derivatives."""
    X = dev.base if X is None else X
    Xt = push_geodesic(X, m, target) if Xt is None else Xt
    s = dev.s
    Xs, V, A = _base_nodes(X, s)
    xi, xid, xidd = dev.node_values()
    x, xd, xdd = Xs + xi, V + xid, A + xidd
    if not np.all(m.contains(x)):
        raise DomainEscape(f"X + xi leaves the domain of map {m.name!r}")
    J, H = m.jet1(x), m.jet2(x)
    xt = m.forward(x)
    xtd = np.einsum("kab,kb->ka", J, xd)
    xtdd = np.einsum("kab,kb->ka", J, xdd) + np.einsum("kabc,kb,kc->ka", H, xd, xd)
    Yt, Vt, At = _base_nodes(Xt, s)
    traj = Trajectory(s, np.concatenate([xt - Yt, xtd - Vt], -1),
                      np.concatenate([xtd - Vt, xtdd - At], -1))
    return DeviationPath(Xt, traj, dev.kind)


# ------------------------------------------------------------- Appendix A

def appendix_identities(chart: ConnectionChart, m: ChartMap, X: GeodesicPath, s0: float,
                        xi, xidot, target: Optional[ConnectionChart] = None,
                        hessian_tol: float = 1e-10) -> ResidualReport:
    """Residuals of Eqs. transC_2, transC_3, transC_4 at ``X(s0)``.

    Valid only where the Hessian of ``m`` vanishes; the third-derivative term
    of transC_4 is reported separately in ``extras``.
    """
    p = np.asarray(X.position(s0), dtype=float)
    V = np.asarray(X.velocity(s0), dtype=float)
    xi = np.asarray(xi, dtype=float)
    xidot = np.asarray(xidot, dtype=float)
    H = m.jet2(p)
    if np.max(np.abs(H)) > hessian_tol:
        raise HessianNotZero(f"{m.name}: |d2x~/dx2| = {np.max(np.abs(H)):.3e} at X(s0)")
    target = pull_connection(chart, m) if target is None else target
    J, K = m.jet1(p), m.jet3(p)
    P = _invert(J)
    pt = m.forward(p)
    G, dG = chart.christoffel(p), chart.christoffel_derivative(p)
    Gt, dGt = target.christoffel(pt), target.christoffel_derivative(pt)

    xid_t = J @ xidot + np.einsum("abc,b,c->a", H, V, xi)
    velocity = xidot - P @ xid_t
    connection = (np.einsum("ms,srn->mrn", J, G)
                  - np.einsum("msl,sr,ln->mrn", Gt, J, J))
    lhs = np.einsum("ms,snrl->mnrl", J, dG)
    pulled = np.einsum("mesd,dl,sn,er->mnrl", dGt, J, J, J)
    derivative = lhs - pulled - K
    named = {"velocity_rule": velocity, "connection_rule": connection,
             "connection_derivative_rule": derivative}
    values = np.concatenate([v.ravel() for v in named.values()])[None, :]
    extras = {k: float(np.max(np.abs(v))) for k, v in named.items()}
    extras["third_derivative_term"] = float(np.max(np.abs(K)))
    extras["pulled_dgamma_sup"] = float(np.max(np.abs(pulled)))
    return ResidualReport("appendix_identities", np.array([float(s0)]), values, extras)


def connection_from_parameterization(chart: ConnectionChart, param: ChartMap,
                                     fd_step: Optional[float] = PULL_FD_STEP,
                                     domain_check=None, name: Optional[str] = None) -> ConnectionChart:
    """Connection in coordinates ``y``, where ``param`` maps ``y`` to ``chart``'s coordinates.

    This is Eq. gammaSymbTrans for the inverse direction,
    ``G~ = J^{-1} (G(x)(J, J) + H)`` with ``J, H`` the jets of ``param``; it
    needs no inversion, which matters when ``param`` is expensive to invert.
    """
    if param.dim != chart.dim:
        raise ValueError("parameterization and chart dimensions differ")

    def gamma(y):
        x = param.forward(y)
        J, H = param.jet1(y), param.jet2(y)
        P = _invert(J)
        G = chart.christoffel(x)
        A = np.einsum("...mns,...na,...sb->...mab", G, J, J) + H
        Gt = np.einsum("...lm,...mab->...lab", P, A)
        return 0.5 * (Gt + np.swapaxes(Gt, -1, -2))

    return ConnectionChart(dim=chart.dim, gamma=gamma, domain_check=domain_check,
                           name=name or f"{chart.name}<-{param.name}", fd_step=fd_step)
