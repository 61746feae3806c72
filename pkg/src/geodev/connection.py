"""Charts carrying affine torsion-free connections.

Index convention: ``gamma(x)[mu, nu, sigma]`` is the connection coefficient
with upper index ``mu``; ``dgamma(x)[mu, nu, sigma, tau]`` is its partial
derivative with respect to ``x^tau``.  All builtin evaluators accept points of
shape ``(n,)`` or batches of shape ``(..., n)``.

The curvature convention is

    R[mu, nu, rho, sigma] = d_rho G^mu_{sigma nu} - d_sigma G^mu_{rho nu}
                            + G^mu_{rho lam} G^lam_{sigma nu}
                            - G^mu_{sigma lam} G^lam_{rho nu},

and ``R(xi, V) V`` has components ``R[mu, nu, rho, sigma] V^nu xi^rho V^sigma``.
With this choice the covariant Jacobi equation ``D^2 xi + R(xi, V) V = 0`` is
term-by-term the coordinate Jacobi operator along a geodesic.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .errors import DomainEscape, SingularMetric, UnknownGeometry

# 4th-order central first-derivative stencil: offsets and weights (divide by h).
FD_OFFSETS = np.array([-2.0, -1.0, 1.0, 2.0])
FD_WEIGHTS = np.array([1.0, -8.0, 8.0, -1.0]) / 12.0

_SING_EPS = 1e-6


def _batched(fn, vectorized, x, tail_shape):
    x = np.asarray(x, dtype=float)
    if vectorized or x.ndim == 1:
        return np.asarray(fn(x), dtype=float)
    flat = x.reshape(-1, x.shape[-1])
    out = np.stack([np.asarray(fn(p), dtype=float) for p in flat])
    return out.reshape(x.shape[:-1] + tail_shape)


@dataclass(frozen=True)
class ConnectionChart:
    """A chart of dimension ``dim`` with connection coefficient evaluators.

    ``dgamma`` may be omitted, in which case derivatives come from
    :func:`dgamma_fd`, using ``fd_step`` when set.  ``flat`` marks charts
    whose coefficients vanish identically; it enables closed-form shortcuts
    (straight-line exponential map) but never changes evaluator output.
    """

    dim: int
    gamma: Callable
    dgamma: Optional[Callable] = None
    domain_check: Optional[Callable] = None
    name: str = "chart"
    flat: bool = False
    fd_step: Optional[float] = None
    vectorized: bool = True

    def __post_init__(self):
        if self.dim < 2:
            raise ValueError("chart dimension must be >= 2")

    def contains(self, x):
        x = np.asarray(x, dtype=float)
        if self.domain_check is None:
            return np.ones(x.shape[:-1], dtype=bool)
        finite = np.all(np.isfinite(x), axis=-1)
        with np.errstate(invalid="ignore", divide="ignore", over="ignore"):
            if self.vectorized or x.ndim == 1:
                return np.asarray(self.domain_check(x), dtype=bool) & finite
            flat = x.reshape(-1, x.shape[-1])
            ok = np.array([bool(self.domain_check(p)) for p in flat]).reshape(x.shape[:-1])
        return ok & finite

    def require(self, x):
        if not np.all(self.contains(x)):
            raise DomainEscape(f"point outside the domain of chart {self.name!r}")

    def christoffel(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        self.require(x)
        n = self.dim
        return _batched(self.gamma, self.vectorized, x, (n, n, n))

    def christoffel_derivative(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if self.dgamma is None:
            return dgamma_fd(self, x, self.fd_step)
        self.require(x)
        n = self.dim
        return _batched(self.dgamma, self.vectorized, x, (n, n, n, n))


@dataclass(frozen=True)
class MetricChart:
    """A chart with a (pseudo-)Riemannian metric ``g(x)[mu, nu]``.

    ``dg(x)[mu, nu, tau]`` optionally supplies the analytic derivative of the
    metric with respect to ``x^tau``.
    """

    dim: int
    g: Callable
    signature: Sequence[int] = ()
    dg: Optional[Callable] = None
    domain_check: Optional[Callable] = None
    name: str = "metric"


def _default_step(x):
    return np.maximum(1e-3, 1e-3 * np.abs(x))


def dgamma_fd(chart: ConnectionChart, x, h=None) -> np.ndarray:
    """Fourth-order central differences of ``chart.gamma``.

    ``h`` is a scalar or per-coordinate step; by default
    ``max(1e-3, 1e-3 * |x_tau|)``.  Raises :class:`DomainEscape` if any stencil
    point falls outside the chart.
    """
    x = np.asarray(x, dtype=float)
    n = chart.dim
    steps = _default_step(x) if h is None else np.broadcast_to(np.asarray(h, float), x.shape)
    pts = []
    for tau in range(n):
        for off in FD_OFFSETS:
            p = x.copy()
            p[..., tau] = p[..., tau] + off * steps[..., tau]
            pts.append(p)
    g = chart.christoffel(np.stack(pts))
    g = g.reshape((n, len(FD_OFFSETS)) + g.shape[1:])
    d = np.tensordot(FD_WEIGHTS, g, axes=([0], [1]))  # (tau, ..., n, n, n)
    d = d / np.moveaxis(steps, -1, 0)[..., None, None, None]
    return np.moveaxis(d, 0, -1)


def _metric_derivative_fd(metric: MetricChart, x, h):
    n = metric.dim
    out = np.zeros(x.shape[:-1] + (n, n, n))
    for tau in range(n):
        e = np.zeros(n)
        e[tau] = h
        acc = 0.0
        for off, wt in zip(FD_OFFSETS, FD_WEIGHTS):
            acc = acc + wt * np.asarray(metric.g(x + off * e), dtype=float)
        out[..., tau] = acc / h
    return out


def from_metric(metric: MetricChart, h: float = 1e-3) -> ConnectionChart:
    """Levi-Civita connection of ``metric``.

    Metric derivatives use ``metric.dg`` when given, otherwise 4th-order
    central differences with step ``h``.
    """
    n = metric.dim

    def gamma(x):
        x = np.asarray(x, dtype=float)
        g = np.asarray(metric.g(x), dtype=float)
        det = np.linalg.det(g)
        if np.any(~np.isfinite(det)) or np.any(np.abs(det) < 1e-300) or np.any(np.linalg.cond(g) > 1e14):
            raise SingularMetric(f"metric {metric.name!r} is not invertible at {x}")
        ginv = np.linalg.inv(g)
        dg = metric.dg(x) if metric.dg is not None else _metric_derivative_fd(metric, x, h)
        # dg[..., l, s, nu] = d_nu g_{l s}
        lower = (np.swapaxes(dg, -1, -2)                      # d_nu g_{l s} -> [l, nu, s]
                 + dg                                          # d_s g_{l nu} -> [l, nu, s]
                 - np.moveaxis(dg, -1, -3))                    # d_l g_{nu s} -> [l, nu, s]
        gam = 0.5 * np.einsum("...ml,...lns->...mns", ginv, lower)
        return 0.5 * (gam + np.swapaxes(gam, -1, -2))

    return ConnectionChart(dim=n, gamma=gamma, domain_check=metric.domain_check,
                           name=f"levi_civita({metric.name})")


def curvature(chart: ConnectionChart, x) -> np.ndarray:
    """Riemann tensor ``R[mu, nu, rho, sigma]`` (see module docstring)."""
    G = chart.christoffel(x)
    dG = chart.christoffel_derivative(x)
    d_rho = np.einsum("...msnr->...mnrs", dG)
    d_sigma = np.einsum("...mrns->...mnrs", dG)
    quad = np.einsum("...mrl,...lsn->...mnrs", G, G)
    return d_rho - d_sigma + quad - np.swapaxes(quad, -1, -2)


# ---------------------------------------------------------------- catalog

def flat_cartesian(n: int = 2) -> ConnectionChart:
    def gamma(x):
        x = np.asarray(x)
        return np.zeros(x.shape[:-1] + (n, n, n))

    def dgamma(x):
        x = np.asarray(x)
        return np.zeros(x.shape[:-1] + (n, n, n, n))

    return ConnectionChart(dim=n, gamma=gamma, dgamma=dgamma, name=f"flat_cartesian({n})", flat=True)


def _polar_domain(x):
    return x[..., 0] > _SING_EPS


def euclidean_polar() -> ConnectionChart:
    """Euclidean plane in polar coordinates ``(r, theta)``."""

    def gamma(x):
        x = np.asarray(x, dtype=float)
        r = x[..., 0]
        G = np.zeros(x.shape[:-1] + (2, 2, 2))
        G[..., 0, 1, 1] = -r
        G[..., 1, 0, 1] = G[..., 1, 1, 0] = 1.0 / r
        return G

    def dgamma(x):
        x = np.asarray(x, dtype=float)
        r = x[..., 0]
        D = np.zeros(x.shape[:-1] + (2, 2, 2, 2))
        D[..., 0, 1, 1, 0] = -1.0
        D[..., 1, 0, 1, 0] = D[..., 1, 1, 0, 0] = -1.0 / r**2
        return D

    return ConnectionChart(dim=2, gamma=gamma, dgamma=dgamma, domain_check=_polar_domain,
                           name="euclidean_polar")


def euclidean_spherical3() -> ConnectionChart:
    """Euclidean 3-space in ``(r, phi, theta)``, phi the polar angle."""

    def gamma(x):
        x = np.asarray(x, dtype=float)
        r, p = x[..., 0], x[..., 1]
        sp, cp = np.sin(p), np.cos(p)
        G = np.zeros(x.shape[:-1] + (3, 3, 3))
        G[..., 0, 1, 1] = -r
        G[..., 0, 2, 2] = -r * sp**2
        G[..., 1, 0, 1] = G[..., 1, 1, 0] = 1.0 / r
        G[..., 1, 2, 2] = -sp * cp
        G[..., 2, 0, 2] = G[..., 2, 2, 0] = 1.0 / r
        G[..., 2, 1, 2] = G[..., 2, 2, 1] = cp / sp
        return G

    def dgamma(x):
        x = np.asarray(x, dtype=float)
        r, p = x[..., 0], x[..., 1]
        sp = np.sin(p)
        D = np.zeros(x.shape[:-1] + (3, 3, 3, 3))
        D[..., 0, 1, 1, 0] = -1.0
        D[..., 0, 2, 2, 0] = -sp**2
        D[..., 1, 0, 1, 0] = D[..., 1, 1, 0, 0] = -1.0 / r**2
        D[..., 2, 0, 2, 0] = D[..., 2, 2, 0, 0] = -1.0 / r**2
        D[..., 0, 2, 2, 1] = -r * np.sin(2 * p)
        D[..., 1, 2, 2, 1] = -np.cos(2 * p)
        D[..., 2, 1, 2, 1] = D[..., 2, 2, 1, 1] = -1.0 / sp**2
        return D

    def domain(x):
        return (x[..., 0] > _SING_EPS) & (np.abs(np.sin(x[..., 1])) > _SING_EPS)

    return ConnectionChart(dim=3, gamma=gamma, dgamma=dgamma, domain_check=domain,
                           name="euclidean_spherical3")


def sphere2() -> ConnectionChart:
    """Round unit 2-sphere in ``(phi, theta)``, phi the polar angle."""

    def gamma(x):
        x = np.asarray(x, dtype=float)
        p = x[..., 0]
        G = np.zeros(x.shape[:-1] + (2, 2, 2))
        G[..., 0, 1, 1] = -np.sin(p) * np.cos(p)
        G[..., 1, 0, 1] = G[..., 1, 1, 0] = np.cos(p) / np.sin(p)
        return G

    def dgamma(x):
        x = np.asarray(x, dtype=float)
        p = x[..., 0]
        D = np.zeros(x.shape[:-1] + (2, 2, 2, 2))
        D[..., 0, 1, 1, 0] = -np.cos(2 * p)
        D[..., 1, 0, 1, 0] = D[..., 1, 1, 0, 0] = -1.0 / np.sin(p) ** 2
        return D

    def domain(x):
        return np.abs(np.sin(x[..., 0])) > _SING_EPS

    return ConnectionChart(dim=2, gamma=gamma, dgamma=dgamma, domain_check=domain, name="sphere2")


def sphere3() -> ConnectionChart:
    """Round unit 3-sphere in hyperspherical ``(chi, phi, theta)``."""

    def gamma(x):
        x = np.asarray(x, dtype=float)
        c, p = x[..., 0], x[..., 1]
        sc, cc, sp, cp = np.sin(c), np.cos(c), np.sin(p), np.cos(p)
        G = np.zeros(x.shape[:-1] + (3, 3, 3))
        G[..., 0, 1, 1] = -sc * cc
        G[..., 0, 2, 2] = -sc * cc * sp**2
        G[..., 1, 0, 1] = G[..., 1, 1, 0] = cc / sc
        G[..., 1, 2, 2] = -sp * cp
        G[..., 2, 0, 2] = G[..., 2, 2, 0] = cc / sc
        G[..., 2, 1, 2] = G[..., 2, 2, 1] = cp / sp
        return G

    def dgamma(x):
        x = np.asarray(x, dtype=float)
        c, p = x[..., 0], x[..., 1]
        sc, cc, sp = np.sin(c), np.cos(c), np.sin(p)
        D = np.zeros(x.shape[:-1] + (3, 3, 3, 3))
        D[..., 0, 1, 1, 0] = -np.cos(2 * c)
        D[..., 0, 2, 2, 0] = -np.cos(2 * c) * sp**2
        D[..., 1, 0, 1, 0] = D[..., 1, 1, 0, 0] = -1.0 / sc**2
        D[..., 2, 0, 2, 0] = D[..., 2, 2, 0, 0] = -1.0 / sc**2
        D[..., 0, 2, 2, 1] = -sc * cc * np.sin(2 * p)
        D[..., 1, 2, 2, 1] = -np.cos(2 * p)
        D[..., 2, 1, 2, 1] = D[..., 2, 2, 1, 1] = -1.0 / sp**2
        return D

    def domain(x):
        return (np.abs(np.sin(x[..., 0])) > _SING_EPS) & (np.abs(np.sin(x[..., 1])) > _SING_EPS)

    return ConnectionChart(dim=3, gamma=gamma, dgamma=dgamma, domain_check=domain, name="sphere3")


def catalog_metric(name: str) -> MetricChart:
    """Metric whose Levi-Civita connection is the catalog chart ``name``."""
    base, n = _parse_name(name)
    if base == "flat_cartesian":
        return MetricChart(n, lambda x: np.broadcast_to(np.eye(n), np.shape(x)[:-1] + (n, n)).copy(),
                           (1,) * n, name=name)
    if base == "euclidean_polar":
        return MetricChart(2, lambda x: _diag(np.stack([np.ones_like(x[..., 0]), x[..., 0] ** 2], -1)),
                           (1, 1), domain_check=_polar_domain, name=name)
    if base == "euclidean_spherical3":
        def g(x):
            r, p = x[..., 0], x[..., 1]
            return _diag(np.stack([np.ones_like(r), r**2, (r * np.sin(p)) ** 2], -1))
        return MetricChart(3, g, (1, 1, 1), name=name,
                           domain_check=lambda x: (x[..., 0] > _SING_EPS) & (np.abs(np.sin(x[..., 1])) > _SING_EPS))
    if base == "sphere2":
        return MetricChart(2, lambda x: _diag(np.stack([np.ones_like(x[..., 0]), np.sin(x[..., 0]) ** 2], -1)),
                           (1, 1), name=name)
    if base == "sphere3":
        def g(x):
            c, p = x[..., 0], x[..., 1]
            s2 = np.sin(c) ** 2
            return _diag(np.stack([np.ones_like(c), s2, s2 * np.sin(p) ** 2], -1))
        return MetricChart(3, g, (1, 1, 1), name=name)
    raise UnknownGeometry(name)


def _diag(d):
    n = d.shape[-1]
    out = np.zeros(d.shape + (n,))
    idx = np.arange(n)
    out[..., idx, idx] = d
    return out


_BUILDERS = {
    "euclidean_polar": euclidean_polar,
    "euclidean_spherical3": euclidean_spherical3,
    "sphere2": sphere2,
    "sphere3": sphere3,
}

CATALOG_NAMES = ("flat_cartesian", *_BUILDERS)


def _parse_name(name: str):
    m = re.fullmatch(r"\s*([a-z_0-9]+?)\s*(?:\(\s*(\d+)\s*\))?\s*", name)
    if not m:
        raise UnknownGeometry(name)
    base, n = m.group(1), m.group(2)
    if base == "flat_cartesian":
        return base, int(n) if n else 2
    if base in _BUILDERS and n is None:
        return base, None
    raise UnknownGeometry(name)


def catalog(name: str) -> ConnectionChart:
    """Builtin chart by name, e.g. ``"sphere2"`` or ``"flat_cartesian(3)"``."""
    base, n = _parse_name(name)
    if base == "flat_cartesian":
        if n < 2:
            raise UnknownGeometry(name)
        return flat_cartesian(n)
    return _BUILDERS[base]()


# ------------------------------------------------------ polynomial charts

@dataclass(frozen=True)
class _Monomial:
    mu: int
    nu: int
    sigma: int
    exponents: tuple
    coeff: float


def polynomial_chart(dim: int, terms, name: str = "polynomial") -> ConnectionChart:
    """Chart whose coefficients are polynomials.

    Each term ``{mu, nu, sigma, exponents, coeff}`` adds
    ``coeff * prod(x**exponents)`` to ``G^mu_{nu sigma}`` and, when
    ``nu != sigma``, to ``G^mu_{sigma nu}`` as well, so the result is
    torsion-free by construction.
    """
    monos = []
    for t in terms:
        exps = tuple(int(e) for e in t["exponents"])
        if len(exps) != dim or min(exps, default=0) < 0:
            raise ValueError(f"term exponents must be {dim} non-negative integers: {t}")
        idx = (int(t["mu"]), int(t["nu"]), int(t["sigma"]))
        if not all(0 <= i < dim for i in idx):
            raise ValueError(f"term index out of range: {t}")
        monos.append(_Monomial(*idx, exps, float(t["coeff"])))

    def _pairs(m):
        return [(m.nu, m.sigma)] if m.nu == m.sigma else [(m.nu, m.sigma), (m.sigma, m.nu)]

    def gamma(x):
        x = np.asarray(x, dtype=float)
        G = np.zeros(x.shape[:-1] + (dim, dim, dim))
        for m in monos:
            val = m.coeff * np.prod(x ** np.array(m.exponents), axis=-1)
            for a, b in _pairs(m):
                G[..., m.mu, a, b] += val
        return G

    def dgamma(x):
        x = np.asarray(x, dtype=float)
        D = np.zeros(x.shape[:-1] + (dim, dim, dim, dim))
        for m in monos:
            for tau in range(dim):
                e = m.exponents[tau]
                if e == 0:
                    continue
                exps = np.array(m.exponents)
                exps[tau] -= 1
                val = m.coeff * e * np.prod(x ** exps, axis=-1)
                for a, b in _pairs(m):
                    D[..., m.mu, a, b, tau] += val
        return D

    return ConnectionChart(dim=dim, gamma=gamma, dgamma=dgamma, name=name,
                           flat=not any(m.coeff for m in monos))


def chart_from_spec(spec) -> ConnectionChart:
    """Catalog name string or ``{"kind": "polynomial", "dim": n, "terms": [...]}``."""
    if isinstance(spec, str):
        return catalog(spec)
    if isinstance(spec, dict):
        kind = spec.get("kind")
        if kind == "polynomial":
            return polynomial_chart(int(spec["dim"]), spec.get("terms", []), spec.get("name", "polynomial"))
        if kind == "catalog":
            return catalog(spec["name"])
    raise UnknownGeometry(str(spec))
