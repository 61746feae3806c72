"""Numerical certificates for Props. 3 and 4 and the §3.1 polar example."""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np

from .chartmap import (AffineMap, CubicCounterexampleMap, cartesian_from_polar, polar_map,
                       pull_connection, push_exact, push_tensorial)
from .connection import ConnectionChart, catalog
from .deviation import (DeviationKind, DeviationPath, deviation_from_samples, deviation_residual,
                        exact_by_difference, integrate_gje, op_G, op_J)
from .errors import NonOrthonormalInput, StepUnderflow
from .geodesic import GeodesicPath, integrate_geodesic, integrate_geodesics
from .integrate import IntegratorOptions

PROP3_THRESHOLD = 1e-7
PROP4_THRESHOLD = 1e-7
PROP4_NONVANISHING = 0.5
PROP4_WINDOW = 0.2
POLAR_THRESHOLD = 1e-8
POLAR_MISMATCH = 0.25
POLAR_S_VALUES = (0.5, 1.0, 2.0, 5.0)
MAX_SPAN_HALVINGS = 5


@dataclass
class Check:
    """A named side condition ``value <= threshold`` (or ``>=`` when ``at_least``)."""

    name: str
    value: float
    threshold: float
    at_least: bool = False

    @property
    def passed(self) -> bool:
        return self.value >= self.threshold if self.at_least else self.value <= self.threshold

    def to_dict(self):
        return {"name": self.name, "value": self.value, "threshold": self.threshold,
                "at_least": self.at_least, "passed": self.passed}


@dataclass
class PropositionVerdict:
    """Outcome of one experiment.

    ``passed`` holds iff the headline residual is within ``threshold`` and
    every side check in ``checks`` passes.
    """

    name: str
    residual_achieved: float
    threshold: float
    checks: list = field(default_factory=list)
    details: dict = field(default_factory=dict)
    artifacts: list = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return bool(self.residual_achieved <= self.threshold and all(c.passed for c in self.checks))

    def to_dict(self) -> dict:
        return {"name": self.name, "residual_achieved": self.residual_achieved,
                "threshold": self.threshold, "passed": self.passed,
                "checks": [c.to_dict() for c in self.checks], "details": self.details,
                "artifacts": list(self.artifacts)}


# ------------------------------------------------------------------ Prop. 3

def random_affine_map(n: int, rng: np.random.Generator, max_cond: float = 10.0) -> AffineMap:
    """``Q1 diag(sigma) Q2 x + C`` with singular values in ``[1, max_cond]``."""
    q1, _ = np.linalg.qr(rng.normal(size=(n, n)))
    q2, _ = np.linalg.qr(rng.normal(size=(n, n)))
    sigma = np.exp(rng.uniform(0.0, np.log(max_cond), n))
    sigma[0], sigma[-1] = 1.0, max(sigma[-1], 1.0)
    return AffineMap(q1 @ np.diag(sigma) @ q2, rng.normal(size=n))


def _restrict_base(base: GeodesicPath, span, opts) -> GeodesicPath:
    x0, v0 = base.initial_state
    return integrate_geodesic(base.chart, x0, v0, span, opts, s_init=base.s_init)


def integrate_gje_shrinking(chart: ConnectionChart, X: GeodesicPath, xi0, xidot0,
                            opts: IntegratorOptions = IntegratorOptions()):
    """GJE solution, halving the span (towards ``X.s_init``) on blow-up, at most 5 times.

    Returns ``(path, halvings)``.
    """
    base = X
    for halvings in range(MAX_SPAN_HALVINGS + 1):
        try:
            return integrate_gje(chart, base, xi0, xidot0, opts), halvings
        except StepUnderflow:
            if halvings == MAX_SPAN_HALVINGS:
                raise
            a, b = base.s_span
            c = base.s_init
            base = _restrict_base(base, (c - 0.5 * (c - a), c + 0.5 * (b - c)), opts)
    raise AssertionError("unreachable")


def verify_prop3(chart: ConnectionChart, X: GeodesicPath, xi0, xidot0, m: AffineMap,
                 samples: Optional[int] = None, opts: IntegratorOptions = IntegratorOptions(),
                 dev: Optional[DeviationPath] = None, dev_halved: Optional[DeviationPath] = None,
                 check_halving: bool = True) -> PropositionVerdict:
    """Prop. 3: an affine map carries GJE solutions to GJE solutions.

    The GJE is integrated in ``chart``, pushed tensorially through ``m`` and
    the generalized Jacobi operator is evaluated in the pulled chart.  The
    same is repeated with halved step limits; the residual must not grow by
    more than 2x, showing it is discretization noise rather than a
    structural term.  ``dev``/``dev_halved`` let sweeps reuse integrations.
    """
    halvings = 0
    if dev is None:
        dev, halvings = integrate_gje_shrinking(chart, X, xi0, xidot0, opts)
    target = pull_connection(chart, m)
    original = deviation_residual(dev, samples, operator="gje").sup
    pushed = push_tensorial(dev, m, target=target)
    res = deviation_residual(pushed, samples, operator="gje").sup
    checks = []
    details = {"chart": chart.name, "map_cond": float(np.linalg.cond(m.Lambda)),
               "original_residual": original, "span": list(dev.base.s_span),
               "span_halvings": halvings, "nodes": len(dev.s)}
    if check_halving:
        if dev_halved is None:
            base_h = _restrict_base(dev.base, dev.base.s_span, opts.halved())
            dev_halved = integrate_gje(chart, base_h, dev.xi(dev.base.s_init),
                                       dev.xidot(dev.base.s_init), opts.halved())
        res_h = deviation_residual(push_tensorial(dev_halved, m, target=target), samples,
                                   operator="gje").sup
        details["halved_residual"] = res_h
        checks.append(Check("halved_step_ratio", res_h / max(res, 1e-300), 2.0))
    return PropositionVerdict("prop3", res, PROP3_THRESHOLD, checks, details)


PROP3_SCENARIOS = {
    "sphere2": dict(x0=[np.pi / 2, 0.0], v0=[0.0, 1.0], span=(0.0, np.pi),
                    xi0=[0.0, 0.0], xidot0=[0.3, 0.4]),
    "euclidean_polar": dict(x0=[float(np.hypot(0.5, 1.0)), float(np.arctan2(1.0, 0.5))],
                            v0=[0.5 / float(np.hypot(0.5, 1.0)), -1.0 / 1.25],
                            span=(0.0, 3.0), xi0=[0.05, 0.02], xidot0=[0.3, -0.1]),
    "flat_cartesian(2)": dict(x0=[0.0, 0.0], v0=[1.0, 0.5], span=(0.0, 2.0),
                              xi0=[0.1, -0.2], xidot0=[0.5, 0.7]),
}


def prop3_sweep(chart_name: str, maps: int = 20, seed: int = 0,
                opts: IntegratorOptions = IntegratorOptions(), samples: Optional[int] = None) -> list:
    """Prop. 3 on a builtin scenario with ``maps`` random affine maps (cond <= 10)."""
    sc = PROP3_SCENARIOS[chart_name]
    chart = catalog(chart_name)
    X = integrate_geodesic(chart, sc["x0"], sc["v0"], sc["span"], opts)
    dev, _ = integrate_gje_shrinking(chart, X, sc["xi0"], sc["xidot0"], opts)
    base_h = _restrict_base(dev.base, dev.base.s_span, opts.halved())
    dev_h = integrate_gje(chart, base_h, sc["xi0"], sc["xidot0"], opts.halved())
    rng = np.random.default_rng(seed)
    out = []
    for i in range(maps):
        m = random_affine_map(chart.dim, rng)
        v = verify_prop3(chart, X, sc["xi0"], sc["xidot0"], m, samples, opts, dev=dev, dev_halved=dev_h)
        v.details.update(seed=seed, map_index=i, Lambda=m.Lambda.tolist(), C=m.C.tolist())
        out.append(v)
    return out


# ------------------------------------------------------------------ Prop. 4

def random_orthonormal_triple(n: int, seed: int):
    """Gram-Schmidt (QR) of three Gaussian vectors drawn from ``seed``."""
    rng = np.random.default_rng(seed)
    q, r = np.linalg.qr(rng.normal(size=(n, 3)))
    q = q * np.sign(np.diag(r))
    return q[:, 0], q[:, 1], q[:, 2]


def prop4_formula(u, v, w):
    """The proof's closed form ``-g(2u+w, w) v - g(v, w)(2u+w) - g(v, 2u+w) w``."""
    a = 2 * u + w
    return -(a @ w) * v - (v @ w) * a - (v @ a) * w


@dataclass
class Prop4Result:
    verdict: PropositionVerdict
    G_at_s0: np.ndarray
    J_at_s0: np.ndarray
    formula: np.ndarray

    def to_dict(self):
        d = self.verdict.to_dict()
        d.update(G_at_s0=self.G_at_s0.tolist(), J_at_s0=self.J_at_s0.tolist(),
                 formula=self.formula.tolist())
        return d


def verify_prop4(n: int = 3, u=None, v=None, w=None, seed: Optional[int] = None,
                 window: float = PROP4_WINDOW, steps: int = 80) -> Prop4Result:
    """Prop. 4: the cubic map breaks the tensorial rule for GJE solutions.

    Flat ``R^n``, ``X(s) = s u`` through ``p = 0`` at ``s0 = 0``, and the GJE
    solution ``xi = v + s w`` (closed form; ``xi'' = 0`` since ``G = 0``),
    with ``{u, v, w}`` orthonormal.  Defaults to the first three standard
    basis vectors, or a random triple when ``seed`` is given.
    """
    if n < 3:
        raise ValueError("Prop. 4 needs n >= 3")
    if u is None and v is None and w is None:
        if seed is None:
            e = np.eye(n)
            u, v, w = e[0], e[1], e[2]
        else:
            u, v, w = random_orthonormal_triple(n, seed)
    elif u is None or v is None or w is None:
        raise NonOrthonormalInput("give all three of u, v, w or none")
    u, v, w = (np.asarray(a, dtype=float) for a in (u, v, w))
    if any(a.shape != (n,) for a in (u, v, w)):
        raise NonOrthonormalInput(f"u, v, w must be {n}-vectors")
    gram = np.array([[a @ b for b in (u, v, w)] for a in (u, v, w)])
    if np.max(np.abs(gram - np.eye(3))) > 1e-10:
        raise NonOrthonormalInput("u, v, w are not orthonormal for the Euclidean metric")

    chart = catalog(f"flat_cartesian({n})")
    opts = IntegratorOptions(method="rk4", steps=steps)
    X = integrate_geodesic(chart, np.zeros(n), u, (-window, window), opts, s_init=0.0)
    s = X.s
    xi = v + s[:, None] * w
    closed = deviation_from_samples(X, s, xi, np.broadcast_to(w, xi.shape), np.zeros_like(xi),
                                    DeviationKind.GJE)
    numeric = integrate_gje(chart, X, v, w, opts)
    cross = float(np.max(np.abs(numeric.xi(s) - xi)))

    cubic = CubicCounterexampleMap(n)
    target = pull_connection(chart, cubic)
    pushed = push_tensorial(closed, cubic, target=target)
    args = (pushed.xi(0.0), pushed.xidot(0.0), pushed.xiddot(0.0), 0.0)
    G0 = op_G(target, pushed.base, *args)
    J0 = op_J(target, pushed.base, *args)
    formula = prop4_formula(u, v, w)
    window_G = deviation_residual(pushed, operator="gje", s=s)
    sup_G = float(np.max(np.linalg.norm(window_G.values, axis=-1)))
    err = float(np.linalg.norm(G0 + v))
    checks = [Check("formula_agreement", float(np.linalg.norm(G0 - formula)), PROP4_THRESHOLD),
              Check("window_sup_G", sup_G, PROP4_NONVANISHING, at_least=True),
              Check("jacobi_at_s0", float(np.linalg.norm(J0)), 1e-9),
              Check("numeric_gje_cross_check", cross, 1e-10)]
    details = {"n": n, "seed": seed, "u": u.tolist(), "v": v.tolist(), "w": w.tolist(),
               "window": [-window, window], "delta_at_s0": (G0 - J0).tolist()}
    verdict = PropositionVerdict("prop4", err, PROP4_THRESHOLD, checks, details)
    return Prop4Result(verdict, G0, J0, formula)


# --------------------------------------------------------- §3.1 polar example

def polar_closed_form(s):
    s = np.asarray(s, dtype=float)
    return np.stack([np.sqrt(1 + s ** 2) - s, np.arctan(1 / s)], axis=-1)


def run_polar_example(s_values=POLAR_S_VALUES, steps: int = 900) -> PropositionVerdict:
    """§3.1: the exact displacement of the lines ``(s, 0)`` and ``(s, 1)``.

    Two routes to the polar displacement are checked against the closed
    form: ``push_exact`` of the Cartesian difference, and the difference of
    the two geodesics integrated directly in the polar chart.  The tensorial
    rule applied to the polar displacement does not give back ``(0, 1)``.
    """
    s_values = np.asarray(s_values, dtype=float)
    span = (float(s_values.min()), float(s_values.max()))
    opts = IntegratorOptions(method="rk4", steps=steps)
    flat = catalog("flat_cartesian(2)")
    X, x = integrate_geodesics(flat, [([span[0], 0.0], [1.0, 0.0]), ([span[0], 1.0], [1.0, 0.0])],
                               span, opts)
    cart = exact_by_difference(flat, X, x)
    cart_err = float(np.max(np.abs(cart.xi(s_values) - [0.0, 1.0])))

    pm = polar_map()
    pushed = push_exact(cart, pm)

    polar = catalog("euclidean_polar")
    starts = []
    for p0 in ([span[0], 0.0], [span[0], 1.0]):
        p0 = np.array(p0)
        starts.append((pm.forward(p0), pm.jet1(p0) @ np.array([1.0, 0.0])))
    Xp, xp = integrate_geodesics(polar, starts, span, opts)
    direct = exact_by_difference(polar, Xp, xp)

    closed = polar_closed_form(s_values)
    d_push = np.abs(pushed.xi(s_values) - closed)
    d_direct = np.abs(direct.xi(s_values) - closed)
    res = float(max(d_push.max(), d_direct.max()))

    back = push_tensorial(pushed, cartesian_from_polar())
    mismatch = float(np.linalg.norm(back.xi(1.0) - np.array([0.0, 1.0])))
    checks = [Check("cartesian_displacement", cart_err, POLAR_THRESHOLD),
              Check("tensorial_mismatch_at_1", mismatch, POLAR_MISMATCH, at_least=True)]
    details = {"s": s_values.tolist(), "closed_form": closed.tolist(),
               "push_exact_delta": d_push.tolist(), "direct_delta": d_direct.tolist(),
               "tensorial_pushback_at_1": back.xi(1.0).tolist()}
    return PropositionVerdict("polar", res, POLAR_THRESHOLD, checks, details)
