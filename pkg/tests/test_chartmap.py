import numpy as np
import pytest

from geodev.chartmap import (AffineMap, CubicCounterexampleMap, IdentityMap, PolynomialMap,
                             appendix_identities, cartesian_from_polar, cartesian_from_spherical,
                             map_from_spec, polar_map, pull_connection, push_exact, push_geodesic,
                             push_tensorial, spherical_map, t_tensor)
from geodev.connection import catalog
from geodev.deviation import (DeviationKind, deviation_from_samples, deviation_residual,
                              exact_by_difference)
from geodev.errors import HessianNotZero, SingularJacobian
from geodev.geodesic import geodesic_residual, integrate_geodesic, integrate_geodesics
from geodev.integrate import IntegratorOptions

FLAT2, FLAT3 = catalog("flat_cartesian(2)"), catalog("flat_cartesian(3)")
RK4 = IntegratorOptions(method="rk4", steps=400)


def builtin_maps():
    poly = PolynomialMap(2, [{"mu": 0, "exponents": [1, 0], "coeff": 1.0},
                             {"mu": 0, "exponents": [0, 3], "coeff": 0.2},
                             {"mu": 1, "exponents": [0, 1], "coeff": 1.0},
                             {"mu": 1, "exponents": [2, 1], "coeff": -0.1}])
    return [
        (AffineMap([[2.0, 1.0], [0.5, 1.5]], [0.3, -0.2]), np.array([[0.3, -0.7], [1.2, 0.4]])),
        (CubicCounterexampleMap(3), np.array([[0.2, -0.1, 0.3], [0.0, 0.0, 0.0]])),
        (cartesian_from_polar(), np.array([[1.5, 0.3], [0.7, 2.0]])),
        (polar_map(), np.array([[0.5, 1.2], [-1.0, 0.3]])),
        (cartesian_from_spherical(), np.array([[1.2, 0.9, 0.4]])),
        (spherical_map(), np.array([[0.4, 0.5, 1.1]])),
        (poly, np.array([[0.2, 0.3], [-0.4, 0.1]])),
    ]


def fd(f, x, h):
    cols = []
    for t in range(x.shape[-1]):
        e = np.zeros_like(x)
        e[t] = h
        cols.append((-f(x + 2 * e) + 8 * f(x + e) - 8 * f(x - e) + f(x - 2 * e)) / (12 * h))
    return np.stack(cols, -1)


@pytest.mark.parametrize("m,pts", builtin_maps(), ids=lambda v: getattr(v, "name", ""))
def test_jet_consistency_and_symmetry(m, pts):
    for x in pts:
        assert np.max(np.abs(fd(m.forward, x, 1e-3) - m.jet1(x))) <= 1e-8
        assert np.max(np.abs(fd(m.jet1, x, 1e-3) - m.jet2(x))) <= 1e-8
        assert np.max(np.abs(fd(m.jet2, x, 1e-3) - m.jet3(x))) <= 1e-7
        H, K = m.jet2(x), m.jet3(x)
        assert np.allclose(H, np.swapaxes(H, -1, -2), atol=1e-14)
        assert np.allclose(K, np.swapaxes(K, -1, -2), atol=1e-14)
        assert np.allclose(K, np.swapaxes(K, -2, -3), atol=1e-14)


@pytest.mark.parametrize("m,pts", builtin_maps(), ids=lambda v: getattr(v, "name", ""))
def test_round_trip(m, pts):
    assert np.max(np.abs(m.backward(m.forward(pts)) - pts)) <= 1e-10


def test_affine_jets_vanish():
    m = AffineMap(np.diag([2.0, 3.0]), [1.0, 1.0])
    x = np.array([0.4, 0.9])
    assert np.all(m.jet2(x) == 0) and np.all(m.jet3(x) == 0)
    with pytest.raises(SingularJacobian):
        AffineMap([[1.0, 2.0], [2.0, 4.0]])


def test_cubic_map_structure(rng):
    m = CubicCounterexampleMap(3)
    z = np.zeros(3)
    T = t_tensor(3)
    assert np.array_equal(m.jet1(z), np.eye(3))
    assert np.all(m.jet2(z) == 0)
    assert np.array_equal(m.jet3(z), T)
    for perm in [(0, 2, 1, 3), (0, 3, 2, 1), (0, 1, 3, 2)]:
        assert np.array_equal(T, np.transpose(T, perm))
    x = rng.normal(size=3)
    assert np.allclose(m.forward(x), x + 0.5 * x * (x @ x), atol=1e-15)
    with pytest.raises(ValueError):
        CubicCounterexampleMap(2)


def test_pull_flat_through_affine_is_zero(rng):
    chart = pull_connection(FLAT2, AffineMap([[1.0, 2.0], [0.0, 1.0]], [3.0, 0.0]))
    x = rng.normal(size=(4, 2))
    assert np.max(np.abs(chart.christoffel(x))) <= 1e-15
    assert chart.flat


def test_pull_flat_through_polar_gives_polar_symbols(rng):
    pulled = pull_connection(FLAT2, polar_map())
    polar = catalog("euclidean_polar")
    pts = np.stack([rng.uniform(0.5, 3, 10), rng.uniform(-3, 3, 10)], -1)
    assert np.max(np.abs(pulled.christoffel(pts) - polar.christoffel(pts))) <= 1e-12
    assert np.max(np.abs(pulled.christoffel_derivative(pts[0]) - polar.christoffel_derivative(pts[0]))) <= 1e-8


def test_pull_through_cubic_at_origin():
    pulled = pull_connection(FLAT3, CubicCounterexampleMap(3))
    assert np.max(np.abs(pulled.christoffel(np.zeros(3)))) <= 1e-15
    assert np.max(np.abs(pulled.christoffel_derivative(np.zeros(3)) + t_tensor(3))) <= 1e-8


def test_pullback_involution(rng):
    sphere = catalog("sphere2")
    m = AffineMap([[1.0, 0.3], [-0.2, 0.8]], [0.1, 0.2])
    back = pull_connection(pull_connection(sphere, m), m.inverse())
    pts = np.stack([rng.uniform(0.5, 2.5, 10), rng.uniform(-2, 2, 10)], -1)
    assert np.max(np.abs(back.christoffel(pts) - sphere.christoffel(pts))) <= 1e-8
    polar = catalog("euclidean_polar")
    flat_again = pull_connection(polar, cartesian_from_polar())
    q = np.array([[0.7, 0.5], [-1.0, 1.5]])
    assert np.max(np.abs(flat_again.christoffel(q))) <= 1e-8


def test_pulled_connection_torsion_free(rng):
    pulled = pull_connection(catalog("sphere2"), PolynomialMap(2, [
        {"mu": 0, "exponents": [1, 0], "coeff": 1.0}, {"mu": 0, "exponents": [1, 1], "coeff": 0.1},
        {"mu": 1, "exponents": [0, 1], "coeff": 1.0}]))
    G = pulled.christoffel(np.array([1.2, 0.4]))
    assert np.array_equal(G, np.swapaxes(G, -1, -2))


def line_deviation(s_span=(-0.5, 0.5)):
    base = integrate_geodesic(FLAT3, [0, 0, 0], [1, 0, 0], s_span, RK4, s_init=0.0)
    s = base.s
    xi = np.stack([0 * s, 1 + 0 * s, s], -1)
    xid = np.tile([0.0, 0.0, 1.0], (len(s), 1))
    return base, deviation_from_samples(base, s, xi, xid, np.zeros_like(xi), DeviationKind.GJE)


def test_push_identity_and_affine():
    base, dev = line_deviation()
    ident = push_tensorial(dev, IdentityMap(3))
    assert np.array_equal(ident.trajectory.y, dev.trajectory.y)
    assert np.array_equal(push_exact(dev, IdentityMap(3)).trajectory.y, dev.trajectory.y)
    L = np.array([[1.0, 2.0, 0.0], [0.0, 1.0, 0.5], [0.3, 0.0, 2.0]])
    m = AffineMap(L, [1.0, -1.0, 0.0])
    t = push_tensorial(dev, m)
    assert np.allclose(t.xi(t.s), dev.xi(dev.s) @ L.T, atol=1e-14)
    assert np.allclose(t.xidot(t.s), dev.xidot(dev.s) @ L.T, atol=1e-14)
    e = push_exact(dev, m)
    assert np.allclose(e.trajectory.y, t.trajectory.y, atol=1e-14)


def test_push_tensorial_cubic_example():
    base, dev = line_deviation()
    pushed = push_tensorial(dev, CubicCounterexampleMap(3))
    s = pushed.s
    expected = (1 + s**2 / 2)[:, None] * np.stack([0 * s, 1 + 0 * s, s], -1)
    assert np.max(np.abs(pushed.xi(s) - expected)) <= 1e-14
    assert np.max(np.abs(pushed.xiddot(0.0) - [0, 1, 0])) <= 1e-12


def test_push_geodesic_is_geodesic_in_target():
    path = integrate_geodesic(catalog("sphere2"), [1.0, 0.0], [0.3, 0.8], (0, 2.0))
    m = AffineMap([[1.0, 0.5], [0.0, 2.0]], [0.1, 0.0])
    pushed = push_geodesic(path, m)
    assert geodesic_residual(pushed).sup <= 1e-7


def test_push_exact_polar_closed_form():
    X, x = integrate_geodesics(FLAT2, [([0.5, 0.0], [1.0, 0.0]), ([0.5, 1.0], [1.0, 0.0])], (0.5, 5.0),
                               IntegratorOptions(method="rk4", steps=200))
    dev = exact_by_difference(FLAT2, X, x)
    pe = push_exact(dev, polar_map(), target=catalog("euclidean_polar"))
    s = pe.s
    expected = np.stack([np.sqrt(1 + s**2) - s, np.arctan(1 / s)], -1)
    assert np.max(np.abs(pe.xi(s) - expected)) <= 1e-10
    assert deviation_residual(pe, s=s).sup <= 1e-9


def test_tensorial_push_of_exact_polar_displacement_is_not_cartesian():
    r, t = 1.0, 0.0  # X(1) = (1, 0) in polar
    xi_polar = np.array([np.sqrt(2) - 1, np.pi / 4])
    J = cartesian_from_polar().jet1(np.array([r, t]))
    assert np.linalg.norm(J @ xi_polar - [0.0, 1.0]) >= 0.25


def test_appendix_identities_affine():
    chart = catalog("sphere2")
    path = integrate_geodesic(chart, [1.0, 0.0], [0.3, 0.8], (0, 2.0))
    m = AffineMap([[1.0, 0.5], [0.0, 2.0]], [0.1, 0.0])
    rep = appendix_identities(chart, m, path, 0.7, [0.1, 0.2], [0.3, -0.4])
    assert rep.extras["velocity_rule"] <= 1e-12
    assert rep.extras["connection_rule"] <= 1e-12
    assert rep.extras["connection_derivative_rule"] <= 1e-7  # pulled dG is FD-based
    assert rep.extras["third_derivative_term"] == 0.0


def test_appendix_identities_cubic_and_polar():
    base, _ = line_deviation()
    rep = appendix_identities(FLAT3, CubicCounterexampleMap(3), base, 0.0, [0, 1, 0], [0, 0, 1])
    # dG = 0 in flat space, so transC_4 reduces to 0 = -J J J dG~ + T, i.e. dG~(0) = -T
    assert rep.extras["connection_derivative_rule"] <= 1e-8
    assert rep.extras["pulled_dgamma_sup"] == pytest.approx(3.0, abs=1e-8)
    assert rep.extras["third_derivative_term"] == 3.0  # max |T| = T^0_000
    polar_path = integrate_geodesic(FLAT2, [0.5, 0.5], [1.0, 0.0], (0, 1))
    with pytest.raises(HessianNotZero):
        appendix_identities(FLAT2, polar_map(), polar_path, 0.5, [0, 1], [0, 0])


def test_map_from_spec():
    assert isinstance(map_from_spec({"kind": "affine", "Lambda": [[1, 0], [0, 2]], "C": [0, 1]}), AffineMap)
    assert map_from_spec({"kind": "cubic_counterexample", "n": 4}).dim == 4
    assert map_from_spec({"kind": "polar"}).dim == 2
    with pytest.raises(ValueError):
        map_from_spec({"kind": "mobius"})
