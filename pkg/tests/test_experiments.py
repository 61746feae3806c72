import numpy as np
import pytest

from geodev.connection import catalog, polynomial_chart
from geodev.deviation import integrate_gje
from geodev.errors import NonOrthonormalInput, StepUnderflow
from geodev.experiments import (Check, PropositionVerdict, integrate_gje_shrinking, polar_closed_form,
                                prop3_sweep, prop4_formula, random_affine_map,
                                random_orthonormal_triple, run_polar_example, verify_prop3,
                                verify_prop4)
from geodev.geodesic import integrate_geodesic
from geodev.integrate import IntegratorOptions


def test_verdict_semantics():
    assert PropositionVerdict("x", 1e-9, 1e-8).passed
    assert not PropositionVerdict("x", 1e-7, 1e-8).passed
    assert not PropositionVerdict("x", 0.0, 1e-8, [Check("c", 0.1, 0.5, at_least=True)]).passed
    d = PropositionVerdict("x", 0.0, 1e-8, [Check("c", 1.0, 0.5, at_least=True)]).to_dict()
    assert d["passed"] and d["checks"][0]["passed"]


def test_random_affine_map_condition(rng):
    for _ in range(20):
        m = random_affine_map(3, rng)
        assert 1.0 <= np.linalg.cond(m.Lambda) <= 10.0 + 1e-9


def test_prop3_flat_is_exact(rng):
    chart = catalog("flat_cartesian(2)")
    X = integrate_geodesic(chart, [0, 0], [1, 0.5], (0, 2))
    v = verify_prop3(chart, X, [0.1, 0.2], [0.5, -0.3], random_affine_map(2, rng), check_halving=False)
    assert v.residual_achieved <= 1e-10 and v.passed


def test_prop3_sphere_unit_speed_half_norm(rng):
    chart = catalog("sphere2")
    X = integrate_geodesic(chart, [np.pi / 2, 0.0], [0.0, 1.0], (0.0, np.pi))
    v = verify_prop3(chart, X, [0.0, 0.0], [0.3, 0.4], random_affine_map(2, rng))
    assert v.passed, v.to_dict()
    assert v.residual_achieved <= 1e-7


def test_prop3_polar_sweep():
    verdicts = prop3_sweep("euclidean_polar", maps=5, seed=3)
    assert len(verdicts) == 5 and all(v.passed for v in verdicts)


def test_gje_shrinking_span_on_blowup():
    # G^0_00 = 1: with u = X'^0 + xi'^0 the GJE reduces to u' = -u^2, so u(0) = -1 blows up at s = 1
    chart = polynomial_chart(2, [{"mu": 0, "nu": 0, "sigma": 0, "exponents": [0, 0], "coeff": 1.0}])
    X = integrate_geodesic(chart, [0.0, 0.0], [1.0, 0.0], (0.0, 1.5))
    with pytest.raises(StepUnderflow):
        integrate_gje(chart, X, [0.0, 0.0], [-2.0, 0.0])
    dev, halvings = integrate_gje_shrinking(chart, X, [0.0, 0.0], [-2.0, 0.0])
    assert halvings == 1 and dev.base.s_span == (0.0, 0.75)
    s = dev.s
    assert np.max(np.abs(dev.xidot(s)[:, 0] - (-1 / (1 - s) - 1 / (1 + s)))) <= 1e-7


def test_prop4_standard_basis():
    r = verify_prop4(3)
    assert np.max(np.abs(r.G_at_s0 - [0, -1, 0])) <= 1e-7
    assert np.linalg.norm(r.J_at_s0) <= 1e-9
    assert r.verdict.passed
    r4 = verify_prop4(4)
    assert np.max(np.abs(r4.G_at_s0 - [0, -1, 0, 0])) <= 1e-7


def test_prop4_formula_reduces_to_minus_v():
    for seed in range(10):
        u, v, w = random_orthonormal_triple(5, seed)
        assert np.allclose(prop4_formula(u, v, w), -v, atol=1e-14)


def test_prop4_random_triples():
    for seed in range(5):
        r = verify_prop4(3, seed=seed)
        assert r.verdict.passed
        assert np.linalg.norm(r.G_at_s0 + np.array(r.verdict.details["v"])) <= 1e-7


def test_prop4_rejects_bad_input():
    with pytest.raises(NonOrthonormalInput):
        verify_prop4(3, [1, 0, 0], [1, 0, 0], [0, 0, 1])
    with pytest.raises(NonOrthonormalInput):
        verify_prop4(3, [1, 0, 0], None, None)
    with pytest.raises(ValueError):
        verify_prop4(2)


def test_polar_closed_form_values():
    assert np.allclose(polar_closed_form(1.0), [np.sqrt(2) - 1, np.pi / 4])
    assert polar_closed_form(5.0)[0] == pytest.approx(np.sqrt(26) - 5)
    assert polar_closed_form(5.0)[0] == pytest.approx(0.0990, abs=1e-4)


def test_run_polar_example():
    v = run_polar_example()
    assert v.passed
    assert v.residual_achieved <= 1e-8
    checks = {c.name: c for c in v.checks}
    assert checks["cartesian_displacement"].value <= 1e-8
    assert checks["tensorial_mismatch_at_1"].value >= 0.25
