import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from abdsde.errors import Infeasible, NonFinite, ShapeMismatch, UnknownName
from abdsde.generators import (AnticipationFunctional, audit_lipschitz,
                               builtin_generator, check_feasible, evaluate,
                               GeneratorSpec, LipschitzData, with_lipschitz)

P1 = lambda *vals: np.array([list(vals)], dtype=float)


def _eval_scalar(spec, t, y, z, y_ant, z_ant):
    e = spec.eval_functionals(np.array([[y_ant]]), np.array([[[z_ant]]]))
    f, g = evaluate(spec, t, np.array([[y]]), np.array([[[z]]]), e)
    return float(f[0, 0]), float(g[0, 0, 0])


def test_example41_f1_at_zero_point_mass():
    spec = builtin_generator("example41_f1")
    f, _ = _eval_scalar(spec, 0.0, 0.0, 0.0, 0.0, 0.0)
    assert f == pytest.approx(2.0)  # 0 + sin 0 + 0 + 2


def test_example41_f2_at_zero_point_mass():
    spec = builtin_generator("example41_f2")
    f, _ = _eval_scalar(spec, 0.0, 0.0, 0.0, 0.0, 0.0)
    assert f == pytest.approx(0.0)  # 0 + 2|cos 0| + sin 0 - 2


def test_example41_g_value():
    spec = builtin_generator("example41_g")
    _, g = _eval_scalar(spec, 0.0, 1.0, 1.0, 0.0, 0.0)
    assert g == pytest.approx(1.0 + 1.0 / math.sqrt(3.0))


def test_linear_bsde_value():
    spec = builtin_generator("linear_bsde", a=1.0, rho=1.0)
    f, g = _eval_scalar(spec, 0.0, 1.0, 0.3, 0.0, 0.0)
    assert f == pytest.approx(2.0) and g == 0.0


def test_zero_generator():
    spec = builtin_generator("zero")
    f, g = _eval_scalar(spec, 0.5, 3.0, -2.0, 1.0, 1.0)
    assert f == 0.0 and g == 0.0 and not spec.anticipates


def test_duality_linear_degenerate_rho():
    spec = builtin_generator("duality_linear", rho=0.7)
    f, g = _eval_scalar(spec, 0.0, 5.0, 1.0, 2.0, 3.0)
    assert f == pytest.approx(0.7) and g == 0.0


def test_unknown_name_and_params():
    with pytest.raises(UnknownName):
        builtin_generator("no_such_generator")
    with pytest.raises(UnknownName):
        builtin_generator("zero", bogus=1)


def test_evaluate_shape_and_finite_checks():
    spec = builtin_generator("linear_bsde", a=1.0)
    with pytest.raises(ShapeMismatch):
        evaluate(spec, 0.0, np.zeros((3, 2)), np.zeros((3, 1, 1)), np.zeros((3, 0)))
    with pytest.raises(NonFinite):
        evaluate(spec, 0.0, np.array([[np.nan]]), np.zeros((1, 1, 1)),
                 np.zeros((1, 0)))


@settings(max_examples=300, deadline=None)
@given(x=st.floats(-50, 50), gap=st.floats(0, 50),
       u=st.floats(-50, 50), v=st.floats(-50, 50))
def test_example41_dominance_inequality(x, gap, u, v):
    # x + sin 2x + |u| + 2 >= y + 2|cos y| + sin v - 2 whenever x >= y
    y = x - gap
    lhs = x + math.sin(2 * x) + abs(u) + 2.0
    rhs = y + 2.0 * abs(math.cos(y)) + math.sin(v) - 2.0
    assert lhs >= rhs - 1e-12


def test_example42_chain_pointwise_and_monotone():
    rng = np.random.default_rng(5)
    x = np.concatenate([rng.normal(scale=s, size=500) for s in (0.1, 1, 10)])
    f1 = x - np.sin(2 * x) + 2.0
    fm = x + np.cos(x)
    f2 = x + 2.0 * np.cos(x) - 1.0
    assert np.all(f1 >= fm - 1e-12) and np.all(fm >= f2 - 1e-12)
    hi = x + np.abs(rng.normal(size=x.size))
    assert np.all((hi + np.cos(hi)) >= fm - 1e-12)


BUILTINS = [
    ("zero", {}),
    ("constant_rho", {"rho": 2.0}),
    ("linear_bsde", {"a": 1.0, "rho": 1.0}),
    ("anticipated_drift", {}),
    ("example41_f1", {}),
    ("example41_f2", {}),
    ("example41_g", {}),
    ("example42_f1", {}),
    ("example42_ftilde", {}),
    ("example42_f2", {}),
    ("duality_linear", {"mu": 0.1, "mu_bar": 0.05, "sigma": [0.1],
                        "sigma_bar": [0.0], "kappa": [0.1], "rho": 0.2}),
]


@pytest.mark.parametrize("name,params", BUILTINS)
def test_audit_passes_for_builtins(name, params):
    spec = builtin_generator(name, **params)
    report = audit_lipschitz(spec, samples=2000, seed=11)
    assert report.passed, str(report)


@pytest.mark.parametrize("name,params", BUILTINS)
def test_feasibility_load_below_one(name, params):
    spec = builtin_generator(name, **params)
    assert check_feasible(spec.lip, M=1.0) < 1.0


def test_audit_zero_generator_all_zero():
    report = audit_lipschitz(builtin_generator("zero"), samples=1500, seed=2)
    assert report.observed_c_f == 0.0 and report.observed_alpha1 == 0.0
    assert report.passed


def test_audit_example41_g_z_slope():
    report = audit_lipschitz(builtin_generator("example41_g"), samples=4000, seed=4)
    assert report.observed_alpha1 <= 1.0 / 3.0 + 1e-12
    assert report.observed_alpha1 > 0.30  # the bound is nearly attained
    assert report.passed


def test_audit_fails_for_mis_declared_constant():
    bad = with_lipschitz(builtin_generator("linear_bsde", a=1.0, rho=1.0), c=0.25)
    assert not audit_lipschitz(bad, samples=2000, seed=3).passed


def test_audit_rejects_tiny_sample_budget():
    with pytest.raises(ValueError):
        audit_lipschitz(builtin_generator("zero"), samples=10)


def test_check_feasible_raises():
    with pytest.raises(Infeasible):
        check_feasible(LipschitzData(c=1.0, alpha1=0.7, alpha2=0.4), M=1.0)


def test_custom_spec_construction():
    # a hand-rolled anticipated spec: f = e + 1 with phi(y') = y'
    phi = AnticipationFunctional(name="id", width=1, fn=lambda ya, za: ya)
    spec = GeneratorSpec(
        name="custom", m=1, d=1, l=1,
        f=lambda t, y, z, e: e + 1.0,
        g=lambda t, y, z, e: np.zeros((y.shape[0], 1, 1)),
        functionals=(phi,), lip=LipschitzData(c=1.0))
    f, _ = _eval_scalar(spec, 0.0, 0.0, 0.0, 2.5, 0.0)
    assert f == pytest.approx(3.5)
