import csv
import io
import json

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from mtlab.blowup import (
    SWEEP_COLUMNS,
    TestFunctionParams,
    alpha_of,
    asymptotic_bracket,
    blowup_constant,
    blowup_report,
    bubble,
    bubble_mass,
    bubble_mass_quadrature,
    bubble_pde_residual,
    build_test_function,
    c_eps_of,
    concentration_scale,
    condition_margin,
    cutoff,
    inner_branch,
    margin_formula,
    mass_fractions,
    mass_split,
    neck_branch,
    observed_orders,
    point_data,
    rescaled_profile_error,
    seam_jump,
    sweep,
    test_function_params,
)
from mtlab.errors import InvalidArgumentError, InvalidPointError, ScaleError
from mtlab.functional import ProblemSpec
from mtlab.green import GreenExpansion, green_expansion
from mtlab.minimizer import blowup_infimum
from mtlab.surface import build_icosphere, build_torus, distances_from
from oracles import BUBBLE_MASS, MINUS_8PI, MINUS_8PI_LOG_PI


@pytest.fixture(scope="module")
def flat256_spec():
    m = build_torus(256)
    return ProblemSpec(m, m.constant(1.0), m.constant(1.0))


@pytest.fixture(scope="module")
def flat256_green(flat256_spec):
    return green_expansion(flat256_spec.mesh, flat256_spec.psi, 0)


# --------------------------------------------------------------------- bubble


@pytest.mark.parametrize("key", sorted(BUBBLE_MASS))
def test_bubble_mass_closed_form(key):
    h, R = key
    assert bubble_mass(h, R) == pytest.approx(BUBBLE_MASS[key], rel=1e-14)
    assert bubble_mass_quadrature(h, R) == pytest.approx(BUBBLE_MASS[key], abs=1e-10)


@given(h=st.floats(0.01, 100.0), R=st.floats(0.01, 100.0))
def test_bubble_mass_properties(h, R):
    m = bubble_mass(h, R)
    assert 0 < m < 1
    assert bubble_mass(h, 2 * R) > m
    # depends on (h, R) only through h R^2
    assert bubble_mass(4 * h, R / 2) == pytest.approx(m, rel=1e-12)


def test_bubble_values():
    assert bubble(1.0, [0.0, 0.0]) == 0.0
    x = np.array([[0.3, 0.4], [-0.4, 0.3]])
    assert np.allclose(bubble(2.0, x), -2 * np.log(1 + 2 * np.pi * 0.25))
    with pytest.raises(InvalidArgumentError):
        bubble(0.0, x)


def test_bubble_pde_second_order():
    errs = [bubble_pde_residual(1.5, 2.0, n) for n in (100, 200, 400, 800)]
    assert np.all(np.abs(observed_orders(errs) - 2.0) < 0.1)


# ---------------------------------------------------------- test functions


def test_alpha_and_constant():
    eps = 1e-4
    L = np.log(-np.log(eps))
    a = (eps * L) ** -0.25
    assert alpha_of(eps) == pytest.approx(a, rel=1e-15)
    assert c_eps_of(a, -5.0) == pytest.approx(-2 * np.log1p(1 / a**2) + 5.0, rel=1e-14)


def test_cutoff_shape():
    r = np.linspace(0, 3, 301)
    eta = cutoff(r, 1.0)
    assert np.all(eta[r <= 1] == 1.0) and np.all(eta[r >= 2] == 0.0)
    assert np.all(np.diff(eta) <= 0)
    # flat to second order at both ends
    d = 1e-4
    for r0 in (1.0, 2.0):
        assert abs(cutoff(r0 + d, 1.0) - cutoff(r0 - d, 1.0)) < 1e-10


def _fake_params(eps, A, b):
    ex = GreenExpansion(0, A, tuple(b), (2.0, 0.1, 4.0), 0.0, (0.1, 0.2))
    a = alpha_of(eps)
    return TestFunctionParams(0, eps, a, c_eps_of(a, A), ex, None)


@given(
    eps=st.floats(1e-12, 0.06),
    A=st.floats(-10, 10),
    b=st.tuples(st.floats(-5, 5), st.floats(-5, 5)),
)
def test_seam_identity(eps, A, b):
    prm = _fake_params(eps, A, b)
    theta = np.linspace(0, 2 * np.pi, 17)
    scale = np.max(np.abs(inner_branch(prm, np.full_like(theta, prm.inner_radius), theta)))
    assert np.max(np.abs(seam_jump(prm, theta))) <= 1e-12 * max(1.0, scale)


def test_neck_matches_G_beyond_cutoff():
    prm = _fake_params(1e-4, -5.0, (0.3, -0.2))
    r = np.array([prm.outer_radius, 1.5 * prm.outer_radius])
    G = np.array([1.25, -0.5])
    assert neck_branch(prm, r, np.zeros(2), G) == pytest.approx(G + prm.C_eps + np.log(prm.eps))


def test_params_eps_range(flat256_spec, flat256_green):
    G, ex = flat256_green
    for eps in (0.0, np.exp(-np.e), 0.5):
        with pytest.raises(InvalidArgumentError):
            test_function_params(flat256_spec, 0, eps, G, ex)


def test_test_function_peak(flat256_spec, flat256_green):
    G, ex = flat256_green
    eps = 1e-4
    u = build_test_function(flat256_spec, test_function_params(flat256_spec, 0, eps, G, ex))
    assert int(np.argmax(u.values)) == 0
    assert u.values[0] == pytest.approx(-np.log(eps), rel=1e-14)


def test_test_function_too_wide(flat256_spec, flat256_green):
    G, ex = flat256_green
    with pytest.raises(ScaleError):
        build_test_function(flat256_spec, test_function_params(flat256_spec, 0, 1e-2, G, ex))


def test_test_function_far_field(flat256_spec, flat256_green):
    G, ex = flat256_green
    prm = test_function_params(flat256_spec, 0, 1e-4, G, ex)
    u = build_test_function(flat256_spec, prm)
    far = distances_from(flat256_spec.mesh, 0) > 1.01 * prm.outer_radius
    assert np.allclose(u.values[far], G.values[far] + prm.C_eps + np.log(prm.eps), rtol=0, atol=1e-12)


# -------------------------------------------------------- asymptotics/margin


def test_blowup_constant():
    assert blowup_constant(0.0) == pytest.approx(MINUS_8PI + MINUS_8PI_LOG_PI, rel=1e-15)
    assert blowup_constant(-5.0, 1.0) == blowup_infimum(-5.0)
    assert blowup_constant(-5.0, 2.0) == pytest.approx(blowup_infimum(-5.0) - 8 * np.pi * np.log(2.0))


def test_flat_margin_is_8pi(flat256_spec):
    h_jet, psi_jet, ex, K, _ = point_data(flat256_spec, 0)
    expected = ex.b[0] ** 2 + ex.b[1] ** 2 + 8 * np.pi
    assert condition_margin(flat256_spec, 0, h_jet, ex, K, psi_jet) == pytest.approx(expected, abs=1e-10)
    assert margin_formula(1.0, 1.0, (0.0, 0.0), 0.0, (0.0, 0.0), 0.0) == pytest.approx(8 * np.pi, abs=1e-12)
    assert asymptotic_bracket(1.0, 1.0, (0.0, 0.0), 0.0, (0.0, 0.0), 0.0) == pytest.approx(1.0, abs=1e-15)


def test_sphere_margin():
    # psi = 1 on the unit sphere: psi(p) / int psi = 1 / (4 pi), K = 1
    assert margin_formula(1 / (4 * np.pi), 1.0, (0.0, 0.0), 0.0, (0.0, 0.0), 1.0) == pytest.approx(
        4 * np.pi - 1, rel=1e-14
    )


finite = st.floats(-20, 20)


@given(
    psi_ratio=st.floats(0.01, 10),
    h_p=st.floats(0.01, 10),
    grad=st.tuples(finite, finite),
    lap=st.floats(-200, 200),
    b=st.tuples(finite, finite),
    K=finite,
)
def test_margin_is_scaled_bracket(psi_ratio, h_p, grad, lap, b, K):
    m = margin_formula(psi_ratio, h_p, grad, lap, b, K)
    br = asymptotic_bracket(psi_ratio, h_p, grad, lap, b, K)
    assert m == pytest.approx(8 * np.pi * h_p * br, rel=1e-9, abs=1e-9)


def test_condition_rejects_zero_set():
    m = build_torus(32)
    h = m.sample(lambda x, y: np.where(x < 0.5, 0.0, 1.0))
    spec = ProblemSpec(m, m.constant(1.0), h)
    with pytest.raises(InvalidPointError):
        point_data(spec, 0)


# --------------------------------------------------------------- diagnostics


def test_profile_recovery(flat256_spec, flat256_green):
    G, ex = flat256_green
    u = build_test_function(flat256_spec, test_function_params(flat256_spec, 0, 1e-4, G, ex))
    center, c, lam, r_eps, _ = concentration_scale(flat256_spec, u)
    assert center == 0
    assert rescaled_profile_error(flat256_spec, u, 0, 1.0, 5.0) <= 0.05
    fr = mass_fractions(flat256_spec, u, 0, [r_eps, 10 * r_eps])
    assert fr[10 * r_eps] >= 0.9
    assert fr[r_eps] == pytest.approx(bubble_mass(1.0, 1.0), abs=0.05)


def test_mass_fraction_validation(flat256_spec):
    u = flat256_spec.mesh.constant(0.0)
    with pytest.raises(InvalidArgumentError):
        mass_fractions(flat256_spec, u, 0, [0.2, 0.1])
    assert mass_fractions(flat256_spec, u, 0, [0.1, 0.9])[0.9] == 1.0


def test_mass_split(unit_spec64):
    N = unit_spec64.mesh.num_nodes
    half = np.arange(N) < N // 2
    a, b = mass_split(unit_spec64, unit_spec64.mesh.constant(0.0), half, ~half)
    assert a == pytest.approx(0.5) and a + b == pytest.approx(1.0)
    with pytest.raises(InvalidArgumentError):
        mass_split(unit_spec64, unit_spec64.mesh.constant(0.0), [0, 1], [1, 2])


def test_blowup_report_json(flat256_spec, flat256_green):
    G, ex = flat256_green
    u = build_test_function(flat256_spec, test_function_params(flat256_spec, 0, 1e-4, G, ex))
    rep = blowup_report(flat256_spec, u)
    doc = json.loads(rep.to_json())
    assert doc["x_eps"] == 0
    assert len(doc["mass_fraction"]) == 5
    assert np.isfinite(doc["lower_bound_violation"])


# -------------------------------------------------------------------- sweep


def test_sweep(flat256_spec):
    res = sweep(flat256_spec, 0, [1e-3, 3e-4, 1e-4])
    g = np.abs(res.gaps)
    assert g[0] > g[1] > g[2]
    rows = list(csv.reader(io.StringIO(res.to_csv())))
    assert tuple(rows[0]) == SWEEP_COLUMNS and len(rows) == 4
    assert res.to_csv() == sweep(flat256_spec, 0, [1e-3, 3e-4, 1e-4], threads=3).to_csv()


def test_sweep_on_sphere_runs():
    m = build_icosphere(4)
    spec = ProblemSpec(m, m.constant(1.0), m.constant(1.0))
    res = sweep(spec, 100, [1e-4])
    assert np.isfinite(res.rows[0]["J_numeric"])
