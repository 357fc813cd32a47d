import csv
import io

import numpy as np
import pytest

from mtlab.errors import (
    EmptyDomainError,
    ExpansionInvalidError,
    FitError,
    InvalidWeightError,
)
from mtlab.green import (
    discrete_delta,
    fit_expansion,
    green_expansion,
    richardson,
    robin_field,
    solve_green,
)
from mtlab.surface import (
    apply_laplacian,
    build_icosphere,
    build_torus,
    gaussian_curvature,
    integrate,
    weight_integral,
)
from oracles import A_SQUARE_TORUS, A_UNIT_SPHERE, C_UNIT_SPHERE

EIGHT_PI = 8 * np.pi
LOG2 = np.log(2.0)


def grid_node(n, ix, iy):
    return ix * n + iy


# -------------------------------------------------------------- Green solve


def test_green_zero_mean(flat64):
    G = solve_green(flat64, flat64.constant(1.0), 0)
    assert abs(integrate(flat64, G)) < 1e-10


def test_green_weighted_normalization(flat64):
    psi = flat64.sample(lambda x, y: 1 + 0.5 * np.cos(2 * np.pi * x))
    G = solve_green(flat64, psi, 37)
    bound = 1e-10 * np.linalg.norm(G.values) * np.linalg.norm(psi.values)
    assert abs(integrate(flat64, psi * G)) < bound


@pytest.mark.parametrize(
    "frac, exact",
    [((0.5, 0.5), -2 * LOG2), ((0.25, 0.25), -0.5 * LOG2), ((0.5, 0.0), -LOG2)],
)
def test_green_far_values_match_theta_formula(frac, exact):
    # closed forms of the periodic Green function of the square torus
    n = 256
    m = build_torus(n)
    G = solve_green(m, m.constant(1.0), 0).values
    k = grid_node(n, int(frac[0] * n), int(frac[1] * n))
    assert G[k] == pytest.approx(exact, abs=1e-4)


def test_green_antipode_refinement():
    vals = []
    for n in (64, 128):
        m = build_torus(n)
        vals.append(solve_green(m, m.constant(1.0), 0).values[grid_node(n, n // 2, n // 2)])
    assert abs(vals[0] - vals[1]) < 1e-3


def test_green_residual_identity(wavy64):
    psi = wavy64.sample(lambda x, y: 1 + 0.5 * np.cos(2 * np.pi * x))
    y = 1000
    G = solve_green(wavy64, psi, y)
    res = apply_laplacian(wavy64, G).values - EIGHT_PI * psi.values / weight_integral(wavy64, psi)
    n = 64
    d = wavy64.nodes - wavy64.nodes[y]
    d -= np.round(d)
    far = np.max(np.abs(d), axis=1) > 3.0 / n
    scale = np.max(np.abs(res))
    assert np.max(np.abs(res[far])) <= 1e-8 * scale
    assert integrate(wavy64, wavy64.field(res)) == pytest.approx(-EIGHT_PI, rel=1e-8)


def test_green_sphere_residual(sphere4):
    G = solve_green(sphere4, sphere4.constant(1.0), 7)
    res = apply_laplacian(sphere4, G).values - EIGHT_PI / sphere4.total_area
    others = np.ones(sphere4.num_nodes, bool)
    others[7] = False
    assert np.max(np.abs(res[others])) < 1e-8 * np.max(np.abs(res))


def test_green_zero_weight(flat64):
    with pytest.raises(InvalidWeightError):
        solve_green(flat64, flat64.sample(lambda x, y: np.cos(2 * np.pi * y)), 0)


def test_discrete_delta_integrates_to_one(wavy64, sphere4):
    for m in (wavy64, sphere4):
        assert np.dot(discrete_delta(m, 3), m.area_weights) == pytest.approx(1.0, abs=1e-12)


# ---------------------------------------------------------------- expansion


@pytest.fixture(scope="module")
def flat256_expansion(flat256):
    return green_expansion(flat256, flat256.constant(1.0), 0)


def test_trace_identity_flat(flat256_expansion):
    _, ex = flat256_expansion
    assert ex.c_trace == pytest.approx(4 * np.pi, rel=0.02)


def test_odd_terms_vanish(flat256_expansion):
    _, ex = flat256_expansion
    assert abs(ex.b[0]) + abs(ex.b[1]) < 1e-6


def test_fit_rms_certificate(flat256_expansion):
    _, ex = flat256_expansion
    assert ex.fit_rms <= 0.05 * abs(ex.A) + 1e-6
    assert ex.annulus == pytest.approx((6 / 256, 24 / 256))


def test_translation_invariance(flat256):
    a = green_expansion(flat256, flat256.constant(1.0), grid_node(256, 100, 37))[1].A
    b = green_expansion(flat256, flat256.constant(1.0), grid_node(256, 3, 200))[1].A
    assert a == pytest.approx(b, abs=1e-6)


def test_robin_constant_matches_analytic(flat256_expansion):
    _, ex = flat256_expansion
    assert ex.A == pytest.approx(A_SQUARE_TORUS, abs=1e-4)


def test_refinement_stability():
    exps = []
    for n in (128, 256):
        m = build_torus(n)
        exps.append(green_expansion(m, m.constant(1.0), 0)[1])
    assert abs(exps[0].A - exps[1].A) <= 5 * exps[1].fit_rms
    A_r = richardson(exps[0].A, exps[1].A)
    assert A_r == pytest.approx(A_SQUARE_TORUS, abs=1e-4)


def test_constant_shift_moves_only_A(flat256_expansion, flat256):
    G, ex = flat256_expansion
    ex2 = fit_expansion(flat256, G + 2.5, 0)
    assert ex2.A == pytest.approx(ex.A + 2.5, abs=1e-10)
    assert ex2.b == pytest.approx(ex.b, abs=1e-10)
    assert ex2.c == pytest.approx(ex.c, abs=1e-8)


def test_annulus_too_close(flat256_expansion, flat256):
    G, _ = flat256_expansion
    with pytest.raises(FitError):
        fit_expansion(flat256, G, 0, (3 / 256, 24 / 256))


def test_annulus_too_few_nodes(flat256_expansion, flat256):
    G, _ = flat256_expansion
    with pytest.raises(FitError):
        fit_expansion(flat256, G, 0, (4 / 256, 4.5 / 256))


def test_fit_of_noise_is_rejected(flat256, rng):
    noise = flat256.field(rng.standard_normal(flat256.num_nodes))
    with pytest.raises(ExpansionInvalidError):
        fit_expansion(flat256, noise, 0)


def test_trace_identity_conformal():
    m = build_torus(256, lambda x, y: 0.1 * np.cos(2 * np.pi * x))
    psi = m.constant(1.0)
    K = gaussian_curvature(m).values
    for p in (0, grid_node(256, 64, 0)):
        _, ex = green_expansion(m, psi, p)
        lhs = ex.c_trace + 2 / 3 * K[p]
        tol = max(0.02, 10 * ex.fit_rms / (4 * np.pi))
        assert lhs == pytest.approx(4 * np.pi, rel=tol)
        # the general right-hand side carries psi(p) / int psi
        assert lhs == pytest.approx(4 * np.pi * psi.values[p] / weight_integral(m, psi), rel=tol)


def test_sphere_expansion():
    m = build_icosphere(5)
    p = 100  # not an original icosahedron vertex
    _, ex = green_expansion(m, m.constant(1.0), p)
    assert ex.A == pytest.approx(A_UNIT_SPHERE, abs=5e-3)
    assert ex.c[0] == pytest.approx(C_UNIT_SPHERE, abs=0.01)
    assert ex.c[2] == pytest.approx(C_UNIT_SPHERE, abs=0.01)
    K = gaussian_curvature(m).values[p]
    # c1 + c3 + 2K/3 = 4 pi psi(p) / int psi = 1 on the unit sphere
    assert ex.c_trace + 2 / 3 * K == pytest.approx(1.0, rel=0.05)


def test_richardson_is_exact_for_quadratic_error():
    h = 0.1
    f = lambda s: 3.0 + 7.0 * s**2  # noqa: E731
    assert richardson(f(h), f(h / 2)) == pytest.approx(3.0, abs=1e-14)


# ------------------------------------------------------------- Robin field


def test_robin_constant_on_flat_torus():
    n = 128
    m = build_torus(n)
    idx = np.arange(4) * n // 4
    samples = [grid_node(n, i, j) for i in idx for j in idx]
    rf = robin_field(m, m.constant(1.0), m.constant(1.0), samples)
    assert np.ptp(rf.A) < 1e-5
    assert rf.max_value == pytest.approx(rf.A[0], abs=1e-5)
    assert rf.max_value == pytest.approx(A_SQUARE_TORUS, abs=1e-4)


def test_robin_bump_argmax():
    n = 64
    m = build_torus(n)
    q = (0.4, 0.65)

    def bump(x, y):
        dx = x - q[0] - np.round(x - q[0])
        dy = y - q[1] - np.round(y - q[1])
        return 0.05 + np.exp(-(dx**2 + dy**2) / (2 * 0.1**2))

    h = m.sample(bump)
    rf = robin_field(m, m.constant(1.0), h)
    assert np.ptp(2 * np.log(rf.h)) > 100 * np.ptp(rf.A)
    d = m.nodes[rf.samples] - np.array(q)
    d -= np.round(d)
    nearest = rf.samples[np.argmin(np.hypot(d[:, 0], d[:, 1]))]
    assert rf.argmax == nearest


def test_robin_zero_set_excluded():
    n = 64
    m = build_torus(n)
    h = m.sample(lambda x, y: np.where(x < 0.5, 0.0, 1.0 + 0.2 * np.cos(2 * np.pi * y)))
    rf = robin_field(m, m.constant(1.0), h)
    assert np.sum(rf.in_Z) == 32
    assert np.all(np.isnan(rf.A[rf.in_Z]))
    assert np.isfinite(rf.max_value)
    assert not rf.in_Z[list(rf.samples).index(rf.argmax)]


def test_robin_all_in_Z(flat64):
    h = flat64.sample(lambda x, y: np.where(x < 0.5, 0.0, 1.0))
    with pytest.raises(EmptyDomainError):
        robin_field(flat64, flat64.constant(1.0), h, samples=[0, 1, 2])


def test_robin_csv_and_threads(flat64):
    h = flat64.sample(lambda x, y: 1 + 0.3 * np.cos(2 * np.pi * x))
    rf1 = robin_field(flat64, flat64.constant(1.0), h)
    rf2 = robin_field(flat64, flat64.constant(1.0), h, threads=3)
    text = rf1.to_csv(flat64)
    assert text == rf2.to_csv(flat64)
    rows = list(csv.reader(io.StringIO(text)))
    assert rows[0] == ["sample_node", "x", "y", "h", "A_y", "two_log_h_plus_A", "in_Z"]
    assert len(rows) == 65


def test_robin_sphere_default_samples():
    m = build_icosphere(3)
    rf = robin_field(m, m.constant(1.0), m.constant(1.0))
    assert rf.samples.size == 20
    assert len(set(rf.samples.tolist())) == 20
    header = rf.to_csv(m).splitlines()[0]
    assert header == "sample_node,x,y,z,h,A_y,two_log_h_plus_A,in_Z"
