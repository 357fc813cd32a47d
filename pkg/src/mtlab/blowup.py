"""Bubble profile, the explicit blowup test functions and concentration diagnostics."""
from __future__ import annotations

import csv
import io
import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
from scipy import integrate as sint

from .errors import InvalidArgumentError, ScaleError
from .functional import ProblemSpec, eval_J
from .green import GreenExpansion, fit_expansion, green_expansion, solve_green
from .surface import (
    LocalJet,
    ScalarField,
    chart_limit,
    distances_from,
    gaussian_curvature,
    local_jet,
    normal_chart,
)

EPS_MAX = float(np.exp(-np.e))


# --------------------------------------------------------------------- bubble


def bubble(h_p: float, x) -> np.ndarray:
    """``phi0(x) = -2 log(1 + pi h_p |x|^2)`` for planar points ``x`` of shape ``(..., 2)``."""
    if not h_p > 0:
        raise InvalidArgumentError("bubble needs h_p > 0")
    x = np.asarray(x, dtype=float)
    return -2.0 * np.log1p(np.pi * h_p * np.sum(x * x, axis=-1))


def bubble_radial(h_p: float, r) -> np.ndarray:
    if not h_p > 0:
        raise InvalidArgumentError("bubble needs h_p > 0")
    r = np.asarray(r, dtype=float)
    return -2.0 * np.log1p(np.pi * h_p * r * r)


def bubble_mass(h_p: float, R: float) -> float:
    """Closed form of ``int_{B_R} h_p e^phi0 dx``."""
    a = np.pi * h_p * R * R
    return a / (1.0 + a)


def bubble_mass_quadrature(h_p: float, R: float) -> float:
    """Adaptive radial quadrature of ``int_{B_R} h_p e^phi0 dx``."""
    val, _ = sint.quad(
        lambda r: 2.0 * np.pi * r * h_p * np.exp(bubble_radial(h_p, r)),
        0.0, R, epsabs=1e-14, epsrel=1e-13, limit=200,
    )
    return float(val)


def bubble_pde_residual(h_p: float, R: float, n: int) -> float:
    """Max of ``|Delta phi0 + 8 pi h_p e^phi0|`` on a uniform radial grid.

    The radial Laplacian ``f'' + f'/r`` uses centered second-order differences
    on ``n`` intervals of ``[0, R]``, evaluated at interior nodes.
    """
    r = np.linspace(0.0, R, n + 1)
    dr = r[1] - r[0]
    f = bubble_radial(h_p, r)
    ri = r[1:-1]
    d2 = (f[2:] - 2 * f[1:-1] + f[:-2]) / dr**2
    d1 = (f[2:] - f[:-2]) / (2 * dr)
    res = d2 + d1 / ri + 8.0 * np.pi * h_p * np.exp(f[1:-1])
    return float(np.max(np.abs(res)))


def observed_orders(errors: Sequence[float]) -> np.ndarray:
    """``log2`` ratios of successive errors under grid halving."""
    e = np.asarray(errors, dtype=float)
    return np.log2(e[:-1] / e[1:])


# ------------------------------------------------------------- test functions


@dataclass(frozen=True, eq=False)
class TestFunctionParams:
    p: int
    eps: float
    alpha: float
    C_eps: float
    expansion: GreenExpansion
    G_p: ScalarField

    __test__ = False  # not a pytest class

    @property
    def inner_radius(self) -> float:
        return self.alpha * np.sqrt(self.eps)

    @property
    def outer_radius(self) -> float:
        return 2.0 * self.alpha * np.sqrt(self.eps)


def alpha_of(eps: float) -> float:
    """``(eps log(-log eps))^(-1/4)``."""
    return float((eps * np.log(-np.log(eps))) ** -0.25)


def c_eps_of(alpha: float, A_p: float) -> float:
    return float(-2.0 * np.log((alpha**2 + 1.0) / alpha**2) - A_p)


def test_function_params(
    spec: ProblemSpec,
    p: int,
    eps: float,
    G_p: Optional[ScalarField] = None,
    expansion: Optional[GreenExpansion] = None,
) -> TestFunctionParams:
    """Assemble the test-function data at ``p``, solving for ``G_p`` if needed."""
    eps = float(eps)
    if not 0.0 < eps < EPS_MAX:
        raise InvalidArgumentError(f"eps must lie in (0, e^-e), got {eps}")
    p = int(p)
    if G_p is None:
        G_p, expansion = green_expansion(spec.mesh, spec.psi, p)
    elif expansion is None:
        expansion = fit_expansion(spec.mesh, G_p, p)
    a = alpha_of(eps)
    return TestFunctionParams(p, eps, a, c_eps_of(a, expansion.A), expansion, G_p)


test_function_params.__test__ = False


def cutoff(r, r0: float) -> np.ndarray:
    """Quintic smoothstep: 1 for ``r <= r0``, 0 for ``r >= 2 r0``."""
    s = np.clip((np.asarray(r, dtype=float) - r0) / r0, 0.0, 1.0)
    return 1.0 - s**3 * (10.0 - 15.0 * s + 6.0 * s * s)


def _linear_part(prm: TestFunctionParams, r, theta):
    b1, b2 = prm.expansion.b
    return r * (b1 * np.cos(theta) + b2 * np.sin(theta))


def inner_branch(prm: TestFunctionParams, r, theta):
    """``-2 log(r^2 + eps) + b.x + log eps``."""
    r = np.asarray(r, dtype=float)
    return -2.0 * np.log(r * r + prm.eps) + _linear_part(prm, r, theta) + np.log(prm.eps)


def neck_branch(prm: TestFunctionParams, r, theta, G):
    """``G - eta beta + C_eps + log eps`` with ``beta = G - (-4 log r + A + b.x)``."""
    r = np.asarray(r, dtype=float)
    eta = cutoff(r, prm.inner_radius)
    sing = -4.0 * np.log(r) + prm.expansion.A + _linear_part(prm, r, theta)
    return (1.0 - eta) * G + eta * sing + prm.C_eps + np.log(prm.eps)


def seam_jump(prm: TestFunctionParams, theta) -> np.ndarray:
    """Inner minus neck branch on the circle ``r = alpha sqrt(eps)``."""
    theta = np.asarray(theta, dtype=float)
    r = np.full_like(theta, prm.inner_radius)
    # eta = 1 on the seam, so the value of G is irrelevant
    return inner_branch(prm, r, theta) - neck_branch(prm, r, theta, np.zeros_like(theta))


def build_test_function(spec: ProblemSpec, prm: TestFunctionParams) -> ScalarField:
    mesh = spec.mesh
    r_out = prm.outer_radius
    if r_out > chart_limit(mesh):
        raise ScaleError(
            f"test function neck radius {r_out:.4g} exceeds chart limit {chart_limit(mesh):.4g}"
        )
    G = mesh.check(prm.G_p)
    out = G + prm.C_eps + np.log(prm.eps)
    chart = normal_chart(mesh, prm.p, r_out)
    idx, r, th = chart.index, chart.r, chart.theta
    inner = r <= prm.inner_radius
    neck = ~inner
    vals = out.copy()
    vals[idx[inner]] = inner_branch(prm, r[inner], th[inner])
    vals[idx[neck]] = neck_branch(prm, r[neck], th[neck], G[idx[neck]])
    return mesh.field(vals)


def eval_test_function_J(spec: ProblemSpec, prm: TestFunctionParams) -> float:
    return eval_J(spec, build_test_function(spec, prm), 0.0).J


# ------------------------------------------------------ asymptotics, condition


def blowup_constant(A_p: float, h_p: float = 1.0) -> float:
    """``-8 pi - 8 pi log pi - 4 pi A_p - 8 pi log h(p)``."""
    return -8.0 * np.pi - 8.0 * np.pi * np.log(np.pi) - 4.0 * np.pi * A_p - 8.0 * np.pi * np.log(h_p)


def asymptotic_bracket(psi_ratio, h_p, grad_h, lap_h, b, K_p) -> float:
    """Coefficient multiplying ``-16 pi^2 eps (-log eps)`` in the energy expansion."""
    k1, k2 = grad_h
    b1, b2 = b
    return float(
        0.5 * (psi_ratio + 1.0)
        - K_p / (4.0 * np.pi)
        + (b1 * b1 + b2 * b2) / (8.0 * np.pi)
        + lap_h / (8.0 * np.pi * h_p)
        + (k1 * b1 + k2 * b2) / (4.0 * np.pi * h_p)
    )


def margin_formula(psi_ratio, h_p, grad_h, lap_h, b, K_p) -> float:
    """Existence-condition expression; positive means the sufficient condition holds."""
    k1, k2 = grad_h
    b1, b2 = b
    return float(
        lap_h
        + 2.0 * (b1 * k1 + b2 * k2)
        + (4.0 * np.pi * (psi_ratio + 1.0) + (b1 * b1 + b2 * b2) - 2.0 * K_p) * h_p
    )


def _psi_ratio(spec: ProblemSpec, p: int, psi_jet: Optional[LocalJet]) -> float:
    val = spec.psi.values[p] if psi_jet is None else psi_jet.value
    return float(val / spec.psi_integral)


def asymptotic_J(
    spec: ProblemSpec,
    p: int,
    h_jet: LocalJet,
    expansion: GreenExpansion,
    K_p: float,
    eps: float,
    psi_jet: Optional[LocalJet] = None,
    A: Optional[float] = None,
) -> float:
    """Two-term expansion of the test-function energy (remainder dropped).

    ``A`` overrides ``expansion.A`` in the constant term (for an extrapolated value).
    """
    p = int(p)
    spec.require_positive_h(p)
    h_p = h_jet.value
    br = asymptotic_bracket(_psi_ratio(spec, p, psi_jet), h_p, h_jet.grad, h_jet.laplacian, expansion.b, K_p)
    A_p = expansion.A if A is None else A
    return blowup_constant(A_p, h_p) - 16.0 * np.pi**2 * br * eps * (-np.log(eps))


def condition_margin(
    spec: ProblemSpec, p: int, h_jet: LocalJet, expansion: GreenExpansion, K_p: float,
    psi_jet: Optional[LocalJet] = None,
) -> float:
    p = int(p)
    spec.require_positive_h(p)
    return margin_formula(
        _psi_ratio(spec, p, psi_jet), h_jet.value, h_jet.grad, h_jet.laplacian, expansion.b, K_p
    )


def point_data(spec: ProblemSpec, p: int, G_p=None, expansion=None):
    """``(h_jet, psi_jet, expansion, K_p, G_p)`` at node ``p``."""
    p = int(p)
    spec.require_positive_h(p)
    if G_p is None:
        G_p, expansion = green_expansion(spec.mesh, spec.psi, p)
    elif expansion is None:
        expansion = fit_expansion(spec.mesh, G_p, p)
    K_p = float(gaussian_curvature(spec.mesh).values[p])
    return local_jet(spec.mesh, spec.h, p), local_jet(spec.mesh, spec.psi, p), expansion, K_p, G_p


# ---------------------------------------------------------------- diagnostics


def concentration_scale(spec: ProblemSpec, u: ScalarField, center: Optional[int] = None):
    """``(center, c_eps, lambda_eps, r_eps)`` with ``r_eps = sqrt(lambda) e^(-c/2)``."""
    from .functional import log_integral_exp

    uv = spec.mesh.check(u)
    center = int(np.argmax(uv)) if center is None else int(center)
    c = float(uv[center])
    loglam = log_integral_exp(spec.mesh, spec.h.values, uv)
    r = float(np.exp(0.5 * loglam - 0.5 * c))
    return center, c, float(np.exp(loglam)), r, loglam


def rescaled_profile_error(
    spec: ProblemSpec, u: ScalarField, center: int, h_center: float, R: float
) -> float:
    """Sup over chart nodes with ``|x| <= R`` of ``|u(x_eps + r_eps x) - c_eps - phi0(x)|``.

    Compared at mesh nodes, so no interpolation enters.
    """
    center, c, _, r_eps, _ = concentration_scale(spec, u, center)
    rad = r_eps * R
    if rad > chart_limit(spec.mesh):
        raise ScaleError(f"rescaled ball radius {rad:.4g} exceeds the chart limit")
    chart = normal_chart(spec.mesh, center, rad)
    x = chart.coords / r_eps
    diff = spec.mesh.check(u)[chart.index] - c - bubble(h_center, x)
    return float(np.max(np.abs(diff)))


def mass_fractions(spec: ProblemSpec, u: ScalarField, center: int, radii: Sequence[float]) -> dict:
    """Fraction of ``int h e^u`` inside geodesic balls ``B_r(center)``."""
    radii = [float(r) for r in radii]
    if not radii or radii[0] <= 0 or any(b <= a for a, b in zip(radii, radii[1:])):
        raise InvalidArgumentError("radii must be positive and increasing")
    uv = spec.mesh.check(u)
    m = spec.h.values * np.exp(uv - np.max(uv)) * spec.mesh.area_weights
    d = distances_from(spec.mesh, int(center))
    total = float(np.sum(m))
    return {r: float(min(1.0, np.sum(m[d <= r]) / total)) for r in radii}


def mass_split(spec: ProblemSpec, u: ScalarField, set_a, set_b):
    """Mass fractions of two disjoint node sets (boolean masks or index arrays)."""
    N = spec.mesh.num_nodes
    a = np.zeros(N, bool)
    b = np.zeros(N, bool)
    a[set_a] = True
    b[set_b] = True
    if np.any(a & b):
        raise InvalidArgumentError("node sets must be disjoint")
    uv = spec.mesh.check(u)
    m = spec.h.values * np.exp(uv - np.max(uv)) * spec.mesh.area_weights
    total = float(np.sum(m))
    return float(np.sum(m[a]) / total), float(np.sum(m[b]) / total)


def lower_bound_check(
    spec: ProblemSpec,
    u: ScalarField,
    center: int,
    G_center: ScalarField,
    expansion: GreenExpansion,
    h_p: float,
    R: float,
) -> float:
    """Most negative ``u - G - rhs`` outside ``B_{R r_eps}(center)``.

    ``rhs = -c_eps + 2 log lambda_eps - 2 log pi - 2 log h_p - A``.
    """
    center, c, _, r_eps, loglam = concentration_scale(spec, u, center)
    rhs = -c + 2.0 * loglam - 2.0 * np.log(np.pi) - 2.0 * np.log(h_p) - expansion.A
    d = distances_from(spec.mesh, center)
    sel = d > R * r_eps
    if not np.any(sel):
        raise InvalidArgumentError("no nodes outside the excluded ball")
    diff = spec.mesh.check(u)[sel] - spec.mesh.check(G_center)[sel] - rhs
    return float(np.min(diff))


@dataclass
class BlowupReport:
    x_eps: int
    c_eps: float
    lambda_eps: float
    r_eps: float
    profile_sup_error: float
    mass_fraction: dict
    lower_bound_violation: float

    def to_json(self) -> str:
        doc = dict(self.__dict__)
        doc["mass_fraction"] = {format(r, ".17g"): v for r, v in self.mass_fraction.items()}
        return json.dumps(doc, sort_keys=True, indent=2)


def blowup_report(
    spec: ProblemSpec,
    u: ScalarField,
    R: float = 5.0,
    radius_multiples: Sequence[float] = (1.0, 2.0, 5.0, 10.0, 20.0),
    lower_R: float = 10.0,
) -> BlowupReport:
    center, c, lam, r_eps, _ = concentration_scale(spec, u)
    h_c = spec.require_positive_h(center)
    lim = chart_limit(spec.mesh)
    prof = rescaled_profile_error(spec, u, center, h_c, R) if R * r_eps <= lim else float("nan")
    radii = [m * r_eps for m in radius_multiples]
    fr = mass_fractions(spec, u, center, radii)
    G = solve_green(spec.mesh, spec.psi, center)
    exp = fit_expansion(spec.mesh, G, center)
    lb = lower_bound_check(spec, u, center, G, exp, h_c, lower_R)
    return BlowupReport(center, c, lam, r_eps, prof, fr, lb)


# ----------------------------------------------------------------------- sweep


SWEEP_COLUMNS = ("eps", "alpha", "J_numeric", "J_asymptotic", "gap", "gap_over_eps_neglog_eps")


@dataclass
class SweepResult:
    rows: list  # dicts keyed by SWEEP_COLUMNS

    def to_csv(self) -> str:
        buf = io.StringIO()
        wr = csv.writer(buf, lineterminator="\n")
        wr.writerow(SWEEP_COLUMNS)
        for row in self.rows:
            wr.writerow([format(float(row[k]), ".17g") for k in SWEEP_COLUMNS])
        return buf.getvalue()

    @property
    def gaps(self) -> np.ndarray:
        return np.array([r["gap"] for r in self.rows])


def sweep(
    spec: ProblemSpec,
    p: int,
    eps_list: Sequence[float],
    A: Optional[float] = None,
    threads: int = 1,
) -> SweepResult:
    """Numeric test-function energy against its two-term expansion for each ``eps``.

    ``A`` replaces the fitted constant in the expansion (e.g. an extrapolated value);
    the test functions themselves always use the fitted expansion.
    """
    h_jet, psi_jet, expansion, K_p, G_p = point_data(spec, p)

    def row(eps):
        prm = test_function_params(spec, p, eps, G_p, expansion)
        Jn = eval_test_function_J(spec, prm)
        Ja = asymptotic_J(spec, p, h_jet, expansion, K_p, eps, psi_jet, A)
        gap = Jn - Ja
        return {
            "eps": eps, "alpha": prm.alpha, "J_numeric": Jn, "J_asymptotic": Ja,
            "gap": gap, "gap_over_eps_neglog_eps": gap / (eps * -np.log(eps)),
        }

    eps_list = [float(e) for e in eps_list]
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as ex:
            rows = list(ex.map(row, eps_list))
    else:
        rows = [row(e) for e in eps_list]
    return SweepResult(rows)
