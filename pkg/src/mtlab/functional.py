"""The weighted Moser-Trudinger functional, its gradient and inequality ratios.

    J_eps(u) = 1/2 int |grad u|^2 + 8 pi (1 - eps) u~ - 8 pi (1 - eps) log int h e^u

with ``u~ = int psi u / int psi``. Laplacians follow the negative-spectrum
convention of :mod:`mtlab.surface`, so the critical-point equation reads
``Delta u = 8 pi (1 - eps) (psi / int psi - h e^u / lambda)``.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import DegenerateInputError, InvalidArgumentError, InvalidPointError
from .surface import (
    ScalarField,
    SurfaceMesh,
    apply_laplacian,
    dirichlet_energy,
    gradient_lq_norm,
    lp_norm,
    weight_integral,
)

EIGHT_PI = 8.0 * np.pi
H_ZERO_RTOL = 1e-8


@dataclass(frozen=True, eq=False)
class ProblemSpec:
    """Data of one variational problem: surface, weight ``psi`` and ``h``.

    ``h_zero_tol`` defaults to ``1e-8 * max h`` and defines the discrete zero
    set ``Z``; ``psi_integral`` is computed on construction.
    """

    mesh: SurfaceMesh
    psi: ScalarField
    h: ScalarField
    h_zero_tol: Optional[float] = None
    psi_integral: float = field(init=False)

    def __post_init__(self):
        self.mesh.check(self.psi)
        hv = self.mesh.check(self.h)
        object.__setattr__(self, "psi_integral", weight_integral(self.mesh, self.psi))
        hmax = float(np.max(hv))
        tol = H_ZERO_RTOL * hmax if self.h_zero_tol is None else float(self.h_zero_tol)
        object.__setattr__(self, "h_zero_tol", tol)
        if np.min(hv) < -1e-12:
            raise InvalidArgumentError("h must be nonnegative")
        if not hmax > tol:
            raise InvalidArgumentError("h must not vanish identically")

    @property
    def in_Z(self) -> np.ndarray:
        return self.h.values <= self.h_zero_tol

    def require_positive_h(self, p: int) -> float:
        hp = float(self.h.values[int(p)])
        if hp <= self.h_zero_tol:
            raise InvalidPointError(f"node {p} lies in the zero set of h")
        return hp


@dataclass(frozen=True)
class FunctionalValue:
    J: float
    dirichlet: float
    linear: float
    log_term: float
    eps: float
    lam: float
    log_lambda: float

    def as_dict(self) -> dict:
        return {
            "J": self.J, "dirichlet": self.dirichlet, "linear": self.linear,
            "log_term": self.log_term, "eps": self.eps, "lambda": self.lam,
            "log_lambda": self.log_lambda,
        }


def _check_eps(eps: float) -> float:
    eps = float(eps)
    if not 0.0 <= eps < 1.0:
        raise InvalidArgumentError(f"eps must lie in [0, 1), got {eps}")
    return eps


def tilde_mean(spec: ProblemSpec, u: ScalarField) -> float:
    uv = spec.mesh.check(u)
    return float(np.dot(spec.psi.values * uv, spec.mesh.area_weights) / spec.psi_integral)


def log_integral_exp(mesh: SurfaceMesh, weight: np.ndarray, u: np.ndarray) -> float:
    """``log int weight e^u`` evaluated with a max-shift."""
    m = float(np.max(u))
    s = float(np.dot(weight * np.exp(u - m), mesh.area_weights))
    if not s > 0.0:
        raise InvalidArgumentError("weighted exponential integral is not positive")
    return m + np.log(s)


def eval_J(spec: ProblemSpec, u: ScalarField, eps: float = 0.0) -> FunctionalValue:
    eps = _check_eps(eps)
    uv = spec.mesh.check(u)
    coef = EIGHT_PI * (1.0 - eps)
    dir_ = 0.5 * dirichlet_energy(spec.mesh, u)
    lin = coef * tilde_mean(spec, u)
    loglam = log_integral_exp(spec.mesh, spec.h.values, uv)
    log_term = coef * loglam
    with np.errstate(over="ignore"):
        lam = float(np.exp(loglam))
    return FunctionalValue(dir_ + lin - log_term, dir_, lin, log_term, eps, lam, loglam)


def el_residual(spec: ProblemSpec, u: ScalarField, eps: float = 0.0) -> ScalarField:
    """L2(dv_g) gradient of ``J_eps`` at ``u``.

    ``-Delta u + 8 pi (1 - eps) (psi / int psi - h e^u / lambda)``; it vanishes
    exactly at solutions of the critical-point equation.
    """
    eps = _check_eps(eps)
    uv = spec.mesh.check(u)
    m = float(np.max(uv))
    he = spec.h.values * np.exp(uv - m)
    density = he / float(np.dot(he, spec.mesh.area_weights))
    bracket = spec.psi.values / spec.psi_integral - density
    r = -apply_laplacian(spec.mesh, u).values + EIGHT_PI * (1.0 - eps) * bracket
    return spec.mesh.field(r)


def residual_norm(spec: ProblemSpec, r: ScalarField) -> float:
    return lp_norm(spec.mesh, spec.mesh.check(r), 2.0)


def mt_ratio(spec: ProblemSpec, u: ScalarField, coefficient: float = 1.0 / (16.0 * np.pi)) -> float:
    """``log int e^u - coefficient * ||grad u||_2^2 - u~``.

    The Moser-Trudinger inequality bounds this above by a surface constant at
    the sharp ``coefficient = 1/(16 pi)``.
    """
    uv = spec.mesh.check(u)
    ones = np.ones_like(uv)
    return (
        log_integral_exp(spec.mesh, ones, uv)
        - coefficient * dirichlet_energy(spec.mesh, u)
        - tilde_mean(spec, u)
    )


def _centered(spec: ProblemSpec, u: ScalarField) -> np.ndarray:
    uv = spec.mesh.check(u)
    if np.ptp(uv) <= 1e-14 * max(1.0, float(np.max(np.abs(uv)))):
        raise DegenerateInputError("ratio undefined for a constant field")
    return uv - tilde_mean(spec, u)


def poincare_ratio(spec: ProblemSpec, u: ScalarField, q: float) -> float:
    """``||u - u~||_q / ||grad u||_q`` for ``q > 1``."""
    if not q > 1.0:
        raise InvalidArgumentError("q must exceed 1")
    c = _centered(spec, u)
    return lp_norm(spec.mesh, c, q) / gradient_lq_norm(spec.mesh, u, q)


def sobolev_poincare_ratio(spec: ProblemSpec, u: ScalarField, p: float) -> float:
    """``||u - u~||_p / ||grad u||_2`` for ``p >= 1``."""
    if not p >= 1.0:
        raise InvalidArgumentError("p must be at least 1")
    c = _centered(spec, u)
    return lp_norm(spec.mesh, c, p) / np.sqrt(dirichlet_energy(spec.mesh, u))
