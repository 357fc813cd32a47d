"""Weighted Green functions and their normal-coordinate expansion constants.

``G_y`` solves ``Delta_g G_y = 8 pi (psi / int psi - delta_y)`` with
``int psi G_y = 0``; near ``y``

    G_y = -4 log r + A_y + b1 r cos t + b2 r sin t
          + c1 r^2 cos^2 t + 2 c2 r^2 cos t sin t + c3 r^2 sin^2 t + O(r^3).
"""
from __future__ import annotations

import csv
import io
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .errors import EmptyDomainError, ExpansionInvalidError, FitError
from .surface import (
    ScalarField,
    SurfaceMesh,
    chart_limit,
    normal_chart,
    solve_poisson,
    weight_integral,
)
from .surface.mesh import icosphere_geometry

ANNULUS_CELLS = (6.0, 24.0)
MIN_ANNULUS_NODES = 50


@dataclass(frozen=True)
class GreenExpansion:
    pole: int
    A: float
    b: tuple
    c: tuple
    fit_rms: float
    annulus: tuple

    @property
    def c_trace(self) -> float:
        """``c1 + c3``."""
        return self.c[0] + self.c[2]

    def regular_part(self, r, theta):
        """Second-order expansion of ``G + 4 log r`` at polar chart points."""
        cs, sn = np.cos(theta), np.sin(theta)
        b1, b2 = self.b
        c1, c2, c3 = self.c
        return (
            self.A
            + r * (b1 * cs + b2 * sn)
            + r**2 * (c1 * cs**2 + 2 * c2 * cs * sn + c3 * sn**2)
        )

    def as_dict(self) -> dict:
        return {
            "pole": self.pole,
            "A": self.A,
            "b1": self.b[0],
            "b2": self.b[1],
            "c1": self.c[0],
            "c2": self.c[1],
            "c3": self.c[2],
            "fit_rms": self.fit_rms,
            "r_in": self.annulus[0],
            "r_out": self.annulus[1],
        }


def discrete_delta(mesh: SurfaceMesh, y: int) -> np.ndarray:
    """Nodal delta ``1 / w_y`` at ``y``, mean-corrected to integrate to exactly one."""
    d = np.zeros(mesh.num_nodes)
    d[y] = 1.0 / mesh.area_weights[y]
    d -= (np.dot(d, mesh.area_weights) - 1.0) / mesh.total_area
    return d


def solve_green(mesh: SurfaceMesh, psi: ScalarField, y: int) -> ScalarField:
    y = int(y)
    psi_int = weight_integral(mesh, psi)
    rhs = 8.0 * np.pi * (psi.values / psi_int - discrete_delta(mesh, y))
    return solve_poisson(mesh, mesh.field(rhs), psi)


def default_annulus(mesh: SurfaceMesh, y: int):
    h = mesh.spacing_at(y)
    r_in, r_out = ANNULUS_CELLS[0] * h, ANNULUS_CELLS[1] * h
    return r_in, min(r_out, chart_limit(mesh))


def fit_expansion(
    mesh: SurfaceMesh, G: ScalarField, y: int, annulus: Optional[tuple] = None
) -> GreenExpansion:
    """Least-squares fit of ``G + 4 log r`` on an annulus of the normal chart."""
    vals = mesh.check(G)
    y = int(y)
    r_in, r_out = default_annulus(mesh, y) if annulus is None else annulus
    h = mesh.spacing_at(y)
    if r_in < 4.0 * h * (1 - 1e-12):
        raise FitError(f"inner annulus radius {r_in:.3g} below four mesh cells ({4 * h:.3g})")
    chart = normal_chart(mesh, y, r_out)
    sel = chart.r >= r_in
    if np.count_nonzero(sel) < MIN_ANNULUS_NODES:
        raise FitError(f"annulus holds {np.count_nonzero(sel)} nodes, need {MIN_ANNULUS_NODES}")
    r, t = chart.r[sel], chart.theta[sel]
    cs, sn = np.cos(t), np.sin(t)
    B = np.column_stack([np.ones_like(r), r * cs, r * sn, r**2 * cs**2, 2 * r**2 * cs * sn, r**2 * sn**2])
    target = vals[chart.index[sel]] + 4.0 * np.log(r)
    coef, *_ = np.linalg.lstsq(B, target, rcond=None)
    rms = float(np.sqrt(np.mean((B @ coef - target) ** 2)))
    exp = GreenExpansion(
        pole=y,
        A=float(coef[0]),
        b=(float(coef[1]), float(coef[2])),
        c=(float(coef[3]), float(coef[4]), float(coef[5])),
        fit_rms=rms,
        annulus=(float(r_in), float(r_out)),
    )
    if rms > 0.05 * abs(exp.A) + 1e-6:
        raise ExpansionInvalidError(f"fit rms {rms:.3g} too large relative to A = {exp.A:.4g}")
    return exp


def green_expansion(mesh: SurfaceMesh, psi: ScalarField, y: int, annulus=None):
    """Solve for ``G_y`` and fit its expansion; returns ``(G, expansion)``."""
    G = solve_green(mesh, psi, y)
    return G, fit_expansion(mesh, G, y, annulus)


def richardson(coarse: float, fine: float, order: float = 2.0) -> float:
    """Extrapolate two values at spacings ``h`` and ``h/2``."""
    f = 2.0**order
    return (f * fine - coarse) / (f - 1.0)


# ------------------------------------------------------------------ Robin field


def default_samples(mesh: SurfaceMesh, per_side: int = 8) -> np.ndarray:
    """Coarse sample grid: ``per_side^2`` torus nodes, or one node per icosahedron face."""
    if mesh.is_torus:
        n = mesh.resolution
        idx = (np.arange(per_side) * n) // per_side
        I, J = np.meshgrid(idx, idx, indexing="ij")
        return (I * n + J).ravel()
    v, f = icosphere_geometry(0)
    cents = v[f].mean(axis=1)
    cents /= np.linalg.norm(cents, axis=1, keepdims=True)
    return np.array([int(np.argmax(mesh.nodes @ c)) for c in cents])


@dataclass(frozen=True)
class RobinField:
    samples: np.ndarray
    A: np.ndarray  # nan on Z
    h: np.ndarray
    in_Z: np.ndarray
    argmax: int
    max_value: float
    expansions: tuple

    @property
    def values(self) -> np.ndarray:
        with np.errstate(divide="ignore"):
            out = 2.0 * np.log(np.where(self.in_Z, 1.0, self.h)) + self.A
        return np.where(self.in_Z, np.nan, out)

    def to_csv(self, mesh: SurfaceMesh) -> str:
        buf = io.StringIO()
        wr = csv.writer(buf, lineterminator="\n")
        coords = ["x", "y"] if mesh.is_torus else ["x", "y", "z"]
        wr.writerow(["sample_node", *coords, "h", "A_y", "two_log_h_plus_A", "in_Z"])
        vals = self.values
        for i, s in enumerate(self.samples):
            wr.writerow(
                [int(s), *(_fmt(c) for c in mesh.nodes[s]), _fmt(self.h[i]), _fmt(self.A[i]),
                 _fmt(vals[i]), int(self.in_Z[i])]
            )
        return buf.getvalue()


def _fmt(x) -> str:
    x = float(x)
    return "nan" if np.isnan(x) else format(x, ".17g")


def robin_field(
    mesh: SurfaceMesh,
    psi: ScalarField,
    h: ScalarField,
    samples: Optional[Sequence[int]] = None,
    h_zero_tol: Optional[float] = None,
    threads: int = 1,
) -> RobinField:
    """``A_y`` over sample nodes and the maximizer of ``2 log h(y) + A_y`` off ``Z``."""
    hv = mesh.check(h)
    samples = default_samples(mesh) if samples is None else np.asarray(samples, dtype=int)
    if samples.size == 0:
        raise EmptyDomainError("no sample nodes given")
    tol = 1e-8 * float(np.max(hv)) if h_zero_tol is None else h_zero_tol
    in_Z = hv[samples] <= tol
    if np.all(in_Z):
        raise EmptyDomainError("every sample lies in the zero set of h")
    todo = [int(s) for s, z in zip(samples, in_Z) if not z]

    def one(y):
        return green_expansion(mesh, psi, y)[1]

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as ex:
            exps = list(ex.map(one, todo))
    else:
        exps = [one(y) for y in todo]
    A = np.full(samples.size, np.nan)
    A[~in_Z] = [e.A for e in exps]
    vals = np.where(in_Z, -np.inf, 2.0 * np.log(np.where(in_Z, 1.0, hv[samples])) + np.nan_to_num(A))
    best = float(np.max(vals))
    # ties go to the lowest node index
    ties = samples[vals == best]
    arg = int(np.min(ties))
    return RobinField(samples, A, hv[samples].copy(), in_Z, arg, best, tuple(exps))
