"""Geodesic polar (normal) charts and local 2-jets.

On the torus backend the chart is built by shooting geodesics of the
conformal metric from the center (Newton on the endpoint map, Jacobi fields
for the derivative), so ``r`` is the true geodesic distance up to the RK4
integration error rather than a grid-path approximation.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import FitError, InvalidArgumentError
from .mesh import ScalarField, SurfaceMesh
from .operators import flat_gradient, flat_hessian, flat_laplacian

RK4_STEPS = 64
NEWTON_TOL = 1e-13
JET_RADIUS_CELLS = 6.0
JET_SIGMA_CELLS = 2.0


@dataclass(frozen=True)
class NormalChart:
    """Normal polar coordinates around ``center`` for nodes with ``r <= r_max``."""

    center: int
    r_max: float
    index: np.ndarray  # node indices inside the chart
    r: np.ndarray
    theta: np.ndarray
    mask: np.ndarray  # boolean over all nodes

    @property
    def coords(self) -> np.ndarray:
        return np.column_stack([self.r * np.cos(self.theta), self.r * np.sin(self.theta)])


@dataclass(frozen=True)
class LocalJet:
    """Value, gradient and Hessian of a field at a node, in the normal chart."""

    center: int
    value: float
    grad: np.ndarray
    hessian: np.ndarray
    laplacian: float

    @property
    def expansion_coefficients(self):
        """``(l1, l2, l3, l4, l5)`` of ``f - f(p) = l1 r cos + l2 r sin + l3 r^2 cos^2 + 2 l4 r^2 sin cos + l5 r^2 sin^2``."""
        H = self.hessian
        return (self.grad[0], self.grad[1], 0.5 * H[0, 0], 0.5 * H[0, 1], 0.5 * H[1, 1])


# -------------------------------------------------------------- torus geodesics


def _phi_modes(mesh: SurfaceMesh):
    c = mesh._cache
    if "phi_modes" not in c:
        n = mesh.resolution
        coef = np.fft.fft2(mesh.conformal_factor.reshape(n, n)) / n**2
        k = np.fft.fftfreq(n, 1.0 / n)
        KX, KY = np.meshgrid(k, k, indexing="ij")
        keep = np.abs(coef) > 1e-14 * max(1.0, float(np.max(np.abs(coef))))
        keep[0, 0] = False
        c["phi_modes"] = (
            2.0 * np.pi * np.column_stack([KX[keep], KY[keep]]),
            coef[keep],
            float(np.real(coef[0, 0])),
        )
    return c["phi_modes"]


def _phi_eval(mesh: SurfaceMesh, pts: np.ndarray, order: int = 2):
    """Conformal factor, gradient and Hessian at arbitrary points (Fourier interpolant)."""
    K, coef, mean = _phi_modes(mesh)
    e = np.exp(1j * (pts @ K.T)) * coef  # (M, modes)
    phi = mean + np.real(e.sum(axis=1))
    if order == 0:
        return phi
    grad = np.real(1j * e @ K)
    hess = -np.real(np.einsum("mk,ki,kj->mij", e, K, K))
    return phi, grad, hess


def _geodesic_rhs(mesh, x, w, J):
    _, g, H = _phi_eval(mesh, x)
    gw = np.einsum("mi,mi->m", g, w)
    ww = np.einsum("mi,mi->m", w, w)
    a = -2.0 * gw[:, None] * w + ww[:, None] * g
    eye = np.eye(2)
    Aw = -2.0 * w[:, :, None] * g[:, None, :] - 2.0 * gw[:, None, None] * eye + 2.0 * g[:, :, None] * w[:, None, :]
    Hw = np.einsum("mjl,mj->ml", H, w)
    Ax = -2.0 * w[:, :, None] * Hw[:, None, :] + ww[:, None, None] * H
    Jx, Jw = J[:, :2, :], J[:, 2:, :]
    dJ = np.concatenate([Jw, Ax @ Jx + Aw @ Jw], axis=1)
    return w, a, dJ


def _shoot(mesh, p, v, steps):
    """Endpoint ``exp_p(v)`` and its Jacobian in ``v`` by RK4."""
    M = v.shape[0]
    x = np.broadcast_to(p, (M, 2)).astype(float).copy()
    w = v.copy()
    J = np.zeros((M, 4, 2))
    J[:, 2, 0] = J[:, 3, 1] = 1.0
    dt = 1.0 / steps
    for _ in range(steps):
        k1 = _geodesic_rhs(mesh, x, w, J)
        k2 = _geodesic_rhs(mesh, x + 0.5 * dt * k1[0], w + 0.5 * dt * k1[1], J + 0.5 * dt * k1[2])
        k3 = _geodesic_rhs(mesh, x + 0.5 * dt * k2[0], w + 0.5 * dt * k2[1], J + 0.5 * dt * k2[2])
        k4 = _geodesic_rhs(mesh, x + dt * k3[0], w + dt * k3[1], J + dt * k3[2])
        x = x + dt / 6.0 * (k1[0] + 2 * k2[0] + 2 * k3[0] + k4[0])
        w = w + dt / 6.0 * (k1[1] + 2 * k2[1] + 2 * k3[1] + k4[1])
        J = J + dt / 6.0 * (k1[2] + 2 * k2[2] + 2 * k3[2] + k4[2])
    return x, J[:, :2, :]


def _torus_polar(mesh: SurfaceMesh, y: int, pts: np.ndarray, steps: int = RK4_STEPS):
    p = mesh.nodes[y]
    dz = pts - p
    dz -= np.round(dz)  # minimum image
    phi_p = mesh.conformal_factor[y]
    if np.ptp(mesh.conformal_factor) == 0.0:
        v = dz
        ok = np.ones(len(dz), dtype=bool)
    else:
        target = p + dz
        v = dz.copy()
        ok = np.zeros(len(dz), dtype=bool)
        for _ in range(30):
            todo = ~ok
            if not np.any(todo):
                break
            end, jac = _shoot(mesh, p, v[todo], steps)
            F = end - target[todo]
            err = np.max(np.abs(F), axis=1)
            step = np.linalg.solve(jac, F[:, :, None])[:, :, 0]
            vt = v[todo] - step
            v[todo] = vt
            done = err < NEWTON_TOL
            idx = np.flatnonzero(todo)
            ok[idx[done]] = True
    r = np.exp(phi_p) * np.hypot(v[:, 0], v[:, 1])
    theta = np.arctan2(v[:, 1], v[:, 0])
    return r, theta, ok


# ------------------------------------------------------------- sphere geometry


def _sphere_frame(p):
    p = p / np.linalg.norm(p)
    a = np.eye(3)[np.argmin(np.abs(p))]
    e1 = a - np.dot(a, p) * p
    e1 /= np.linalg.norm(e1)
    e2 = np.cross(p, e1)
    return p, e1, e2


def _sphere_polar(mesh: SurfaceMesh, y: int, pts: np.ndarray):
    p, e1, e2 = _sphere_frame(mesh.nodes[y])
    q = pts / np.linalg.norm(pts, axis=1, keepdims=True)
    r = np.arccos(np.clip(q @ p, -1.0, 1.0))
    theta = np.arctan2(q @ e2, q @ e1)
    return r, theta, np.ones(len(q), dtype=bool)


# ------------------------------------------------------------------ public API


def chart_limit(mesh: SurfaceMesh) -> float:
    """Largest admissible chart radius (injectivity-radius proxy)."""
    if mesh.is_torus:
        return 0.5 * float(np.exp(np.min(mesh.conformal_factor)))
    return 0.5 * np.pi


def polar_coordinates(mesh: SurfaceMesh, y: int, points, steps: int = RK4_STEPS):
    """Normal polar coordinates ``(r, theta, ok)`` of arbitrary points about node ``y``."""
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    if mesh.is_torus:
        return _torus_polar(mesh, y, pts, steps)
    return _sphere_polar(mesh, y, pts)


def normal_chart(mesh: SurfaceMesh, y: int, r_max: float) -> NormalChart:
    limit = chart_limit(mesh)
    if not 0.0 < r_max <= limit:
        raise InvalidArgumentError(f"chart radius {r_max:.4g} outside (0, {limit:.4g}]")
    y = int(y)
    cache = mesh._cache.setdefault("charts", {})
    key = (y, float(r_max))
    if key in cache:
        return cache[key]
    if mesh.is_torus:
        dz = mesh.nodes - mesh.nodes[y]
        dz -= np.round(dz)
        flat = np.hypot(dz[:, 0], dz[:, 1])
        cand = np.flatnonzero(flat <= r_max * np.exp(-np.min(mesh.conformal_factor)) * (1 + 1e-12))
    else:
        cand = np.arange(mesh.num_nodes)
    r, theta, ok = polar_coordinates(mesh, y, mesh.nodes[cand])
    keep = ok & (r <= r_max)
    idx = cand[keep]
    mask = np.zeros(mesh.num_nodes, dtype=bool)
    mask[idx] = True
    chart = NormalChart(y, float(r_max), idx, r[keep], theta[keep], mask)
    if len(cache) > 32:
        cache.clear()
    cache[key] = chart
    return chart


def distances_from(mesh: SurfaceMesh, y: int) -> np.ndarray:
    """Geodesic distance from ``y`` to every node.

    Exact (chart) inside the chart limit; outside it a midpoint-metric proxy
    is used, which only needs to stay above the limit.
    """
    chart = normal_chart(mesh, y, chart_limit(mesh))
    if mesh.is_torus:
        dz = mesh.nodes - mesh.nodes[y]
        dz -= np.round(dz)
        phi = mesh.conformal_factor
        d = np.exp(0.5 * (phi + phi[y])) * np.hypot(dz[:, 0], dz[:, 1])
        d = np.maximum(d, chart.r_max * (1 + 1e-12))
    else:
        d = np.full(mesh.num_nodes, np.inf)
    d[chart.index] = chart.r
    return d


def local_jet(mesh: SurfaceMesh, f: ScalarField, p: int) -> LocalJet:
    """2-jet of ``f`` at node ``p`` in the normal chart.

    Torus: exact spectral derivatives turned into the covariant Hessian of the
    conformal metric. Triangle mesh: Gaussian-weighted least-squares quadratic
    fit over the normal chart.
    """
    vals = mesh.check(f)
    p = int(p)
    if mesh.is_torus:
        n = mesh.resolution
        grid = vals.reshape(n, n)
        phi = mesh.conformal_factor
        s = np.exp(-phi[p])
        gx, gy = (a.ravel()[p] for a in flat_gradient(mesh, grid))
        fxx, fxy, fyy = (a.ravel()[p] for a in flat_hessian(mesh, grid))
        px, py = (a.ravel()[p] for a in flat_gradient(mesh, phi.reshape(n, n)))
        df = np.array([gx, gy])
        dphi = np.array([px, py])
        hess = np.array([[fxx, fxy], [fxy, fyy]])
        # covariant Hessian: subtract Gamma^k_ij f_k for the conformal metric
        corr = np.outer(df, dphi) + np.outer(dphi, df) - np.eye(2) * np.dot(dphi, df)
        H = s**2 * (hess - corr)
        lap = s**2 * flat_laplacian(mesh, grid).ravel()[p]
        return LocalJet(p, float(vals[p]), s * df, 0.5 * (H + H.T), float(lap))
    h = mesh.h
    chart = normal_chart(mesh, p, min(JET_RADIUS_CELLS * h, chart_limit(mesh)))
    v = chart.coords
    if v.shape[0] < 10:
        raise FitError("local jet stencil has too few nodes")
    sw = np.exp(-0.25 * chart.r**2 / (JET_SIGMA_CELLS * h) ** 2)
    B = np.column_stack([np.ones(len(v)), v[:, 0], v[:, 1], v[:, 0] ** 2, v[:, 0] * v[:, 1], v[:, 1] ** 2])
    Bw = B * sw[:, None]
    if np.linalg.cond(Bw) > 1e12:
        raise FitError("degenerate local jet stencil")
    coef, *_ = np.linalg.lstsq(Bw, vals[chart.index] * sw, rcond=None)
    H = np.array([[2 * coef[3], coef[4]], [coef[4], 2 * coef[5]]])
    return LocalJet(p, float(vals[p]), coef[1:3].copy(), H, float(H[0, 0] + H[1, 1]))
