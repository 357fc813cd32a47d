"""Quadrature, Dirichlet energy, Laplace-Beltrami, Poisson solves and curvature.

Sign convention: ``apply_laplacian`` returns the negative-spectrum operator,
so ``cos(2 pi x)`` maps to ``-4 pi^2 cos(2 pi x)`` on the flat unit torus.
"""
from __future__ import annotations

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from ..errors import IncompatibilityError, InvalidWeightError, NumericError
from .mesh import ScalarField, SurfaceMesh

COMPAT_RTOL = 1e-10


# ---------------------------------------------------------------- torus helpers


def _symbols(mesh: SurfaceMesh):
    c = mesh._cache
    if "symbols" not in c:
        n = mesh.resolution
        kx = 2.0 * np.pi * np.fft.fftfreq(n, 1.0 / n)
        ky = 2.0 * np.pi * np.fft.rfftfreq(n, 1.0 / n)
        KX, KY = np.meshgrid(kx, ky, indexing="ij")
        lap = -(KX**2 + KY**2)
        # first derivatives drop the unpaired Nyquist mode
        dx = 1j * KX
        dx[n // 2, :] = 0.0
        dy = 1j * KY
        dy[:, -1] = 0.0
        c["symbols"] = (lap, dx, dy)
    return c["symbols"]


def _rfft(a):
    return np.fft.rfft2(a)


def _irfft(a, n):
    return np.fft.irfft2(a, s=(n, n))


def flat_laplacian(mesh: SurfaceMesh, grid: np.ndarray) -> np.ndarray:
    lap, _, _ = _symbols(mesh)
    return _irfft(lap * _rfft(grid), mesh.resolution)


def flat_gradient(mesh: SurfaceMesh, grid: np.ndarray):
    _, dx, dy = _symbols(mesh)
    g = _rfft(grid)
    n = mesh.resolution
    return _irfft(dx * g, n), _irfft(dy * g, n)


def flat_hessian(mesh: SurfaceMesh, grid: np.ndarray):
    """Second partials ``(f_xx, f_xy, f_yy)`` by spectral differentiation."""
    lap, dx, dy = _symbols(mesh)
    g = _rfft(grid)
    n = mesh.resolution
    return _irfft(dx * dx * g, n), _irfft(dx * dy * g, n), _irfft(dy * dy * g, n)


def _conformal_is_constant(mesh: SurfaceMesh) -> bool:
    phi = mesh.conformal_factor
    return bool(np.ptp(phi) == 0.0)


# ------------------------------------------------------------ triangle helpers


def _triangle_frames(mesh: SurfaceMesh):
    c = mesh._cache
    if "p1grad" not in c:
        v, t = mesh.nodes, mesh.triangles
        p0, p1, p2 = v[t[:, 0]], v[t[:, 1]], v[t[:, 2]]
        nrm = np.cross(p1 - p0, p2 - p0)
        twoA = np.linalg.norm(nrm, axis=1)
        nh = nrm / twoA[:, None]
        g0 = np.cross(nh, p2 - p1) / twoA[:, None]
        g1 = np.cross(nh, p0 - p2) / twoA[:, None]
        g2 = np.cross(nh, p1 - p0) / twoA[:, None]
        c["p1grad"] = (np.stack([g0, g1, g2], axis=1), 0.5 * twoA)
    return c["p1grad"]


def stiffness(mesh: SurfaceMesh) -> sp.csr_matrix:
    """Cotangent stiffness matrix ``S`` with ``u^T S u = int |grad u|^2``."""
    c = mesh._cache
    if "stiffness" not in c:
        grads, area = _triangle_frames(mesh)
        t = mesh.triangles
        rows, cols, vals = [], [], []
        for a in range(3):
            for b in range(3):
                rows.append(t[:, a])
                cols.append(t[:, b])
                vals.append(area * np.einsum("ij,ij->i", grads[:, a], grads[:, b]))
        N = mesh.num_nodes
        S = sp.coo_matrix(
            (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(N, N)
        ).tocsr()
        S = 0.5 * (S + S.T)
        c["stiffness"] = S.tocsr()
    return c["stiffness"]


# --------------------------------------------------------------- public API


def integrate(mesh: SurfaceMesh, f: ScalarField) -> float:
    """Nodal quadrature ``sum_i f_i w_i`` of ``int f dv_g``."""
    return float(np.dot(mesh.check(f), mesh.area_weights))


def lp_norm(mesh: SurfaceMesh, values: np.ndarray, p: float) -> float:
    return float(np.sum(np.abs(values) ** p * mesh.area_weights) ** (1.0 / p))


def dirichlet_energy(mesh: SurfaceMesh, u: ScalarField) -> float:
    """``int |grad_g u|^2 dv_g`` (no factor one half)."""
    vals = mesh.check(u)
    if mesh.is_torus:
        n = mesh.resolution
        grid = vals.reshape(n, n)
        return float(-np.sum(grid * flat_laplacian(mesh, grid)) / n**2)
    return float(vals @ (stiffness(mesh) @ vals))


def apply_laplacian(mesh: SurfaceMesh, u: ScalarField) -> ScalarField:
    vals = mesh.check(u)
    if mesh.is_torus:
        n = mesh.resolution
        out = flat_laplacian(mesh, vals.reshape(n, n)).ravel()
        out = out * np.exp(-2.0 * mesh.conformal_factor)
    else:
        out = -(stiffness(mesh) @ vals) / mesh.area_weights
    return mesh.field(out)


def gradient_magnitude(mesh: SurfaceMesh, u: ScalarField):
    """Per-cell metric gradient norms and the matching cell quadrature weights.

    Torus cells are the grid nodes (spectral partials); triangle-mesh cells
    are the triangles (piecewise-linear gradients).
    """
    vals = mesh.check(u)
    if mesh.is_torus:
        n = mesh.resolution
        gx, gy = flat_gradient(mesh, vals.reshape(n, n))
        mag = np.hypot(gx, gy).ravel() * np.exp(-mesh.conformal_factor)
        return mag, mesh.area_weights
    grads, area = _triangle_frames(mesh)
    g = np.einsum("tk,tkd->td", vals[mesh.triangles], grads)
    return np.linalg.norm(g, axis=1), area


def gradient_lq_norm(mesh: SurfaceMesh, u: ScalarField, q: float) -> float:
    mag, w = gradient_magnitude(mesh, u)
    return float(np.sum(mag**q * w) ** (1.0 / q))


def weight_integral(mesh: SurfaceMesh, psi: ScalarField) -> float:
    """``int psi dv_g``, raising when it vanishes relative to ``int |psi|``."""
    vals = mesh.check(psi)
    total = float(np.dot(vals, mesh.area_weights))
    scale = float(np.dot(np.abs(vals), mesh.area_weights))
    if scale == 0.0 or abs(total) <= COMPAT_RTOL * scale:
        raise InvalidWeightError("weight psi must satisfy int psi dv_g != 0")
    return total


def _torus_poisson(mesh: SurfaceMesh, rhs_flat: np.ndarray) -> np.ndarray:
    """Zero-mean solution of ``Delta_flat u = rhs_flat`` (rhs given with zero mean)."""
    lap, _, _ = _symbols(mesh)
    n = mesh.resolution
    g = _rfft(rhs_flat.reshape(n, n))
    sym = lap.copy()
    sym[0, 0] = 1.0
    g = g / sym
    g[0, 0] = 0.0
    return _irfft(g, n).ravel()


def _bordered_lu(mesh: SurfaceMesh):
    c = mesh._cache
    if "bordered_lu" not in c:
        S = stiffness(mesh)
        w = mesh.area_weights[:, None]
        K = sp.bmat([[S, sp.csr_matrix(w)], [sp.csr_matrix(w.T), None]], format="csc")
        c["bordered_lu"] = spla.splu(K)
    return c["bordered_lu"]


def solve_poisson(mesh: SurfaceMesh, f: ScalarField, psi: ScalarField) -> ScalarField:
    """Solve ``Delta_g u = f`` with the normalization ``int psi u dv_g = 0``."""
    fv = mesh.check(f)
    pv = mesh.check(psi)
    psi_int = weight_integral(mesh, psi)
    w = mesh.area_weights
    total = float(np.dot(fv, w))
    scale = float(np.dot(np.abs(fv), w))
    if abs(total) > COMPAT_RTOL * scale + 1e-300:
        raise IncompatibilityError(
            f"right-hand side must integrate to zero (got {total:.3e}, scale {scale:.3e})"
        )
    fv = fv - total / mesh.total_area
    if mesh.is_torus:
        u = _torus_poisson(mesh, fv * np.exp(2.0 * mesh.conformal_factor))
    else:
        rhs = np.concatenate([-w * fv, [0.0]])
        u = _bordered_lu(mesh).solve(rhs)[:-1]
    u = u - np.dot(pv, u * w) / psi_int
    out = mesh.field(u)
    res = apply_laplacian(mesh, out).values - fv
    fnorm = np.linalg.norm(fv)
    if fnorm > 0 and np.linalg.norm(res) > 1e-9 * fnorm:
        raise NumericError(f"Poisson residual {np.linalg.norm(res) / fnorm:.2e} above tolerance")
    return out


def solve_shifted(mesh: SurfaceMesh, g: np.ndarray, kappa: float = 1.0) -> np.ndarray:
    """Solve ``(-Delta_g + kappa) d = g`` for nodal arrays (``kappa > 0``)."""
    w = mesh.area_weights
    if mesh.is_torus:
        n = mesh.resolution
        lap, _, _ = _symbols(mesh)
        if _conformal_is_constant(mesh):
            s = np.exp(-2.0 * mesh.conformal_factor[0])
            return _irfft(_rfft(g.reshape(n, n)) / (-s * lap + kappa), n).ravel()
        # nodal SPD form: (K + kappa W) d = W g with K = -Delta_flat / n^2
        wbar = float(np.mean(w))

        def matvec(d):
            return -flat_laplacian(mesh, d.reshape(n, n)).ravel() / n**2 + kappa * w * d

        def precond(r):
            return _irfft(_rfft(r.reshape(n, n)) / (-lap / n**2 + kappa * wbar), n).ravel()

        N = n * n
        A = spla.LinearOperator((N, N), matvec=matvec, dtype=float)
        M = spla.LinearOperator((N, N), matvec=precond, dtype=float)
        d, info = spla.cg(A, w * g, rtol=1e-13, atol=0.0, maxiter=500, M=M)
        if info != 0:
            raise NumericError("shifted Laplacian solve did not converge")
        return d
    c = mesh._cache.setdefault("shifted_lu", {})
    if kappa not in c:
        c[kappa] = spla.splu((stiffness(mesh) + kappa * sp.diags(w)).tocsc())
    return c[kappa].solve(w * g)


def angle_defects(mesh: SurfaceMesh) -> np.ndarray:
    v, t = mesh.nodes, mesh.triangles
    defect = np.full(mesh.num_nodes, 2.0 * np.pi)
    for k in range(3):
        a = v[t[:, k]]
        b = v[t[:, (k + 1) % 3]] - a
        c = v[t[:, (k + 2) % 3]] - a
        ang = np.arctan2(np.linalg.norm(np.cross(b, c), axis=1), np.einsum("ij,ij->i", b, c))
        np.subtract.at(defect, t[:, k], ang)
    return defect


def gaussian_curvature(mesh: SurfaceMesh) -> ScalarField:
    if mesh.is_torus:
        n = mesh.resolution
        phi = mesh.conformal_factor
        K = -np.exp(-2.0 * phi) * flat_laplacian(mesh, phi.reshape(n, n)).ravel()
    else:
        K = angle_defects(mesh) / mesh.area_weights
    return mesh.field(K)
