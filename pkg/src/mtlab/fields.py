"""Random smooth test fields."""
from __future__ import annotations

import numpy as np

from .errors import InvalidArgumentError
from .surface import ScalarField, SurfaceMesh


def random_bandlimited(
    mesh: SurfaceMesh, rng: np.random.Generator, amplitude: float = 1.0, bandlimit: int = 4
) -> ScalarField:
    """Random smooth field with ``max |u| = amplitude``.

    Torus: Fourier modes with ``|k|_inf <= bandlimit``. Triangle mesh: a random
    polynomial of degree ``<= bandlimit`` in the ambient coordinates.
    """
    if mesh.is_torus:
        n = mesh.resolution
        if 2 * bandlimit >= n:
            raise InvalidArgumentError("bandlimit too large for the grid")
        ks = np.arange(-bandlimit, bandlimit + 1)
        KX, KY = np.meshgrid(ks, ks, indexing="ij")
        coef = (rng.standard_normal(KX.shape) + 1j * rng.standard_normal(KX.shape)) / (
            1.0 + KX**2 + KY**2
        )
        spec = np.zeros((n, n), dtype=complex)
        spec[KX % n, KY % n] = coef
        vals = np.fft.ifft2(spec).real.ravel()
    else:
        X, Y, Z = mesh.nodes.T
        vals = np.zeros(mesh.num_nodes)
        for i in range(bandlimit + 1):
            for j in range(bandlimit + 1 - i):
                for k in range(bandlimit + 1 - i - j):
                    if i + j + k:
                        vals += rng.standard_normal() * X**i * Y**j * Z**k
    peak = float(np.max(np.abs(vals)))
    if peak == 0.0:
        return mesh.constant(0.0)
    return mesh.field(amplitude * vals / peak)
