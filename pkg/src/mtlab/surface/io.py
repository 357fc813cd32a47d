"""JSON round-trip for meshes and fields."""
from __future__ import annotations

import numpy as np

from ..errors import InvalidArgumentError, MeshMismatchError
from .mesh import Backend, ScalarField, SurfaceMesh, build_icosphere, build_torus


def mesh_to_dict(mesh: SurfaceMesh) -> dict:
    if mesh.is_torus:
        return {
            "backend": Backend.SPECTRAL_TORUS.value,
            "n": mesh.resolution,
            "phi_c": mesh.conformal_factor.tolist(),
        }
    return {
        "backend": Backend.TRIANGLE_MESH.value,
        "level": mesh.resolution,
        "phi_c": [],
        "nodes": mesh.nodes.tolist(),
    }


def mesh_from_dict(doc: dict) -> SurfaceMesh:
    backend = doc.get("backend")
    if backend == Backend.SPECTRAL_TORUS.value:
        phi = doc.get("phi_c") or None
        return build_torus(int(doc["n"]), None if phi is None else np.asarray(phi, dtype=float))
    if backend == Backend.TRIANGLE_MESH.value:
        mesh = build_icosphere(int(doc["level"]))
        if "nodes" in doc and not np.array_equal(np.asarray(doc["nodes"]), mesh.nodes):
            raise InvalidArgumentError("stored nodes do not match the rebuilt icosphere")
        return mesh
    raise InvalidArgumentError(f"unknown backend {backend!r}")


def field_to_dict(field: ScalarField) -> dict:
    return {"mesh_hash": field.mesh_id, "values": field.values.tolist()}


def field_from_dict(doc: dict, mesh: SurfaceMesh) -> ScalarField:
    if doc.get("mesh_hash") != mesh.mesh_id:
        raise MeshMismatchError("field was serialized against a different mesh")
    return mesh.field(np.asarray(doc["values"], dtype=float))
