"""Mesh export: PLY (lossless reference, carries labels), OBJ, and glTF.

PLY is binary little-endian with float32 positions, uchar colors, and an
extra int32 `label` vertex property when labels are present; byte output
is deterministic so repeated runs compare equal.
"""

from __future__ import annotations

import base64
import json
import struct

import numpy as np

from .core import TriangleMesh


def save_mesh(path, mesh: TriangleMesh, fmt: str) -> None:
    if fmt == "ply":
        save_ply(path, mesh)
    elif fmt == "obj":
        save_obj(path, mesh)
    elif fmt == "gltf":
        save_gltf(path, mesh)
    else:
        raise ValueError(f"unknown export format '{fmt}'")


def _color_u8(mesh: TriangleMesh) -> np.ndarray:
    return np.clip(np.round(mesh.vertex_colors * 255.0), 0, 255).astype(np.uint8)


def save_ply(path, mesh: TriangleMesh) -> None:
    n, m = mesh.n_vertices, mesh.n_faces
    with_labels = mesh.has_labels
    header = ["ply", "format binary_little_endian 1.0", f"element vertex {n}"]
    header += [f"property float {a}" for a in "xyz"]
    header += [f"property uchar {c}" for c in ("red", "green", "blue")]
    if with_labels:
        header.append("property int label")
    header += [
        f"element face {m}",
        "property list uchar int vertex_indices",
        "end_header",
    ]
    vdtype = [("x", "<f4"), ("y", "<f4"), ("z", "<f4"),
              ("red", "u1"), ("green", "u1"), ("blue", "u1")]
    if with_labels:
        vdtype.append(("label", "<i4"))
    verts = np.empty(n, dtype=vdtype)
    verts["x"] = mesh.vertices[:, 0].astype("<f4")
    verts["y"] = mesh.vertices[:, 1].astype("<f4")
    verts["z"] = mesh.vertices[:, 2].astype("<f4")
    colors = _color_u8(mesh)
    verts["red"], verts["green"], verts["blue"] = colors[:, 0], colors[:, 1], colors[:, 2]
    if with_labels:
        verts["label"] = mesh.vertex_labels.astype("<i4")
    fdtype = [("count", "u1"), ("a", "<i4"), ("b", "<i4"), ("c", "<i4")]
    faces = np.empty(m, dtype=fdtype)
    faces["count"] = 3
    faces["a"] = mesh.faces[:, 0].astype("<i4")
    faces["b"] = mesh.faces[:, 1].astype("<i4")
    faces["c"] = mesh.faces[:, 2].astype("<i4")
    with open(path, "wb") as f:
        f.write(("\n".join(header) + "\n").encode("ascii"))
        f.write(verts.tobytes())
        f.write(faces.tobytes())


def load_ply(path) -> TriangleMesh:
    """Reader for the PLY layout written by save_ply."""
    with open(path, "rb") as f:
        header_lines = []
        while True:
            line = f.readline().decode("ascii").strip()
            header_lines.append(line)
            if line == "end_header":
                break
        n = m = 0
        with_labels = False
        for line in header_lines:
            if line.startswith("element vertex"):
                n = int(line.split()[-1])
            elif line.startswith("element face"):
                m = int(line.split()[-1])
            elif line == "property int label":
                with_labels = True
        vdtype = [("x", "<f4"), ("y", "<f4"), ("z", "<f4"),
                  ("red", "u1"), ("green", "u1"), ("blue", "u1")]
        if with_labels:
            vdtype.append(("label", "<i4"))
        verts = np.frombuffer(f.read(np.dtype(vdtype).itemsize * n), dtype=vdtype)
        fdtype = [("count", "u1"), ("a", "<i4"), ("b", "<i4"), ("c", "<i4")]
        faces = np.frombuffer(f.read(np.dtype(fdtype).itemsize * m), dtype=fdtype)
    vertices = np.column_stack([verts["x"], verts["y"], verts["z"]]).astype(np.float64)
    colors = np.column_stack([verts["red"], verts["green"], verts["blue"]]).astype(np.float64) / 255.0
    labels = verts["label"].astype(np.int32) if with_labels else None
    face_idx = np.column_stack([faces["a"], faces["b"], faces["c"]]).astype(np.int64)
    return TriangleMesh(vertices, face_idx, colors, labels)


def save_obj(path, mesh: TriangleMesh) -> None:
    """OBJ with the common xyzrgb vertex-color extension; labels are dropped."""
    with open(path, "w") as f:
        for v, c in zip(mesh.vertices, mesh.vertex_colors):
            f.write(f"v {v[0]:.6f} {v[1]:.6f} {v[2]:.6f} {c[0]:.4f} {c[1]:.4f} {c[2]:.4f}\n")
        for a, b, c in mesh.faces + 1:
            f.write(f"f {a} {b} {c}\n")


def save_gltf(path, mesh: TriangleMesh) -> None:
    """Minimal glTF 2.0 with one primitive and an embedded buffer."""
    positions = mesh.vertices.astype("<f4")
    colors = mesh.vertex_colors.astype("<f4")
    indices = mesh.faces.astype("<u4").reshape(-1)
    blob = positions.tobytes() + colors.tobytes() + indices.tobytes()
    pos_len = positions.nbytes
    col_len = colors.nbytes
    gltf = {
        "asset": {"version": "2.0", "generator": "roomblend"},
        "scene": 0,
        "scenes": [{"nodes": [0]}],
        "nodes": [{"mesh": 0}],
        "meshes": [{
            "primitives": [{
                "attributes": {"POSITION": 0, "COLOR_0": 1},
                "indices": 2,
                "mode": 4,
            }]
        }],
        "buffers": [{
            "byteLength": len(blob),
            "uri": "data:application/octet-stream;base64,"
                   + base64.b64encode(blob).decode("ascii"),
        }],
        "bufferViews": [
            {"buffer": 0, "byteOffset": 0, "byteLength": pos_len, "target": 34962},
            {"buffer": 0, "byteOffset": pos_len, "byteLength": col_len, "target": 34962},
            {"buffer": 0, "byteOffset": pos_len + col_len,
             "byteLength": indices.nbytes, "target": 34963},
        ],
        "accessors": [
            {"bufferView": 0, "componentType": 5126, "count": mesh.n_vertices,
             "type": "VEC3",
             "min": [float(x) for x in positions.min(axis=0)] if mesh.n_vertices else [0, 0, 0],
             "max": [float(x) for x in positions.max(axis=0)] if mesh.n_vertices else [0, 0, 0]},
            {"bufferView": 1, "componentType": 5126, "count": mesh.n_vertices, "type": "VEC3"},
            {"bufferView": 2, "componentType": 5125, "count": int(indices.size),
             "type": "SCALAR"},
        ],
    }
    with open(path, "w") as f:
        json.dump(gltf, f)
