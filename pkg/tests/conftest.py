from __future__ import annotations

import numpy as np
import pytest

from fingercell.geometry import Rotation, TriangleMesh


def random_mesh(rng: np.random.Generator, n_triangles: int, scale: float = 100.0) -> TriangleMesh:
    """Random triangle soup with float32-representable coordinates.

    Coordinates are snapped to float32 so binary STL round-trips are exact
    and the 1e-6 mm tolerance is meaningful at this scale.
    """
    vertices = rng.uniform(-scale, scale, size=(3 * n_triangles, 3))
    vertices = vertices.astype(np.float32).astype(np.float64)
    triangles = np.arange(3 * n_triangles).reshape(-1, 3)
    normals = rng.uniform(-1.0, 1.0, size=(n_triangles, 3))
    normals = normals.astype(np.float32).astype(np.float64)
    return TriangleMesh(vertices=vertices, triangles=triangles, facet_normals=normals)


def random_rotation(rng: np.random.Generator) -> Rotation:
    """Uniform-ish random rotation via QR decomposition."""
    q, r = np.linalg.qr(rng.normal(size=(3, 3)))
    q *= np.sign(np.diag(r))
    if np.linalg.det(q) < 0:
        q[:, 2] *= -1
    return Rotation(q)


def box_mesh(size=(1.0, 1.0, 1.0), origin=(0.0, 0.0, 0.0)) -> TriangleMesh:
    """Axis-aligned box as 12 triangles, min corner at ``origin``."""
    sx, sy, sz = size
    ox, oy, oz = origin
    corners = np.array(
        [
            [0, 0, 0], [1, 0, 0], [1, 1, 0], [0, 1, 0],
            [0, 0, 1], [1, 0, 1], [1, 1, 1], [0, 1, 1],
        ],
        dtype=np.float64,
    ) * np.array([sx, sy, sz]) + np.array([ox, oy, oz])
    faces = np.array(
        [
            [0, 2, 1], [0, 3, 2],  # bottom
            [4, 5, 6], [4, 6, 7],  # top
            [0, 1, 5], [0, 5, 4],  # front
            [2, 3, 7], [2, 7, 6],  # back
            [1, 2, 6], [1, 6, 5],  # right
            [0, 4, 7], [0, 7, 3],  # left
        ],
        dtype=np.intp,
    )
    return TriangleMesh(vertices=corners, triangles=faces)


def scan_hazards(text: str) -> tuple[int, int, int]:
    """Independent hazard count: (bare homes, probe sweeps, leveling enables).

    Deliberately written as a token scanner, unlike the regex parser under
    test, so both would have to be wrong in the same way to agree by luck.
    """
    bare = probes = enables = 0
    for line in text.splitlines():
        fields = line.split(";")[0].strip().upper().split()
        if not fields:
            continue
        head = fields[0]
        if head == "G28" and not any(f[0] in "XYZ" for f in fields[1:]):
            bare += 1
        elif head == "G29":
            probes += 1
        elif head == "M420":
            for f in fields[1:]:
                if f[0] == "S":
                    try:
                        if float(f[1:]) == 1:
                            enables += 1
                    except ValueError:
                        pass
    return bare, probes, enables


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(20250825)
