"""STL mesh handling and fingertip placement onto the finger-base print area.

Meshes are plain triangle soups in millimeters.  Placement centers a model
on the x axis, aligns it to the front edge of a virtual boundary box of
size ``b_x`` x ``b_y`` (the finger-base print area), and drops it onto
z = 0.  Re-orientation is the caller's job: it happens once per design,
driven by a configured Euler rotation.
"""

from __future__ import annotations

import io
import math
import re
import struct
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "Aabb",
    "FitCheck",
    "FitError",
    "FitViolation",
    "MeshError",
    "PlacementBox",
    "Rotation",
    "StlParseError",
    "TriangleMesh",
    "bounding_box",
    "check_fit",
    "parse_stl",
    "place_on_base",
    "rotate_mesh",
    "write_stl",
]

ROTATION_TOL = 1e-9

_BINARY_HEADER_SIZE = 80
_BINARY_RECORD_SIZE = 50
_FACET_DTYPE = np.dtype(
    [("normal", "<f4", (3,)), ("vertices", "<f4", (3, 3)), ("attr", "<u2")]
)


class MeshError(ValueError):
    """Invalid mesh content (bad indices, non-finite coordinates, empty)."""


class StlParseError(ValueError):
    """Malformed STL input.  Carries a line number for ASCII files."""

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


@dataclass(frozen=True)
class TriangleMesh:
    """Indexed triangle soup.  Coordinates in mm, float64.

    ``facet_normals`` are kept as read from file (or None for meshes built
    in code); they are never recomputed.
    """

    vertices: np.ndarray
    triangles: np.ndarray
    facet_normals: np.ndarray | None = None

    def __post_init__(self):
        vertices = np.asarray(self.vertices, dtype=np.float64).reshape(-1, 3)
        triangles = np.asarray(self.triangles, dtype=np.intp).reshape(-1, 3)
        object.__setattr__(self, "vertices", vertices)
        object.__setattr__(self, "triangles", triangles)
        if self.facet_normals is not None:
            normals = np.asarray(self.facet_normals, dtype=np.float64).reshape(-1, 3)
            if len(normals) != len(triangles):
                raise MeshError(
                    f"{len(normals)} facet normals for {len(triangles)} triangles"
                )
            object.__setattr__(self, "facet_normals", normals)
        if not np.isfinite(vertices).all():
            raise MeshError("mesh contains non-finite vertex coordinates")
        if len(triangles) and triangles.min() < 0:
            raise MeshError("negative vertex index")
        if len(triangles) and triangles.max() >= len(vertices):
            raise MeshError(
                f"vertex index {triangles.max()} out of range ({len(vertices)} vertices)"
            )

    @property
    def triangle_count(self) -> int:
        return len(self.triangles)

    def triangle_coordinates(self) -> np.ndarray:
        """Per-facet vertex positions, shape (n, 3, 3)."""
        return self.vertices[self.triangles]

    def allclose(self, other: "TriangleMesh", tol: float = 1e-6) -> bool:
        """Geometric equality: same facet count, per-facet vertices within tol."""
        if self.triangle_count != other.triangle_count:
            return False
        if self.triangle_count == 0:
            return True
        a = self.triangle_coordinates()
        b = other.triangle_coordinates()
        return bool(np.abs(a - b).max() <= tol)


@dataclass(frozen=True)
class Aabb:
    """Axis-aligned bounding box, min/max corners in mm."""

    min: np.ndarray
    max: np.ndarray

    def __post_init__(self):
        lo = np.asarray(self.min, dtype=np.float64).reshape(3)
        hi = np.asarray(self.max, dtype=np.float64).reshape(3)
        object.__setattr__(self, "min", lo)
        object.__setattr__(self, "max", hi)
        if np.any(lo > hi):
            raise MeshError(f"inverted bounding box: min={lo}, max={hi}")

    @property
    def size(self) -> np.ndarray:
        return self.max - self.min


@dataclass(frozen=True)
class Rotation:
    """Proper rotation as a 3x3 matrix, orthonormal within 1e-9."""

    matrix: np.ndarray

    def __post_init__(self):
        m = np.asarray(self.matrix, dtype=np.float64).reshape(3, 3)
        object.__setattr__(self, "matrix", m)
        if np.abs(m.T @ m - np.eye(3)).max() > ROTATION_TOL:
            raise MeshError("rotation matrix is not orthonormal")
        if abs(np.linalg.det(m) - 1.0) > ROTATION_TOL:
            raise MeshError("rotation matrix is not proper (det != +1)")

    @classmethod
    def identity(cls) -> "Rotation":
        return cls(np.eye(3))

    @classmethod
    def from_euler_xyz_degrees(cls, rx: float, ry: float, rz: float) -> "Rotation":
        """Extrinsic rotations about fixed x, then y, then z (degrees)."""
        ax, ay, az = (math.radians(a) for a in (rx, ry, rz))
        cx, sx = math.cos(ax), math.sin(ax)
        cy, sy = math.cos(ay), math.sin(ay)
        cz, sz = math.cos(az), math.sin(az)
        mx = np.array([[1, 0, 0], [0, cx, -sx], [0, sx, cx]], dtype=np.float64)
        my = np.array([[cy, 0, sy], [0, 1, 0], [-sy, 0, cy]], dtype=np.float64)
        mz = np.array([[cz, -sz, 0], [sz, cz, 0], [0, 0, 1]], dtype=np.float64)
        return cls(mz @ my @ mx)

    def apply(self, points: np.ndarray) -> np.ndarray:
        pts = np.asarray(points, dtype=np.float64)
        return pts @ self.matrix.T


@dataclass(frozen=True)
class PlacementBox:
    """Virtual boundary box of the finger-base print area (mm).

    ``b_x`` may be ``math.inf`` when the caller only constrains depth;
    it is used exclusively by the fit check.
    """

    b_x: float
    b_y: float

    def __post_init__(self):
        if not self.b_x > 0:
            raise MeshError(f"b_x must be positive, got {self.b_x}")
        if not (self.b_y > 0 and math.isfinite(self.b_y)):
            raise MeshError(f"b_y must be positive and finite, got {self.b_y}")


@dataclass(frozen=True)
class FitViolation:
    axis: str
    extent: float
    limit: float

    def __str__(self) -> str:
        return f"{self.axis} extent {self.extent:.6g} mm exceeds box {self.limit:.6g} mm"


@dataclass(frozen=True)
class FitCheck:
    violations: tuple[FitViolation, ...] = field(default=())

    @property
    def ok(self) -> bool:
        return not self.violations


class FitError(MeshError):
    """Model footprint does not fit the boundary box."""

    def __init__(self, violations: tuple[FitViolation, ...]):
        self.violations = violations
        super().__init__("; ".join(str(v) for v in violations))


# --- STL I/O ---------------------------------------------------------------

_ASCII_FLOAT = r"[-+]?(?:\d+\.?\d*|\.\d+)(?:[eE][-+]?\d+)?"
_FACET_RE = re.compile(
    rf"^facet\s+normal\s+({_ASCII_FLOAT})\s+({_ASCII_FLOAT})\s+({_ASCII_FLOAT})$",
    re.IGNORECASE,
)
_VERTEX_RE = re.compile(
    rf"^vertex\s+({_ASCII_FLOAT})\s+({_ASCII_FLOAT})\s+({_ASCII_FLOAT})$",
    re.IGNORECASE,
)


def parse_stl(data: bytes) -> TriangleMesh:
    """Parse binary or ASCII STL bytes into a mesh.

    A leading ``solid`` marks the file as tentatively ASCII, but binary
    parsing is attempted as a fallback because binary files written with a
    ``solid...`` header are common in the wild.
    """
    if not isinstance(data, (bytes, bytearray, memoryview)):
        raise TypeError("parse_stl expects bytes")
    data = bytes(data)
    if data.lstrip()[:5].lower() == b"solid":
        try:
            return _parse_ascii(data)
        except StlParseError as ascii_err:
            try:
                return _parse_binary(data)
            except StlParseError:
                raise ascii_err from None
    return _parse_binary(data)


def _parse_binary(data: bytes) -> TriangleMesh:
    if len(data) < _BINARY_HEADER_SIZE + 4:
        raise StlParseError(
            f"binary STL too short: {len(data)} bytes, need at least 84"
        )
    (count,) = struct.unpack_from("<I", data, _BINARY_HEADER_SIZE)
    if count == 0:
        raise StlParseError("binary STL declares 0 triangles")
    body_end = _BINARY_HEADER_SIZE + 4 + count * _BINARY_RECORD_SIZE
    if len(data) < body_end:
        raise StlParseError(
            f"truncated binary STL: {count} triangles need {body_end} bytes, "
            f"got {len(data)}"
        )
    records = np.frombuffer(data, dtype=_FACET_DTYPE, count=count, offset=84)
    vertices = records["vertices"].astype(np.float64).reshape(-1, 3)
    normals = records["normal"].astype(np.float64)
    triangles = np.arange(3 * count, dtype=np.intp).reshape(-1, 3)
    return TriangleMesh(vertices=vertices, triangles=triangles, facet_normals=normals)


def _parse_ascii(data: bytes) -> TriangleMesh:
    try:
        text = data.decode("ascii")
    except UnicodeDecodeError as exc:
        raise StlParseError(f"not ASCII text: {exc}") from None

    vertices: list[tuple[float, float, float]] = []
    normals: list[tuple[float, float, float]] = []
    # (line number, stripped text) for each non-blank line
    lines = [
        (i, stripped)
        for i, raw in enumerate(text.splitlines(), start=1)
        if (stripped := raw.strip())
    ]
    if not lines:
        raise StlParseError("empty ASCII STL", line=1)
    pos = 0

    def expect(pattern: str) -> tuple[int, str]:
        nonlocal pos
        if pos >= len(lines):
            raise StlParseError(f"unexpected end of file, expected '{pattern}'",
                                line=lines[-1][0])
        lineno, content = lines[pos]
        pos += 1
        return lineno, content

    lineno, content = expect("solid")
    if not content.lower().startswith("solid"):
        raise StlParseError(f"expected 'solid', got {content!r}", line=lineno)

    while True:
        lineno, content = expect("facet normal or endsolid")
        lowered = content.lower()
        if lowered.startswith("endsolid"):
            break
        m = _FACET_RE.match(content)
        if not m:
            raise StlParseError(
                f"expected 'facet normal nx ny nz', got {content!r}", line=lineno
            )
        normals.append(tuple(float(g) for g in m.groups()))
        lineno, content = expect("outer loop")
        if content.lower() != "outer loop":
            raise StlParseError(f"expected 'outer loop', got {content!r}", line=lineno)
        for _ in range(3):
            lineno, content = expect("vertex")
            vm = _VERTEX_RE.match(content)
            if not vm:
                raise StlParseError(
                    f"expected 'vertex x y z', got {content!r}", line=lineno
                )
            vertices.append(tuple(float(g) for g in vm.groups()))
        lineno, content = expect("endloop")
        if content.lower() != "endloop":
            raise StlParseError(f"expected 'endloop', got {content!r}", line=lineno)
        lineno, content = expect("endfacet")
        if content.lower() != "endfacet":
            raise StlParseError(f"expected 'endfacet', got {content!r}", line=lineno)

    if not normals:
        raise StlParseError("ASCII STL contains no facets", line=lines[0][0])
    count = len(normals)
    triangles = np.arange(3 * count, dtype=np.intp).reshape(-1, 3)
    return TriangleMesh(
        vertices=np.array(vertices, dtype=np.float64),
        triangles=triangles,
        facet_normals=np.array(normals, dtype=np.float64),
    )


def write_stl(mesh: TriangleMesh, format: str = "binary") -> bytes:
    """Serialize a mesh to STL bytes.

    Binary output is exactly 84 + 50 * triangle_count bytes.  ASCII numbers
    use shortest round-trip formatting, so re-parsing recovers the written
    float64 values exactly.
    """
    if mesh.triangle_count == 0:
        raise MeshError("refusing to write an STL with 0 triangles")
    if format == "binary":
        return _write_binary(mesh)
    if format == "ascii":
        return _write_ascii(mesh)
    raise ValueError(f"unknown STL format {format!r} (use 'binary' or 'ascii')")


def _facet_normals_or_zero(mesh: TriangleMesh) -> np.ndarray:
    if mesh.facet_normals is not None:
        return mesh.facet_normals
    return np.zeros((mesh.triangle_count, 3), dtype=np.float64)


def _write_binary(mesh: TriangleMesh) -> bytes:
    records = np.zeros(mesh.triangle_count, dtype=_FACET_DTYPE)
    records["normal"] = _facet_normals_or_zero(mesh).astype(np.float32)
    records["vertices"] = mesh.triangle_coordinates().astype(np.float32)
    header = b"fingercell binary STL".ljust(_BINARY_HEADER_SIZE, b" ")
    return header + struct.pack("<I", mesh.triangle_count) + records.tobytes()


def _write_ascii(mesh: TriangleMesh) -> bytes:
    coords = mesh.triangle_coordinates()
    normals = _facet_normals_or_zero(mesh)
    out = io.StringIO()
    out.write("solid fingercell\n")
    for normal, facet in zip(normals.tolist(), coords.tolist()):
        nx, ny, nz = normal
        out.write(f"  facet normal {nx!r} {ny!r} {nz!r}\n")
        out.write("    outer loop\n")
        for vx, vy, vz in facet:
            out.write(f"      vertex {vx!r} {vy!r} {vz!r}\n")
        out.write("    endloop\n")
        out.write("  endfacet\n")
    out.write("endsolid fingercell\n")
    return out.getvalue().encode("ascii")


# --- Transformations -------------------------------------------------------

def rotate_mesh(mesh: TriangleMesh, rotation: Rotation) -> TriangleMesh:
    """Apply ``rotation`` to every vertex and facet normal."""
    normals = None
    if mesh.facet_normals is not None:
        normals = rotation.apply(mesh.facet_normals)
    return TriangleMesh(
        vertices=rotation.apply(mesh.vertices),
        triangles=mesh.triangles,
        facet_normals=normals,
    )


def bounding_box(mesh: TriangleMesh) -> Aabb:
    """Componentwise vertex extrema."""
    if len(mesh.vertices) == 0:
        raise MeshError("cannot compute bounding box of a mesh with no vertices")
    return Aabb(min=mesh.vertices.min(axis=0), max=mesh.vertices.max(axis=0))


def check_fit(extent: Aabb, box: PlacementBox) -> FitCheck:
    """A model fits when its footprint is at most the box, closed inequality."""
    violations = []
    width = float(extent.max[0] - extent.min[0])
    depth = float(extent.max[1] - extent.min[1])
    if width > box.b_x:
        violations.append(FitViolation(axis="x", extent=width, limit=box.b_x))
    if depth > box.b_y:
        violations.append(FitViolation(axis="y", extent=depth, limit=box.b_y))
    return FitCheck(violations=tuple(violations))


def place_on_base(mesh: TriangleMesh, box: PlacementBox) -> TriangleMesh:
    """Translate an already-oriented model into the boundary box.

    After placement the bounding box is centered on x = 0, its front edge
    sits at y = b_y / 2, and its underside rests on z = 0.  The translation
    is evaluated per axis as

        x' = x - (x_max - x_min)/2 - x_min
        y' = y - y_max + b_y/2
        z' = z - z_min

    with the subtractions applied in exactly that order, so an independent
    per-vertex evaluation reproduces the result bit for bit.
    """
    if mesh.triangle_count < 1:
        raise MeshError("placement requires a mesh with at least one triangle")
    extent = bounding_box(mesh)
    fit = check_fit(extent, box)
    if not fit.ok:
        raise FitError(fit.violations)

    x_min, _, z_min = (float(c) for c in extent.min)
    x_max, y_max, _ = (float(c) for c in extent.max)
    half_width = (x_max - x_min) / 2.0
    half_depth = box.b_y / 2.0

    vertices = mesh.vertices.copy()
    vertices[:, 0] -= half_width
    vertices[:, 0] -= x_min
    vertices[:, 1] -= y_max
    vertices[:, 1] += half_depth
    vertices[:, 2] -= z_min
    return TriangleMesh(
        vertices=vertices,
        triangles=mesh.triangles,
        facet_normals=mesh.facet_normals,
    )
