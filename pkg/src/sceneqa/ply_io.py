"""PLY reader for labeled indoor point clouds.

Supports the two encodings that annotated capture pipelines actually emit:
``ascii 1.0`` and ``binary_little_endian 1.0``. Vertex properties are
discovered by name: positions from x/y/z, colors from red/green/blue,
semantic ids from label|semantic_label, instance ids from
instance|instance_label. Unknown properties are decoded and dropped.

Limitations (documented, raise rather than guess): binary big-endian files,
list-typed vertex properties, and list-typed elements that precede the
vertex element in a binary file.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import MalformedHeader, TruncatedBody, UnsupportedEncoding

_SCALAR_TYPES = {
    "char": "i1", "int8": "i1",
    "uchar": "u1", "uint8": "u1",
    "short": "i2", "int16": "i2",
    "ushort": "u2", "uint16": "u2",
    "int": "i4", "int32": "i4",
    "uint": "u4", "uint32": "u4",
    "float": "f4", "float32": "f4",
    "double": "f8", "float64": "f8",
}

_SEMANTIC_NAMES = ("label", "semantic_label")
_INSTANCE_NAMES = ("instance", "instance_label")


@dataclass(frozen=True)
class LabeledPointCloud:
    """Per-point positions, colors and semantic/instance ids.

    positions: (n, 3) float64, colors: (n, 3) uint8,
    semantic_labels / instance_labels: (n,) int64. Missing color or label
    properties in the source file default to zeros.
    """

    positions: np.ndarray
    colors: np.ndarray
    semantic_labels: np.ndarray
    instance_labels: np.ndarray

    def __post_init__(self):
        n = len(self.positions)
        if n == 0:
            raise ValueError("point cloud is empty")
        if not np.all(np.isfinite(self.positions)):
            raise ValueError("point cloud has non-finite positions")
        if np.any(self.instance_labels < 0):
            raise ValueError("instance labels must be >= 0")
        for name in ("colors", "semantic_labels", "instance_labels"):
            if len(getattr(self, name)) != n:
                raise ValueError(f"{name} length does not match positions")

    def __len__(self):
        return len(self.positions)


class _Element:
    def __init__(self, name, count):
        self.name = name
        self.count = count
        self.properties = []  # (name, numpy little-endian type str)
        self.has_list = False


def _parse_header(blob: bytes):
    """Parse header lines; returns (format, elements, body offset)."""
    end = blob.find(b"end_header\n")
    if end < 0:
        raise MalformedHeader("missing end_header", offset=len(blob))
    body_offset = end + len(b"end_header\n")
    lines = blob[:end].decode("ascii", errors="replace").splitlines()
    if not lines or lines[0].strip() != "ply":
        raise MalformedHeader("missing 'ply' magic", offset=0)

    fmt = None
    elements = []
    offset = len(lines[0]) + 1
    for line in lines[1:]:
        tokens = line.split()
        if not tokens or tokens[0] == "comment":
            offset += len(line) + 1
            continue
        kind = tokens[0]
        if kind == "format":
            if len(tokens) != 3:
                raise MalformedHeader(f"bad format line: {line!r}", offset=offset)
            if tokens[1] == "binary_big_endian":
                raise UnsupportedEncoding("binary_big_endian is not supported", offset=offset)
            if tokens[1] not in ("ascii", "binary_little_endian"):
                raise MalformedHeader(f"unknown format {tokens[1]!r}", offset=offset)
            fmt = tokens[1]
        elif kind == "element":
            if len(tokens) != 3:
                raise MalformedHeader(f"bad element line: {line!r}", offset=offset)
            try:
                count = int(tokens[2])
            except ValueError:
                raise MalformedHeader(f"bad element count: {line!r}", offset=offset) from None
            if count < 0:
                raise MalformedHeader(f"negative element count: {line!r}", offset=offset)
            elements.append(_Element(tokens[1], count))
        elif kind == "property":
            if not elements:
                raise MalformedHeader("property before any element", offset=offset)
            if tokens[1] == "list":
                if len(tokens) != 5:
                    raise MalformedHeader(f"bad list property: {line!r}", offset=offset)
                elements[-1].has_list = True
                elements[-1].properties.append((tokens[4], None))
            else:
                if len(tokens) != 3:
                    raise MalformedHeader(f"bad property line: {line!r}", offset=offset)
                np_type = _SCALAR_TYPES.get(tokens[1])
                if np_type is None:
                    raise MalformedHeader(f"unknown property type {tokens[1]!r}", offset=offset)
                elements[-1].properties.append((tokens[2], "<" + np_type))
        else:
            raise MalformedHeader(f"unexpected header line: {line!r}", offset=offset)
        offset += len(line) + 1

    if fmt is None:
        raise MalformedHeader("header has no format line", offset=body_offset)
    return fmt, elements, body_offset


def _vertex_element(elements):
    for idx, el in enumerate(elements):
        if el.name == "vertex":
            return idx, el
    raise MalformedHeader("header declares no vertex element")


def _read_binary_vertices(blob, body_offset, elements, v_idx, vertex):
    offset = body_offset
    for el in elements[:v_idx]:
        if el.has_list:
            raise UnsupportedEncoding(
                f"cannot skip list-typed element {el.name!r} before vertex", offset=offset)
        row = sum(np.dtype(t).itemsize for _, t in el.properties)
        offset += row * el.count
    if vertex.has_list:
        raise UnsupportedEncoding("list-typed vertex properties are not supported",
                                  offset=offset)
    dtype = np.dtype([(name, t) for name, t in vertex.properties])
    need = dtype.itemsize * vertex.count
    if len(blob) - offset < need:
        raise TruncatedBody(
            f"vertex element needs {need} bytes, file has {len(blob) - offset}",
            offset=len(blob))
    return np.frombuffer(blob, dtype=dtype, count=vertex.count, offset=offset)


def _read_ascii_vertices(blob, body_offset, elements, v_idx, vertex):
    if vertex.has_list:
        raise UnsupportedEncoding("list-typed vertex properties are not supported",
                                  offset=body_offset)
    lines = blob[body_offset:].split(b"\n")
    skip = sum(el.count for el in elements[:v_idx])
    rows = []
    offset = body_offset + sum(len(l) + 1 for l in lines[:skip])
    names = [name for name, _ in vertex.properties]
    for i in range(vertex.count):
        line_idx = skip + i
        if line_idx >= len(lines) or not lines[line_idx].strip():
            raise TruncatedBody(
                f"vertex element declares {vertex.count} rows, body ends after {i}",
                offset=offset)
        tokens = lines[line_idx].split()
        if len(tokens) < len(names):
            raise TruncatedBody(
                f"vertex row {i} has {len(tokens)} values, expected {len(names)}",
                offset=offset)
        rows.append(tokens)
        offset += len(lines[line_idx]) + 1

    out = np.zeros(vertex.count, dtype=np.dtype([(n, t) for n, t in vertex.properties]))
    for col, (name, np_type) in enumerate(vertex.properties):
        text = [row[col] for row in rows]
        try:
            if np.dtype(np_type).kind == "f":
                out[name] = np.array([float(t) for t in text], dtype=np_type)
            else:
                out[name] = np.array([int(t) for t in text], dtype=np_type)
        except ValueError:
            raise MalformedHeader(
                f"vertex property {name!r} has a non-numeric value") from None
    return out


def parse_ply(path) -> LabeledPointCloud:
    """Parse a labeled PLY file (ascii or binary little-endian)."""
    with open(path, "rb") as fh:
        blob = fh.read()
    fmt, elements, body_offset = _parse_header(blob)
    v_idx, vertex = _vertex_element(elements)

    if fmt == "binary_little_endian":
        table = _read_binary_vertices(blob, body_offset, elements, v_idx, vertex)
    else:
        table = _read_ascii_vertices(blob, body_offset, elements, v_idx, vertex)

    names = table.dtype.names
    for axis in ("x", "y", "z"):
        if axis not in names:
            raise MalformedHeader(f"vertex element lacks property {axis!r}")
    n = vertex.count
    positions = np.stack([table["x"], table["y"], table["z"]], axis=1).astype(np.float64)

    colors = np.zeros((n, 3), dtype=np.uint8)
    if all(c in names for c in ("red", "green", "blue")):
        colors = np.stack([table["red"], table["green"], table["blue"]], axis=1).astype(np.uint8)

    semantic = np.zeros(n, dtype=np.int64)
    for cand in _SEMANTIC_NAMES:
        if cand in names:
            semantic = table[cand].astype(np.int64)
            break
    instance = np.zeros(n, dtype=np.int64)
    for cand in _INSTANCE_NAMES:
        if cand in names:
            instance = table[cand].astype(np.int64)
            break

    return LabeledPointCloud(positions, colors, semantic, instance)


def write_ply(path, cloud: LabeledPointCloud, binary: bool = False):
    """Write a cloud back out; used by fixtures and round-trip tests."""
    n = len(cloud)
    header = [
        "ply",
        "format binary_little_endian 1.0" if binary else "format ascii 1.0",
        f"element vertex {n}",
        "property float x", "property float y", "property float z",
        "property uchar red", "property uchar green", "property uchar blue",
        "property int label", "property int instance",
        "end_header",
    ]
    with open(path, "wb") as fh:
        fh.write(("\n".join(header) + "\n").encode("ascii"))
        if binary:
            dtype = np.dtype([("x", "<f4"), ("y", "<f4"), ("z", "<f4"),
                              ("red", "u1"), ("green", "u1"), ("blue", "u1"),
                              ("label", "<i4"), ("instance", "<i4")])
            out = np.zeros(n, dtype=dtype)
            pos32 = cloud.positions.astype(np.float32)
            out["x"], out["y"], out["z"] = pos32[:, 0], pos32[:, 1], pos32[:, 2]
            out["red"], out["green"], out["blue"] = cloud.colors.T
            out["label"] = cloud.semantic_labels
            out["instance"] = cloud.instance_labels
            fh.write(out.tobytes())
        else:
            for i in range(n):
                x, y, z = (repr(float(np.float32(v))) for v in cloud.positions[i])
                r, g, b = (int(v) for v in cloud.colors[i])
                fh.write(f"{x} {y} {z} {r} {g} {b} "
                         f"{int(cloud.semantic_labels[i])} "
                         f"{int(cloud.instance_labels[i])}\n".encode("ascii"))
