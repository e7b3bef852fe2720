"""Scene- and frame-level metadata: schema, validation, instance-box fitting.

Two JSON documents describe a capture:

scene_metadata.json::

    {"scene_id": str,
     "scene_extents": {"min": [x,y,z], "max": [x,y,z]},
     "room_center": [x,y,z],
     "category_counts": {category: int, ...},
     "objects": [{"instance_id": int, "category": str,
                  "center": [x,y,z], "size": [x,y,z],
                  "rotation": [w,x,y,z]}, ...]}

frame_metadata.json::

    {"scene_id": str,
     "intrinsics": {"fx": px, "fy": px, "cx": px, "cy": px,
                    "width": int, "height": int},
     "frames": [{"frame_id": int,
                 "pose_c2w": [16 row-major reals, last row (0,0,0,1)],
                 "color_path": str, "depth_path": str,
                 "visible_objects": [{"instance_id": int,
                                      "bbox_2d": [xmin,ymin,xmax,ymax]}, ...]}, ...]}

Rotations are unit quaternions (w, x, y, z); poses are camera-to-world.
Parsing is strict: any violation raises SchemaViolation with the offending
field path. serialize(parse(x)) re-parses to a structurally identical
object.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .errors import EmptyAfterFiltering, SchemaViolation
from .geometry import OrientedBox3, Pose, quat_from_yaw
from .ply_io import LabeledPointCloud

DEFAULT_MIN_POINTS = 50


@dataclass(frozen=True)
class Intrinsics:
    fx: float
    fy: float
    cx: float
    cy: float
    width: int
    height: int

    def __post_init__(self):
        if self.fx <= 0 or self.fy <= 0:
            raise ValueError("focal lengths must be positive")
        if self.width <= 0 or self.height <= 0:
            raise ValueError("image dimensions must be positive")
        if not (0 <= self.cx <= self.width and 0 <= self.cy <= self.height):
            raise ValueError("principal point must lie within the image")


@dataclass(frozen=True)
class ObjectInstance:
    instance_id: int
    category: str
    box: OrientedBox3

    def __post_init__(self):
        if not self.category:
            raise ValueError("category must be nonempty")


@dataclass(frozen=True)
class SceneMetadata:
    scene_id: str
    scene_extents: tuple  # (min: (3,) array, max: (3,) array)
    room_center: np.ndarray
    category_counts: dict
    objects: tuple  # of ObjectInstance

    def object_by_id(self, instance_id: int):
        for obj in self.objects:
            if obj.instance_id == instance_id:
                return obj
        return None


@dataclass(frozen=True)
class CameraFrame:
    frame_id: int
    pose: Pose
    color_path: str
    depth_path: str
    visible_objects: tuple  # of (instance_id, bbox_2d (4,) array)


@dataclass(frozen=True)
class FrameMetadata:
    scene_id: str
    intrinsics: Intrinsics
    frames: tuple  # of CameraFrame, frame_id strictly increasing


# --- strict JSON decoding helpers -------------------------------------------

def _require(doc, key, path):
    if not isinstance(doc, dict) or key not in doc:
        raise SchemaViolation(f"{path}.{key}" if path else key, "missing field")
    return doc[key]


def _number(value, path):
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise SchemaViolation(path, "expected a number")
    if not np.isfinite(value):
        raise SchemaViolation(path, "non-finite number")
    return float(value)


def _integer(value, path):
    if isinstance(value, bool) or not isinstance(value, int):
        raise SchemaViolation(path, "expected an integer")
    return value


def _string(value, path):
    if not isinstance(value, str) or not value:
        raise SchemaViolation(path, "expected a nonempty string")
    return value


def _vec(value, length, path):
    if not isinstance(value, list) or len(value) != length:
        raise SchemaViolation(path, f"expected a list of {length} numbers")
    return np.array([_number(v, f"{path}[{i}]") for i, v in enumerate(value)])


# --- scene metadata ----------------------------------------------------------

def scene_metadata_from_dict(doc) -> SceneMetadata:
    scene_id = _string(_require(doc, "scene_id", ""), "scene_id")

    extents_doc = _require(doc, "scene_extents", "")
    lo = _vec(_require(extents_doc, "min", "scene_extents"), 3, "scene_extents.min")
    hi = _vec(_require(extents_doc, "max", "scene_extents"), 3, "scene_extents.max")
    if np.any(lo > hi):
        raise SchemaViolation("scene_extents", "min exceeds max")
    room_center = _vec(_require(doc, "room_center", ""), 3, "room_center")

    objects_doc = _require(doc, "objects", "")
    if not isinstance(objects_doc, list):
        raise SchemaViolation("objects", "expected a list")
    objects = []
    seen_ids = set()
    for i, obj in enumerate(objects_doc):
        path = f"objects[{i}]"
        instance_id = _integer(_require(obj, "instance_id", path), f"{path}.instance_id")
        if instance_id in seen_ids:
            raise SchemaViolation(f"{path}.instance_id", "duplicate instance id")
        seen_ids.add(instance_id)
        category = _string(_require(obj, "category", path), f"{path}.category")
        center = _vec(_require(obj, "center", path), 3, f"{path}.center")
        size = _vec(_require(obj, "size", path), 3, f"{path}.size")
        rotation = _vec(_require(obj, "rotation", path), 4, f"{path}.rotation")
        try:
            box = OrientedBox3(center, size, rotation)
        except ValueError as exc:
            raise SchemaViolation(path, str(exc)) from None
        objects.append(ObjectInstance(instance_id, category, box))

    counts_doc = _require(doc, "category_counts", "")
    if not isinstance(counts_doc, dict):
        raise SchemaViolation("category_counts", "expected a mapping")
    actual = {}
    for obj in objects:
        actual[obj.category] = actual.get(obj.category, 0) + 1
    declared = {k: _integer(v, f"category_counts.{k}") for k, v in counts_doc.items()}
    if declared != actual:
        raise SchemaViolation("category_counts", "inconsistent with objects list")

    return SceneMetadata(scene_id, (lo, hi), room_center, declared, tuple(objects))


def scene_metadata_to_dict(meta: SceneMetadata) -> dict:
    return {
        "scene_id": meta.scene_id,
        "scene_extents": {"min": list(meta.scene_extents[0]),
                          "max": list(meta.scene_extents[1])},
        "room_center": list(meta.room_center),
        "category_counts": {k: meta.category_counts[k] for k in sorted(meta.category_counts)},
        "objects": [
            {"instance_id": o.instance_id,
             "category": o.category,
             "center": list(o.box.center),
             "size": list(o.box.size),
             "rotation": list(o.box.rotation)}
            for o in meta.objects
        ],
    }


def load_scene_metadata(path) -> SceneMetadata:
    with open(path, "r", encoding="utf-8") as fh:
        return scene_metadata_from_dict(json.load(fh))


def save_scene_metadata(path, meta: SceneMetadata):
    _dump_json(path, scene_metadata_to_dict(meta))


# --- frame metadata ----------------------------------------------------------

def frame_metadata_from_dict(doc) -> FrameMetadata:
    scene_id = _string(_require(doc, "scene_id", ""), "scene_id")

    intr_doc = _require(doc, "intrinsics", "")
    try:
        intrinsics = Intrinsics(
            fx=_number(_require(intr_doc, "fx", "intrinsics"), "intrinsics.fx"),
            fy=_number(_require(intr_doc, "fy", "intrinsics"), "intrinsics.fy"),
            cx=_number(_require(intr_doc, "cx", "intrinsics"), "intrinsics.cx"),
            cy=_number(_require(intr_doc, "cy", "intrinsics"), "intrinsics.cy"),
            width=_integer(_require(intr_doc, "width", "intrinsics"), "intrinsics.width"),
            height=_integer(_require(intr_doc, "height", "intrinsics"), "intrinsics.height"),
        )
    except ValueError as exc:
        raise SchemaViolation("intrinsics", str(exc)) from None

    frames_doc = _require(doc, "frames", "")
    if not isinstance(frames_doc, list):
        raise SchemaViolation("frames", "expected a list")
    frames = []
    prev_id = None
    for i, fr in enumerate(frames_doc):
        path = f"frames[{i}]"
        frame_id = _integer(_require(fr, "frame_id", path), f"{path}.frame_id")
        if prev_id is not None and frame_id <= prev_id:
            raise SchemaViolation(f"{path}.frame_id", "frame ids must strictly increase")
        prev_id = frame_id

        raw = _vec(_require(fr, "pose_c2w", path), 16, f"{path}.pose_c2w")
        try:
            pose = Pose.from_matrix(raw.reshape(4, 4))
        except ValueError as exc:
            raise SchemaViolation(f"{path}.pose.rotation", str(exc)) from None

        color_path = _string(_require(fr, "color_path", path), f"{path}.color_path")
        depth_path = _string(_require(fr, "depth_path", path), f"{path}.depth_path")

        vis_doc = _require(fr, "visible_objects", path)
        if not isinstance(vis_doc, list):
            raise SchemaViolation(f"{path}.visible_objects", "expected a list")
        visible = []
        for j, v in enumerate(vis_doc):
            vpath = f"{path}.visible_objects[{j}]"
            vid = _integer(_require(v, "instance_id", vpath), f"{vpath}.instance_id")
            bbox = _vec(_require(v, "bbox_2d", vpath), 4, f"{vpath}.bbox_2d")
            xmin, ymin, xmax, ymax = bbox
            if not (xmin < xmax and ymin < ymax):
                raise SchemaViolation(f"{vpath}.bbox_2d", "empty or inverted box")
            if xmin < 0 or ymin < 0 or xmax > intrinsics.width or ymax > intrinsics.height:
                raise SchemaViolation(f"{vpath}.bbox_2d", "box exceeds image bounds")
            visible.append((vid, bbox))
        frames.append(CameraFrame(frame_id, pose, color_path, depth_path, tuple(visible)))

    return FrameMetadata(scene_id, intrinsics, tuple(frames))


def frame_metadata_to_dict(meta: FrameMetadata) -> dict:
    intr = meta.intrinsics
    return {
        "scene_id": meta.scene_id,
        "intrinsics": {"fx": intr.fx, "fy": intr.fy, "cx": intr.cx, "cy": intr.cy,
                       "width": intr.width, "height": intr.height},
        "frames": [
            {"frame_id": fr.frame_id,
             "pose_c2w": [float(v) for v in fr.pose.to_matrix().reshape(-1)],
             "color_path": fr.color_path,
             "depth_path": fr.depth_path,
             "visible_objects": [
                 {"instance_id": vid, "bbox_2d": [float(b) for b in bbox]}
                 for vid, bbox in fr.visible_objects
             ]}
            for fr in meta.frames
        ],
    }


def load_frame_metadata(path) -> FrameMetadata:
    with open(path, "r", encoding="utf-8") as fh:
        return frame_metadata_from_dict(json.load(fh))


def save_frame_metadata(path, meta: FrameMetadata):
    _dump_json(path, frame_metadata_to_dict(meta))


def _dump_json(path, doc):
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, sort_keys=True, indent=1)
        fh.write("\n")


# --- instance boxes from labeled points --------------------------------------

def derive_instance_boxes(cloud: LabeledPointCloud, label_map: dict,
                          min_points: int = DEFAULT_MIN_POINTS,
                          oriented: bool = False):
    """Fit one box per instance id with at least ``min_points`` points.

    ``label_map`` maps semantic label ids to category names; an instance's
    category comes from the majority semantic label of its points (ids not
    in the map become "class_<id>"). Boxes are axis-aligned min/max fits by
    default; with ``oriented=True`` a PCA-derived yaw (rotation about +Z
    only) is removed before fitting.

    Raises EmptyAfterFiltering when no instance survives.
    """
    instances = []
    for inst_id in np.unique(cloud.instance_labels):
        mask = cloud.instance_labels == inst_id
        if int(mask.sum()) < min_points:
            continue
        pts = cloud.positions[mask]
        sem = cloud.semantic_labels[mask]
        ids, freq = np.unique(sem, return_counts=True)
        majority = int(ids[np.argmax(freq)])
        category = label_map.get(majority, f"class_{majority}")

        if oriented:
            xy = pts[:, :2] - pts[:, :2].mean(axis=0)
            cov = xy.T @ xy
            _, vecs = np.linalg.eigh(cov)
            major = vecs[:, -1]  # eigh sorts ascending
            yaw = float(np.arctan2(major[1], major[0]))
            quat = quat_from_yaw(yaw)
            c, s = np.cos(-yaw), np.sin(-yaw)
            unrot = pts.copy()
            unrot[:, 0] = c * pts[:, 0] - s * pts[:, 1]
            unrot[:, 1] = s * pts[:, 0] + c * pts[:, 1]
            lo, hi = unrot.min(axis=0), unrot.max(axis=0)
            center_local = (lo + hi) / 2.0
            center = np.array([np.cos(yaw) * center_local[0] - np.sin(yaw) * center_local[1],
                               np.sin(yaw) * center_local[0] + np.cos(yaw) * center_local[1],
                               center_local[2]])
        else:
            lo, hi = pts.min(axis=0), pts.max(axis=0)
            center = (lo + hi) / 2.0
            quat = np.array([1.0, 0.0, 0.0, 0.0])

        size = np.maximum(hi - lo, 1e-6)  # avoid zero extents on planar blobs
        instances.append(ObjectInstance(int(inst_id), category, OrientedBox3(center, size, quat)))

    if not instances:
        raise EmptyAfterFiltering(
            f"no instance has at least {min_points} points")
    return instances


def build_scene_metadata(scene_id: str, objects, points=None) -> SceneMetadata:
    """Assemble SceneMetadata from fitted instances (ingest plumbing).

    Extents come from the point cloud when given, otherwise from the union
    of box corners; room center is the extents midpoint.
    """
    objects = tuple(objects)
    if points is not None and len(points):
        lo, hi = points.min(axis=0), points.max(axis=0)
    else:
        corners = np.concatenate([o.box.corners() for o in objects], axis=0)
        lo, hi = corners.min(axis=0), corners.max(axis=0)
    counts = {}
    for o in objects:
        counts[o.category] = counts.get(o.category, 0) + 1
    return SceneMetadata(scene_id, (lo, hi), (lo + hi) / 2.0, counts, objects)
