"""Question-record schema, task registry, seeded RNG streams, rounding rules.

Everything the task generators share lives here so that the spatial,
temporal and route modules stay independent of each other.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field

import numpy as np

# Canonical task order; also the sort order of generated record files.
TASKS = (
    "obj_count",
    "abs_dist",
    "rel_dist",
    "rel_dir",
    "obj_size",
    "room_size",
    "appearance_order",
    "route_plan",
    "cam_obj_abs_dist",
    "cam_obj_rel_dist",
    "obj_obj_rel_pos",
    "cam_displacement",
    "cam_move_dir",
)
TASK_ORDER = {t: i for i, t in enumerate(TASKS)}

ANSWER_NA = "NA"
ANSWER_MCA = "MCA"

# Fixed option arity per multiple-choice task. obj_obj_rel_pos is a binary
# question (one option per side of the compared axis).
MCA_OPTION_COUNTS = {
    "rel_dist": 4,
    "rel_dir": 3,
    "appearance_order": 4,
    "route_plan": 3,
    "cam_obj_rel_dist": 4,
    "obj_obj_rel_pos": 2,
    "cam_move_dir": 4,
}

CONVENTIONS = "world: Z-up meters; camera: +X right, +Y down, +Z forward"


@dataclass(frozen=True)
class QaRecord:
    qid: str
    scene_id: str
    task: str
    answer_type: str  # "NA" | "MCA"
    question: str
    options: tuple | None
    ground_truth: str
    frame_refs: tuple
    meta: dict = field(default_factory=dict)


def validate_record(rec: QaRecord):
    """Enforce the record invariants; raises ValueError on violation."""
    if rec.task not in TASKS:
        raise ValueError(f"unknown task {rec.task!r}")
    if rec.answer_type == ANSWER_MCA:
        if not rec.options:
            raise ValueError("MCA record without options")
        if len(set(rec.options)) != len(rec.options):
            raise ValueError("MCA options are not pairwise distinct")
        if rec.ground_truth not in rec.options:
            raise ValueError("MCA ground truth not among options")
        want = MCA_OPTION_COUNTS.get(rec.task)
        if want is not None and len(rec.options) != want:
            raise ValueError(f"{rec.task} expects {want} options, got {len(rec.options)}")
    elif rec.answer_type == ANSWER_NA:
        if rec.options:
            raise ValueError("NA record must not carry options")
        try:
            float(rec.ground_truth)
        except ValueError:
            raise ValueError("NA ground truth does not parse as a number") from None
    else:
        raise ValueError(f"unknown answer type {rec.answer_type!r}")


def record_to_dict(rec: QaRecord) -> dict:
    doc = {
        "qid": rec.qid,
        "scene_id": rec.scene_id,
        "task": rec.task,
        "answer_type": rec.answer_type,
        "question": rec.question,
        "ground_truth": rec.ground_truth,
        "frame_refs": list(rec.frame_refs),
        "meta": rec.meta,
    }
    if rec.options is not None:
        doc["options"] = list(rec.options)
    return doc


def record_from_dict(doc: dict) -> QaRecord:
    rec = QaRecord(
        qid=doc["qid"],
        scene_id=doc["scene_id"],
        task=doc["task"],
        answer_type=doc["answer_type"],
        question=doc["question"],
        options=tuple(doc["options"]) if "options" in doc else None,
        ground_truth=doc["ground_truth"],
        frame_refs=tuple(doc["frame_refs"]),
        meta=doc.get("meta", {}),
    )
    validate_record(rec)
    return rec


def make_qid(scene_id: str, task: str, counter: int) -> str:
    return f"{scene_id}:{task}:{counter:04d}"


def rng_stream(seed: int, *parts) -> np.random.Generator:
    """Named splittable RNG stream.

    The stream identity is the SHA-256 of the seed plus all name parts, so
    any (scene_id, task, counter) combination gets its own generator and the
    draw sequence never depends on scheduling or on questions discarded
    elsewhere.
    """
    name = ":".join([str(seed), *map(str, parts)])
    digest = hashlib.sha256(name.encode("utf-8")).digest()
    words = np.frombuffer(digest, dtype=np.uint32)
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(words.tolist())))


@dataclass(frozen=True)
class GenConfig:
    """Generator thresholds and seed material.

    The task definitions leave margins and bins open; these values
    make answers robust to annotation noise and are stamped into record
    metadata so downstream consumers can audit them.
    """

    seed: int = 0
    ambiguity_margin_m: float = 0.15   # winner-vs-runner-up gap for rel-dist tasks
    min_pair_dist_m: float = 0.1       # discard near-touching object pairs
    rel_dir_front_deg: float = 30.0    # |angle| below this -> front cone, discarded
    rel_dir_back_deg: float = 150.0    # |angle| at or above this -> "back"
    min_planar_dist_m: float = 0.3     # observer-to-query minimum planar distance
    appearance_gap_frames: int = 5     # min first-seen separation for order questions
    interval_gap_m: float = 0.15       # axis-interval separation for relative position
    min_displacement_m: float = 0.5    # minimum camera travel for motion questions
    dominance_ratio: float = 1.5       # dominant-axis ratio for movement direction
    sample_frames: int = 32            # frames drawn per scene for temporal tasks
    max_per_task: int = 64             # per-scene cap on emitted records per task
    min_bbox_area_px: float = 400.0    # graph visibility filter
    turn_threshold_deg: float = 30.0   # heading change that makes a turn
    alt_turn_threshold_deg: float = 45.0  # alternative-template eligibility
    turn_noise_floor_deg: float = 5.0  # per-junction jitter ignored by clustering
    turn_window_segments: int = 3      # jitter-merge window (consecutive segments)
    max_anchor_dist_m: float = 2.0     # route anchors farther than this are unusable
    route_alternative_mode: bool = False

    def __post_init__(self):
        for name in ("ambiguity_margin_m", "min_pair_dist_m", "rel_dir_front_deg",
                     "rel_dir_back_deg", "min_planar_dist_m", "interval_gap_m",
                     "min_displacement_m", "dominance_ratio", "turn_threshold_deg",
                     "alt_turn_threshold_deg", "max_anchor_dist_m"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        for name in ("appearance_gap_frames", "sample_frames", "max_per_task",
                     "turn_window_segments"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be at least 1")


def round_tenth(value: float) -> str:
    """Round to 0.1 with ties away from zero; stable one-decimal text."""
    scaled = np.floor(value * 10.0 + 0.5)
    return f"{scaled / 10.0:.1f}"


def round_unit(value: float) -> str:
    """Round to the nearest integer with ties up; stable integer text."""
    return str(int(np.floor(value + 0.5)))


def subsample(items: list, limit: int, rng: np.random.Generator) -> list:
    """Deterministically keep at most ``limit`` items, preserving order."""
    if len(items) <= limit:
        return list(items)
    picks = sorted(rng.choice(len(items), size=limit, replace=False).tolist())
    return [items[i] for i in picks]
