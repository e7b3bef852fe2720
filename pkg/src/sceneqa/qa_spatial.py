"""The seven scene-level spatial question families.

Each generator is a pure function of (graph, config): iteration follows a
sorted object order, randomness comes only from named RNG streams, and the
emitted record list is byte-stable across runs and worker layouts.
"""

from __future__ import annotations

from itertools import combinations, permutations

import numpy as np

from .errors import DegenerateDirection
from .geometry import box_box_distance, planar_signed_angle
from .graph import SceneGraph, unique_category_objects
from .qa_records import (
    ANSWER_MCA,
    ANSWER_NA,
    GenConfig,
    QaRecord,
    make_qid,
    rng_stream,
    round_tenth,
    round_unit,
    subsample,
)


def _record(g, task, counter, answer_type, question, ground_truth,
            options=None, frame_refs=(), meta=None):
    return QaRecord(
        qid=make_qid(g.scene_id, task, counter),
        scene_id=g.scene_id,
        task=task,
        answer_type=answer_type,
        question=question,
        options=tuple(options) if options is not None else None,
        ground_truth=ground_truth,
        frame_refs=tuple(frame_refs),
        meta=meta or {},
    )


def gen_object_count(g: SceneGraph, cfg: GenConfig):
    """One numeric question per category with at least two instances."""
    counts = {}
    for o in g.scene.objects:
        counts[o.category] = counts.get(o.category, 0) + 1
    records = []
    for cat in sorted(c for c, n in counts.items() if n >= 2):
        records.append(_record(
            g, "obj_count", len(records), ANSWER_NA,
            f"How many {cat}(s) are in this room?",
            str(counts[cat]),
            meta={"category": cat},
        ))
    return records


def gen_absolute_distance(g: SceneGraph, cfg: GenConfig):
    """Closest-point distance between two category-unique objects, in meters."""
    uniq = unique_category_objects(g)
    pairs = list(combinations(uniq, 2))
    pairs = subsample(pairs, cfg.max_per_task, rng_stream(cfg.seed, g.scene_id, "abs_dist", "select"))
    records = []
    for a, b in pairs:
        dist = box_box_distance(a.box, b.box)
        if dist < cfg.min_pair_dist_m:
            continue
        records.append(_record(
            g, "abs_dist", len(records), ANSWER_NA,
            f"Measuring from the closest point of each object, what is the "
            f"distance between the {a.category} and the {b.category} (in meters)?",
            round_tenth(dist),
            meta={"pair": [a.instance_id, b.instance_id]},
        ))
    return records


def gen_relative_distance(g: SceneGraph, cfg: GenConfig):
    """Which of four candidates is closest to a target object (MCA).

    Emitted only when the winner beats the runner-up by the ambiguity
    margin; candidate draws come from a per-target RNG stream.
    """
    uniq = unique_category_objects(g)
    if len(uniq) < 5:
        return []
    records = []
    for k, target in enumerate(uniq):
        if len(records) >= cfg.max_per_task:
            break
        rng = rng_stream(cfg.seed, g.scene_id, "rel_dist", k)
        others = [o for o in uniq if o.instance_id != target.instance_id]
        picks = rng.choice(len(others), size=4, replace=False).tolist()
        candidates = [others[i] for i in picks]
        dists = [box_box_distance(target.box, c.box) for c in candidates]
        order = np.argsort(dists, kind="stable")
        if dists[order[1]] - dists[order[0]] < cfg.ambiguity_margin_m:
            continue
        options = [c.category for c in candidates]
        winner = candidates[order[0]].category
        records.append(_record(
            g, "rel_dist", len(records), ANSWER_MCA,
            f"Measuring from the closest point of each object, which of these "
            f"objects ({', '.join(options)}) is the closest to the {target.category}?",
            winner, options=options,
            meta={"target": target.instance_id,
                  "candidates": [c.instance_id for c in candidates]},
        ))
    return records


def _direction_bucket(theta: float, cfg: GenConfig):
    if cfg.rel_dir_front_deg < theta < cfg.rel_dir_back_deg:
        return "left"
    if -cfg.rel_dir_back_deg < theta < -cfg.rel_dir_front_deg:
        return "right"
    if abs(theta) >= cfg.rel_dir_back_deg:
        return "back"
    return None  # front cone / boundary: discard


def gen_relative_direction(g: SceneGraph, cfg: GenConfig):
    """Left/right/back of a query object from an observer standing at A facing B."""
    uniq = unique_category_objects(g)
    triples = list(permutations(uniq, 3))
    triples = subsample(triples, cfg.max_per_task,
                        rng_stream(cfg.seed, g.scene_id, "rel_dir", "select"))
    records = []
    for a, b, c in triples:
        forward = b.box.center - a.box.center
        rel = c.box.center - a.box.center
        if np.linalg.norm(rel[:2]) < cfg.min_planar_dist_m:
            continue
        try:
            theta = planar_signed_angle(forward, rel)
        except DegenerateDirection:
            continue
        bucket = _direction_bucket(theta, cfg)
        if bucket is None:
            continue
        records.append(_record(
            g, "rel_dir", len(records), ANSWER_MCA,
            f"If I am standing by the {a.category} and facing the {b.category}, "
            f"is the {c.category} to the left, to the right, or behind me?",
            bucket, options=["left", "right", "back"],
            meta={"standing_at": a.instance_id, "facing": b.instance_id,
                  "query": c.instance_id, "angle_deg": round(theta, 3)},
        ))
    return records


def gen_object_size(g: SceneGraph, cfg: GenConfig):
    """Longest box dimension of each category-unique object, in centimeters."""
    records = []
    for obj in unique_category_objects(g):
        longest_cm = float(np.max(obj.box.size)) * 100.0
        records.append(_record(
            g, "obj_size", len(records), ANSWER_NA,
            f"What is the length of the longest dimension (length, width, or "
            f"height) of the {obj.category}, measured in centimeters?",
            round_unit(longest_cm),
            meta={"instance": obj.instance_id},
        ))
    return records


def convex_hull_area_xy(points: np.ndarray) -> float:
    """Area of the 2D convex hull of floor-projected points (monotone chain
    + shoelace)."""
    pts = np.unique(np.asarray(points, dtype=float)[:, :2], axis=0)
    if len(pts) < 3:
        return 0.0
    pts = pts[np.lexsort((pts[:, 1], pts[:, 0]))]

    def cross2(o, a, b):
        return (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])

    def half(iterable):
        chain = []
        for p in iterable:
            while len(chain) >= 2 and cross2(chain[-2], chain[-1], p) <= 0:
                chain.pop()
            chain.append(p)
        return chain

    lower = half(pts)
    upper = half(pts[::-1])
    hull = np.array(lower[:-1] + upper[:-1])
    x, y = hull[:, 0], hull[:, 1]
    return float(abs(np.dot(x, np.roll(y, -1)) - np.dot(y, np.roll(x, -1))) / 2.0)


def gen_room_size(g: SceneGraph, cfg: GenConfig, cloud=None):
    """Room floor area in square meters.

    Uses the convex hull of the floor-projected cloud when one is supplied
    (an over-estimate for non-convex rooms, recorded in meta), otherwise the
    scene-extents footprint.
    """
    if cloud is not None:
        area = convex_hull_area_xy(cloud.positions)
        method = "convex_hull"
    else:
        lo, hi = g.scene.scene_extents
        area = float((hi[0] - lo[0]) * (hi[1] - lo[1]))
        method = "extents"
    return [_record(
        g, "room_size", 0, ANSWER_NA,
        "What is the area of this room (in square meters)?",
        round_tenth(area),
        meta={"method": method},
    )]


def gen_appearance_order(g: SceneGraph, cfg: GenConfig):
    """First-appearance order of four categories (MCA over orderings).

    Only category quadruples whose first-seen frames are pairwise separated
    by at least ``appearance_gap_frames`` are used, so the right order stays
    unambiguous under small annotation shifts.
    """
    seen = sorted(g.category_first_seen.items(), key=lambda kv: (kv[1], kv[0]))
    if len(seen) < 4:
        return []
    quads = [q for q in combinations(seen, 4)
             if all(q[i + 1][1] - q[i][1] >= cfg.appearance_gap_frames for i in range(3))]
    quads = subsample(quads, cfg.max_per_task,
                      rng_stream(cfg.seed, g.scene_id, "appearance_order", "select"))
    records = []
    for k, quad in enumerate(quads):
        rng = rng_stream(cfg.seed, g.scene_id, "appearance_order", k)
        cats = [cat for cat, _ in quad]  # already ascending by first-seen
        truth = ", ".join(cats)
        distractors = []
        while len(distractors) < 3:
            perm = ", ".join(rng.permutation(cats).tolist())
            if perm != truth and perm not in distractors:
                distractors.append(perm)
        options = [truth, *distractors]
        rng.shuffle(options)
        listed = rng.permutation(cats).tolist()
        records.append(_record(
            g, "appearance_order", len(records), ANSWER_MCA,
            f"What will be the first-time appearance order of the following "
            f"categories in the video: {', '.join(listed)}?",
            truth, options=options,
            meta={"first_seen": {cat: fid for cat, fid in quad}},
        ))
    return records


SPATIAL_GENERATORS = {
    "obj_count": gen_object_count,
    "abs_dist": gen_absolute_distance,
    "rel_dist": gen_relative_distance,
    "rel_dir": gen_relative_direction,
    "obj_size": gen_object_size,
    "room_size": gen_room_size,
    "appearance_order": gen_appearance_order,
}
