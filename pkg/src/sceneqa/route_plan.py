"""Trajectory classification, anchor labeling and route-plan question rendering.

A trajectory is a floor-plane waypoint polyline. Heading changes at interior
waypoints are clustered (junctions closer than a small window merge, sub-
noise-floor jitter is ignored); a single cluster whose accumulated change
exceeds the turn threshold makes the route a TurnLeft/TurnRight, none makes
it a TurnBack, and more than one is rejected as MultiTurn.

The two question templates are fixed text with SRC/MID/TGT slots; answers
are always re-derived from the traversal the rendered text actually
describes, so a mirrored or reversed route can never carry a stale label.
"""

from __future__ import annotations

import json
from collections import deque
from dataclasses import dataclass

import numpy as np

from .errors import DegenerateDirection, MultiTurn, NoNearbyObject, NoPath, TooShort
from .geometry import planar_signed_angle
from .graph import SceneGraph
from .qa_records import ANSWER_MCA, GenConfig, QaRecord, make_qid

ROUTE_OPTIONS = ("turn back", "turn left", "turn right")

TEMPLATE_1 = (
    "You are a robot beginning at the {src} facing the {mid}. You want to "
    "navigate to the {tgt}. You will perform the following actions (Note: "
    "for each [please fill in], choose either 'turn back,' 'turn left,' or "
    "'turn right.'):  1. Go forward until the {mid}. 2. [please fill in] "
    "3. Go forward until the {tgt}. You have reached the final destination."
)

TEMPLATE_2 = (
    "You are a robot beginning at the {mid} facing the {tgt}. You want to "
    "navigate to the {src}. You will perform the following actions (Note: "
    "for each [please fill in], choose either 'turn back,' 'turn left,' or "
    "'turn right.'):  1. [please fill in] 2. Go forward until the {src}. "
    "You have reached the final destination."
)


@dataclass(frozen=True)
class Trajectory:
    """Ordered floor-plane waypoints. Consecutive waypoints must be distinct;
    a single-waypoint path is representable but unclassifiable (TooShort)."""

    waypoints: np.ndarray  # (m, 3)
    source: str = "ingested"  # "ingested" | "grid_planner"

    def __post_init__(self):
        w = np.atleast_2d(np.asarray(self.waypoints, dtype=float))
        if w.shape[1] == 2:
            w = np.column_stack([w, np.zeros(len(w))])
        if w.shape[1] != 3:
            raise ValueError(f"waypoints must be (m, 3), got {w.shape}")
        if not np.all(np.isfinite(w)):
            raise ValueError("waypoints must be finite")
        steps = np.linalg.norm(np.diff(w, axis=0), axis=1)
        if np.any(steps <= 1e-6):
            raise ValueError("consecutive waypoints must be more than 1e-6 m apart")
        object.__setattr__(self, "waypoints", w)

    def __len__(self):
        return len(self.waypoints)


@dataclass(frozen=True)
class ClassifiedRoute:
    kind: str  # "TurnLeft" | "TurnRight" | "TurnBack"
    anchors: tuple  # (src, mid, tgt) positions, each (3,)
    turn_angle_deg: float
    template_mode: str  # "Template1" | "Template2"


def _arclength_midpoint(w: np.ndarray) -> np.ndarray:
    seg = np.linalg.norm(np.diff(w, axis=0), axis=1)
    half = seg.sum() / 2.0
    walked = 0.0
    for k, length in enumerate(seg):
        if walked + length >= half:
            t = (half - walked) / length
            return w[k] + t * (w[k + 1] - w[k])
        walked += length
    return w[-1]


def classify_trajectory(t: Trajectory, cfg: GenConfig | None = None) -> ClassifiedRoute:
    """Classify a trajectory as one logical turn or a turn-back route.

    Raises TooShort for paths with fewer than two waypoints and MultiTurn
    when more than one accumulated heading change exceeds the threshold.
    """
    cfg = cfg or GenConfig()
    w = t.waypoints
    if len(w) < 2:
        raise TooShort(f"trajectory has {len(w)} waypoint(s)")

    segments = np.diff(w, axis=0)
    deltas = [planar_signed_angle(segments[k - 1], segments[k])
              for k in range(1, len(segments))]

    # Cluster significant junctions that sit within the jitter window.
    clusters = []  # (first_junction, last_junction)
    for k, delta in enumerate(deltas):
        if abs(delta) <= cfg.turn_noise_floor_deg:
            continue
        if clusters and k - clusters[-1][1] <= cfg.turn_window_segments - 1:
            clusters[-1] = (clusters[-1][0], k)
        else:
            clusters.append((k, k))

    qualifying = []
    for first, last in clusters:
        angle = sum(deltas[first:last + 1])
        if abs(angle) > cfg.turn_threshold_deg:
            qualifying.append((first, last, angle))

    if len(qualifying) > 1:
        raise MultiTurn(f"{len(qualifying)} qualifying turns")

    if len(qualifying) == 1:
        first, last, angle = qualifying[0]
        peak = max(range(first, last + 1), key=lambda k: abs(deltas[k]))
        turn_point = w[peak + 1]  # junction k sits at waypoint k+1
        kind = "TurnLeft" if angle > 0 else "TurnRight"
        return ClassifiedRoute(kind, (w[0], turn_point, w[-1]), float(angle), "Template1")

    return ClassifiedRoute("TurnBack", (w[0], _arclength_midpoint(w), w[-1]), 0.0, "Template2")


def label_anchors(route: ClassifiedRoute, g: SceneGraph,
                  max_anchor_dist_m: float = 2.0):
    """Category of the nearest object (planar center distance) per anchor.

    Raises NoNearbyObject when an anchor has no object within range or when
    two anchors resolve to the same instance (either way the route is
    unusable for question text).
    """
    if not g.scene.objects:
        raise NoNearbyObject("scene has no objects")
    labels = []
    used = []
    for anchor in route.anchors:
        best = min(
            g.scene.objects,
            key=lambda o: float(np.linalg.norm(o.box.center[:2] - anchor[:2])),
        )
        dist = float(np.linalg.norm(best.box.center[:2] - anchor[:2]))
        if dist > max_anchor_dist_m:
            raise NoNearbyObject(f"nearest object is {dist:.2f} m away")
        if best.instance_id in used:
            raise NoNearbyObject(f"two anchors share instance {best.instance_id}")
        used.append(best.instance_id)
        labels.append(best.category)
    return tuple(labels)


def classify_turn_action(facing_dir, move_dir, cfg: GenConfig | None = None):
    """Action verb for "face along facing_dir, then move along move_dir".

    Returns "turn left" / "turn right" / "turn back", or None when the move
    stays inside the forward cone (no turn to name).
    """
    cfg = cfg or GenConfig()
    theta = planar_signed_angle(facing_dir, move_dir)
    if abs(theta) >= cfg.rel_dir_back_deg:
        return "turn back"
    if theta > cfg.turn_threshold_deg:
        return "turn left"
    if theta < -cfg.turn_threshold_deg:
        return "turn right"
    return None


def render_route_qa(route: ClassifiedRoute, labels, cfg: GenConfig,
                    scene_id: str = "", counter: int = 0,
                    alternative: bool = False) -> QaRecord:
    """Instantiate the route templates for a classified, labeled route.

    Template 1 walks src -> mid -> tgt with the fill-in at mid. Template 2
    places the agent at mid; it is used for TurnBack routes (facing the
    start, moving to the end) and, in alternative mode, for turns sharper
    than the alternative threshold (facing the end, moving back to the
    start). The ground truth is re-derived from whichever traversal the
    rendered text describes; routes whose re-derived action cannot be
    named are rejected with MultiTurn semantics skipped upstream.
    """
    src_pos, mid_pos, tgt_pos = route.anchors
    src_lbl, mid_lbl, tgt_lbl = labels
    meta = {"kind": route.kind, "turn_angle_deg": round(route.turn_angle_deg, 3)}

    if route.kind == "TurnBack":
        # Agent stands at mid facing the start anchor, then moves to the end:
        # template slots are swapped so the text matches that traversal.
        question = TEMPLATE_2.format(mid=mid_lbl, tgt=src_lbl, src=tgt_lbl)
        truth = classify_turn_action(src_pos - mid_pos, tgt_pos - mid_pos, cfg)
        meta["template"] = "Template2"
    elif alternative and abs(route.turn_angle_deg) > cfg.alt_turn_threshold_deg:
        question = TEMPLATE_2.format(mid=mid_lbl, tgt=tgt_lbl, src=src_lbl)
        truth = classify_turn_action(tgt_pos - mid_pos, src_pos - mid_pos, cfg)
        meta["template"] = "Template2"
        meta["primary_action"] = "turn left" if route.kind == "TurnLeft" else "turn right"
    else:
        question = TEMPLATE_1.format(src=src_lbl, mid=mid_lbl, tgt=tgt_lbl)
        truth = classify_turn_action(mid_pos - src_pos, tgt_pos - mid_pos, cfg)
        meta["template"] = "Template1"

    expected = {"TurnLeft": "turn left", "TurnRight": "turn right",
                "TurnBack": "turn back"}[route.kind]
    if truth is None or (meta["template"] == "Template1" and truth != expected):
        raise NoNearbyObject("re-derived action does not name a turn; route unusable")

    return QaRecord(
        qid=make_qid(scene_id, "route_plan", counter),
        scene_id=scene_id,
        task="route_plan",
        answer_type=ANSWER_MCA,
        question=question,
        options=ROUTE_OPTIONS,
        ground_truth=truth,
        frame_refs=(),
        meta=meta,
    )


def gen_route_plan(g: SceneGraph, trajectories, cfg: GenConfig):
    """Classify, label and render every usable trajectory of a scene."""
    records = []
    skipped = 0
    for traj in trajectories:
        if len(records) >= cfg.max_per_task:
            break
        try:
            route = classify_trajectory(traj, cfg)
            labels = label_anchors(route, g, cfg.max_anchor_dist_m)
            rec = render_route_qa(route, labels, cfg, g.scene_id, len(records),
                                  alternative=cfg.route_alternative_mode)
        except (MultiTurn, TooShort, NoNearbyObject, DegenerateDirection):
            skipped += 1
            continue
        records.append(rec)
    return records, skipped


# --- grid planner (stand-in for a navigation-mesh pathfinder) ----------------

# Expansion order is part of the contract: +X first, then +Y.
_NEIGHBOR_STEPS = ((1, 0), (0, 1), (-1, 0), (0, -1))


def plan_grid_path(occupancy: np.ndarray, cell_size_m: float,
                   start, goal) -> Trajectory:
    """Shortest 4-connected path on an occupancy grid, waypoint-simplified.

    ``occupancy[x, y]`` is True for blocked cells. Ties break by the fixed
    +X-then-+Y expansion order, so output is deterministic. Waypoints are
    cell centers on the floor plane. Raises NoPath when unreachable.
    """
    occupancy = np.asarray(occupancy, dtype=bool)
    nx, ny = occupancy.shape
    start, goal = tuple(start), tuple(goal)
    for name, cell in (("start", start), ("goal", goal)):
        x, y = cell
        if not (0 <= x < nx and 0 <= y < ny):
            raise ValueError(f"{name} cell {cell} outside grid")
        if occupancy[x, y]:
            raise ValueError(f"{name} cell {cell} is occupied")

    def center(cell):
        return ((cell[0] + 0.5) * cell_size_m, (cell[1] + 0.5) * cell_size_m, 0.0)

    if start == goal:
        return Trajectory(np.array([center(start)]), source="grid_planner")

    parent = {start: None}
    queue = deque([start])
    while queue:
        cell = queue.popleft()
        if cell == goal:
            break
        for dx, dy in _NEIGHBOR_STEPS:
            nxt = (cell[0] + dx, cell[1] + dy)
            if (0 <= nxt[0] < nx and 0 <= nxt[1] < ny
                    and not occupancy[nxt] and nxt not in parent):
                parent[nxt] = cell
                queue.append(nxt)
    if goal not in parent:
        raise NoPath(f"no route from {start} to {goal}")

    cells = []
    cell = goal
    while cell is not None:
        cells.append(cell)
        cell = parent[cell]
    cells.reverse()

    # Collinearity merge: keep only cells where the step direction changes.
    kept = [cells[0]]
    for k in range(1, len(cells) - 1):
        prev_dir = (cells[k][0] - cells[k - 1][0], cells[k][1] - cells[k - 1][1])
        next_dir = (cells[k + 1][0] - cells[k][0], cells[k + 1][1] - cells[k][1])
        if prev_dir != next_dir:
            kept.append(cells[k])
    kept.append(cells[-1])

    return Trajectory(np.array([center(c) for c in kept]), source="grid_planner")


def load_trajectories(path):
    """Read the trajectory ingestion format: one JSON object per line with
    {"scene_id": str, "waypoints": [[x, y, z?], ...]} (z defaults to 0)."""
    out = []
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            doc = json.loads(line)
            out.append((doc["scene_id"], Trajectory(np.asarray(doc["waypoints"], dtype=float))))
    return out
