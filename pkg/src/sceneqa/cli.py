"""Command-line surface: ingest -> gen -> eval -> stats, plus fusion-check.

Exit codes: 0 success, 2 input error (missing/malformed files), 3 evaluation
error. All outputs are deterministic: records are generated per scene,
gathered, then sorted by (scene_id, task order, counter) before writing, so
the worker count never changes the bytes on disk.

Every generated artifact starts with a header line ``{"_header": {...}}``
carrying the resolved configuration; readers in this package skip it.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import multiprocessing
import sys
from pathlib import Path

import numpy as np

from . import graph as graph_mod
from . import qa_spatial, qa_temporal
from .errors import DuplicateQid, SceneQaError
from .evaluate import Prediction, render_table, score_run
from .metadata import (
    build_scene_metadata,
    derive_instance_boxes,
    load_frame_metadata,
    load_scene_metadata,
    save_scene_metadata,
)
from .ply_io import parse_ply
from .qa_records import TASKS, TASK_ORDER, GenConfig, record_from_dict, record_to_dict
from .route_plan import gen_route_plan, load_trajectories

EXIT_OK = 0
EXIT_INPUT = 2
EXIT_EVAL = 3


class InputError(SceneQaError):
    """A parser/loader error annotated with the offending file."""


def _load(path, loader):
    try:
        return loader(path)
    except SceneQaError as exc:
        raise InputError(f"{path}: {exc}") from exc


# --- record file helpers ------------------------------------------------------

def _dump_line(doc: dict) -> str:
    return json.dumps(doc, sort_keys=True, separators=(",", ":")) + "\n"


def write_records_jsonl(path, records, header: dict):
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(_dump_line({"_header": header}))
        for rec in records:
            fh.write(_dump_line(record_to_dict(rec)))


def read_records_jsonl(path):
    """Returns (header dict or None, list of validated QaRecords)."""
    header = None
    records = []
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            doc = json.loads(line)
            if "_header" in doc:
                header = doc["_header"]
                continue
            records.append(record_from_dict(doc))
    return header, records


# --- generation pipeline ------------------------------------------------------

@dataclasses.dataclass(frozen=True)
class SceneInputs:
    scene_path: str
    frames_path: str
    cloud_path: str | None = None
    trajectories_path: str | None = None


def discover_scenes(root) -> list[SceneInputs]:
    """Scan an input root: one subdirectory per scene with the metadata pair
    and optional cloud.ply / trajectories.jsonl."""
    root = Path(root)
    scenes = []
    for sub in sorted(p for p in root.iterdir() if p.is_dir()):
        scene = sub / "scene_metadata.json"
        frames = sub / "frame_metadata.json"
        if not (scene.exists() and frames.exists()):
            continue
        cloud = sub / "cloud.ply"
        traj = sub / "trajectories.jsonl"
        scenes.append(SceneInputs(
            str(scene), str(frames),
            str(cloud) if cloud.exists() else None,
            str(traj) if traj.exists() else None,
        ))
    return scenes


def generate_scene_records(inputs: SceneInputs, cfg: GenConfig, tasks) -> list:
    """All requested records for one scene, in canonical order."""
    scene = _load(inputs.scene_path, load_scene_metadata)
    frames = _load(inputs.frames_path, load_frame_metadata)
    g = graph_mod.build_graph(scene, frames, cfg.min_bbox_area_px)

    cloud = _load(inputs.cloud_path, parse_ply) if inputs.cloud_path else None

    records = []
    for task in TASKS:
        if task not in tasks:
            continue
        if task in qa_spatial.SPATIAL_GENERATORS:
            gen = qa_spatial.SPATIAL_GENERATORS[task]
            if task == "room_size":
                records.extend(gen(g, cfg, cloud))
            else:
                records.extend(gen(g, cfg))
        elif task in qa_temporal.TEMPORAL_GENERATORS:
            try:
                seq = graph_mod.sample_frame_sequence(g, cfg.sample_frames)
            except SceneQaError:
                continue
            records.extend(qa_temporal.TEMPORAL_GENERATORS[task](g, seq, cfg))
        elif task == "route_plan" and inputs.trajectories_path:
            trajectories = [t for sid, t in load_trajectories(inputs.trajectories_path)
                            if sid == scene.scene_id]
            recs, _ = gen_route_plan(g, trajectories, cfg)
            records.extend(recs)
    return records


def _worker(args):
    inputs, cfg_dict, tasks = args
    cfg = GenConfig(**cfg_dict)
    records = generate_scene_records(inputs, cfg, tasks)
    return [record_to_dict(r) for r in records]


def run_generation(scene_inputs, cfg: GenConfig, tasks, workers: int = 1):
    """Fan out per scene, gather, and sort into the canonical record order."""
    jobs = [(inp, dataclasses.asdict(cfg), tuple(tasks)) for inp in scene_inputs]
    if workers > 1 and len(jobs) > 1:
        with multiprocessing.Pool(workers) as pool:
            chunks = pool.map(_worker, jobs)
    else:
        chunks = [_worker(job) for job in jobs]
    docs = [doc for chunk in chunks for doc in chunk]
    docs.sort(key=lambda d: (d["scene_id"], TASK_ORDER[d["task"]], d["qid"]))
    return [record_from_dict(d) for d in docs]


# --- commands -------------------------------------------------------------------

def cmd_ingest(args) -> int:
    cloud = _load(args.ply, parse_ply)
    with open(args.label_map, "r", encoding="utf-8") as fh:
        label_map = {int(k): v for k, v in json.load(fh).items()}
    instances = derive_instance_boxes(cloud, label_map,
                                      min_points=args.min_points,
                                      oriented=args.oriented)
    total_groups = len(np.unique(cloud.instance_labels))
    meta = build_scene_metadata(args.scene_id, instances, cloud.positions)
    save_scene_metadata(args.out, meta)
    print(f"scene {args.scene_id}: {len(instances)} instance(s), "
          f"{total_groups - len(instances)} dropped (< {args.min_points} points)")
    return EXIT_OK


def _resolve_config(args) -> tuple[GenConfig, list, int]:
    """Layer the generator config: defaults < config file < CLI flags."""
    values = {}
    tasks = list(TASKS)
    workers = 1
    if args.config:
        with open(args.config, "r", encoding="utf-8") as fh:
            doc = json.load(fh)
        tasks = doc.pop("tasks", tasks)
        workers = doc.pop("workers", workers)
        values.update(doc)
    if args.seed is not None:
        values["seed"] = args.seed
    if args.max_per_task is not None:
        values["max_per_task"] = args.max_per_task
    if args.tasks:
        tasks = [t.strip() for t in args.tasks.split(",") if t.strip()]
    if args.workers is not None:
        workers = args.workers
    unknown = [t for t in tasks if t not in TASKS]
    if unknown:
        raise SceneQaError(f"unknown task(s): {', '.join(unknown)}")
    return GenConfig(**values), tasks, workers


def cmd_gen(args) -> int:
    cfg, tasks, workers = _resolve_config(args)
    if args.input_root:
        scene_inputs = discover_scenes(args.input_root)
        if not scene_inputs:
            raise SceneQaError(f"no scene directories under {args.input_root}")
    else:
        if not (args.scene_metadata and args.frame_metadata):
            raise SceneQaError("need --input-root or --scene-metadata with --frame-metadata")
        scene_inputs = [SceneInputs(args.scene_metadata, args.frame_metadata,
                                    args.cloud, args.trajectories)]

    records = run_generation(scene_inputs, cfg, tasks, workers)
    header = {"config": dataclasses.asdict(cfg), "tasks": list(tasks),
              "record_count": len(records)}
    write_records_jsonl(args.out, records, header)

    if args.dump_graphs:
        Path(args.dump_graphs).mkdir(parents=True, exist_ok=True)
        for inp in scene_inputs:
            scene = load_scene_metadata(inp.scene_path)
            frames = load_frame_metadata(inp.frames_path)
            g = graph_mod.build_graph(scene, frames, cfg.min_bbox_area_px)
            out = Path(args.dump_graphs) / f"{scene.scene_id}.json"
            with open(out, "w", encoding="utf-8") as fh:
                json.dump(graph_mod.graph_to_dict(g), fh, sort_keys=True, indent=1)
                fh.write("\n")

    print(f"wrote {len(records)} record(s) to {args.out}")
    return EXIT_OK


def cmd_eval(args) -> int:
    _, records = read_records_jsonl(args.records)
    preds = []
    with open(args.predictions, "r", encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            doc = json.loads(line)
            if "_header" in doc:
                continue
            preds.append(Prediction(doc["qid"], doc["raw_text"]))
    report = score_run(records, preds, weight_by_question=args.weight_by_question)
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            json.dump(report.to_dict(), fh, sort_keys=True, indent=1)
            fh.write("\n")
    print(render_table(report))
    return EXIT_OK


def cmd_stats(args) -> int:
    _, records = read_records_jsonl(args.records)
    counts = {}
    for rec in records:
        counts[rec.task] = counts.get(rec.task, 0) + 1
    lines = [f"{'task':<18}{'count':>8}"]
    for task in TASKS:
        if task in counts:
            lines.append(f"{task:<18}{counts[task]:>8}")
    lines.append(f"{'total':<18}{len(records):>8}")
    print("\n".join(lines))
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            json.dump({"per_task": counts, "total": len(records)}, fh,
                      sort_keys=True, indent=1)
            fh.write("\n")
    return EXIT_OK


def cmd_fusion_check(args) -> int:
    from . import fusion

    rng = np.random.default_rng(args.seed if args.seed is not None else 0)
    ok = True

    w = fusion.FusionWeights.random(rng, dim_v=8, dim_3d=7, d_k=6, d_p1=9, d_p2=5)
    h_v = rng.normal(size=(6, 8))
    f = rng.normal(size=(4, 7))
    z = rng.normal(size=(1, 7))
    attn = fusion.attention_map(h_v, fusion.build_unified_3d(f, z), w)
    row_err = float(np.abs(attn.sum(axis=1) - 1.0).max())
    ok &= _check_line("attention rows sum to 1", row_err < 1e-9, f"max err {row_err:.2e}")

    w_zero = w.with_zero_values().with_identity_projector()
    residual = fusion.fuse_forward(h_v, f, z, w_zero)
    ok &= _check_line("zero-value residual identity", bool(np.array_equal(residual, h_v)))

    err_lin = fusion.grad_check(
        dataclasses.replace(w.with_identity_projector(), use_softmax=False), h_v, f, z)
    ok &= _check_line("linear-path gradients", err_lin < 1e-9, f"max rel err {err_lin:.2e}")

    err_full = fusion.grad_check(w, h_v, f, z)
    ok &= _check_line("full-chain gradients", err_full < 1e-5, f"max rel err {err_full:.2e}")

    if args.full_shapes:
        w_big = fusion.FusionWeights.random(rng, dim_v=1152, dim_3d=768,
                                            d_k=64, d_p1=3584, d_p2=3584, scale=0.02)
        out = fusion.fuse_forward(rng.normal(size=(729, 1152)),
                                  rng.normal(size=(729, 768)),
                                  rng.normal(size=(1, 768)), w_big)
        ok &= _check_line("full-width shape smoke", out.shape == (729, 3584),
                          f"output {out.shape}")

    return EXIT_OK if ok else 1


def _check_line(name, passed, detail="") -> bool:
    status = "PASS" if passed else "FAIL"
    suffix = f" ({detail})" if detail else ""
    print(f"[{status}] {name}{suffix}")
    return bool(passed)


# --- argument parsing -----------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="sceneqa",
        description="Deterministic scene-graph QA generation and scoring.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ingest", help="fit instance boxes from a labeled PLY")
    p.add_argument("--ply", required=True)
    p.add_argument("--label-map", required=True,
                   help="JSON mapping semantic label id -> category name")
    p.add_argument("--scene-id", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--min-points", type=int, default=50)
    p.add_argument("--oriented", action="store_true",
                   help="fit yaw-oriented boxes instead of axis-aligned")
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("gen", help="generate question records")
    p.add_argument("--input-root", help="directory of per-scene subdirectories")
    p.add_argument("--scene-metadata")
    p.add_argument("--frame-metadata")
    p.add_argument("--cloud", help="optional labeled PLY for room-size hulls")
    p.add_argument("--trajectories", help="optional trajectory JSONL for route planning")
    p.add_argument("--out", required=True)
    p.add_argument("--tasks", help="comma-separated subset of task names")
    p.add_argument("--seed", type=int)
    p.add_argument("--max-per-task", type=int)
    p.add_argument("--workers", type=int)
    p.add_argument("--config", help="JSON file of generator settings")
    p.add_argument("--dump-graphs", help="directory for debug graph dumps")
    p.set_defaults(func=cmd_gen)

    p = sub.add_parser("eval", help="score predictions against records")
    p.add_argument("--records", required=True)
    p.add_argument("--predictions", required=True,
                   help="JSONL of {qid, raw_text}")
    p.add_argument("--out")
    p.add_argument("--weight-by-question", action="store_true")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("stats", help="count records per task")
    p.add_argument("--records", required=True)
    p.add_argument("--out")
    p.set_defaults(func=cmd_stats)

    p = sub.add_parser("fusion-check", help="run the fusion kernel self-checks")
    p.add_argument("--seed", type=int)
    p.add_argument("--full-shapes", action="store_true",
                   help="also run the full-width shape smoke test")
    p.set_defaults(func=cmd_fusion_check)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except DuplicateQid as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_EVAL
    except (SceneQaError, FileNotFoundError, json.JSONDecodeError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
