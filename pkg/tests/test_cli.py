import json

import numpy as np
import pytest

from oracles import verify_record
from synth import make_cluster_cloud, make_rect_cloud, make_scene, make_single_turn_waypoints, write_scene_dir
from sceneqa.cli import main, read_records_jsonl
from sceneqa.metadata import load_frame_metadata, load_scene_metadata
from sceneqa.ply_io import write_ply
from sceneqa.qa_records import GenConfig, validate_record


@pytest.fixture()
def scene_dir(tmp_path):
    scene, frames = make_scene(seed=2024, scene_id="cli000")
    rng = np.random.default_rng(9)
    trajectories = [make_single_turn_waypoints(rng)[0] for _ in range(4)]
    trajectories.append(np.array([[1.0, 1.0, 0.0], [3.5, 1.0, 0.0]]))
    cloud = make_rect_cloud(7, 6.0, 5.0)
    return write_scene_dir(tmp_path / "scenes", scene, frames,
                           cloud=cloud, trajectories=trajectories)


# --- ingest -------------------------------------------------------------------------

def test_ingest_two_instances(tmp_path, capsys):
    cloud = make_cluster_cloud(11, [(1, 4, [0, 0, 0.5], [1, 1, 1], 200),
                                    (2, 7, [4, 4, 0.5], [1, 1, 1], 200)])
    ply = tmp_path / "scan.ply"
    write_ply(ply, cloud, binary=True)
    labels = tmp_path / "labels.json"
    labels.write_text(json.dumps({"4": "chair", "7": "table"}))
    out = tmp_path / "scene_metadata.json"

    code = main(["ingest", "--ply", str(ply), "--label-map", str(labels),
                 "--scene-id", "scan0", "--out", str(out)])
    assert code == 0
    assert "2 instance(s)" in capsys.readouterr().out
    meta = load_scene_metadata(out)
    assert len(meta.objects) == 2
    assert meta.category_counts == {"chair": 1, "table": 1}

    # rerun: byte-identical output
    first = out.read_bytes()
    assert main(["ingest", "--ply", str(ply), "--label-map", str(labels),
                 "--scene-id", "scan0", "--out", str(out)]) == 0
    assert out.read_bytes() == first


def test_ingest_malformed_ply_exit_code(tmp_path, capsys):
    bad = tmp_path / "bad.ply"
    bad.write_text("not a ply file\n")
    labels = tmp_path / "labels.json"
    labels.write_text("{}")
    code = main(["ingest", "--ply", str(bad), "--label-map", str(labels),
                 "--scene-id", "x", "--out", str(tmp_path / "o.json")])
    assert code == 2
    err = capsys.readouterr().err
    assert "error" in err and "bad.ply" in err  # file context in the message


# --- gen ----------------------------------------------------------------------------

def test_gen_records_verified_by_oracles(scene_dir, tmp_path, capsys):
    out = tmp_path / "records.jsonl"
    code = main(["gen", "--input-root", str(scene_dir.parent),
                 "--out", str(out), "--seed", "5"])
    assert code == 0

    header, records = read_records_jsonl(out)
    assert header["config"]["seed"] == 5
    assert records, "generator emitted nothing"

    scene = load_scene_metadata(scene_dir / "scene_metadata.json")
    frames = load_frame_metadata(scene_dir / "frame_metadata.json")
    from sceneqa.ply_io import parse_ply
    cloud = parse_ply(scene_dir / "cloud.ply")
    cfg = GenConfig(seed=5)

    tasks_seen = set()
    for rec in records:
        validate_record(rec)
        tasks_seen.add(rec.task)
        if rec.task == "route_plan":
            continue  # covered by its own module tests
        problem = verify_record(rec, scene, frames, cfg, cloud=cloud)
        assert problem is None, f"{rec.qid}: {problem}"
    assert {"room_size", "cam_displacement", "abs_dist"} <= tasks_seen
    assert len(tasks_seen) >= 6


def test_gen_task_filter_is_exact_subset(scene_dir, tmp_path):
    full = tmp_path / "full.jsonl"
    only = tmp_path / "subset.jsonl"
    assert main(["gen", "--input-root", str(scene_dir.parent),
                 "--out", str(full), "--seed", "5"]) == 0
    assert main(["gen", "--input-root", str(scene_dir.parent),
                 "--out", str(only), "--seed", "5", "--tasks", "obj_count"]) == 0
    _, full_records = read_records_jsonl(full)
    _, subset_records = read_records_jsonl(only)
    want = [r.qid for r in full_records if r.task == "obj_count"]
    assert [r.qid for r in subset_records] == want
    assert all(r.task == "obj_count" for r in subset_records)


def test_gen_worker_count_does_not_change_bytes(tmp_path):
    root = tmp_path / "scenes"
    for i in range(4):
        scene, frames = make_scene(seed=3000 + i, scene_id=f"w{i:02d}")
        write_scene_dir(root, scene, frames)
    one = tmp_path / "one.jsonl"
    four = tmp_path / "four.jsonl"
    assert main(["gen", "--input-root", str(root), "--out", str(one),
                 "--seed", "9", "--workers", "1"]) == 0
    assert main(["gen", "--input-root", str(root), "--out", str(four),
                 "--seed", "9", "--workers", "4"]) == 0
    assert one.read_bytes() == four.read_bytes()


def test_gen_config_file_with_flag_overrides(scene_dir, tmp_path):
    cfg_file = tmp_path / "cfg.json"
    cfg_file.write_text(json.dumps({"seed": 1, "max_per_task": 5,
                                    "tasks": ["obj_count", "abs_dist"]}))
    out = tmp_path / "r.jsonl"
    assert main(["gen", "--input-root", str(scene_dir.parent), "--out", str(out),
                 "--config", str(cfg_file), "--seed", "2"]) == 0
    header, records = read_records_jsonl(out)
    assert header["config"]["seed"] == 2  # flag wins
    assert header["config"]["max_per_task"] == 5
    assert {r.task for r in records} <= {"obj_count", "abs_dist"}


def test_gen_unknown_task_is_input_error(scene_dir, tmp_path, capsys):
    code = main(["gen", "--input-root", str(scene_dir.parent),
                 "--out", str(tmp_path / "r.jsonl"), "--tasks", "bogus"])
    assert code == 2


def test_gen_missing_inputs_is_input_error(tmp_path):
    code = main(["gen", "--input-root", str(tmp_path / "nowhere"),
                 "--out", str(tmp_path / "r.jsonl")])
    assert code == 2


def test_gen_single_scene_flags(scene_dir, tmp_path):
    out_single = tmp_path / "single.jsonl"
    out_root = tmp_path / "root.jsonl"
    assert main(["gen",
                 "--scene-metadata", str(scene_dir / "scene_metadata.json"),
                 "--frame-metadata", str(scene_dir / "frame_metadata.json"),
                 "--cloud", str(scene_dir / "cloud.ply"),
                 "--trajectories", str(scene_dir / "trajectories.jsonl"),
                 "--out", str(out_single), "--seed", "5"]) == 0
    assert main(["gen", "--input-root", str(scene_dir.parent),
                 "--out", str(out_root), "--seed", "5"]) == 0
    assert out_single.read_bytes() == out_root.read_bytes()


def test_gen_graph_dump(scene_dir, tmp_path):
    dumps = tmp_path / "graphs"
    assert main(["gen", "--input-root", str(scene_dir.parent),
                 "--out", str(tmp_path / "r.jsonl"), "--tasks", "obj_count",
                 "--dump-graphs", str(dumps)]) == 0
    doc = json.loads((dumps / "cli000.json").read_text())
    assert doc["scene_id"] == "cli000"
    assert "first_seen" in doc


# --- eval ----------------------------------------------------------------------------

def write_jsonl(path, docs):
    path.write_text("".join(json.dumps(d) + "\n" for d in docs))


def eval_fixture(tmp_path, scene_dir):
    records = tmp_path / "records.jsonl"
    assert main(["gen", "--input-root", str(scene_dir.parent),
                 "--out", str(records), "--seed", "5",
                 "--tasks", "obj_count,rel_dir"]) == 0
    _, recs = read_records_jsonl(records)
    return records, recs


def test_eval_perfect_predictions(scene_dir, tmp_path, capsys):
    records, recs = eval_fixture(tmp_path, scene_dir)
    preds = tmp_path / "preds.jsonl"
    write_jsonl(preds, [{"qid": r.qid, "raw_text": r.ground_truth} for r in recs])
    report_path = tmp_path / "report.json"
    code = main(["eval", "--records", str(records), "--predictions", str(preds),
                 "--out", str(report_path)])
    assert code == 0
    report = json.loads(report_path.read_text())
    assert report["overall"] == 1.0
    assert all(v["score"] == 1.0 for v in report["per_task"].values())
    assert "overall" in capsys.readouterr().out


def test_eval_duplicate_qid_exit_3(scene_dir, tmp_path, capsys):
    records, recs = eval_fixture(tmp_path, scene_dir)
    preds = tmp_path / "preds.jsonl"
    write_jsonl(preds, [{"qid": recs[0].qid, "raw_text": "1"},
                        {"qid": recs[0].qid, "raw_text": "2"}])
    code = main(["eval", "--records", str(records), "--predictions", str(preds)])
    assert code == 3


# --- stats ---------------------------------------------------------------------------

def test_stats_counts(tmp_path, capsys):
    docs = [{"_header": {"config": {}}}]
    for task, n in (("obj_count", 4), ("abs_dist", 3), ("room_size", 3)):
        for i in range(n):
            docs.append({"qid": f"s:{task}:{i:04d}", "scene_id": "s", "task": task,
                         "answer_type": "NA", "question": "q", "ground_truth": "1.0",
                         "frame_refs": [], "meta": {}})
    records = tmp_path / "r.jsonl"
    write_jsonl(records, docs)
    out = tmp_path / "stats.json"
    assert main(["stats", "--records", str(records), "--out", str(out)]) == 0
    stats = json.loads(out.read_text())
    assert stats["per_task"] == {"obj_count": 4, "abs_dist": 3, "room_size": 3}
    assert stats["total"] == 10


def test_stats_empty_file(tmp_path, capsys):
    records = tmp_path / "empty.jsonl"
    write_jsonl(records, [{"_header": {}}])
    assert main(["stats", "--records", str(records)]) == 0
    assert "total" in capsys.readouterr().out


# --- fusion-check ----------------------------------------------------------------------

def test_fusion_check_command(capsys):
    assert main(["fusion-check"]) == 0
    out = capsys.readouterr().out
    assert "[PASS] attention rows sum to 1" in out
    assert "[FAIL]" not in out
