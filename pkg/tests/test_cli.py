import json
from dataclasses import replace

import numpy as np
import pytest
from PIL import Image

from crackmeter.annotations import ClassLabel, ImageRecord, write_dataset
from crackmeter.cli import main
from crackmeter.synthwall import WallSpec, generate, random_scene, random_step_crack


def small_wall(i, crack=True):
    base = WallSpec(rows=8, cols=4, seed=i, image_id=f"w{i:03d}")
    if crack:
        base = replace(base, crack=random_step_crack(base, np.random.default_rng(i), steps=2))
    return generate(base)


@pytest.fixture(scope="module")
def scene_files(tmp_path_factory):
    d = tmp_path_factory.mktemp("scene")
    spec = d / "spec.json"
    spec.write_text(json.dumps(random_scene(9).to_dict()))
    paths = {n: d / f"{n}.json" for n in ("gt", "pred", "truth")}
    argv = ["synth", "--spec", str(spec)] + [a for n, p in paths.items() for a in (f"--out-{n}", str(p))]
    assert main(argv) == 0
    return d, paths


def test_measure_matches_truth(scene_files, tmp_path):
    _, paths = scene_files
    assert main(["measure", "--pred", str(paths["pred"]), "--out", str(tmp_path), "--thresh-frac", "0.15", "--workers", "1"]) == 0
    doc = json.loads((tmp_path / "measurements.json").read_text())
    truth = json.loads(paths["truth"].read_text())["crack"]
    assert doc["failures"] == []
    cracks = doc["measurements"][0]["cracks"]
    for name in ("total_width", "total_height", "max_transverse_width"):
        assert cracks[f"{name}_mm_unrounded"] == pytest.approx(truth[f"{name}_mm"], rel=0.05)


def test_references_produce_errors(scene_files, tmp_path):
    _, paths = scene_files
    truth = json.loads(paths["truth"].read_text())["crack"]
    refs = tmp_path / "refs.json"
    refs.write_text(json.dumps([{"image_id": "scene_009", **truth}]))
    out = tmp_path / "o"
    code = main(["measure", "--gt", str(paths["gt"]), "--out", str(out), "--thresh-frac", "0.15", "--references", str(refs)])
    assert code == 0
    errors = json.loads((out / "measurements.json").read_text())["errors"]
    assert set(errors) == {"total_width", "total_height", "max_transverse_width"}
    assert all(e["mape"] < 5 for e in errors.values())


def test_no_cracks_exit_4(tmp_path):
    gt, _, _ = small_wall(1, crack=False)
    write_dataset([gt], tmp_path / "gt.json")
    assert main(["measure", "--gt", str(tmp_path / "gt.json"), "--out", str(tmp_path / "o")]) == 4
    doc = json.loads((tmp_path / "o" / "measurements.json").read_text())
    assert [(f["image_id"], f["kind"], f["stage"]) for f in doc["failures"]] == [(gt.image_id, "NoCracks", "measurement")]


def test_mixed_failures_take_lowest_code(tmp_path):
    gt, _, _ = small_wall(1, crack=False)
    few = ImageRecord("few", gt.width, gt.height, gt.instances[:2])
    ok, _, _ = small_wall(2)
    write_dataset([gt, few, ok], tmp_path / "gt.json")
    assert main(["measure", "--gt", str(tmp_path / "gt.json"), "--out", str(tmp_path / "o")]) == 3
    doc = json.loads((tmp_path / "o" / "measurements.json").read_text())
    assert [m["image_id"] for m in doc["measurements"]] == [ok.image_id]
    assert {f["kind"] for f in doc["failures"]} == {"NoCracks", "InsufficientBricks"}


def test_parse_errors_exit_2(tmp_path):
    bad = tmp_path / "bad.json"
    bad.write_text("[]")
    assert main(["measure", "--gt", str(bad), "--out", str(tmp_path / "o")]) == 2
    assert main(["measure", "--gt", str(tmp_path / "missing.json"), "--out", str(tmp_path / "o")]) == 2
    spec = tmp_path / "spec.json"
    spec.write_text(json.dumps({"rows": 0}))
    argv = ["synth", "--spec", str(spec), "--out-gt", "a", "--out-pred", "b", "--out-truth", "c"]
    assert main(argv) == 2
    with pytest.raises(SystemExit) as err:
        main(["measure", "--gt", str(bad), "--out", "x", "--grid-crop", "3by4"])
    assert err.value.code == 2


def test_batch_of_84_sub_images(tmp_path):
    records = [small_wall(i)[1] for i in range(84)]
    write_dataset(records, tmp_path / "pred.json")
    assert main(["measure", "--pred", str(tmp_path / "pred.json"), "--out", str(tmp_path / "o"), "--workers", "4"]) == 0
    doc = json.loads((tmp_path / "o" / "measurements.json").read_text())
    assert len(doc["measurements"]) == 84
    assert [m["image_id"] for m in doc["measurements"]] == sorted(r.image_id for r in records)


def test_grid_crop_flag(tmp_path):
    gt, _, _ = small_wall(3)
    write_dataset([gt], tmp_path / "gt.json")
    main(["measure", "--gt", str(tmp_path / "gt.json"), "--out", str(tmp_path / "o"), "--grid-crop", "1x2"])
    doc = json.loads((tmp_path / "o" / "measurements.json").read_text())
    ids = [m["image_id"] for m in doc["measurements"]] + [f["image_id"] for f in doc["failures"]]
    assert sorted(ids) == [f"{gt.image_id}_01_01", f"{gt.image_id}_01_02"]


def test_min_score_filters_predictions(tmp_path):
    _, pred, _ = small_wall(4)
    low = pred.with_instances(
        i if i.label != ClassLabel.CRACK else type(i)(i.label, i.polygons, 0.2) for i in pred.instances
    )
    write_dataset([low], tmp_path / "p.json")
    assert main(["measure", "--pred", str(tmp_path / "p.json"), "--out", str(tmp_path / "a")]) == 4
    assert main(["measure", "--pred", str(tmp_path / "p.json"), "--out", str(tmp_path / "b"), "--min-score", "0.1"]) == 0


def test_debug_render_and_lines(scene_files, tmp_path):
    _, paths = scene_files
    out = tmp_path / "dbg"
    assert main(["measure", "--pred", str(paths["pred"]), "--out", str(out), "--thresh-frac", "0.15", "--debug-render"]) == 0
    assert (out / "debug" / "scene_009_lines.png").exists()
    report = json.loads((out / "debug" / "scene_009_rectification.json").read_text())
    assert report["scale"]["mm_per_px_x"] > 0
    lines = tmp_path / "lines"
    assert main(["lines", "--gt", str(paths["gt"]), "--out", str(lines), "--thresh-frac", "0.15"]) == 0
    doc = json.loads((lines / "scene_009_lines.json").read_text())
    assert {l["class"] for l in doc["lines"]} == {"horizontal", "vertical"}
    assert (lines / "scene_009_hough.pgm").read_bytes().startswith(b"P5\n")
    img = Image.open(lines / "scene_009_lines.png").convert("RGB")
    colours = set(map(tuple, np.asarray(img).reshape(-1, 3).tolist()))
    assert {(255, 255, 255), (255, 0, 0), (0, 255, 0)} <= colours


def test_eval_command(scene_files, tmp_path):
    _, paths = scene_files
    out = tmp_path / "rep.json"
    assert main(["eval", "--gt", str(paths["gt"]), "--pred", str(paths["pred"]), "--out", str(out)]) == 0
    rep = json.loads(out.read_text())
    assert rep["all"]["ap_mask"] == 1.0 and rep["all"]["ap_box_50"] == 1.0
    assert main(["eval", "--gt", str(paths["pred"]), "--pred", str(paths["pred"]), "--out", str(out)]) == 2


def test_synth_seed_override(scene_files, tmp_path):
    d, paths = scene_files
    argv = ["synth", "--spec", str(d / "spec.json"), "--seed", "77"]
    argv += ["--out-gt", str(tmp_path / "g.json"), "--out-pred", str(tmp_path / "p.json"), "--out-truth", str(tmp_path / "t.json")]
    assert main(argv) == 0
    assert (tmp_path / "g.json").read_bytes() != paths["gt"].read_bytes()
