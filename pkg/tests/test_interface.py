"""Wire-format and CLI tests.

The segment command is checked differentially against the library
pipeline with the same weights, so the CLI path adds nothing beyond
plumbing. RLE coding is fuzzed for losslessness.
"""

import json
from pathlib import Path

import numpy as np
import pytest
from click.testing import CliRunner

from sqseg import imageio
from sqseg.cli import main
from sqseg.nn import load_tensor, load_weights
from sqseg.pipeline import ClassProbMap, NetworkModel, assemble_semantic_map, segment_one
from sqseg.rle import rle_decode, rle_encode
from sqseg.signals import Squiggle, rasterize_squiggle

from synthdata import demo_squiggles, synthetic_label_map, synthetic_rgb


# ---------------------------------------------------------------- RLE


def test_rle_round_trips_random_grids():
    rng = np.random.default_rng(0)
    for _ in range(50):
        h, w = rng.integers(1, 40, size=2)
        labels = rng.integers(0, 6, size=(h, w))
        np.testing.assert_array_equal(rle_decode(rle_encode(labels)), labels)


def test_rle_round_trips_degenerate_grids():
    for labels in [
        np.zeros((1, 1), dtype=int),
        np.zeros((3, 200), dtype=int),
        np.arange(12).reshape(3, 4),  # every pixel its own run
        np.tile([0, 1], (5, 50)),
    ]:
        np.testing.assert_array_equal(rle_decode(rle_encode(labels)), labels)


def test_rle_run_count_matches_value_changes():
    labels = np.array([[1, 1, 2, 2, 2], [2, 0, 0, 1, 1]])
    enc = rle_encode(labels)
    flat = labels.ravel()
    assert len(enc["runs"]) == 1 + int(np.sum(flat[1:] != flat[:-1]))
    assert sum(c for _, c in enc["runs"]) == labels.size


def test_rle_decode_rejects_bad_payloads():
    with pytest.raises(ValueError, match="cover"):
        rle_decode({"width": 4, "height": 4, "runs": [[1, 15]]})
    with pytest.raises(ValueError, match="non-positive"):
        rle_decode({"width": 2, "height": 1, "runs": [[1, 0], [0, 2]]})
    with pytest.raises(ValueError, match="missing field"):
        rle_decode({"width": 2, "runs": []})
    with pytest.raises(ValueError, match="expected an"):
        rle_encode(np.zeros(5))


# ---------------------------------------------------------------- PNG / JSON


def test_mask_png_round_trip(tmp_path):
    mask = np.random.default_rng(1).random((33, 57)) < 0.4
    imageio.save_mask_png(tmp_path / "m.png", mask)
    np.testing.assert_array_equal(imageio.load_mask_png(tmp_path / "m.png"), mask)


def test_label_png_round_trip_and_palette_colors(tmp_path):
    labels = synthetic_label_map(2, size=48)
    imageio.save_label_png(tmp_path / "l.png", labels)
    np.testing.assert_array_equal(imageio.load_label_png(tmp_path / "l.png"), labels)

    from PIL import Image

    rgb = np.asarray(Image.open(tmp_path / "l.png").convert("RGB"))
    assert tuple(rgb[labels == 1][0]) == (214, 39, 40)
    assert tuple(rgb[labels == 0][0]) == (0, 0, 0)


def test_label_png_rejects_wide_ids(tmp_path):
    with pytest.raises(ValueError, match="0..255"):
        imageio.save_label_png(tmp_path / "l.png", np.full((4, 4), 700))


def test_squiggle_json_round_trip_is_exact():
    strokes = demo_squiggles(3, 64, classes=(1, 2, 5))
    back = imageio.squiggles_from_json(imageio.squiggles_to_json(strokes))
    assert len(back) == len(strokes)
    for a, b in zip(strokes, back):
        np.testing.assert_array_equal(a.points, b.points)
        assert a.class_id == b.class_id and a.radius == b.radius


def test_squiggle_json_validation():
    with pytest.raises(ValueError, match="must be a list"):
        imageio.squiggles_from_json("{}")
    with pytest.raises(ValueError, match="bad squiggle"):
        imageio.squiggles_from_json('[{"class_id": 1}]')


# ---------------------------------------------------------------- CLI fixtures


@pytest.fixture()
def scene(tmp_path):
    gt = synthetic_label_map(7, size=64)
    image = synthetic_rgb(7, size=64)
    strokes = demo_squiggles(7, 64, classes=(1, 2))
    imageio.save_label_png(tmp_path / "gt.png", gt)
    imageio.save_rgb_png(tmp_path / "image.png", image)
    (tmp_path / "squiggles.json").write_text(imageio.squiggles_to_json(strokes))
    return tmp_path


def invoke(*args, env=None):
    return CliRunner().invoke(main, [str(a) for a in args], env=env)


# ---------------------------------------------------------------- gensig


def test_gensig_writes_signals_inside_the_class(scene):
    out = scene / "sig"
    result = invoke("gensig", "--gt", scene / "gt.png", "--class", 1,
                    "--seed", 4, "--out", out)
    assert result.exit_code == 0, result.output
    gt = imageio.load_label_png(scene / "gt.png")
    inclusion = imageio.load_mask_png(out / "inclusion.png")
    exclusion = imageio.load_mask_png(out / "exclusion.png")
    assert inclusion.any() and not (inclusion & exclusion).any()
    assert not inclusion[gt != 1].any()
    assert not exclusion[gt == 1].any()

    record = json.loads((out / "provenance.json").read_text())
    assert record["seed"] == 4 and record["class"] == 1
    assert set(record["stages_by_class"]) == {"1", "2", "3"}


def test_gensig_same_seed_is_byte_identical(scene):
    blobs = []
    for out in ("a", "b"):
        result = invoke("gensig", "--gt", scene / "gt.png", "--class", 2,
                        "--seed", 11, "--out", scene / out)
        assert result.exit_code == 0
        blobs.append([(scene / out / n).read_bytes()
                      for n in ("inclusion.png", "exclusion.png", "provenance.json")])
    assert blobs[0] == blobs[1]


def test_gensig_missing_class_exits_2(scene):
    result = invoke("gensig", "--gt", scene / "gt.png", "--class", 5, "--out", scene / "x")
    assert result.exit_code == 2
    assert "class 5 not present" in result.output
    assert len(result.output.strip().splitlines()) == 1


def test_gensig_unreadable_input_exits_1(scene):
    result = invoke("gensig", "--gt", scene / "nope.png", "--class", 1, "--out", scene / "x")
    assert result.exit_code == 1


def test_gensig_batch_logs_per_image_timing(tmp_path):
    for i in range(82):
        imageio.save_label_png(tmp_path / f"gt_{i:02d}.png",
                               synthetic_label_map(i, size=64, classes=(1,)))
    for i in range(82):
        result = invoke("gensig", "--gt", tmp_path / f"gt_{i:02d}.png", "--class", 1,
                        "--seed", i, "--out", tmp_path / f"out_{i:02d}")
        assert result.exit_code == 0
        assert " ms" in result.output


# ---------------------------------------------------------------- segment


def cli_segment(scene, weights, out, *extra):
    return invoke("segment", "--image", scene / "image.png",
                  "--squiggles", scene / "squiggles.json",
                  "--weights", weights, "--out", out, *extra)


def test_segment_matches_the_library_pipeline(scene, small_weights_path):
    result = cli_segment(scene, small_weights_path, scene / "seg", "--probs")
    assert result.exit_code == 0, result.output

    weights = load_weights(small_weights_path)
    model = NetworkModel(weights.spec, weights)
    image = imageio.load_rgb_png(scene / "image.png")
    strokes = imageio.squiggles_from_json((scene / "squiggles.json").read_text())
    maps = []
    for cid in sorted({s.class_id for s in strokes}):
        pair = rasterize_squiggle(strokes, cid, width=64, height=64)
        maps.append(ClassProbMap(class_id=cid, probs=segment_one(image, pair, model)))
    want = assemble_semantic_map(maps)

    np.testing.assert_array_equal(imageio.load_label_png(scene / "seg" / "labels.png"), want)
    for m in maps:
        got = load_tensor(scene / "seg" / f"probs_class_{m.class_id}.eutn")
        np.testing.assert_array_equal(got, m.probs)

    # and the label PNG itself is reproducible byte for byte
    assert cli_segment(scene, small_weights_path, scene / "seg2").exit_code == 0
    assert (scene / "seg" / "labels.png").read_bytes() == \
        (scene / "seg2" / "labels.png").read_bytes()


def test_segment_weights_env_var_fallback(scene, small_weights_path):
    result = invoke("segment", "--image", scene / "image.png",
                    "--squiggles", scene / "squiggles.json",
                    "--out", scene / "seg_env",
                    env={"SQSEG_WEIGHTS": str(small_weights_path)})
    assert result.exit_code == 0, result.output
    assert (scene / "seg_env" / "labels.png").exists()


def test_segment_corrupt_weights_exits_3(scene, small_weights_path, tmp_path):
    data = bytearray(Path(small_weights_path).read_bytes())
    data[:5] = b"XXXXX"
    bad = tmp_path / "bad.eunw"
    bad.write_bytes(bytes(data))
    result = cli_segment(scene, bad, tmp_path / "seg")
    assert result.exit_code == 3
    assert "weight container" in result.output


def test_segment_dim_mismatch_exits_4(scene, small_weights_path):
    imageio.save_rgb_png(scene / "image.png", synthetic_rgb(1, size=60))
    result = cli_segment(scene, small_weights_path, scene / "seg")
    assert result.exit_code == 4
    assert "divisible by 32" in result.output


def test_segment_missing_input_exits_1(scene, small_weights_path):
    result = invoke("segment", "--image", scene / "missing.png",
                    "--squiggles", scene / "squiggles.json",
                    "--weights", small_weights_path, "--out", scene / "seg")
    assert result.exit_code == 1


# ---------------------------------------------------------------- eval


def test_eval_perfect_prediction_scores_ones(scene):
    result = invoke("eval", "--pred", scene / "gt.png", "--gt", scene / "gt.png",
                    "--out", scene / "rep")
    assert result.exit_code == 0, result.output
    report = json.loads((scene / "rep" / "report.json").read_text())
    for scores in report["per_class"].values():
        assert scores["dice"] == 1.0 and scores["accuracy"] == 1.0
    assert report["overall"]["dice"] == 1.0
    csv = (scene / "rep" / "report.csv").read_text()
    assert "tumour DICE" in csv and "Overall AUC" in csv


def test_eval_reads_prob_tensors_for_auc(scene, small_weights_path):
    assert cli_segment(scene, small_weights_path, scene / "seg", "--probs").exit_code == 0
    result = invoke("eval", "--pred", scene / "seg" / "labels.png",
                    "--gt", scene / "gt.png", "--probs", scene / "seg")
    assert result.exit_code == 0, result.output
    report = json.loads(result.output)
    aucs = [s["auc"] for s in report["per_class"].values()]
    assert any(a is not None for a in aucs)


def test_eval_dim_mismatch_exits_4(scene, tmp_path):
    imageio.save_label_png(tmp_path / "small.png", synthetic_label_map(0, size=32))
    result = invoke("eval", "--pred", tmp_path / "small.png", "--gt", scene / "gt.png")
    assert result.exit_code == 4


# ---------------------------------------------------------------- inspection


def test_info_reports_factors_and_parameter_count(small_weights_path):
    from sqseg.nn import build_efficient_unet, count_parameters

    result = invoke("info", "--weights", small_weights_path)
    assert result.exit_code == 0
    desc = json.loads(result.output)
    assert desc["width_factor"] == 0.25 and desc["depth_factor"] == 0.5
    assert desc["parameters"] == count_parameters(build_efficient_unet((0.25, 0.5)))


def test_init_weights_writes_a_loadable_container(tmp_path):
    out = tmp_path / "w.eunw"
    result = invoke("init-weights", "--variant", "0.25,0.5", "--seed", 1, "--out", out)
    assert result.exit_code == 0, result.output
    spec = load_weights(out).spec
    assert (spec.w, spec.d) == (0.25, 0.5)
