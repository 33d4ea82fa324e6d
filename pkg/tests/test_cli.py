import json
import subprocess
import sys
import xml.etree.ElementTree as ET

import numpy as np
import pytest

from dynband.cli import main
from dynband.tum import encode_png_gray, parse_trajectory

SMALL_SCENE = ["--frames", "12", "--n-static", "120", "--n-dynamic", "60", "--width", "320",
               "--height", "240", "--fx", "262.5", "--fy", "262.5", "--cx", "159.5", "--cy", "119.5"]


def run(capsys, *argv):
    code = main([str(a) for a in argv])
    out, err = capsys.readouterr()
    return code, out, err


@pytest.fixture(scope="module")
def seq(tmp_path_factory):
    d = tmp_path_factory.mktemp("seq")
    assert main(["synth", "--out", str(d / "dyn"), "--seed", "3", *SMALL_SCENE]) == 0
    assert main(["synth", "--out", str(d / "static"), "--objects", "0", *SMALL_SCENE]) == 0
    return d


def test_ate_same_file(capsys, seq):
    gt = seq / "dyn" / "groundtruth.txt"
    code, out, err = run(capsys, "ate", "--est", gt, "--gt", gt)
    assert code == 0 and err == ""
    doc = json.loads(out)
    assert doc["rmse"] == 0.0 and doc["traj_fraction"] == 1.0


def test_filter_without_dynamic_masks(capsys, seq):
    code, out, _ = run(capsys, "filter", "--sequence", seq / "static", "--frame", 2)
    assert code == 0
    counts = json.loads(out)["counts"]
    assert counts["rejected_mask"] == 0 and counts["rejected_depth"] == 0
    assert counts["static"] == counts["input"] > 0


def test_filter_echoes_tunables(capsys, seq):
    code, out, _ = run(capsys, "filter", "--sequence", seq / "dyn", "--alpha", 0.2, "--dilate", 1,
                       "--mode-window", 0.05)
    doc = json.loads(out)
    assert code == 0
    assert (doc["config"]["alpha"], doc["config"]["dilate"], doc["config"]["mode_window"]) == (0.2, 1, 0.05)
    assert doc["counts"]["rejected_mask"] > 0


def test_filter_on_explicit_files(capsys, seq, tmp_path):
    d = seq / "dyn"
    stamp = sorted((d / "depth").iterdir())[4].stem
    static_out, rm = tmp_path / "static.csv", tmp_path / "rm.png"
    code, out, _ = run(capsys, "filter", "--depth", d / "depth" / f"{stamp}.png",
                       "--labels", d / "labels" / f"{stamp}.png",
                       "--keypoints", d / "keypoints" / f"{stamp}.csv",
                       "--static-out", static_out, "--removal-mask", rm)
    assert code == 0
    counts = json.loads(out)["counts"]
    assert len(static_out.read_text().splitlines()) == counts["static"] + 1
    assert rm.read_bytes().startswith(b"\x89PNG")
    code2, out2, _ = run(capsys, "filter", "--sequence", d, "--frame", 4)
    assert json.loads(out2)["counts"] == counts


def test_filter_on_gray_image(capsys, tmp_path):
    img = np.zeros((48, 64), dtype=np.uint8)
    img[10:30, 20:40] = 200
    labels = np.zeros((48, 64), dtype=np.uint8)
    labels[10:30, 20:40] = 1
    depth = np.full((48, 64), 15000, dtype=np.uint16)
    depth[10:30, 20:40] = 6000
    (tmp_path / "g.png").write_bytes(encode_png_gray(img))
    (tmp_path / "l.png").write_bytes(encode_png_gray(labels))
    (tmp_path / "l.json").write_text('{"1": {"class": "person", "score": 0.9}}')
    (tmp_path / "d.png").write_bytes(encode_png_gray(depth))
    code, out, _ = run(capsys, "filter", "--gray", tmp_path / "g.png", "--labels", tmp_path / "l.png",
                       "--depth", tmp_path / "d.png", "--dilate", 0)
    counts = json.loads(out)["counts"]
    assert code == 0 and counts["input"] >= 4 and counts["rejected_mask"] >= 1


def test_associate(capsys, tmp_path):
    (tmp_path / "a.txt").write_text("# a\n0.00 rgb/0.png\n0.10 rgb/1.png\n")
    (tmp_path / "b.txt").write_text("0.005 d/0.png\n0.5 d/1.png\n")
    code, out, _ = run(capsys, "associate", "--first", tmp_path / "a.txt", "--second", tmp_path / "b.txt")
    assert code == 0
    assert out == "0.000000 rgb/0.png 0.005000 d/0.png\n"


def test_odometry_compare_filter(capsys, seq, tmp_path):
    code, out, _ = run(capsys, "odometry", "--compare-filter", "--seeds", "0..1", *SMALL_SCENE)
    assert code == 0
    doc = json.loads(out)
    assert len(doc["runs"]) == 2
    for r in doc["runs"]:
        assert r["filtered"]["ate"]["rmse"] < r["unfiltered"]["ate"]["rmse"]
        assert len(r["filtered"]["frame_counts"]) == 11
        assert r["filtered"]["dropped_frames"] == 0
    assert doc["summary"]["all_filtered_better"]
    assert doc["config"]["seeds"] == "0..1" and doc["config"]["alpha"] == 0.1
    assert "wall_clock_s" not in doc


def test_odometry_on_exported_sequence(capsys, seq, tmp_path):
    traj = tmp_path / "est.txt"
    code, out, _ = run(capsys, "odometry", "--sequence", seq / "dyn", "--traj-out", traj, "--timing")
    doc = json.loads(out)
    assert code == 0 and doc["wall_clock_s"] > 0
    assert len(parse_trajectory(traj.read_text())) == 12


def test_config_echo_reproduces_run(capsys, tmp_path):
    first = tmp_path / "first.json"
    assert main(["odometry", "--seeds", "4", "--alpha", "0.3", "--dilate", "2", *SMALL_SCENE,
                 "--out", str(first)]) == 0
    second = tmp_path / "second.json"
    assert main(["odometry", "--config", str(first), "--out", str(second)]) == 0
    assert first.read_bytes() == second.read_bytes()


def test_byte_identical_outputs(capsys, seq, tmp_path):
    gt = seq / "dyn" / "groundtruth.txt"
    est = tmp_path / "est.txt"
    assert main(["odometry", "--sequence", str(seq / "dyn"), "--traj-out", str(est),
                 "--out", str(tmp_path / "o.json")]) == 0
    outputs = []
    for rep in range(2):
        files = [tmp_path / f"{name}{rep}" for name in ("ate.json", "ate.csv", "ate.svg",
                                                       "rpe.json", "rpe.csv", "rpe.svg")]
        assert main(["ate", "--est", str(est), "--gt", str(gt), "--out", str(files[0]),
                     "--csv", str(files[1]), "--plot", str(files[2])]) == 0
        assert main(["rpe", "--est", str(est), "--gt", str(gt), "--out", str(files[3]),
                     "--csv", str(files[4]), "--plot", str(files[5])]) == 0
        outputs.append([f.read_bytes() for f in files])
    assert outputs[0] == outputs[1]
    ate_doc = json.loads(outputs[0][0])
    assert len(outputs[0][1].decode().splitlines()) - 1 == ate_doc["n"]
    svg = ET.fromstring(outputs[0][2])
    assert len(list(svg.iter("{http://www.w3.org/2000/svg}polyline"))) == 2


def test_plot_command(capsys, seq, tmp_path):
    gt = seq / "dyn" / "groundtruth.txt"
    for kind, count in (("traj", 2), ("rpe", 1)):
        out = tmp_path / f"{kind}.svg"
        assert main(["plot", "--est", str(gt), "--gt", str(gt), "--kind", kind, "--out", str(out)]) == 0
        assert len(list(ET.parse(out).getroot().iter("{http://www.w3.org/2000/svg}polyline"))) == count


@pytest.mark.parametrize("argv", [[], ["bogus"], ["ate", "--est", "x"], ["odometry", "--alpha", "abc"],
                                  ["filter"], ["odometry", "--compare-filter", "--no-filter"],
                                  ["odometry", "--seeds", ","]])
def test_usage_errors_exit_1(capsys, argv):
    code, out, err = run(capsys, *argv)
    assert code == 1 and out == "" and err


def test_data_errors_exit_2(capsys, tmp_path):
    bad = tmp_path / "bad.txt"
    bad.write_text("0.0 1 2\n")
    code, out, err = run(capsys, "ate", "--est", bad, "--gt", bad)
    assert code == 2 and out == "" and "MalformedLine" in err
    code, _, err = run(capsys, "ate", "--est", tmp_path / "missing.txt", "--gt", bad)
    assert code == 2
    short = tmp_path / "short.txt"
    short.write_text("0.0 0 0 0 0 0 0 1\n")
    code, _, err = run(capsys, "rpe", "--est", short, "--gt", short)
    assert code == 2 and "TooFewMatches" in err


def test_invalid_parameter_is_data_error(capsys, seq):
    code, _, err = run(capsys, "filter", "--sequence", seq / "dyn", "--alpha", -1)
    assert code == 2 and "InvalidParams" in err


def test_console_script_entry_point(seq):
    gt = seq / "dyn" / "groundtruth.txt"
    res = subprocess.run([sys.executable, "-m", "dynband.cli", "ate", "--est", str(gt), "--gt", str(gt)],
                         capture_output=True, text=True)
    assert res.returncode == 0 and json.loads(res.stdout)["rmse"] == 0.0
