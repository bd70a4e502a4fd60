"""End-to-end runs of the command line tool against a small synthetic
survey: simulate, estimate-scatter, enhance, evaluate, sample-size, plus
the exit-code contract. The binary path arrives in ABYSSLIGHT_CLI."""

import json
import os
import subprocess
from pathlib import Path

import pytest

CLI = os.environ.get("ABYSSLIGHT_CLI")

pytestmark = pytest.mark.skipif(
    CLI is None, reason="ABYSSLIGHT_CLI not set; run through ctest"
)


def run(*args, expect=0):
    result = subprocess.run(
        [CLI, *map(str, args)], capture_output=True, text=True
    )
    assert result.returncode == expect, (
        f"exit {result.returncode}, wanted {expect}\n"
        f"stdout: {result.stdout}\nstderr: {result.stderr}"
    )
    return result


def write_scene(path: Path, density=0.0, frame_px=48):
    scene = {
        "schema": 1,
        "camera": {"width": frame_px, "height": frame_px, "focal_px": 60.0},
        "pose": {"altitude": 2.0},
        "lights": [
            {
                "position": [0.5, 0.2, -0.3],
                "direction": [-0.2, -0.08, 1.0],
                "intensity": [6.0, 5.0, 4.5],
                "cone_sigma": 0.3,
            }
        ],
        "albedo": {
            "meters_per_texel": 0.03,
            "origin": [-2.5, -2.5],
            "width": 190,
            "height": 170,
            "base": [0.5, 0.45, 0.4],
            "amplitude": 0.25,
            "lattice": 12,
        },
        "contamination": {"density": density},
        "seed": 9,
        "scatter_steps": 50,
        "scatter_grid": 4,
    }
    path.write_text(json.dumps(scene))


def write_trajectory(path: Path, n=7, step=0.08, altitude=2.0):
    poses = [{"altitude": altitude, "x": k * step} for k in range(n)]
    path.write_text(json.dumps({"schema": 1, "poses": poses}))


@pytest.fixture(scope="module")
def survey(tmp_path_factory):
    """Simulated 7-frame transect plus a scatter field estimated from
    high-altitude water frames of the same rig."""
    root = tmp_path_factory.mktemp("survey")
    scene = root / "scene.json"
    trajectory = root / "trajectory.json"
    write_scene(scene, density=0.1)
    write_trajectory(trajectory, n=7)
    sim_dir = root / "sim"
    run("simulate", "--scene", scene, "--trajectory", trajectory,
        "--out-dir", sim_dir)

    water_scene = root / "water_scene.json"
    water_trajectory = root / "water_trajectory.json"
    write_scene(water_scene, density=0.0)
    # High above the floor no bottom return survives the attenuation, so
    # the frames show pure water column. The albedo map only needs to
    # cover the footprint.
    water = json.loads(water_scene.read_text())
    water["pose"]["altitude"] = 80.0
    water["albedo"].update(
        {"meters_per_texel": 3.0, "origin": [-90.0, -90.0],
         "width": 60, "height": 60, "amplitude": 0.0}
    )
    water_scene.write_text(json.dumps(water))
    write_trajectory(water_trajectory, n=3, step=0.0, altitude=80.0)
    water_dir = root / "water"
    run("simulate", "--scene", water_scene, "--trajectory", water_trajectory,
        "--out-dir", water_dir)

    scatter = root / "scatter.tif"
    run("estimate-scatter", "--water-manifest", water_dir / "manifest.txt",
        "--out", scatter)
    return root, sim_dir, scatter


def test_simulate_writes_frames_truth_and_registration(survey):
    _, sim_dir, _ = survey
    names = (sim_dir / "manifest.txt").read_text().split()
    assert names == [f"frame_{k:04d}.png" for k in range(7)]
    for name in names:
        stem = Path(name).stem
        assert (sim_dir / name).exists()
        assert (sim_dir / f"{stem}_gt_albedo.png").exists()
        assert (sim_dir / f"{stem}_gt_scatter.tif").exists()
        assert (sim_dir / f"{stem}_gt_factor.tif").exists()
        assert (sim_dir / f"{stem}_corr.tif").exists()
    registration = json.loads((sim_dir / "registration.json").read_text())
    assert registration["schema"] == 1
    assert len(registration["maps"]) == 7


def test_enhance_writes_outputs_and_report(survey):
    root, sim_dir, scatter = survey
    out_dir = root / "enhanced"
    result = run("enhance", "--manifest", sim_dir / "manifest.txt",
                 "--scatter", scatter, "--out-dir", out_dir,
                 "--window", 5, "--downsample", 4)
    assert "enhanced 7 frames" in result.stdout
    for k in range(7):
        assert (out_dir / f"frame_{k:04d}_enhanced.png").exists()
        assert (out_dir / f"frame_{k:04d}_coverage.png").exists()
    report = json.loads((out_dir / "run_report.json").read_text())
    assert report["complete"] is True
    assert report["frames"] == 7
    assert report["window_sizes"] == [3, 4, 5, 5, 5, 4, 3]
    assert len(report["ms_per_frame"]) == 7


def test_evaluate_reports_consistency_and_rmse(survey):
    root, sim_dir, scatter = survey
    out = root / "eval_raw.json"
    result = run("evaluate", "--frames", sim_dir / "manifest.txt",
                 "--registration", sim_dir / "registration.json",
                 "--truth", sim_dir / "truth_manifest.txt",
                 "--out", out)
    assert "overlap pixels:" in result.stdout
    report = json.loads(out.read_text())
    assert len(report["channel_error"]) == 3
    assert all(e > 0 for e in report["channel_error"])
    assert report["overlap_pixel_count"] > 0
    assert len(report["scale_invariant_rmse"]) == 7


def test_sample_size_prints_required_window():
    result = run("sample-size", "--contamination", 0.2, "--target", 0.035)
    assert "required window: 7" in result.stdout


def test_seed_changes_transients(survey, tmp_path):
    root, _, _ = survey
    a = tmp_path / "a"
    b = tmp_path / "b"
    trajectory = tmp_path / "one_pose.json"
    write_trajectory(trajectory, n=1)
    for out_dir, seed in ((a, 1), (b, 2)):
        run("simulate", "--scene", root / "scene.json",
            "--trajectory", trajectory, "--out-dir", out_dir,
            "--seed", seed)
    assert (a / "frame_0000.png").read_bytes() != \
        (b / "frame_0000.png").read_bytes()


def test_missing_input_exits_1(tmp_path):
    run("estimate-scatter", "--water-manifest", tmp_path / "absent.txt",
        "--out", tmp_path / "s.tif", expect=1)


def test_bad_arguments_exit_2(survey, tmp_path):
    root, sim_dir, scatter = survey
    run("enhance", "--manifest", sim_dir / "manifest.txt",
        "--scatter", scatter, "--out-dir", tmp_path / "out",
        "--window", 4, expect=2)  # even window
    run("sample-size", "--contamination", 0.7, "--target", 0.035, expect=2)


def test_degenerate_metric_exits_3(survey, tmp_path):
    root, sim_dir, _ = survey
    # Two frames whose registered footprints are a kilometer apart never
    # cover a mosaic cell twice, so the consistency metric is undefined.
    manifest = tmp_path / "two.txt"
    frame = sim_dir / "frame_0000.png"
    manifest.write_text(f"{frame}\n{frame}\n")
    apart = tmp_path / "apart_registration.json"
    apart.write_text(json.dumps({
        "schema": 1,
        "homographies": [
            [1, 0, 0, 0, 1, 0, 0, 0, 1],
            [1, 0, 1000.0, 0, 1, 0, 0, 0, 1],
        ],
    }))
    run("evaluate", "--frames", manifest, "--registration", apart,
        "--out", tmp_path / "report.json", expect=3)
