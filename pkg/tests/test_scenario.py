"""Tests for the synthetic scene generator and scenario files."""

import math
from dataclasses import replace

import pytest

from src.config import ConfigError
from src.kitti_io import read_calibration, read_detections_2d, read_detections_3d, read_ground_truth
from src.scenario import (
    OCCLUDED_LEVEL,
    ObjectSpec,
    OcclusionWindow,
    ScenarioConfig,
    generate,
    load_scenario_config,
    scenario_from_dict,
    workload_config,
    write_bundle,
)


SCENARIO_YAML = """\
frames: 40
seed: 7
camera_range: 80
lidar_range: 40
noise:
  pixels: 1.5
  meters: 0.1
  yaw: 0.02
dropout: 0.1
objects:
  - id: 0
    position: [-3.0, 1.7, 60.0]
    velocity: [0.0, 0.0, -0.8]
    yaw: 1.57
  - id: 4
    birth: 5
    death: 30
    position: [3.0, 1.7, 20.0]
    dims: [1.6, 1.7, 4.2]
occlusions:
  - {object: 4, start: 10, end: 12}
"""


@pytest.fixture
def approaching():
    """One car closing in from 70 m at 1 m per frame."""
    return ScenarioConfig(
        num_frames=50,
        objects=(ObjectSpec(0, position=(0.0, 1.7, 70.0), velocity=(0.0, 0.0, -1.0), yaw=1.57),),
    )


@pytest.fixture
def noisy():
    return ScenarioConfig(
        num_frames=30,
        objects=tuple(
            ObjectSpec(i, position=(-6.0 + 4.0 * i, 1.7, 15.0 + 5.0 * i), velocity=(0.0, 0.0, 0.3)) for i in range(4)
        ),
        noise_px=2.0,
        noise_m=0.2,
        noise_yaw=0.05,
        dropout=0.2,
        seed=11,
    )


class TestGenerate:
    """Tests for generate."""

    def test_range_gap(self, approaching):
        bundle = generate(approaching)

        assert bundle.first_frame(0, "gt") == 0
        assert bundle.first_frame(0, "2d") == 0
        assert bundle.first_frame(0, "3d") == 30
        assert all(len(bundle.dets3d[f]) == 0 for f in range(30))
        assert all(len(bundle.dets3d[f]) == 1 for f in range(30, 50))

    def test_occlusion_window(self):
        cfg = ScenarioConfig(
            num_frames=80,
            objects=(ObjectSpec(0, position=(0.0, 1.7, 25.0), yaw=1.57),),
            occlusions=(OcclusionWindow(0, 65, 70),),
        )
        bundle = generate(cfg)

        for frame in range(65, 71):
            assert bundle.dets2d[frame] == []
            assert bundle.dets3d[frame] == []
            assert bundle.gt[frame][0].occluded == OCCLUDED_LEVEL
        for frame in (64, 71):
            assert len(bundle.dets2d[frame]) == 1
            assert len(bundle.dets3d[frame]) == 1
            assert bundle.gt[frame][0].occluded == 0

    def test_same_seed_is_byte_identical(self, noisy, tmp_path):
        first = write_bundle(generate(noisy), tmp_path / "a", "0000")
        second = write_bundle(generate(noisy), tmp_path / "b", "0000")

        for name, path in first.items():
            assert path.read_bytes() == second[name].read_bytes()

    def test_different_seed_changes_noise(self, noisy):
        other = replace(noisy, seed=12)

        assert generate(noisy).dets3d != generate(other).dets3d

    def test_zero_noise_matches_ground_truth(self):
        cfg = ScenarioConfig(
            num_frames=20,
            objects=(
                ObjectSpec(0, position=(-2.0, 1.7, 18.0), velocity=(0.1, 0.0, 0.5), yaw=0.3),
                ObjectSpec(1, position=(4.0, 1.6, 30.0), velocity=(0.0, 0.0, -0.4), yaw=-2.0),
            ),
        )
        bundle = generate(cfg)

        for gt_frame, frame_2d, frame_3d in zip(bundle.gt, bundle.dets2d, bundle.dets3d, strict=True):
            assert [d.box for d in frame_3d] == [a.box3d for a in gt_frame]
            assert [d.box for d in frame_2d] == [a.box2d for a in gt_frame]

    def test_dropout_is_monotone(self, noisy):
        counts = []
        for dropout in (0.0, 0.1, 0.3, 0.6, 0.9, 1.0):
            bundle = generate(replace(noisy, dropout=dropout))
            counts.append(sum(map(len, bundle.dets2d)) + sum(map(len, bundle.dets3d)))

        assert counts == sorted(counts, reverse=True)
        assert counts[-1] == 0

    def test_noise_is_bounded(self, noisy):
        bundle = generate(noisy)

        for gt_frame, frame_3d in zip(bundle.gt, bundle.dets3d, strict=True):
            for det in frame_3d:
                nearest = min(math.dist(det.box.center, a.box3d.center) for a in gt_frame)
                assert nearest <= math.sqrt(3) * 3.0 * noisy.noise_m + 1e-9

    def test_objects_outside_lifetime_are_absent(self):
        cfg = ScenarioConfig(num_frames=10, objects=(ObjectSpec(3, birth_frame=2, death_frame=5, yaw=1.57),))
        bundle = generate(cfg)

        assert [len(frame) for frame in bundle.gt] == [0, 0, 1, 1, 1, 1, 0, 0, 0, 0]
        assert bundle.gt[2][0].track_id == 3

    def test_beyond_camera_range_is_not_annotated(self):
        cfg = ScenarioConfig(num_frames=3, objects=(ObjectSpec(0, position=(0.0, 1.7, 90.0), yaw=1.57),))

        assert generate(cfg).gt == [[], [], []]

    def test_behind_camera_is_not_annotated(self):
        cfg = ScenarioConfig(num_frames=2, objects=(ObjectSpec(0, position=(0.0, 1.7, -10.0)),))

        assert generate(cfg).gt == [[], []]

    def test_workload_stays_in_view(self):
        cfg = workload_config(frames=200, objects=20, seed=0)
        bundle = generate(cfg)

        assert all(len(frame) == 20 for frame in bundle.gt)
        assert sum(map(len, bundle.dets3d)) > 0.9 * 200 * 20


class TestScenarioConfig:
    """Tests for scene validation."""

    @pytest.mark.parametrize(
        "kwargs",
        [
            {"num_frames": 0},
            {"num_frames": 5, "lidar_range": 90.0},
            {"num_frames": 5, "dropout": 1.5},
            {"num_frames": 5, "noise_px": -1.0},
            {"num_frames": 5, "objects": (ObjectSpec(1), ObjectSpec(1))},
        ],
    )
    def test_invalid(self, kwargs):
        with pytest.raises(ValueError):
            ScenarioConfig(**kwargs)

    def test_invalid_object(self):
        with pytest.raises(ValueError):
            ObjectSpec(0, dims=(1.5, 0.0, 3.9))
        with pytest.raises(ValueError):
            ObjectSpec(0, birth_frame=5, death_frame=2)

    def test_invalid_occlusion(self):
        with pytest.raises(ValueError):
            OcclusionWindow(0, 10, 5)


class TestScenarioFiles:
    """Tests for YAML scenario loading and bundle writing."""

    def test_load(self, tmp_path):
        path = tmp_path / "scene.yaml"
        path.write_text(SCENARIO_YAML)

        cfg = load_scenario_config(path)

        assert cfg.num_frames == 40
        assert cfg.seed == 7
        assert (cfg.noise_px, cfg.noise_m, cfg.noise_yaw, cfg.dropout) == (1.5, 0.1, 0.02, 0.1)
        assert [obj.object_id for obj in cfg.objects] == [0, 4]
        assert cfg.objects[1].birth_frame == 5
        assert cfg.objects[1].death_frame == 30
        assert cfg.objects[1].dims == (1.6, 1.7, 4.2)
        assert cfg.occlusions == (OcclusionWindow(4, 10, 12),)

    def test_defaults(self):
        cfg = scenario_from_dict({"frames": 3})

        assert cfg.objects == ()
        assert cfg.image_size == (1242, 375)
        assert (cfg.camera_range, cfg.lidar_range) == (80.0, 40.0)

    def test_missing_frames(self):
        with pytest.raises(ConfigError, match="frames"):
            scenario_from_dict({"objects": []})

    def test_object_without_id(self):
        with pytest.raises(ConfigError, match="id"):
            scenario_from_dict({"frames": 3, "objects": [{"position": [0, 1, 2]}]})

    def test_bad_vector(self):
        with pytest.raises(ConfigError, match="position"):
            scenario_from_dict({"frames": 3, "objects": [{"id": 0, "position": [0, 1]}]})

    def test_invalid_values_become_config_errors(self, tmp_path):
        path = tmp_path / "scene.yaml"
        path.write_text("frames: 10\ncamera_range: 30\nlidar_range: 50\n")

        with pytest.raises(ConfigError, match="lidar_range"):
            load_scenario_config(path)

    def test_malformed_yaml(self, tmp_path):
        path = tmp_path / "scene.yaml"
        path.write_text("frames: [1, 2\n")

        with pytest.raises(ConfigError, match="parsing"):
            load_scenario_config(path)

    def test_not_a_mapping(self, tmp_path):
        path = tmp_path / "scene.yaml"
        path.write_text("- 1\n- 2\n")

        with pytest.raises(ConfigError, match="mapping"):
            load_scenario_config(path)

    def test_missing_file(self, tmp_path):
        with pytest.raises(ConfigError, match="reading"):
            load_scenario_config(tmp_path / "absent.yaml")

    def test_write_bundle_parses_back(self, noisy, tmp_path):
        bundle = generate(noisy)
        paths = write_bundle(bundle, tmp_path, "0003")

        assert set(paths) == {"dets2d", "dets3d", "calib", "label_02"}
        assert all(path.name == "0003.txt" for path in paths.values())

        dets2d = read_detections_2d(paths["dets2d"])
        dets3d = read_detections_3d(paths["dets3d"])
        labels = read_ground_truth(paths["label_02"])
        calib = read_calibration(paths["calib"])

        assert dets2d.as_frame_list(noisy.num_frames) == bundle.dets2d
        assert dets3d.as_frame_list(noisy.num_frames) == bundle.dets3d
        assert labels.as_frame_list(noisy.num_frames) == bundle.gt
        assert (calib.p2 == bundle.calib.p2).all()
