from __future__ import annotations

import numpy as np
import pytest
from fs.memoryfs import MemoryFS

from segrefine.errors import ConfigInvalid, CorruptEncoding, DimensionMismatch, MissingFile, UnknownNode
from segrefine.geometry.masks import LabelImage, connected_components
from segrefine.models.config import CorruptionConfig, GeneratorConfig
from segrefine.scene.camera import CameraIntrinsics, backproject, project
from segrefine.scene.corruption import corrupt_segmentation
from segrefine.scene.generator import generate_scene
from segrefine.scene.io import (
    CAMERA_FILE,
    DEPTH_FILE,
    LABELS_FILE,
    RGB_FILE,
    Scene,
    load_scene,
    read_labels,
    save_scene,
    write_labels,
    write_uint16_png,
)
from segrefine.scene.sequence import ObjectRemovalSequence

from tests.conftest import make_scene


def test_camera_rejects_non_positive_focal() -> None:
    with pytest.raises(ConfigInvalid):
        CameraIntrinsics(fx=0.0, fy=1.0, cx=0.0, cy=0.0)


def test_backproject_then_project_returns_pixel() -> None:
    camera = CameraIntrinsics.for_frame(8, 10)
    depth = np.full((8, 10), 0.5)
    cloud = backproject(depth, camera)
    pixel = project(cloud.xyz[3, 7], camera)
    assert pixel == pytest.approx([7.0, 3.0])
    assert np.isnan(project(np.zeros(3), camera)).all()


def test_scene_rejects_mismatched_depth() -> None:
    with pytest.raises(DimensionMismatch) as exc_info:
        Scene(rgb=np.zeros((4, 4, 3)), depth=np.zeros((4, 5)), camera=CameraIntrinsics.for_frame(4, 4))
    assert exc_info.value.filename == DEPTH_FILE


def test_scene_rejects_negative_depth() -> None:
    with pytest.raises(CorruptEncoding):
        Scene(rgb=np.zeros((2, 2, 3)), depth=-np.ones((2, 2)), camera=CameraIntrinsics.for_frame(2, 2))


def test_save_and_load_scene(tmp_path, two_squares) -> None:
    scene = make_scene(two_squares)
    save_scene(scene, tmp_path / "scene")
    loaded = load_scene(tmp_path / "scene")
    assert np.array_equal(loaded.rgb, scene.rgb)
    assert np.allclose(loaded.depth, scene.depth)
    assert loaded.labels == scene.labels
    assert loaded.foreground == scene.foreground
    assert loaded.camera == scene.camera


def test_load_scene_without_camera_reports_file(tmp_path, two_squares) -> None:
    save_scene(make_scene(two_squares), tmp_path)
    (tmp_path / CAMERA_FILE).unlink()
    with pytest.raises(MissingFile) as exc_info:
        load_scene(tmp_path)
    assert exc_info.value.filename == CAMERA_FILE


def test_load_scene_rejects_label_frame_mismatch(tmp_path, two_squares) -> None:
    save_scene(make_scene(two_squares), tmp_path)
    with MemoryFS() as scratch:
        write_labels(scratch, LabelImage.zeros(8, 8))
        (tmp_path / LABELS_FILE).write_bytes(scratch.readbytes(LABELS_FILE))
    with pytest.raises(DimensionMismatch) as exc_info:
        load_scene(tmp_path)
    assert exc_info.value.filename == LABELS_FILE


def test_load_scene_rejects_garbage_image(tmp_path, two_squares) -> None:
    save_scene(make_scene(two_squares), tmp_path)
    (tmp_path / RGB_FILE).write_bytes(b"not a png")
    with pytest.raises(CorruptEncoding):
        load_scene(tmp_path)


def test_labels_png_keeps_16_bit_ids() -> None:
    labels = LabelImage(np.array([[0, 300], [65535, 1]]))
    with MemoryFS() as handle:
        write_labels(handle, labels)
        assert read_labels(handle) == labels
        with pytest.raises(CorruptEncoding):
            write_uint16_png(handle, "bad.png", np.array([[70000]]))


def test_generate_scene_is_deterministic() -> None:
    first = generate_scene(7)
    second = generate_scene(7)
    assert first.labels == second.labels
    assert np.array_equal(first.depth, second.depth)
    assert first.labels != generate_scene(8).labels


def test_generated_objects_are_single_components_above_the_table() -> None:
    config = GeneratorConfig(num_objects=5)
    scene = generate_scene(3, config)
    assert scene.labels is not None
    ids = scene.labels.ids()
    assert ids == list(range(1, len(ids) + 1))
    background = scene.labels.labels == 0
    for label in ids:
        mask = scene.labels.mask(label)
        assert mask.area >= config.min_object_area
        assert len(connected_components(mask)) == 1
    assert scene.depth[scene.labels.labels > 0].min() < scene.depth[background].min()


def test_generator_config_validates_frame() -> None:
    with pytest.raises(ConfigInvalid):
        GeneratorConfig(height=32)


def test_corruption_is_deterministic_and_changes_labels() -> None:
    gt = generate_scene(11).labels
    assert gt is not None
    first = corrupt_segmentation(gt, 11)
    assert first == corrupt_segmentation(gt, 11)
    assert first != gt


def test_zero_corruptions_is_identity() -> None:
    gt = generate_scene(2).labels
    assert gt is not None
    assert corrupt_segmentation(gt, 5, CorruptionConfig(num_corruptions=0)) == gt


def test_delete_only_corruption_removes_instances() -> None:
    gt = generate_scene(4).labels
    assert gt is not None
    config = CorruptionConfig(num_corruptions=2, weights={"delete": 1.0})
    corrupted = corrupt_segmentation(gt, 4, config)
    assert len(corrupted.ids()) == len(gt.ids()) - 2
    assert set(corrupted.ids()) <= set(gt.ids())


def test_corruption_config_rejects_unknown_kind() -> None:
    with pytest.raises(ConfigInvalid):
        CorruptionConfig(weights={"explode": 1.0})


def test_removal_sequence_drops_objects() -> None:
    sequence = ObjectRemovalSequence.generate(5, GeneratorConfig(num_objects=4))
    start = len(sequence)
    label = sequence.remaining[0]
    sequence.remove(label)
    assert len(sequence) == start - 1
    assert sequence.removed == [label]
    labels = sequence.current().labels
    assert labels is not None
    assert label not in labels.ids()
    with pytest.raises(UnknownNode):
        sequence.remove(label)
