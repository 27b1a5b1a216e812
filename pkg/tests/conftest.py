from __future__ import annotations

import os
from typing import Mapping

import numpy as np
import pytest

from segrefine.geometry.masks import BinaryMask, LabelImage
from segrefine.infrastructure import settings as settings_module
from segrefine.scene.camera import CameraIntrinsics
from segrefine.scene.io import Scene

TABLE_DEPTH = 0.8


@pytest.fixture(autouse=True)
def isolated_settings(tmp_path, monkeypatch: pytest.MonkeyPatch):
    """Point every settings directory at the test's tmp dir."""
    monkeypatch.setenv("SEGREFINE_DATA_DIR", str(tmp_path / "data"))
    monkeypatch.setenv("SEGREFINE_LOGS_DIR", str(tmp_path / "logs"))
    monkeypatch.setenv("SEGREFINE_OUTPUT_DIR", str(tmp_path / "output"))
    monkeypatch.delenv("SEGREFINE_MODEL_PATH", raising=False)
    monkeypatch.delenv("SEGREFINE_LOG_LEVEL", raising=False)
    monkeypatch.setattr(settings_module, "_SETTINGS", None)
    yield settings_module.load_settings()
    monkeypatch.setattr(settings_module, "_SETTINGS", None)


def full_acceptance() -> bool:
    return os.getenv("SEGREFINE_FULL_ACCEPTANCE") == "1"


def sweep_count(full: int, reduced: int) -> int:
    return full if full_acceptance() else reduced


def rect_mask(shape: tuple[int, int], top: int, left: int, bottom: int, right: int) -> BinaryMask:
    """Mask of rows ``top:bottom`` and columns ``left:right``."""
    bits = np.zeros(shape, dtype=bool)
    bits[top:bottom, left:right] = True
    return BinaryMask(bits)


def make_scene(
    labels: np.ndarray,
    heights: Mapping[int, float] | None = None,
    *,
    with_truth: bool = True,
) -> Scene:
    """Flat table at 0.8 m with each label raised by its height (default 5 cm)."""
    labels = np.asarray(labels, dtype=np.int64)
    depth = np.full(labels.shape, TABLE_DEPTH, dtype=np.float64)
    rgb = np.full(labels.shape + (3,), 100, dtype=np.uint8)
    for label in np.unique(labels):
        if label == 0:
            continue
        region = labels == label
        depth[region] = TABLE_DEPTH - (heights or {}).get(int(label), 0.05)
        rgb[region] = (int(label) * 37 % 256, 200, 50)
    image = LabelImage(labels)
    return Scene(
        rgb=rgb,
        depth=depth,
        camera=CameraIntrinsics.for_frame(*labels.shape),
        labels=image if with_truth else None,
        foreground=image.foreground() if with_truth else None,
    )


@pytest.fixture
def two_squares() -> np.ndarray:
    """Two 10×10 squares 3 px apart on a 32×32 frame."""
    labels = np.zeros((32, 32), dtype=np.int64)
    labels[5:15, 5:15] = 1
    labels[5:15, 18:28] = 2
    return labels


@pytest.fixture
def two_rectangles() -> np.ndarray:
    """Two touching 12×10 rectangles; merging them is a typical undersegmentation."""
    labels = np.zeros((40, 40), dtype=np.int64)
    labels[10:22, 6:16] = 1
    labels[10:22, 16:26] = 2
    return labels
