"""Scene container and the scene-directory format.

A scene directory holds ``rgb.png`` (8-bit RGB), ``depth.png`` (16-bit,
millimetres), ``camera.json`` and, optionally, ``labels.png`` (16-bit instance
ids) and ``foreground.png`` (8-bit, nonzero = foreground). A dataset is a
directory of scene directories.
"""

from __future__ import annotations

import io
import logging
from dataclasses import dataclass
from functools import cached_property

import numpy as np
import orjson
from fs.base import FS
from fs.errors import FSError
from PIL import Image, UnidentifiedImageError

from segrefine.errors import ConfigInvalid, CorruptEncoding, DimensionMismatch, MissingFile, StorageError
from segrefine.geometry.masks import BinaryMask, LabelImage
from segrefine.infrastructure.filesystem import FSLike, open_directory
from segrefine.scene.camera import CameraIntrinsics, PointCloud, backproject

logger = logging.getLogger(__name__)

RGB_FILE = "rgb.png"
DEPTH_FILE = "depth.png"
LABELS_FILE = "labels.png"
FOREGROUND_FILE = "foreground.png"
CAMERA_FILE = "camera.json"

MAX_UINT16 = np.iinfo(np.uint16).max


@dataclass(frozen=True, eq=False)
class Scene:
    rgb: np.ndarray
    depth: np.ndarray
    camera: CameraIntrinsics
    labels: LabelImage | None = None
    foreground: BinaryMask | None = None

    def __post_init__(self) -> None:
        rgb = np.array(self.rgb, dtype=np.uint8, copy=True)
        depth = np.array(self.depth, dtype=np.float64, copy=True)
        if rgb.ndim != 3 or rgb.shape[2] != 3:
            raise DimensionMismatch(f"rgb must be H×W×3, got {rgb.shape}", filename=RGB_FILE)
        if depth.shape != rgb.shape[:2]:
            raise DimensionMismatch(
                f"depth {depth.shape} does not match rgb {rgb.shape[:2]}", filename=DEPTH_FILE
            )
        if not np.all(np.isfinite(depth)) or np.any(depth < 0):
            raise CorruptEncoding(DEPTH_FILE, "depth must be finite and non-negative")
        if self.labels is not None and self.labels.shape != depth.shape:
            raise DimensionMismatch(
                f"labels {self.labels.shape} do not match rgb {depth.shape}", filename=LABELS_FILE
            )
        if self.foreground is not None and self.foreground.shape != depth.shape:
            raise DimensionMismatch(
                f"foreground {self.foreground.shape} does not match rgb {depth.shape}",
                filename=FOREGROUND_FILE,
            )
        rgb.setflags(write=False)
        depth.setflags(write=False)
        object.__setattr__(self, "rgb", rgb)
        object.__setattr__(self, "depth", depth)

    @property
    def shape(self) -> tuple[int, int]:
        return (int(self.depth.shape[0]), int(self.depth.shape[1]))

    @cached_property
    def point_cloud(self) -> PointCloud:
        return backproject(self.depth, self.camera)

    def with_labels(self, labels: LabelImage | None) -> "Scene":
        return Scene(self.rgb, self.depth, self.camera, labels, self.foreground)


def _read_bytes(handle: FS, name: str) -> bytes:
    if not handle.exists(name):
        raise MissingFile(name)
    try:
        return handle.readbytes(name)
    except FSError as exc:
        raise StorageError(name, str(exc)) from exc


def _write_bytes(handle: FS, name: str, data: bytes) -> None:
    try:
        handle.writebytes(name, data)
    except FSError as exc:
        raise StorageError(name, str(exc)) from exc


def _read_image(handle: FS, name: str) -> np.ndarray:
    data = _read_bytes(handle, name)
    try:
        with Image.open(io.BytesIO(data)) as image:
            image.load()
            if image.mode in ("I;16", "I;16B", "I;16L", "I"):
                return np.asarray(image, dtype=np.int64)
            if image.mode == "P":
                image = image.convert("RGB")
            return np.asarray(image)
    except (UnidentifiedImageError, OSError, SyntaxError) as exc:
        raise CorruptEncoding(name, str(exc)) from exc


def _write_png(handle: FS, name: str, array: np.ndarray) -> None:
    # uint16 arrays become "I;16", uint8 H×W×3 "RGB", uint8 H×W "L".
    buffer = io.BytesIO()
    image = Image.fromarray(np.ascontiguousarray(array))
    image.save(buffer, format="PNG")
    _write_bytes(handle, name, buffer.getvalue())


def read_uint16_png(handle: FS, name: str) -> np.ndarray:
    """Single-channel 16-bit raster as int64."""
    array = _read_image(handle, name)
    if array.ndim != 2:
        raise CorruptEncoding(name, f"expected a single-channel image, got shape {array.shape}")
    if array.min() < 0 or array.max() > MAX_UINT16:
        raise CorruptEncoding(name, "values outside the 16-bit range")
    return array


def write_uint16_png(handle: FS, name: str, array: np.ndarray) -> None:
    array = np.asarray(array)
    if array.size and (array.min() < 0 or array.max() > MAX_UINT16):
        raise CorruptEncoding(name, "values outside the 16-bit range")
    _write_png(handle, name, array.astype(np.uint16))


def read_labels(handle: FS, name: str = LABELS_FILE) -> LabelImage:
    return LabelImage(read_uint16_png(handle, name))


def write_labels(handle: FS, labels: LabelImage, name: str = LABELS_FILE) -> None:
    write_uint16_png(handle, name, labels.labels)


def _read_camera(handle: FS) -> CameraIntrinsics:
    data = _read_bytes(handle, CAMERA_FILE)
    try:
        payload = orjson.loads(data)
    except orjson.JSONDecodeError as exc:
        raise CorruptEncoding(CAMERA_FILE, str(exc)) from exc
    if not isinstance(payload, dict):
        raise CorruptEncoding(CAMERA_FILE, "expected a JSON object")
    try:
        return CameraIntrinsics.from_dict(payload)
    except ConfigInvalid as exc:
        raise CorruptEncoding(CAMERA_FILE, str(exc)) from exc


def _check_frame(name: str, shape: tuple[int, ...], expected: tuple[int, int]) -> None:
    if tuple(shape[:2]) != expected:
        raise DimensionMismatch(
            f"{name} is {shape[1]}x{shape[0]} but rgb is {expected[1]}x{expected[0]}",
            filename=name,
        )


def load_scene(path: FSLike) -> Scene:
    with open_directory(path) as handle:
        rgb = _read_image(handle, RGB_FILE)
        if rgb.ndim != 3 or rgb.shape[2] not in (3, 4):
            raise CorruptEncoding(RGB_FILE, f"expected an RGB image, got shape {rgb.shape}")
        rgb = rgb[..., :3].astype(np.uint8)
        frame = (int(rgb.shape[0]), int(rgb.shape[1]))

        depth_mm = read_uint16_png(handle, DEPTH_FILE)
        _check_frame(DEPTH_FILE, depth_mm.shape, frame)
        camera = _read_camera(handle)

        labels = None
        if handle.exists(LABELS_FILE):
            labels = read_labels(handle)
            _check_frame(LABELS_FILE, labels.shape, frame)

        foreground = None
        if handle.exists(FOREGROUND_FILE):
            fg = _read_image(handle, FOREGROUND_FILE)
            if fg.ndim == 3:
                fg = fg.max(axis=2)
            _check_frame(FOREGROUND_FILE, fg.shape, frame)
            foreground = BinaryMask(fg != 0)

    return Scene(
        rgb=rgb,
        depth=depth_mm.astype(np.float64) / 1000.0,
        camera=camera,
        labels=labels,
        foreground=foreground,
    )


def save_scene(scene: Scene, path: FSLike) -> None:
    """Write ``scene``; depth is stored at millimetre resolution."""
    depth_mm = np.rint(scene.depth * 1000.0)
    with open_directory(path, create=True) as handle:
        _write_png(handle, RGB_FILE, scene.rgb)
        write_uint16_png(handle, DEPTH_FILE, depth_mm)
        _write_bytes(
            handle,
            CAMERA_FILE,
            orjson.dumps(scene.camera.to_dict(), option=orjson.OPT_INDENT_2 | orjson.OPT_SORT_KEYS),
        )
        if scene.labels is not None:
            write_labels(handle, scene.labels)
        if scene.foreground is not None:
            _write_png(handle, FOREGROUND_FILE, scene.foreground.bits.astype(np.uint8) * 255)
    logger.debug("Saved scene to %s", path)
