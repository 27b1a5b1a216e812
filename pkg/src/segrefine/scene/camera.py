"""Pinhole camera intrinsics and organized point clouds."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Any, Mapping

import numpy as np

from segrefine.errors import ConfigInvalid


@dataclass(frozen=True)
class CameraIntrinsics:
    fx: float
    fy: float
    cx: float
    cy: float

    def __post_init__(self) -> None:
        for name in ("fx", "fy"):
            value = getattr(self, name)
            if not np.isfinite(value) or value <= 0:
                raise ConfigInvalid(name, f"focal length must be positive, got {value}")
        for name in ("cx", "cy"):
            if not np.isfinite(getattr(self, name)):
                raise ConfigInvalid(name, "principal point must be finite")

    @classmethod
    def for_frame(cls, height: int, width: int, focal_scale: float = 0.9) -> "CameraIntrinsics":
        """Square-pixel camera centred on the frame."""
        focal = focal_scale * width
        return cls(fx=focal, fy=focal, cx=width / 2.0, cy=height / 2.0)

    @classmethod
    def from_dict(cls, payload: Mapping[str, Any]) -> "CameraIntrinsics":
        try:
            return cls(
                fx=float(payload["fx"]),
                fy=float(payload["fy"]),
                cx=float(payload["cx"]),
                cy=float(payload["cy"]),
            )
        except KeyError as exc:
            raise ConfigInvalid(str(exc.args[0]), "missing camera intrinsic") from exc
        except (TypeError, ValueError) as exc:
            raise ConfigInvalid("camera", str(exc)) from exc

    def to_dict(self) -> dict[str, float]:
        return {"fx": self.fx, "fy": self.fy, "cx": self.cx, "cy": self.cy}


@dataclass(frozen=True, eq=False)
class PointCloud:
    """H×W×3 organized cloud in metres; invalid pixels hold (0, 0, 0)."""

    xyz: np.ndarray

    @property
    def shape(self) -> tuple[int, int]:
        return (int(self.xyz.shape[0]), int(self.xyz.shape[1]))


def backproject(depth: np.ndarray, intrinsics: CameraIntrinsics) -> PointCloud:
    depth = np.asarray(depth, dtype=np.float64)
    height, width = depth.shape
    v, u = np.mgrid[0:height, 0:width].astype(np.float64)
    valid = depth > 0
    xyz = np.zeros((height, width, 3), dtype=np.float64)
    xyz[..., 0] = np.where(valid, (u - intrinsics.cx) * depth / intrinsics.fx, 0.0)
    xyz[..., 1] = np.where(valid, (v - intrinsics.cy) * depth / intrinsics.fy, 0.0)
    xyz[..., 2] = np.where(valid, depth, 0.0)
    xyz.setflags(write=False)
    return PointCloud(xyz=xyz)


def project(points: np.ndarray, intrinsics: CameraIntrinsics) -> np.ndarray:
    """Map (..., 3) camera-frame points to (..., 2) pixel (u, v) coordinates.

    Points with z <= 0 map to NaN.
    """
    points = np.asarray(points, dtype=np.float64)
    z = points[..., 2]
    with np.errstate(divide="ignore", invalid="ignore"):
        u = np.where(z > 0, points[..., 0] * intrinsics.fx / z + intrinsics.cx, np.nan)
        v = np.where(z > 0, points[..., 1] * intrinsics.fy / z + intrinsics.cy, np.nan)
    return np.stack([u, v], axis=-1)
