"""Dataset-level evaluation of predicted label images against ground truth.

A dataset directory holds one subdirectory per scene. Ground-truth scenes
carry ``labels.png``; prediction scenes carry ``refined_labels.png`` (falling
back to ``labels.png``). A directory without subdirectories is treated as a
single scene.
"""

from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Any, Mapping, Sequence

import numpy as np
from fs.base import FS

from segrefine.errors import FrameMismatch, MissingScene
from segrefine.evaluation.metrics import DEFAULT_TOLERANCE, EvalReport, evaluate_labels
from segrefine.geometry.masks import LabelImage
from segrefine.infrastructure.filesystem import FSLike, list_subdirectories, open_directory
from segrefine.scene.io import LABELS_FILE, read_labels

logger = logging.getLogger(__name__)

REFINED_LABELS_FILE = "refined_labels.png"
SINGLE_SCENE = "."


@dataclass(frozen=True)
class DatasetReport:
    per_image: dict[str, EvalReport]
    mean: dict[str, float]
    std: dict[str, float]

    @property
    def count(self) -> int:
        return len(self.per_image)

    def to_dict(self) -> dict[str, Any]:
        return {
            "count": self.count,
            "mean": self.mean,
            "std": self.std,
            "per_image": {scene_id: report.to_dict() for scene_id, report in self.per_image.items()},
        }


def summarize(rows: Sequence[Mapping[str, float]], names: Sequence[str]) -> tuple[dict[str, float], dict[str, float]]:
    """Mean and population standard deviation per metric name."""
    if not rows:
        return {name: 0.0 for name in names}, {name: 0.0 for name in names}
    table = np.asarray([[float(row[name]) for name in names] for row in rows], dtype=np.float64)
    return dict(zip(names, table.mean(axis=0).tolist())), dict(zip(names, table.std(axis=0).tolist()))


def aggregate(per_image: Mapping[str, EvalReport]) -> DatasetReport:
    names = EvalReport.metric_names()
    ordered = dict(sorted(per_image.items()))
    mean, std = summarize([report.to_dict() for report in ordered.values()], names)
    return DatasetReport(per_image=ordered, mean=mean, std=std)


def scene_ids(handle: FS) -> list[str]:
    return list_subdirectories(handle) or [SINGLE_SCENE]


def _scene_handle(handle: FS, scene_id: str) -> FS:
    return handle if scene_id == SINGLE_SCENE else handle.opendir(scene_id)


def _read_prediction(handle: FS, scene_id: str, directory: str) -> LabelImage:
    if scene_id != SINGLE_SCENE and not handle.isdir(scene_id):
        raise MissingScene(scene_id, directory)
    scene = _scene_handle(handle, scene_id)
    for name in (REFINED_LABELS_FILE, LABELS_FILE):
        if scene.exists(name):
            return read_labels(scene, name)
    raise MissingScene(scene_id, directory)


def _read_truth(handle: FS, scene_id: str, directory: str) -> LabelImage:
    scene = _scene_handle(handle, scene_id)
    if not scene.exists(LABELS_FILE):
        raise MissingScene(scene_id, directory)
    return read_labels(scene)


def evaluate_dataset(
    pred_dir: FSLike,
    gt_dir: FSLike,
    tol: float = DEFAULT_TOLERANCE,
    *,
    jobs: int = 1,
) -> DatasetReport:
    pairs: dict[str, tuple[LabelImage, LabelImage]] = {}
    with open_directory(gt_dir) as gt_handle, open_directory(pred_dir) as pred_handle:
        ids = scene_ids(gt_handle)
        for scene_id in ids:
            gt = _read_truth(gt_handle, scene_id, str(gt_dir))
            pred = _read_prediction(pred_handle, scene_id, str(pred_dir))
            if pred.shape != gt.shape:
                raise FrameMismatch(f"scene {scene_id}: prediction {pred.shape} vs ground truth {gt.shape}")
            pairs[scene_id] = (pred, gt)
        if ids != [SINGLE_SCENE]:
            extra = sorted(set(scene_ids(pred_handle)) - set(ids) - {SINGLE_SCENE})
            if extra:
                logger.warning("Ignoring %d prediction scenes without ground truth: %s", len(extra), extra)

    def _evaluate(scene_id: str) -> EvalReport:
        pred, gt = pairs[scene_id]
        return evaluate_labels(pred, gt, tol=tol)

    with ThreadPoolExecutor(max_workers=max(1, jobs)) as pool:
        reports = dict(zip(pairs, pool.map(_evaluate, pairs)))
    logger.info("Evaluated %d scenes", len(reports))
    return aggregate(reports)
