"""Simulated manipulation loop driven by contour uncertainty.

Refine the current scene; while some refined instance is surrounded by more
contour disagreement than the threshold allows, take away the scene object
under the most uncertain instance and look again. Removing an object stands
in for grasping it, so the loop always ends.
"""

from __future__ import annotations

import logging
from dataclasses import asdict, dataclass, field
from typing import Any

import numpy as np

from segrefine.geometry.masks import LabelImage, extract_instances
from segrefine.models.config import CorruptionConfig, EngineConfig
from segrefine.scene.corruption import corrupt_segmentation
from segrefine.scene.sequence import ObjectRemovalSequence
from segrefine.scoring.scorers import make_scorer
from segrefine.search.sample_tree import refine
from segrefine.search.uncertainty import ContourUncertainty

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class LoopStep:
    step: int
    objects: int
    instances: int
    max_uncertainty: float
    removed: int | None


@dataclass
class LoopReport:
    initial_objects: int
    removals: list[int] = field(default_factory=list)
    steps: list[LoopStep] = field(default_factory=list)
    stop_reason: str = ""

    @property
    def steps_used(self) -> int:
        return len(self.steps)

    def to_dict(self) -> dict[str, Any]:
        return {
            "initial_objects": self.initial_objects,
            "removals": list(self.removals),
            "steps_used": self.steps_used,
            "stop_reason": self.stop_reason,
            "steps": [asdict(step) for step in self.steps],
        }


def uncertainty_masses(
    labels: LabelImage, uncertainty: ContourUncertainty, radius: float
) -> dict[int, float]:
    return {label: uncertainty.mass_near(mask, radius) for label, mask in extract_instances(labels).items()}


def pick_uncertain_object(
    refined: LabelImage,
    gt: LabelImage,
    uncertainty: ContourUncertainty,
    *,
    radius: float,
    threshold: float,
) -> int | None:
    """Scene object under the most uncertain refined instance above ``threshold``.

    Instances are tried in order of decreasing uncertainty; the object chosen
    is the ground-truth label covering most of the instance.
    """
    masses = uncertainty_masses(refined, uncertainty, radius)
    ranked = sorted((item for item in masses.items() if item[1] > threshold), key=lambda item: (-item[1], item[0]))
    for label, _ in ranked:
        covered = gt.labels[refined.labels == label]
        counts = np.bincount(covered[covered > 0])
        if counts.size:
            return int(np.argmax(counts))
    return None


def uncertainty_loop_sim(
    sequence: ObjectRemovalSequence,
    config: EngineConfig,
    *,
    corruption: CorruptionConfig | None = None,
    max_steps: int | None = None,
) -> LoopReport:
    """Run the removal loop; ``corruption`` perturbs each step's initial labels."""
    report = LoopReport(initial_objects=len(sequence))
    limit = len(sequence) + 1 if max_steps is None else max_steps
    for step in range(limit):
        if len(sequence) == 0:
            report.stop_reason = "scene cleared"
            break
        scene = sequence.current()
        gt = scene.labels
        assert gt is not None
        initial = gt if corruption is None else corrupt_segmentation(gt, config.seed + step, corruption)
        rng = np.random.default_rng([config.seed, step])
        result = refine(scene, initial, config, rng, make_scorer(config, gt))
        masses = uncertainty_masses(result.best_labels, result.uncertainty, config.uncertainty_radius)
        target = pick_uncertain_object(
            result.best_labels,
            gt,
            result.uncertainty,
            radius=config.uncertainty_radius,
            threshold=config.uncertainty_threshold,
        )
        report.steps.append(
            LoopStep(
                step=step,
                objects=len(sequence),
                instances=len(masses),
                max_uncertainty=max(masses.values(), default=0.0),
                removed=target,
            )
        )
        if target is None:
            uncertain = any(mass > config.uncertainty_threshold for mass in masses.values())
            report.stop_reason = "uncertainty off objects" if uncertain else "confident"
            break
        sequence.remove(target)
        report.removals.append(target)
    else:
        report.stop_reason = "step limit"
    logger.info(
        "Loop finished after %d steps with %d removals (%s)",
        report.steps_used,
        len(report.removals),
        report.stop_reason,
    )
    return report
