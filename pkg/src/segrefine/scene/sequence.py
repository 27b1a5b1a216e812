"""Scenes that lose one object per step, for the uncertainty-driven removal loop."""

from __future__ import annotations

import logging

import numpy as np

from segrefine.errors import UnknownNode
from segrefine.models.config import GeneratorConfig
from segrefine.scene.generator import SceneObject, generate_objects, render_scene
from segrefine.scene.io import Scene

logger = logging.getLogger(__name__)


class ObjectRemovalSequence:
    """Re-renders a generated scene after each removal; labels keep their ids."""

    def __init__(self, objects: list[SceneObject], config: GeneratorConfig, seed: int = 0) -> None:
        self._objects = list(objects)
        self._config = config
        self._seed = seed
        self._removed: list[int] = []

    @classmethod
    def generate(cls, seed: int, config: GeneratorConfig | None = None) -> "ObjectRemovalSequence":
        config = config or GeneratorConfig()
        return cls(generate_objects(seed, config), config, seed)

    @property
    def remaining(self) -> list[int]:
        return [obj.label for obj in self._objects]

    @property
    def removed(self) -> list[int]:
        return list(self._removed)

    def __len__(self) -> int:
        return len(self._objects)

    def current(self) -> Scene:
        noise_rng = np.random.default_rng([self._seed, len(self._removed)])
        return render_scene(self._objects, self._config, noise_rng=noise_rng)

    def remove(self, label: int) -> None:
        for index, obj in enumerate(self._objects):
            if obj.label == label:
                del self._objects[index]
                self._removed.append(label)
                logger.info("Removed object %d, %d remaining", label, len(self._objects))
                return
        raise UnknownNode(f"object {label} is not in the scene")
