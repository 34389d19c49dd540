"""Geometric primitives: axis-aligned boxes, angle wrapping, distance queries."""

import math
from dataclasses import dataclass

import numpy as np


def vec3(x: float, y: float, z: float) -> np.ndarray:
    return np.array([x, y, z], dtype=np.float64)


def wrap_angle(a: float) -> float:
    """Wrap an angle to [-pi, pi)."""
    return float((a + math.pi) % (2.0 * math.pi) - math.pi)


@dataclass
class BuildingBox:
    """Axis-aligned box. Ground-resting boxes satisfy center[2] == half_extents[2]."""

    center: np.ndarray
    half_extents: np.ndarray

    def __post_init__(self):
        self.center = np.asarray(self.center, dtype=np.float64)
        self.half_extents = np.asarray(self.half_extents, dtype=np.float64)

    @property
    def min_corner(self) -> np.ndarray:
        return self.center - self.half_extents

    @property
    def max_corner(self) -> np.ndarray:
        return self.center + self.half_extents


def point_in_box(p: np.ndarray, box: BuildingBox) -> bool:
    """Closed-box membership: faces count as inside."""
    return bool(np.all(np.abs(p - box.center) <= box.half_extents))


def box_distance(p: np.ndarray, box: BuildingBox) -> float:
    """Euclidean distance from a point to the box surface; 0 on or inside."""
    d = np.maximum(np.abs(p - box.center) - box.half_extents, 0.0)
    return float(np.sqrt(np.dot(d, d)))
