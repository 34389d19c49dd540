"""Procedural urban world generation and the world JSON interchange format."""

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import GenerationFailed, ParseError
from .geometry import BuildingBox, point_in_box, vec3

PLACEMENT_ATTEMPTS = 1000

# Spawn and goal candidate regions, as fractions of the bounds extents.
# Spawn on the low-x side, goal on the high-x side, both kept well inside the
# bounds and at mid altitudes, so every generated task is a cross-city flight
# and a near-miss of the goal stays in bounds.
_SPAWN_X_BAND = (0.10, 0.22)
_GOAL_X_BAND = (0.75, 0.87)
_Y_MARGIN = 0.20
_Z_BAND = (0.25, 0.55)


@dataclass
class GenConfig:
    """Knobs for procedural world generation (all lengths in meters)."""

    n_buildings: int = 10
    extent_x: float = 100.0
    extent_y: float = 100.0
    extent_z: float = 60.0
    height_min: float = 10.0
    height_max: float = 40.0
    footprint_min: float = 4.0
    footprint_max: float = 12.0
    spawn_radius: float = 2.0
    goal_radius: float = 5.0


@dataclass
class World:
    """Static scene: flight bounds, buildings, spawn sphere, goal sphere."""

    bounds: BuildingBox
    buildings: list
    spawn_center: np.ndarray
    spawn_radius: float
    goal_center: np.ndarray
    goal_radius: float
    seed: int
    _arrays: tuple = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        self.spawn_center = np.asarray(self.spawn_center, dtype=np.float64)
        self.goal_center = np.asarray(self.goal_center, dtype=np.float64)

    def building_arrays(self):
        """Stacked (centers, half_extents) as (B, 3) arrays, cached.

        The buildings list must not be mutated after the first call.
        """
        if self._arrays is None:
            if self.buildings:
                centers = np.stack([b.center for b in self.buildings])
                halves = np.stack([b.half_extents for b in self.buildings])
            else:
                centers = np.zeros((0, 3))
                halves = np.zeros((0, 3))
            self._arrays = (centers, halves)
        return self._arrays


def point_in_any_building(p: np.ndarray, world: World) -> bool:
    centers, halves = world.building_arrays()
    if not len(centers):
        return False
    return bool((np.abs(p - centers) <= halves).all(axis=1).any())


def _validate_gen_config(gen: GenConfig):
    if gen.n_buildings < 0:
        raise ValueError("n_buildings must be >= 0")
    if min(gen.extent_x, gen.extent_y, gen.extent_z) <= 0:
        raise ValueError("bounds extents must be positive")
    if not (0 < gen.height_min <= gen.height_max):
        raise ValueError("height range must be nonempty with positive minimum")
    if not (0 < gen.footprint_min <= gen.footprint_max):
        raise ValueError("footprint range must be nonempty with positive minimum")
    if gen.goal_radius <= 0:
        raise ValueError("goal_radius must be > 0")
    if gen.spawn_radius < 0:
        raise ValueError("spawn_radius must be >= 0")


def _sample_point(rng, lo: np.ndarray, hi: np.ndarray) -> np.ndarray:
    return lo + rng.random(3) * (hi - lo)


def generate_world(gen: GenConfig, seed: int) -> World:
    """Build a world deterministically from (gen, seed).

    Buildings are placed on a jittered grid over the bounds footprint with
    uniform heights/footprints from the configured ranges. Spawn and goal
    centers are resampled (up to 1000 attempts each) until they fall outside
    every building.
    """
    _validate_gen_config(gen)
    rng = np.random.default_rng(seed)

    half = vec3(gen.extent_x / 2.0, gen.extent_y / 2.0, gen.extent_z / 2.0)
    bounds = BuildingBox(center=vec3(0.0, 0.0, gen.extent_z / 2.0), half_extents=half)
    x_min, x_max = -half[0], half[0]
    y_min, y_max = -half[1], half[1]

    buildings = []
    n = gen.n_buildings
    if n > 0:
        grid = math.ceil(math.sqrt(n))
        cell_w = gen.extent_x / grid
        cell_d = gen.extent_y / grid
        cells = rng.permutation(grid * grid)[:n]
        for ci in cells:
            gx, gy = int(ci % grid), int(ci // grid)
            fx = rng.uniform(gen.footprint_min, gen.footprint_max)
            fy = rng.uniform(gen.footprint_min, gen.footprint_max)
            h = rng.uniform(gen.height_min, gen.height_max)
            ux, uy = rng.random(), rng.random()
            # Jitter inside the cell while keeping the footprint within bounds.
            lo_x = max(x_min + gx * cell_w + fx / 2.0, x_min + fx / 2.0)
            hi_x = min(x_min + (gx + 1) * cell_w - fx / 2.0, x_max - fx / 2.0)
            lo_y = max(y_min + gy * cell_d + fy / 2.0, y_min + fy / 2.0)
            hi_y = min(y_min + (gy + 1) * cell_d - fy / 2.0, y_max - fy / 2.0)
            cx = lo_x + ux * (hi_x - lo_x) if hi_x > lo_x else min(max(x_min + (gx + 0.5) * cell_w, x_min + fx / 2.0), x_max - fx / 2.0)
            cy = lo_y + uy * (hi_y - lo_y) if hi_y > lo_y else min(max(y_min + (gy + 0.5) * cell_d, y_min + fy / 2.0), y_max - fy / 2.0)
            buildings.append(BuildingBox(center=vec3(cx, cy, h / 2.0),
                                         half_extents=vec3(fx / 2.0, fy / 2.0, h / 2.0)))

    world = World(bounds=bounds, buildings=buildings,
                  spawn_center=vec3(0, 0, 0), spawn_radius=gen.spawn_radius,
                  goal_center=vec3(0, 0, 0), goal_radius=gen.goal_radius, seed=seed)

    def place(band_x, min_clearance):
        lo = vec3(x_min + band_x[0] * gen.extent_x,
                  y_min + _Y_MARGIN * gen.extent_y,
                  _Z_BAND[0] * gen.extent_z)
        hi = vec3(x_min + band_x[1] * gen.extent_x,
                  y_max - _Y_MARGIN * gen.extent_y,
                  _Z_BAND[1] * gen.extent_z)
        centers, halves = world.building_arrays()
        for _ in range(PLACEMENT_ATTEMPTS):
            p = _sample_point(rng, lo, hi)
            if point_in_any_building(p, world):
                continue
            if len(centers):
                d = np.maximum(np.abs(p - centers) - halves, 0.0)
                if float(np.sqrt((d * d).sum(axis=1)).min()) < min_clearance:
                    continue
            return p
        raise GenerationFailed(
            f"no building-free placement found in {PLACEMENT_ATTEMPTS} attempts "
            "(overcrowded configuration)")

    # Keep the whole spawn sphere and most of the goal sphere building-free.
    world.spawn_center = place(_SPAWN_X_BAND, gen.spawn_radius)
    world.goal_center = place(_GOAL_X_BAND, 0.5 * gen.goal_radius)
    return world


def validate_world(world: World):
    """Raise ValueError naming the first violated world invariant."""
    for name, v in (("spawn_center", world.spawn_center), ("goal_center", world.goal_center)):
        if not np.all(np.isfinite(v)):
            raise ValueError(f"{name} has non-finite components")
        if not point_in_box(v, world.bounds):
            raise ValueError(f"{name} lies outside the world bounds")
        if point_in_any_building(v, world):
            raise ValueError(f"{name} lies inside a building")
    if world.goal_radius <= 0:
        raise ValueError("goal_radius must be > 0")
    if world.spawn_radius < 0:
        raise ValueError("spawn_radius must be >= 0")
    if np.any(world.bounds.half_extents <= 0):
        raise ValueError("bounds half_extents must be positive")
    for i, b in enumerate(world.buildings):
        if np.any(b.half_extents <= 0):
            raise ValueError(f"building {i} has non-positive half_extents")
        if b.center[2] != b.half_extents[2]:
            raise ValueError(f"building {i} does not rest on the ground plane")
        if not np.all(np.isfinite(b.center)) or not np.all(np.isfinite(b.half_extents)):
            raise ValueError(f"building {i} has non-finite geometry")


def _box_dict(box: BuildingBox) -> dict:
    return {"center": box.center.tolist(), "half_extents": box.half_extents.tolist()}


def world_to_dict(world: World) -> dict:
    return {
        "seed": world.seed,
        "bounds": _box_dict(world.bounds),
        "buildings": [_box_dict(b) for b in world.buildings],
        "spawn_center": world.spawn_center.tolist(),
        "spawn_radius": world.spawn_radius,
        "goal_center": world.goal_center.tolist(),
        "goal_radius": world.goal_radius,
    }


def _box_from_dict(d: dict) -> BuildingBox:
    return BuildingBox(center=np.asarray(d["center"], dtype=np.float64),
                       half_extents=np.asarray(d["half_extents"], dtype=np.float64))


def world_from_dict(d: dict) -> World:
    try:
        world = World(
            bounds=_box_from_dict(d["bounds"]),
            buildings=[_box_from_dict(b) for b in d["buildings"]],
            spawn_center=np.asarray(d["spawn_center"], dtype=np.float64),
            spawn_radius=float(d["spawn_radius"]),
            goal_center=np.asarray(d["goal_center"], dtype=np.float64),
            goal_radius=float(d["goal_radius"]),
            seed=int(d["seed"]),
        )
    except (KeyError, TypeError) as e:
        raise ParseError(f"bad world JSON: {e}")
    for arr in (world.bounds.center, world.spawn_center, world.goal_center):
        if arr.shape != (3,):
            raise ParseError("world JSON vectors must have length 3")
    validate_world(world)
    return world


def save_world(world: World, path):
    with open(path, "w") as f:
        json.dump(world_to_dict(world), f, indent=2)
        f.write("\n")


def load_world(path) -> World:
    with open(path) as f:
        try:
            d = json.load(f)
        except json.JSONDecodeError as e:
            raise ParseError(f"invalid world JSON: {e.msg}", line=e.lineno)
    return world_from_dict(d)
