from dataclasses import replace
from importlib import resources

import pytest

from raydar.dataset import generate_dataset
from raydar.raytrace import coverage_map
from raydar.rlenv import NavEnv
from raydar.scene import (
    GridSpec,
    ObstacleBox,
    Scene,
    TransmitterSpec,
    Vec3,
    apply_overlay,
    load_overlay,
    load_scene,
    to_occupancy,
)

SCENE_DIR = resources.files("raydar") / "scenes"


def scene_path(name: str) -> str:
    return str(SCENE_DIR / name)


def make_scene(objects=(), tx=(0.0, 0.0, 5.0), grid=None, bounds=((-20.0, -20.0), (20.0, 20.0)),
               ceiling=None, rho=2, ground="concrete", name="toy", freq=2.4e9, extra_tx=()) -> Scene:
    if grid is None:
        grid = GridSpec(origin=(-10.0, -10.0), nx=20, ny=20, cell_size=1.0, receiver_height=1.5)
    txs = (TransmitterSpec("tx1", Vec3(*tx), 20.0, freq),) + tuple(extra_tx)
    return Scene(name=name, bounds=bounds, ground_material=ground, objects=tuple(objects), transmitters=txs,
                 grid=grid, max_reflections=rho, ceiling_height=ceiling)


def box(id, cx, cy, w=2.0, l=2.0, h=3.0, material="concrete") -> ObstacleBox:
    return ObstacleBox(id=id, center=(cx, cy), height=h, width=w, length=l, material=material)


@pytest.fixture(scope="session")
def cubicle():
    return load_scene(scene_path("cubicle.json"))


@pytest.fixture(scope="session")
def cubicle_dynamic(cubicle):
    return apply_overlay(cubicle, load_overlay(scene_path("cubicle_dynamic.overlay.json")))


@pytest.fixture(scope="session")
def cubicle_map(cubicle):
    return coverage_map(cubicle, workers=1)


@pytest.fixture(scope="session")
def cubicle_rows(cubicle_map):
    return generate_dataset(cubicle_map)


@pytest.fixture()
def cubicle_env(cubicle, cubicle_rows):
    return NavEnv.from_rows(to_occupancy(cubicle), cubicle_rows, cubicle.grid)


MATERIAL_CHOICES = ("metal", "concrete", "brick", "wood", "glass", "marble")


def random_point(rng, scene, z_range=(0.5, 4.0)):
    """Uniform point in the scene's 20 m play area, outside every obstacle."""
    while True:
        p = (rng.uniform(-9.5, 9.5), rng.uniform(-9.5, 9.5), rng.uniform(*z_range))
        if scene.obstacle_at(p) is None:
            return p


def random_scene(rng, max_boxes=5, rho=2, ceiling=None):
    """Up to ``max_boxes`` random boxes in a 20 m square, tx placed in free space."""
    objects = []
    for k in range(int(rng.integers(0, max_boxes + 1))):
        objects.append(box(f"b{k}", rng.uniform(-8, 8), rng.uniform(-8, 8), w=rng.uniform(0.5, 4),
                           l=rng.uniform(0.5, 4), h=rng.uniform(0.5, 5),
                           material=MATERIAL_CHOICES[int(rng.integers(len(MATERIAL_CHOICES)))]))
    scene = make_scene(objects, bounds=((-10.0, -10.0), (10.0, 10.0)), ceiling=ceiling, rho=rho,
                       grid=GridSpec((-10.0, -10.0), 20, 20, 1.0, 1.5))
    tx = random_point(rng, scene)
    return replace(scene, transmitters=(TransmitterSpec("tx1", Vec3(*tx), 20.0, 2.4e9),))
