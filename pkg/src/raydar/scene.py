"""Digital-twin scene model: parsing, validation, overlays, occupancy and quadrants.

A scene is 2.5-D: every obstacle is an axis-aligned box standing on the
ground (z = 0) and extruded up to its height.  Footprints are centered on
``center``; ``width`` runs along x and ``length`` along y.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace
from typing import NamedTuple, Sequence

import numpy as np

SPEED_OF_LIGHT = 299_792_458.0
VACUUM_PERMITTIVITY = 8.8541878128e-12

# Sentinel for a perfect electric conductor: |Gamma| = 1 at any incidence.
PEC = complex(math.inf, 0.0)

# (relative permittivity, sigma coefficient c, sigma exponent d), sigma = c * f_GHz**d
MATERIAL_CONSTANTS: dict[str, tuple[float, float, float] | None] = {
    "metal": None,
    "concrete": (5.31, 0.0326, 0.8095),
    "brick": (3.75, 0.038, 0.0),
    "wood": (1.99, 0.0047, 1.0718),
    "glass": (6.27, 0.0043, 1.1925),
    "marble": (7.074, 0.0055, 0.9262),
}
MATERIALS = frozenset(MATERIAL_CONSTANTS)

MIN_FREQUENCY_HZ = 1e9
MAX_FREQUENCY_HZ = 10e9
MAX_REFLECTIONS = 5

# Slack for closed-rectangle comparisons; keeps touching edges touching after rounding.
_TOUCH_TOL = 1e-9


class SceneError(ValueError):
    """Raised when a scene or overlay document is malformed or invalid.

    ``problems`` holds one human-readable line per violation.
    """

    def __init__(self, problems: str | Sequence[str]):
        if isinstance(problems, str):
            problems = [problems]
        self.problems = list(problems)
        super().__init__("; ".join(self.problems))


class Vec3(NamedTuple):
    x: float
    y: float
    z: float


@dataclass(frozen=True)
class ObstacleBox:
    id: str
    center: tuple[float, float]
    height: float
    width: float
    length: float
    material: str

    @property
    def footprint(self) -> tuple[float, float, float, float]:
        """(xmin, ymin, xmax, ymax) of the box base."""
        cx, cy = self.center
        hw, hl = self.width / 2.0, self.length / 2.0
        return (cx - hw, cy - hl, cx + hw, cy + hl)

    def contains(self, p: Sequence[float]) -> bool:
        x0, y0, x1, y1 = self.footprint
        return x0 <= p[0] <= x1 and y0 <= p[1] <= y1 and 0.0 <= p[2] <= self.height


@dataclass(frozen=True)
class TransmitterSpec:
    id: str
    position: Vec3
    power_dbm: float
    frequency_hz: float

    @property
    def wavelength(self) -> float:
        return SPEED_OF_LIGHT / self.frequency_hz


@dataclass(frozen=True)
class GridSpec:
    """Receiver grid.  ``origin`` is the lower-left corner of cell (0, 0)."""

    origin: tuple[float, float]
    nx: int
    ny: int
    cell_size: float
    receiver_height: float

    @property
    def shape(self) -> tuple[int, int]:
        return (self.nx, self.ny)

    @property
    def extent(self) -> tuple[float, float, float, float]:
        x0, y0 = self.origin
        return (x0, y0, x0 + self.nx * self.cell_size, y0 + self.ny * self.cell_size)

    def cell_center(self, i: int, j: int) -> tuple[float, float]:
        x0, y0 = self.origin
        return (x0 + (i + 0.5) * self.cell_size, y0 + (j + 0.5) * self.cell_size)

    def cell_rect(self, i: int, j: int) -> tuple[float, float, float, float]:
        x0, y0 = self.origin
        cs = self.cell_size
        return (x0 + i * cs, y0 + j * cs, x0 + (i + 1) * cs, y0 + (j + 1) * cs)

    def cell_of(self, x: float, y: float) -> tuple[int, int]:
        """Index of the cell containing (x, y); raises if outside the grid."""
        x0, y0 = self.origin
        i = math.floor((x - x0) / self.cell_size)
        j = math.floor((y - y0) / self.cell_size)
        if not (0 <= i < self.nx and 0 <= j < self.ny):
            raise ValueError(f"point ({x}, {y}) lies outside the grid")
        return (i, j)

    def receiver_position(self, i: int, j: int) -> Vec3:
        x, y = self.cell_center(i, j)
        return Vec3(x, y, self.receiver_height)


@dataclass(frozen=True)
class Scene:
    name: str
    bounds: tuple[tuple[float, float], tuple[float, float]]
    ground_material: str
    objects: tuple[ObstacleBox, ...]
    transmitters: tuple[TransmitterSpec, ...]
    grid: GridSpec
    max_reflections: int
    ceiling_height: float | None = None

    def transmitter(self, tx_id: str) -> TransmitterSpec:
        for tx in self.transmitters:
            if tx.id == tx_id:
                return tx
        raise KeyError(tx_id)

    def obstacle_at(self, p: Sequence[float]) -> ObstacleBox | None:
        for box in self.objects:
            if box.contains(p):
                return box
        return None


@dataclass(frozen=True)
class SceneOverlay:
    base_scene: str
    add: tuple[ObstacleBox, ...] = ()
    remove: tuple[str, ...] = ()
    move: tuple[tuple[str, tuple[float, float]], ...] = field(default_factory=tuple)


@dataclass(frozen=True)
class OccupancyGrid:
    nx: int
    ny: int
    blocked: np.ndarray  # bool, shape (nx, ny)

    def is_free(self, i: int, j: int) -> bool:
        return 0 <= i < self.nx and 0 <= j < self.ny and not self.blocked[i, j]

    def free_cells(self) -> list[tuple[int, int]]:
        return [(int(i), int(j)) for i, j in zip(*np.nonzero(~self.blocked))]


# --------------------------------------------------------------------------
# materials


def material_properties(name: str, frequency_hz: float) -> complex:
    """Complex relative permittivity of an ITU-style material.

    Returns ``PEC`` for metal.  The conductivity model is
    ``sigma = c * f_GHz**d`` and the permittivity is
    ``eps_r - j * sigma / (2 pi f eps0)``.
    """
    if name not in MATERIAL_CONSTANTS:
        raise SceneError(f"unknown material {name!r}")
    if not (MIN_FREQUENCY_HZ <= frequency_hz <= MAX_FREQUENCY_HZ):
        raise ValueError(
            f"frequency {frequency_hz:g} Hz outside the 1-10 GHz material validity window"
        )
    consts = MATERIAL_CONSTANTS[name]
    if consts is None:
        return PEC
    eps_r, c, d = consts
    sigma = c * (frequency_hz / 1e9) ** d
    return complex(eps_r, -sigma / (2.0 * math.pi * frequency_hz * VACUUM_PERMITTIVITY))


def conductivity(name: str, frequency_hz: float) -> float:
    consts = MATERIAL_CONSTANTS[name]
    if consts is None:
        return math.inf
    return consts[1] * (frequency_hz / 1e9) ** consts[2]


# --------------------------------------------------------------------------
# validation


def _finite(*values: float) -> bool:
    return all(isinstance(v, (int, float)) and math.isfinite(v) for v in values)


def scene_problems(scene: Scene) -> list[str]:
    """Return every invariant violation of ``scene`` (empty when valid)."""
    problems: list[str] = []
    (bx0, by0), (bx1, by1) = scene.bounds
    if not _finite(bx0, by0, bx1, by1) or not (bx0 < bx1 and by0 < by1):
        problems.append("bounds: min must be strictly below max")
    if scene.ground_material not in MATERIALS:
        problems.append(f"ground_material: unknown material {scene.ground_material!r}")
    if scene.ceiling_height is not None and not (
        _finite(scene.ceiling_height) and scene.ceiling_height > 0
    ):
        problems.append("ceiling_height: must be positive")
    rho = scene.max_reflections
    if not isinstance(rho, int) or isinstance(rho, bool) or not 0 <= rho <= MAX_REFLECTIONS:
        problems.append(f"max_reflections: must be an integer in [0, {MAX_REFLECTIONS}]")

    seen: set[str] = set()
    for box in scene.objects:
        where = f"object {box.id!r}"
        if box.id in seen:
            problems.append(f"{where}: duplicate id")
        seen.add(box.id)
        if box.material not in MATERIALS:
            problems.append(f"{where}: unknown material {box.material!r}")
        if not _finite(box.height, box.width, box.length, *box.center):
            problems.append(f"{where}: non-finite geometry")
            continue
        if min(box.height, box.width, box.length) <= 0:
            problems.append(f"{where}: nonpositive dimension")
            continue
        x0, y0, x1, y1 = box.footprint
        if x0 < bx0 or y0 < by0 or x1 > bx1 or y1 > by1:
            problems.append(f"{where}: footprint out of bounds")
        if scene.ceiling_height is not None and box.height > scene.ceiling_height:
            problems.append(f"{where}: taller than the ceiling")

    if not scene.transmitters:
        problems.append("transmitters: missing transmitter (at least one required)")
    for tx in scene.transmitters:
        where = f"transmitter {tx.id!r}"
        if tx.id in seen:
            problems.append(f"{where}: duplicate id")
        seen.add(tx.id)
        p = tx.position
        if not _finite(*p, tx.power_dbm, tx.frequency_hz):
            problems.append(f"{where}: non-finite value")
            continue
        if tx.frequency_hz <= 0:
            problems.append(f"{where}: frequency must be positive")
        if not (bx0 < p.x < bx1 and by0 < p.y < by1):
            problems.append(f"{where}: position out of bounds")
        if p.z <= 0:
            problems.append(f"{where}: position must be above ground (z > 0)")
        if scene.ceiling_height is not None and p.z >= scene.ceiling_height:
            problems.append(f"{where}: position at or above the ceiling")
        inside = scene.obstacle_at(p)
        if inside is not None:
            problems.append(f"{where}: position inside obstacle {inside.id!r}")

    g = scene.grid
    if not (isinstance(g.nx, int) and isinstance(g.ny, int) and g.nx >= 1 and g.ny >= 1):
        problems.append("grid: nx and ny must be integers >= 1")
    elif not (_finite(g.cell_size, g.receiver_height, *g.origin) and g.cell_size > 0):
        problems.append("grid: cell_size must be positive")
    else:
        gx0, gy0, gx1, gy1 = g.extent
        tol = _TOUCH_TOL * max(1.0, abs(bx1 - bx0), abs(by1 - by0))
        if gx0 < bx0 - tol or gy0 < by0 - tol or gx1 > bx1 + tol or gy1 > by1 + tol:
            problems.append("grid: extends beyond scene bounds")
        if g.receiver_height <= 0:
            problems.append("grid: receiver_height must be positive")
        if scene.ceiling_height is not None and g.receiver_height >= scene.ceiling_height:
            problems.append("grid: receiver_height at or above the ceiling")
    return problems


def validate(scene: Scene) -> Scene:
    problems = scene_problems(scene)
    if problems:
        raise SceneError(problems)
    return scene


# --------------------------------------------------------------------------
# document parsing

_SCENE_KEYS = {"name", "bounds", "ground_material", "max_reflections", "objects", "transmitters", "grid"}
_OPTIONAL_SCENE_KEYS = {"ceiling_height"}
_OBJECT_KEYS = {"id", "center", "height", "width", "length", "material"}
_TX_KEYS = {"id", "position", "power_dbm", "frequency_hz"}
_GRID_KEYS = {"origin", "nx", "ny", "cell_size", "receiver_height"}
_OVERLAY_KEYS = {"base_scene", "add", "remove", "move"}


def _load_json(text: str) -> object:
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise SceneError(f"syntax error at line {exc.lineno}, column {exc.colno}: {exc.msg}") from None


def _check_keys(obj: object, required: set[str], where: str, optional: set[str] = frozenset()) -> dict:
    if not isinstance(obj, dict):
        raise SceneError(f"{where}: expected an object")
    missing = required - obj.keys()
    extra = obj.keys() - required - optional
    problems = [f"{where}: missing key {k!r}" for k in sorted(missing)]
    problems += [f"{where}: unexpected key {k!r}" for k in sorted(extra)]
    if problems:
        raise SceneError(problems)
    return obj


def _number(v: object, where: str) -> float:
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise SceneError(f"{where}: expected a number")
    return float(v)


def _integer(v: object, where: str) -> int:
    if isinstance(v, bool) or not isinstance(v, int):
        raise SceneError(f"{where}: expected an integer")
    return v


def _vector(v: object, n: int, where: str) -> tuple[float, ...]:
    if not isinstance(v, list) or len(v) != n:
        raise SceneError(f"{where}: expected a list of {n} numbers")
    return tuple(_number(c, where) for c in v)


def _string(v: object, where: str) -> str:
    if not isinstance(v, str):
        raise SceneError(f"{where}: expected a string")
    return v


def _parse_box(obj: object, where: str) -> ObstacleBox:
    d = _check_keys(obj, _OBJECT_KEYS, where)
    box_id = _string(d["id"], f"{where}.id")
    where = f"object {box_id!r}"
    material = _string(d["material"], f"{where}.material")
    if material not in MATERIALS:
        raise SceneError(f"{where}: unknown material {material!r}")
    return ObstacleBox(
        id=box_id,
        center=_vector(d["center"], 2, f"{where}.center"),
        height=_number(d["height"], f"{where}.height"),
        width=_number(d["width"], f"{where}.width"),
        length=_number(d["length"], f"{where}.length"),
        material=material,
    )


def scene_from_dict(d: object) -> Scene:
    """Build an (unvalidated) scene from a decoded document."""
    d = _check_keys(d, _SCENE_KEYS, "scene", _OPTIONAL_SCENE_KEYS)
    bounds = _check_keys(d["bounds"], {"min", "max"}, "bounds")
    ground = _string(d["ground_material"], "ground_material")
    if ground not in MATERIALS:
        raise SceneError(f"ground_material: unknown material {ground!r}")
    if not isinstance(d["objects"], list):
        raise SceneError("objects: expected a list")
    if not isinstance(d["transmitters"], list):
        raise SceneError("transmitters: expected a list")
    txs = []
    for k, t in enumerate(d["transmitters"]):
        t = _check_keys(t, _TX_KEYS, f"transmitters[{k}]")
        tx_id = _string(t["id"], f"transmitters[{k}].id")
        txs.append(
            TransmitterSpec(
                id=tx_id,
                position=Vec3(*_vector(t["position"], 3, f"transmitter {tx_id!r}.position")),
                power_dbm=_number(t["power_dbm"], f"transmitter {tx_id!r}.power_dbm"),
                frequency_hz=_number(t["frequency_hz"], f"transmitter {tx_id!r}.frequency_hz"),
            )
        )
    g = _check_keys(d["grid"], _GRID_KEYS, "grid")
    ceiling = d.get("ceiling_height")
    return Scene(
        name=_string(d["name"], "name"),
        bounds=(_vector(bounds["min"], 2, "bounds.min"), _vector(bounds["max"], 2, "bounds.max")),
        ground_material=ground,
        ceiling_height=None if ceiling is None else _number(ceiling, "ceiling_height"),
        max_reflections=_integer(d["max_reflections"], "max_reflections"),
        objects=tuple(_parse_box(o, f"objects[{k}]") for k, o in enumerate(d["objects"])),
        transmitters=tuple(txs),
        grid=GridSpec(
            origin=_vector(g["origin"], 2, "grid.origin"),
            nx=_integer(g["nx"], "grid.nx"),
            ny=_integer(g["ny"], "grid.ny"),
            cell_size=_number(g["cell_size"], "grid.cell_size"),
            receiver_height=_number(g["receiver_height"], "grid.receiver_height"),
        ),
    )


def read_scene_document(text: str) -> Scene:
    """Decode a scene document without checking its invariants."""
    return scene_from_dict(_load_json(text))


def parse_scene(text: str) -> Scene:
    """Parse and validate a scene document."""
    return validate(scene_from_dict(_load_json(text)))


def load_scene(path) -> Scene:
    with open(path, encoding="utf-8") as fh:
        return parse_scene(fh.read())


def _box_dict(box: ObstacleBox) -> dict:
    return {
        "id": box.id,
        "center": list(box.center),
        "height": box.height,
        "width": box.width,
        "length": box.length,
        "material": box.material,
    }


def scene_to_dict(scene: Scene) -> dict:
    d = {
        "name": scene.name,
        "bounds": {"min": list(scene.bounds[0]), "max": list(scene.bounds[1])},
        "ground_material": scene.ground_material,
    }
    if scene.ceiling_height is not None:
        d["ceiling_height"] = scene.ceiling_height
    d["max_reflections"] = scene.max_reflections
    d["objects"] = [_box_dict(b) for b in scene.objects]
    d["transmitters"] = [
        {
            "id": t.id,
            "position": list(t.position),
            "power_dbm": t.power_dbm,
            "frequency_hz": t.frequency_hz,
        }
        for t in scene.transmitters
    ]
    g = scene.grid
    d["grid"] = {
        "origin": list(g.origin),
        "nx": g.nx,
        "ny": g.ny,
        "cell_size": g.cell_size,
        "receiver_height": g.receiver_height,
    }
    return d


def dump_scene(scene: Scene) -> str:
    return json.dumps(scene_to_dict(scene), indent=2) + "\n"


def parse_overlay(text: str) -> SceneOverlay:
    d = _check_keys(_load_json(text), _OVERLAY_KEYS, "overlay")
    for key in ("add", "remove", "move"):
        if not isinstance(d[key], list):
            raise SceneError(f"overlay.{key}: expected a list")
    moves = []
    for k, m in enumerate(d["move"]):
        m = _check_keys(m, {"id", "center"}, f"overlay.move[{k}]")
        moves.append((_string(m["id"], f"overlay.move[{k}].id"), _vector(m["center"], 2, f"overlay.move[{k}].center")))
    return SceneOverlay(
        base_scene=_string(d["base_scene"], "overlay.base_scene"),
        add=tuple(_parse_box(o, f"overlay.add[{k}]") for k, o in enumerate(d["add"])),
        remove=tuple(_string(r, f"overlay.remove[{k}]") for k, r in enumerate(d["remove"])),
        move=tuple(moves),
    )


def load_overlay(path) -> SceneOverlay:
    with open(path, encoding="utf-8") as fh:
        return parse_overlay(fh.read())


def dump_overlay(overlay: SceneOverlay) -> str:
    d = {
        "base_scene": overlay.base_scene,
        "add": [_box_dict(b) for b in overlay.add],
        "remove": list(overlay.remove),
        "move": [{"id": i, "center": list(c)} for i, c in overlay.move],
    }
    return json.dumps(d, indent=2) + "\n"


# --------------------------------------------------------------------------
# transforms


def apply_overlay(base: Scene, overlay: SceneOverlay) -> Scene:
    """Apply add, remove and move edits (in that order) to a blueprint scene."""
    if overlay.base_scene != base.name:
        raise SceneError(f"overlay targets scene {overlay.base_scene!r}, not {base.name!r}")
    objects = list(base.objects) + list(overlay.add)
    ids = {b.id for b in objects}
    dangling = [i for i in overlay.remove if i not in ids]
    dangling += [i for i, _ in overlay.move if i not in ids]
    if dangling:
        raise SceneError([f"overlay: dangling id reference {i!r}" for i in dangling])
    removed = set(overlay.remove)
    objects = [b for b in objects if b.id not in removed]
    moves = dict(overlay.move)
    gone = [i for i in moves if i in removed]
    if gone:
        raise SceneError([f"overlay: cannot move removed object {i!r}" for i in gone])
    objects = [replace(b, center=tuple(moves[b.id])) if b.id in moves else b for b in objects]
    return validate(replace(base, objects=tuple(objects)))


def _rects_touch(a: tuple[float, ...], b: tuple[float, ...]) -> bool:
    return (
        a[0] <= b[2] + _TOUCH_TOL
        and b[0] <= a[2] + _TOUCH_TOL
        and a[1] <= b[3] + _TOUCH_TOL
        and b[1] <= a[3] + _TOUCH_TOL
    )


def to_occupancy(scene: Scene) -> OccupancyGrid:
    """Rasterize obstacle footprints; touching edges count as blocked."""
    g = scene.grid
    x0, y0 = g.origin
    cs = g.cell_size
    lo_x = x0 + np.arange(g.nx) * cs
    lo_y = y0 + np.arange(g.ny) * cs
    hi_x = x0 + (np.arange(g.nx) + 1) * cs
    hi_y = y0 + (np.arange(g.ny) + 1) * cs
    blocked = np.zeros((g.nx, g.ny), dtype=bool)
    for box in scene.objects:
        fx0, fy0, fx1, fy1 = box.footprint
        in_x = (lo_x <= fx1 + _TOUCH_TOL) & (fx0 <= hi_x + _TOUCH_TOL)
        in_y = (lo_y <= fy1 + _TOUCH_TOL) & (fy0 <= hi_y + _TOUCH_TOL)
        blocked |= np.outer(in_x, in_y)
    blocked.flags.writeable = False
    return OccupancyGrid(g.nx, g.ny, blocked)


QUADRANT_NAMES = ("Q1", "Q2", "Q3", "Q4")


def quadrant_rects(scene: Scene) -> list[tuple[float, float, float, float]]:
    """Quadrant rectangles about the bounds center: Q1 SW, Q2 NW, Q3 NE, Q4 SE."""
    (x0, y0), (x1, y1) = scene.bounds
    cx, cy = (x0 + x1) / 2.0, (y0 + y1) / 2.0
    return [(x0, y0, cx, cy), (x0, cy, cx, y1), (cx, cy, x1, y1), (cx, y0, x1, cy)]


def _quadrant_index_ranges(scene: Scene) -> list[tuple[range, range]]:
    # Cells go to the quadrant holding their center; centers on a split line go east/north.
    (x0, y0), (x1, y1) = scene.bounds
    cx, cy = (x0 + x1) / 2.0, (y0 + y1) / 2.0
    g = scene.grid
    west = [i for i in range(g.nx) if g.cell_center(i, 0)[0] < cx]
    south = [j for j in range(g.ny) if g.cell_center(0, j)[1] < cy]
    iw, js = len(west), len(south)
    w, e = range(0, iw), range(iw, g.nx)
    s, n = range(0, js), range(js, g.ny)
    return [(w, s), (w, n), (e, n), (e, s)]


def split_quadrants(scene: Scene, tx_per_quadrant: Sequence[TransmitterSpec]) -> list[Scene]:
    """Split a scene into Q1 (SW), Q2 (NW), Q3 (NE), Q4 (SE) sub-scenes.

    Each sub-scene keeps the full bounds (so obstacle footprints stay valid),
    but only the obstacles touching its quadrant, its own transmitter and the
    grid cells whose centers fall inside the quadrant.
    """
    if len(tx_per_quadrant) != 4:
        raise SceneError("split_quadrants needs exactly 4 transmitters")
    rects = quadrant_rects(scene)
    ranges = _quadrant_index_ranges(scene)
    g = scene.grid
    out = []
    for name, rect, (ri, rj), tx in zip(QUADRANT_NAMES, rects, ranges, tx_per_quadrant):
        qx0, qy0, qx1, qy1 = rect
        if not (qx0 <= tx.position.x <= qx1 and qy0 <= tx.position.y <= qy1):
            raise SceneError(f"transmitter {tx.id!r} outside quadrant {name}")
        if len(ri) == 0 or len(rj) == 0:
            raise SceneError(f"quadrant {name} contains no grid cells")
        ox, oy = g.cell_rect(ri.start, rj.start)[:2]
        grid = replace(g, origin=(ox, oy), nx=len(ri), ny=len(rj))
        objects = tuple(b for b in scene.objects if _rects_touch(b.footprint, rect))
        sub = replace(scene, name=f"{scene.name}-{name}", objects=objects, transmitters=(tx,), grid=grid)
        out.append(validate(sub))
    return out


def quadrant_cells(scene: Scene) -> list[set[tuple[int, int]]]:
    """Full-grid cell indices owned by each quadrant (Q1..Q4)."""
    return [{(i, j) for i in ri for j in rj} for ri, rj in _quadrant_index_ranges(scene)]
