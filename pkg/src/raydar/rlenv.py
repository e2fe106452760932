"""Grid navigation environment driven by ray-tracing features."""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass
from enum import IntEnum
from typing import Sequence

import numpy as np

from .dataset import DatasetRow, feature_grid
from .scene import GridSpec, OccupancyGrid

ARRIVAL_REWARD = 5000.0
COLLISION_REWARD = -5000.0

Cell = tuple[int, int]


class Action(IntEnum):
    X_MINUS = 0
    X_PLUS = 1
    Y_MINUS = 2
    Y_PLUS = 3

    @property
    def delta(self) -> Cell:
        return _DELTAS[self]


_DELTAS = {
    Action.X_MINUS: (-1, 0),
    Action.X_PLUS: (1, 0),
    Action.Y_MINUS: (0, -1),
    Action.Y_PLUS: (0, 1),
}


class EnvError(ValueError):
    pass


@dataclass(frozen=True)
class StepOutcome:
    next_state: np.ndarray
    reward: float
    done: bool
    collided: bool
    reached: bool


def reward(pos: Cell, target: Cell, collided: bool) -> float:
    """Distance shaping plus arrival bonus and collision penalty, in cell units."""
    r = -float((target[0] - pos[0]) ** 2 + (target[1] - pos[1]) ** 2)
    if tuple(pos) == tuple(target):
        r += ARRIVAL_REWARD
    if collided:
        r += COLLISION_REWARD
    return r


def bfs_shortest(occupancy: OccupancyGrid, start: Cell, target: Cell) -> int | None:
    """Minimum number of 4-neighbour moves from start to target, or None."""
    path = bfs_path(occupancy, start, target)
    return None if path is None else len(path) - 1


def bfs_path(occupancy: OccupancyGrid, start: Cell, target: Cell) -> list[Cell] | None:
    start, target = tuple(start), tuple(target)
    if not (occupancy.is_free(*start) and occupancy.is_free(*target)):
        return None
    prev = {start: None}
    queue = deque([start])
    while queue:
        cur = queue.popleft()
        if cur == target:
            path = []
            while cur is not None:
                path.append(cur)
                cur = prev[cur]
            return path[::-1]
        for dx, dy in _DELTAS.values():
            nxt = (cur[0] + dx, cur[1] + dy)
            if nxt not in prev and occupancy.is_free(*nxt):
                prev[nxt] = cur
                queue.append(nxt)
    return None


class NavEnv:
    """One robot on the receiver grid.

    States are the raw per-cell dataset rows (coordinates in meters, RF
    quantities in physical units).  Collisions are not terminal: the robot
    stays put and pays the penalty.
    """

    def __init__(self, occupancy: OccupancyGrid, features: np.ndarray, grid: GridSpec,
                 max_steps: int | None = None):
        if features.shape != (occupancy.nx, occupancy.ny, 10):
            raise EnvError(f"feature array shape {features.shape} does not match the grid")
        self.occupancy = occupancy
        self.features = features
        self.grid = grid
        self.max_steps = 20 * (grid.nx + grid.ny) if max_steps is None else max_steps
        self.position: Cell | None = None
        self.target: Cell | None = None
        self.step_count = 0
        self.done = True

    @classmethod
    def from_rows(cls, occupancy: OccupancyGrid, rows: Sequence[DatasetRow], grid: GridSpec,
                  max_steps: int | None = None) -> "NavEnv":
        return cls(occupancy, feature_grid(rows, grid), grid, max_steps)

    def cell_of(self, x: float, y: float) -> Cell:
        return self.grid.cell_of(x, y)

    def extract_state(self, cell: Cell) -> np.ndarray:
        i, j = cell
        if not (0 <= i < self.occupancy.nx and 0 <= j < self.occupancy.ny):
            raise EnvError(f"cell {cell} outside the grid")
        return self.features[i, j].copy()

    def random_free_pair(self, rng: np.random.Generator, reachable: bool = True) -> tuple[Cell, Cell]:
        free = self.occupancy.free_cells()
        if len(free) < 2:
            raise EnvError("need at least two free cells")
        for _ in range(1000):
            a, b = rng.choice(len(free), size=2, replace=False)
            start, target = free[a], free[b]
            if not reachable or bfs_shortest(self.occupancy, start, target) is not None:
                return start, target
        raise EnvError("could not sample a reachable start/target pair")

    def reset(self, start: Cell | None = None, target: Cell | None = None, seed: int | None = None) -> np.ndarray:
        if start is None or target is None:
            start, target = self.random_free_pair(np.random.default_rng(seed))
        start, target = tuple(start), tuple(target)
        for name, cell in (("start", start), ("target", target)):
            if not self.occupancy.is_free(*cell):
                raise EnvError(f"{name} {cell} is blocked or outside the grid")
        if start == target:
            raise EnvError("start and target coincide")
        self.position, self.target = start, target
        self.step_count = 0
        self.done = False
        return self.extract_state(start)

    def step(self, action: int) -> StepOutcome:
        if self.done:
            raise EnvError("step() called on a finished episode")
        dx, dy = Action(action).delta
        tentative = (self.position[0] + dx, self.position[1] + dy)
        collided = not self.occupancy.is_free(*tentative)
        if not collided:
            self.position = tentative
        self.step_count += 1
        reached = self.position == self.target
        r = reward(self.position, self.target, collided)
        self.done = reached or self.step_count >= self.max_steps
        return StepOutcome(self.extract_state(self.position), r, self.done, collided, reached)


# --------------------------------------------------------------------------
# logs

EPISODE_HEADER = "episode,steps,total_reward,collisions,reached"
TRAJECTORY_HEADER = "t,x,y,action,reward,collided"


def _comment(seed: int | None) -> list[str]:
    return [] if seed is None else [f"# seed={seed}"]


def episode_log_csv(steps, rewards, collisions, reached, seed: int | None = None) -> str:
    lines = _comment(seed) + [EPISODE_HEADER]
    for k, (s, r, c, ok) in enumerate(zip(steps, rewards, collisions, reached)):
        lines.append(f"{k},{s},{format(r, '.17g')},{c},{int(ok)}")
    return "\n".join(lines) + "\n"


def read_episode_log(text: str) -> dict[str, list]:
    lines = [ln for ln in text.splitlines() if ln.strip() and not ln.startswith("#")]
    if not lines or lines[0].strip() != EPISODE_HEADER:
        raise EnvError("episode log: missing or wrong header")
    out = {"episode": [], "steps": [], "total_reward": [], "collisions": [], "reached": []}
    for n, line in enumerate(lines[1:], start=2):
        f = line.split(",")
        if len(f) != 5:
            raise EnvError(f"episode log line {n}: expected 5 columns")
        out["episode"].append(int(f[0]))
        out["steps"].append(int(f[1]))
        out["total_reward"].append(float(f[2]))
        out["collisions"].append(int(f[3]))
        out["reached"].append(bool(int(f[4])))
    return out


def trajectory_csv(grid: GridSpec, cells: Sequence[Cell], actions, rewards, collided,
                   seed: int | None = None) -> str:
    """Row t holds the position after action t-1 (row 0 is the start, no action)."""
    lines = _comment(seed) + [TRAJECTORY_HEADER]
    x, y = grid.cell_center(*cells[0])
    lines.append(f"0,{format(x, '.17g')},{format(y, '.17g')},,,0")
    for t, (cell, a, r, c) in enumerate(zip(cells[1:], actions, rewards, collided), start=1):
        x, y = grid.cell_center(*cell)
        lines.append(f"{t},{format(x, '.17g')},{format(y, '.17g')},{Action(a).name},{format(r, '.17g')},{int(c)}")
    return "\n".join(lines) + "\n"
