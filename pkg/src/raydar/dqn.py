"""From-scratch deep Q-network: MLP, Huber/Bellman training, replay, inference.

All parameters of a network live in one flat float64 vector; per-layer
weight and bias arrays are views into it.  That keeps Adam updates and
target synchronization to a handful of vector operations.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from typing import NamedTuple, Sequence

import numpy as np

from .rlenv import Action, Cell, NavEnv, bfs_shortest

N_FEATURES = 10
N_ACTIONS = len(Action)
N_HIDDEN_LAYERS = 5
CHECKPOINT_VERSION = 1


class TrainingDiverged(RuntimeError):
    pass


class UnreachableTarget(RuntimeError):
    pass


@dataclass
class DQNConfig:
    gamma: float = 0.9
    epsilon: float = 0.1
    episodes: int = 500
    hidden: int = 128
    lr: float = 1e-3
    replay_capacity: int = 50_000
    batch_size: int = 64
    target_sync: int = 500
    seed: int = 0
    max_steps: int | None = None

    def __post_init__(self):
        if not 0.0 <= self.epsilon <= 1.0:
            raise ValueError("epsilon must lie in [0, 1]")
        if not 0.0 < self.gamma < 1.0:
            raise ValueError("gamma must lie in (0, 1)")
        if self.episodes < 0 or self.hidden < 1 or self.batch_size < 1:
            raise ValueError("episodes, hidden and batch_size must be positive")
        if self.replay_capacity < self.batch_size:
            raise ValueError("replay_capacity must be at least batch_size")


def layer_dims(hidden: int) -> tuple[int, ...]:
    return (N_FEATURES,) + (hidden,) * N_HIDDEN_LAYERS + (N_ACTIONS,)


class QNetwork:
    """MLP with rectifier hidden layers and a linear output layer.

    Weights are stored (fan_in, fan_out) so a batch propagates as ``h @ W + b``.
    """

    def __init__(self, dims: Sequence[int], params: np.ndarray | None = None):
        self.dims = tuple(int(d) for d in dims)
        n = sum(a * b + b for a, b in zip(self.dims, self.dims[1:]))
        if params is None:
            params = np.zeros(n)
        if params.shape != (n,):
            raise ValueError(f"expected {n} parameters, got {params.shape}")
        self.params = params
        self.weights, self.biases = _views(self.params, self.dims)

    @property
    def n_params(self) -> int:
        return self.params.size

    def copy(self) -> "QNetwork":
        return QNetwork(self.dims, self.params.copy())


def _views(flat: np.ndarray, dims: Sequence[int]) -> tuple[list[np.ndarray], list[np.ndarray]]:
    weights, biases = [], []
    k = 0
    for a, b in zip(dims, dims[1:]):
        weights.append(flat[k:k + a * b].reshape(a, b))
        k += a * b
        biases.append(flat[k:k + b])
        k += b
    return weights, biases


def init_network(config: DQNConfig | None = None, seed: int | None = None, dims: Sequence[int] | None = None) -> QNetwork:
    """He-uniform weights, U(-sqrt(6/fan_in), +sqrt(6/fan_in)); zero biases."""
    config = config or DQNConfig()
    dims = layer_dims(config.hidden) if dims is None else dims
    rng = np.random.default_rng(config.seed if seed is None else seed)
    net = QNetwork(dims)
    for w in net.weights:
        limit = math.sqrt(6.0 / w.shape[0])
        w[...] = rng.uniform(-limit, limit, size=w.shape)
    return net


def forward(net: QNetwork, s: np.ndarray) -> np.ndarray:
    """Q-values for one state (shape (10,)) or a batch (shape (B, 10))."""
    s = np.asarray(s, dtype=float)
    if s.shape[-1] != net.dims[0]:
        raise ValueError(f"expected input width {net.dims[0]}, got {s.shape[-1]}")
    h = s
    for w, b in zip(net.weights[:-1], net.biases[:-1]):
        h = h @ w
        h += b
        np.maximum(h, 0.0, out=h)
    return h @ net.weights[-1] + net.biases[-1]


def input_gradient(net: QNetwork, s: np.ndarray, action: int) -> np.ndarray:
    """d Q(s)[action] / d s for a single state."""
    s = np.asarray(s, dtype=float)
    masks = []
    h = s
    for w, b in zip(net.weights[:-1], net.biases[:-1]):
        z = h @ w + b
        masks.append(z > 0)
        h = np.maximum(z, 0.0)
    g = net.weights[-1][:, action].copy()
    for w, m in zip(reversed(net.weights[:-1]), reversed(masks)):
        g = w @ (g * m)
    return g


def huber(q_behavior: float, q_target: float) -> float:
    e = q_target - q_behavior
    return 0.5 * e * e if abs(e) <= 1.0 else abs(e) - 0.5


def select_action(q: Sequence[float], epsilon: float, rng: np.random.Generator) -> int:
    """Epsilon-greedy; greedy ties resolve to the lowest index."""
    if epsilon > 0.0 and rng.random() < epsilon:
        return int(rng.integers(len(q)))
    return int(np.argmax(q))


class Transition(NamedTuple):
    state: np.ndarray
    action: int
    reward: float
    next_state: np.ndarray
    done: bool


def bellman_target(transition: Transition, target_net: QNetwork, gamma: float) -> float:
    if transition.done:
        return float(transition.reward)
    return float(transition.reward + gamma * np.max(forward(target_net, transition.next_state)))


def bellman_targets(rewards, next_states, dones, target_net: QNetwork, gamma: float) -> np.ndarray:
    y = np.array(rewards, dtype=float)
    live = ~np.asarray(dones, dtype=bool)
    if live.any():
        y[live] += gamma * forward(target_net, next_states[live]).max(axis=1)
    return y


def loss_and_grads(net: QNetwork, states: np.ndarray, actions: np.ndarray,
                   targets: np.ndarray) -> tuple[float, np.ndarray]:
    """Mean Huber loss of Q(s)[a] against ``targets`` and its flat gradient."""
    states = np.atleast_2d(np.asarray(states, dtype=float))
    actions = np.asarray(actions, dtype=np.intp)
    batch = len(states)
    acts = [states]
    h = states
    for w, b in zip(net.weights[:-1], net.biases[:-1]):
        h = h @ w
        h += b
        np.maximum(h, 0.0, out=h)
        acts.append(h)
    q = h @ net.weights[-1] + net.biases[-1]
    rows = np.arange(batch)
    e = targets - q[rows, actions]
    abs_e = np.abs(e)
    loss = float(np.mean(np.where(abs_e <= 1.0, 0.5 * e * e, abs_e - 0.5)))

    grad = np.empty_like(net.params)
    gw, gb = _views(grad, net.dims)
    dz = np.zeros_like(q)
    dz[rows, actions] = -np.clip(e, -1.0, 1.0) / batch
    for k in range(len(net.weights) - 1, -1, -1):
        np.matmul(acts[k].T, dz, out=gw[k])
        np.sum(dz, axis=0, out=gb[k])
        if k:
            dz = dz @ net.weights[k].T
            dz *= acts[k] > 0
    return loss, grad


class Adam:
    def __init__(self, n: int, lr: float = 1e-3, beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.m = np.zeros(n)
        self.v = np.zeros(n)
        self.t = 0
        self._a = np.empty(n)
        self._b = np.empty(n)

    def step(self, params: np.ndarray, grad: np.ndarray) -> None:
        self.t += 1
        a, b = self._a, self._b
        self.m *= self.beta1
        np.multiply(grad, 1.0 - self.beta1, out=a)
        self.m += a
        self.v *= self.beta2
        np.multiply(grad, grad, out=a)
        a *= 1.0 - self.beta2
        self.v += a
        step = self.lr * math.sqrt(1.0 - self.beta2**self.t) / (1.0 - self.beta1**self.t)
        np.sqrt(self.v, out=b)
        b += self.eps
        np.divide(self.m, b, out=a)
        a *= step
        params -= a


def train_step(behavior: QNetwork, target: QNetwork, batch: Sequence[Transition] | tuple,
               gamma: float, optimizer: Adam) -> float:
    """One Adam step on the mean Huber loss; updates ``behavior`` in place.

    ``batch`` is either a sequence of Transition or a tuple of stacked
    arrays (states, actions, rewards, next_states, dones).
    """
    if isinstance(batch, tuple) and len(batch) == 5 and isinstance(batch[0], np.ndarray) and batch[0].ndim == 2:
        s, a, r, s2, d = batch
    else:
        if not batch:
            raise ValueError("empty batch")
        s = np.array([t.state for t in batch], dtype=float)
        a = np.array([t.action for t in batch], dtype=np.intp)
        r = np.array([t.reward for t in batch], dtype=float)
        s2 = np.array([t.next_state for t in batch], dtype=float)
        d = np.array([t.done for t in batch], dtype=bool)
    y = bellman_targets(r, s2, d, target, gamma)
    loss, grad = loss_and_grads(behavior, s, a, y)
    if not math.isfinite(loss):
        raise TrainingDiverged(f"non-finite loss {loss}")
    optimizer.step(behavior.params, grad)
    return loss


def sync_target(behavior: QNetwork, target: QNetwork) -> QNetwork:
    if behavior.dims != target.dims:
        raise ValueError(f"architecture mismatch: {behavior.dims} vs {target.dims}")
    target.params[...] = behavior.params
    return target


class ReplayBuffer:
    """Fixed-capacity ring buffer; the oldest transition is evicted first."""

    def __init__(self, capacity: int, width: int = N_FEATURES):
        self.capacity = capacity
        self.states = np.zeros((capacity, width))
        self.actions = np.zeros(capacity, dtype=np.intp)
        self.rewards = np.zeros(capacity)
        self.next_states = np.zeros((capacity, width))
        self.dones = np.zeros(capacity, dtype=bool)
        self._next = 0
        self._size = 0

    def __len__(self) -> int:
        return self._size

    def add(self, s, a, r, s2, done) -> None:
        k = self._next
        self.states[k] = s
        self.actions[k] = a
        self.rewards[k] = r
        self.next_states[k] = s2
        self.dones[k] = done
        self._next = (k + 1) % self.capacity
        self._size = min(self._size + 1, self.capacity)

    def sample(self, n: int, rng: np.random.Generator):
        idx = rng.integers(0, self._size, size=n)
        return (self.states[idx], self.actions[idx], self.rewards[idx], self.next_states[idx], self.dones[idx])


# --------------------------------------------------------------------------
# input normalization

# feature columns: x, y, zen_aod, azi_aod, zen_aoa, azi_aoa, theta_re, theta_im, phase, delay
_ANGLE_COLUMNS = (2, 3, 4, 5, 8)
_MAGNITUDE_COLUMNS = (6, 7, 9)


@dataclass
class Normalizer:
    offset: np.ndarray
    scale: np.ndarray

    @classmethod
    def for_env(cls, env: NavEnv) -> "Normalizer":
        """Coordinates to [-1, 1] over the grid's cell centers, angles / pi,
        Re/Im(Theta) and delay / their max absolute value over the scene."""
        g = env.grid
        offset = np.zeros(N_FEATURES)
        scale = np.ones(N_FEATURES)
        x_lo, y_lo = g.cell_center(0, 0)
        x_hi, y_hi = g.cell_center(g.nx - 1, g.ny - 1)
        offset[0], offset[1] = (x_lo + x_hi) / 2.0, (y_lo + y_hi) / 2.0
        scale[0] = (x_hi - x_lo) / 2.0 or 1.0
        scale[1] = (y_hi - y_lo) / 2.0 or 1.0
        scale[list(_ANGLE_COLUMNS)] = math.pi
        flat = env.features.reshape(-1, N_FEATURES)
        for c in _MAGNITUDE_COLUMNS:
            m = float(np.max(np.abs(flat[:, c])))
            scale[c] = m if m > 0 else 1.0
        return cls(offset, scale)

    def __call__(self, state: np.ndarray) -> np.ndarray:
        return (state - self.offset) / self.scale

    def to_dict(self) -> dict:
        return {"offset": self.offset.tolist(), "scale": self.scale.tolist()}

    @classmethod
    def from_dict(cls, d: dict) -> "Normalizer":
        return cls(np.array(d["offset"], dtype=float), np.array(d["scale"], dtype=float))


# --------------------------------------------------------------------------
# training and inference


@dataclass
class TrainReport:
    steps: list[int] = field(default_factory=list)
    total_reward: list[float] = field(default_factory=list)
    collisions: list[int] = field(default_factory=list)
    reached: list[bool] = field(default_factory=list)
    best: tuple[int, int] | None = None  # (min steps, episode) over episodes that reached the target
    # fixed start/target only: (greedy steps, episode) of the best greedy-evaluated network
    best_greedy: tuple[int, int] | None = None
    best_network: QNetwork | None = None
    gradient_steps: int = 0

    def best_summary(self) -> str:
        if self.best is None:
            return "target never reached"
        return f"{self.best[0]} in {self.best[1]} Episode"


def train(env: NavEnv, config: DQNConfig, start: Cell | None = None, target: Cell | None = None,
          normalizer: Normalizer | None = None,
          initial: QNetwork | None = None) -> tuple[QNetwork, TrainReport]:
    """Run ``config.episodes`` epsilon-greedy episodes with replay and a target network.

    With ``start`` and ``target`` given every episode uses them; otherwise a
    fresh reachable pair is drawn per episode.  ``initial`` replaces the seeded
    initialization (it is copied, not mutated).  Fully deterministic per seed.
    """
    if config.max_steps is not None:
        env.max_steps = config.max_steps
    fixed = start is not None and target is not None
    if fixed and bfs_shortest(env.occupancy, start, target) is None:
        raise UnreachableTarget(f"target {target} unreachable from {start}")
    rng = np.random.default_rng(config.seed)
    norm = normalizer or Normalizer.for_env(env)
    behavior = init_network(config, config.seed) if initial is None else initial.copy()
    target_net = behavior.copy()
    optimizer = Adam(behavior.n_params, config.lr)
    buffer = ReplayBuffer(config.replay_capacity)
    report = TrainReport()

    for episode in range(config.episodes):
        if fixed:
            s = norm(env.reset(start, target))
        else:
            s = norm(env.reset(*env.random_free_pair(rng)))
        total, collisions = 0.0, 0
        while True:
            a = select_action(forward(behavior, s), config.epsilon, rng)
            out = env.step(a)
            s2 = norm(out.next_state)
            # truncation at max_steps is not terminal for bootstrapping
            buffer.add(s, a, out.reward, s2, out.reached)
            total += out.reward
            collisions += out.collided
            if len(buffer) >= config.batch_size:
                train_step(behavior, target_net, buffer.sample(config.batch_size, rng), config.gamma, optimizer)
                report.gradient_steps += 1
                if report.gradient_steps % config.target_sync == 0:
                    sync_target(behavior, target_net)
            s = s2
            if out.done:
                break
        report.steps.append(env.step_count)
        report.total_reward.append(total)
        report.collisions.append(collisions)
        report.reached.append(out.reached)
        if out.reached and (report.best is None or env.step_count < report.best[0]):
            report.best = (env.step_count, episode)
        if fixed and out.reached:
            # checkpoint candidate: the shortest collision-free greedy rollout so far
            probe = infer_path(behavior, env, start, target, normalizer=norm)
            if probe.reached and probe.collisions == 0 and (
                    report.best_greedy is None or probe.steps <= report.best_greedy[0]):
                report.best_greedy = (probe.steps, episode)
                report.best_network = behavior.copy()
    return behavior, report


@dataclass
class Trajectory:
    cells: list[Cell]
    actions: list[int]
    rewards: list[float]
    collided: list[bool]
    reached: bool

    @property
    def steps(self) -> int:
        return len(self.actions)

    @property
    def collisions(self) -> int:
        return sum(self.collided)


def infer_path(net: QNetwork, env: NavEnv, start: Cell, target: Cell, max_steps: int | None = None,
               normalizer: Normalizer | None = None) -> Trajectory:
    """Greedy rollout of ``net`` from start toward target."""
    start, target = tuple(start), tuple(target)
    if start == target:
        if not env.occupancy.is_free(*start):
            raise ValueError(f"start {start} is blocked")
        return Trajectory([start], [], [], [], True)
    norm = normalizer or Normalizer.for_env(env)
    saved = env.max_steps
    if max_steps is not None:
        env.max_steps = max_steps
    try:
        s = env.reset(start, target)
        traj = Trajectory([start], [], [], [], False)
        while True:
            a = int(np.argmax(forward(net, norm(s))))
            out = env.step(a)
            traj.cells.append(env.position)
            traj.actions.append(a)
            traj.rewards.append(out.reward)
            traj.collided.append(out.collided)
            s = out.next_state
            if out.done:
                traj.reached = out.reached
                return traj
    finally:
        env.max_steps = saved


# --------------------------------------------------------------------------
# checkpoints


def checkpoint_dict(net: QNetwork, normalizer: Normalizer, config: DQNConfig | dict) -> dict:
    cfg = asdict(config) if isinstance(config, DQNConfig) else dict(config)
    return {
        "version": CHECKPOINT_VERSION,
        "dims": list(net.dims),
        "weights": [w.ravel().tolist() for w in net.weights],
        "biases": [b.tolist() for b in net.biases],
        "normalization": normalizer.to_dict(),
        "config": cfg,
    }


def save_checkpoint(path, net: QNetwork, normalizer: Normalizer, config: DQNConfig | dict) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(checkpoint_dict(net, normalizer, config), fh)
        fh.write("\n")


def load_checkpoint(path) -> tuple[QNetwork, Normalizer, dict]:
    with open(path, encoding="utf-8") as fh:
        d = json.load(fh)
    if d.get("version") != CHECKPOINT_VERSION:
        raise ValueError(f"unsupported checkpoint version {d.get('version')!r}")
    net = QNetwork(d["dims"])
    for w, flat in zip(net.weights, d["weights"]):
        w[...] = np.array(flat, dtype=float).reshape(w.shape)
    for b, vals in zip(net.biases, d["biases"]):
        b[...] = vals
    return net, Normalizer.from_dict(d["normalization"]), d["config"]
