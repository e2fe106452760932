"""Deterministic image-method ray tracer.

Specular paths are enumerated by mirroring the transmitter across facets
(the image tree), then validated for a given receiver by unfolding each
candidate back from the receiver and checking every segment for
occlusion.  The tree depends only on the transmitter, so moving the
receiver re-runs validation and coefficients only.

Two routes compute the same paths:

* ``trace_paths`` + ``path_coefficient``: scalar reference, general vector
  algebra on facet normals and edges.
* ``Tracer.move_receiver``: vectorized over image-tree nodes, exploiting
  that every facet is axis-aligned.  This is what coverage maps use.
"""

from __future__ import annotations

import cmath
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from typing import Sequence

import numpy as np

from .scene import PEC, SPEED_OF_LIGHT, GridSpec, Scene, Vec3, material_properties, to_occupancy

# Geometric slack for in-facet and front-side tests (meters).
GEOM_TOL = 1e-9
# Occlusion ignores hits within this distance of a segment's endpoints (meters).
ENDPOINT_EPS = 1e-9

PERPENDICULAR = "perpendicular"
PARALLEL = "parallel"


class ReceiverInObstacle(ValueError):
    pass


@dataclass(frozen=True)
class Facet:
    id: str
    index: int
    corners: tuple[tuple[float, float, float], ...]
    normal: tuple[float, float, float]
    material: str
    owner: str | None = None  # obstacle id, None for ground/ceiling

    @property
    def axis(self) -> int:
        return int(np.argmax(np.abs(self.normal)))

    @property
    def is_horizontal(self) -> bool:
        return self.axis == 2


@dataclass(frozen=True)
class ImageNode:
    position: tuple[float, float, float]
    facet: int  # facet index; -1 for the root
    depth: int
    parent: int  # node index; -1 for the root


@dataclass(frozen=True)
class ImageTree:
    nodes: tuple[ImageNode, ...]
    max_depth: int

    @property
    def root(self) -> ImageNode:
        return self.nodes[0]

    def chain(self, index: int) -> list[ImageNode]:
        """Nodes from depth 1 down to ``index`` (root excluded)."""
        out = []
        while index > 0:
            node = self.nodes[index]
            out.append(node)
            index = node.parent
        return out[::-1]


@dataclass(frozen=True)
class PropagationPath:
    vertices: tuple[tuple[float, float, float], ...]
    facets: tuple[int, ...]
    length: float
    theta: complex | None = None
    phase: float | None = None
    delay: float | None = None
    zen_aod: float | None = None
    azi_aod: float | None = None
    zen_aoa: float | None = None
    azi_aoa: float | None = None

    @property
    def n_reflections(self) -> int:
        return len(self.vertices) - 2

    def sort_key(self):
        return (self.length, len(self.facets), self.facets)


@dataclass(frozen=True)
class CellRecord:
    i: int
    j: int
    paths: tuple[PropagationPath, ...]
    coherent_gain_db: float | None
    strongest: int | None

    @property
    def dead(self) -> bool:
        return not self.paths


@dataclass(frozen=True)
class CoverageMap:
    grid: GridSpec
    tx_id: str
    power_dbm: float
    cells: tuple[CellRecord, ...]  # ordered by (i, j)

    def cell(self, i: int, j: int) -> CellRecord:
        return self.cells[i * self.grid.ny + j]

    def gain_array(self) -> np.ndarray:
        """Coherent gain in dB, shape (nx, ny); NaN for dead cells."""
        out = np.full(self.grid.shape, np.nan)
        for rec in self.cells:
            if rec.coherent_gain_db is not None:
                out[rec.i, rec.j] = rec.coherent_gain_db
        return out

    def dead_fraction(self) -> float:
        return sum(rec.dead for rec in self.cells) / len(self.cells)


# --------------------------------------------------------------------------
# facets


def rect_facet(fid, index, axis, coord, sign, lo, hi, material, owner):
    # lo/hi span the two in-plane axes; corners wind counter-clockwise seen from the front
    u, v = [a for a in range(3) if a != axis]
    corners = []
    for a, b in ((lo[0], lo[1]), (hi[0], lo[1]), (hi[0], hi[1]), (lo[0], hi[1])):
        p = [0.0, 0.0, 0.0]
        p[axis], p[u], p[v] = coord, a, b
        corners.append(tuple(p))
    if sign < 0:
        corners = corners[::-1]
    normal = [0.0, 0.0, 0.0]
    normal[axis] = float(sign)
    return Facet(fid, index, tuple(corners), tuple(normal), material, owner)


def build_facets(scene: Scene) -> list[Facet]:
    """Ground (+ ceiling), then per box: -x, +x, -y, +y walls and the top."""
    (bx0, by0), (bx1, by1) = scene.bounds
    facets = [rect_facet("ground", 0, 2, 0.0, +1, (bx0, by0), (bx1, by1), scene.ground_material, None)]
    if scene.ceiling_height is not None:
        facets.append(
            rect_facet("ceiling", 1, 2, scene.ceiling_height, -1, (bx0, by0), (bx1, by1), scene.ground_material, None)
        )
    for box in scene.objects:
        x0, y0, x1, y1 = box.footprint
        h = box.height
        m = box.material
        for suffix, axis, coord, sign, lo, hi in (
            ("-x", 0, x0, -1, (y0, 0.0), (y1, h)),
            ("+x", 0, x1, +1, (y0, 0.0), (y1, h)),
            ("-y", 1, y0, -1, (x0, 0.0), (x1, h)),
            ("+y", 1, y1, +1, (x0, 0.0), (x1, h)),
            ("top", 2, h, +1, (x0, y0), (x1, y1)),
        ):
            facets.append(rect_facet(f"{box.id}:{suffix}", len(facets), axis, coord, sign, lo, hi, m, box.id))
    return facets


def _sub(a, b):
    return (a[0] - b[0], a[1] - b[1], a[2] - b[2])


def _dot(a, b):
    return a[0] * b[0] + a[1] * b[1] + a[2] * b[2]


def _signed_distance(p, facet: Facet) -> float:
    return _dot(_sub(p, facet.corners[0]), facet.normal)


def mirror(p, facet: Facet) -> tuple[float, float, float]:
    d = 2.0 * _signed_distance(p, facet)
    n = facet.normal
    return (p[0] - d * n[0], p[1] - d * n[1], p[2] - d * n[2])


def _inside_facet(p, facet: Facet, tol: float = GEOM_TOL) -> bool:
    # project onto the two edges leaving corner 0
    c0, c1, _, c3 = facet.corners
    e1, e2 = _sub(c1, c0), _sub(c3, c0)
    r = _sub(p, c0)
    a, b = _dot(r, e1), _dot(r, e2)
    l1, l2 = _dot(e1, e1), _dot(e2, e2)
    t1, t2 = tol * math.sqrt(l1), tol * math.sqrt(l2)
    return -t1 <= a <= l1 + t1 and -t2 <= b <= l2 + t2


def build_image_tree(tx: Sequence[float], facets: Sequence[Facet], max_depth: int) -> ImageTree:
    """Mirror images of ``tx`` up to ``max_depth`` reflections.

    A child is only created when its parent image lies strictly in front of
    the facet (a specular bounce off the back of a facet is impossible), and
    never across the parent's own facet.  Nodes are breadth-first, children
    in ascending facet order.
    """
    if max_depth < 0:
        raise ValueError("max_depth must be >= 0")
    nodes = [ImageNode(tuple(float(c) for c in tx), -1, 0, -1)]
    frontier = [0]
    for depth in range(1, max_depth + 1):
        nxt = []
        for idx in frontier:
            parent = nodes[idx]
            for f in facets:
                if f.index == parent.facet:
                    continue
                if _signed_distance(parent.position, f) <= GEOM_TOL:
                    continue
                nodes.append(ImageNode(mirror(parent.position, f), f.index, depth, idx))
                nxt.append(len(nodes) - 1)
        frontier = nxt
    return ImageTree(tuple(nodes), max_depth)


def _owner_boxes(facets: Sequence[Facet]) -> dict[str, tuple[np.ndarray, np.ndarray]]:
    boxes: dict[str, list] = {}
    for f in facets:
        if f.owner is not None:
            boxes.setdefault(f.owner, []).extend(f.corners)
    return {k: (np.min(v, axis=0), np.max(v, axis=0)) for k, v in boxes.items()}


def _check_receiver(rx, boxes) -> None:
    p = np.asarray(rx, dtype=float)
    for owner, (lo, hi) in boxes.items():
        if np.all(p >= lo) and np.all(p <= hi):
            raise ReceiverInObstacle(f"receiver {tuple(rx)} inside obstacle {owner!r}")


# --------------------------------------------------------------------------
# scalar reference route


def _segment_blocked(p, q, facets: Sequence[Facet]) -> bool:
    d = _sub(q, p)
    length = math.sqrt(_dot(d, d))
    if length == 0.0:
        return False
    lo, hi = ENDPOINT_EPS / length, 1.0 - ENDPOINT_EPS / length
    for f in facets:
        dn = _dot(d, f.normal)
        if dn == 0.0:
            continue
        t = -_signed_distance(p, f) / dn
        if not lo < t < hi:
            continue
        hit = (p[0] + t * d[0], p[1] + t * d[1], p[2] + t * d[2])
        if _inside_facet(hit, f):
            return True
    return False


def trace_paths(tree: ImageTree, facets: Sequence[Facet], rx: Sequence[float]) -> list[PropagationPath]:
    """Geometry of every valid specular path from the tree root to ``rx``.

    Sorted by length (ties by reflection count, then facet sequence).
    """
    rx = tuple(float(c) for c in rx)
    _check_receiver(rx, _owner_boxes(facets))
    tx = tree.root.position
    paths = []
    for idx, node in enumerate(tree.nodes):
        chain = tree.chain(idx)
        q = rx
        points = []
        ok = True
        for link in reversed(chain):
            f = facets[link.facet]
            sq = _signed_distance(q, f)
            if sq <= GEOM_TOL:
                ok = False
                break
            si = _signed_distance(link.position, f)
            t = sq / (sq - si)
            r = (q[0] + t * (link.position[0] - q[0]),
                 q[1] + t * (link.position[1] - q[1]),
                 q[2] + t * (link.position[2] - q[2]))
            if not _inside_facet(r, f):
                ok = False
                break
            points.append(r)
            q = r
        if not ok:
            continue
        vertices = [tx] + points[::-1] + [rx]
        if any(_segment_blocked(a, b, facets) for a, b in zip(vertices, vertices[1:])):
            continue
        length = sum(math.dist(a, b) for a, b in zip(vertices, vertices[1:]))
        if length == 0.0:
            continue  # receiver on the transmitter: no defined channel
        paths.append(PropagationPath(tuple(vertices), tuple(n.facet for n in chain), length))
    paths.sort(key=PropagationPath.sort_key)
    return paths


def fresnel_gamma(eps: complex, incidence_angle: float, polarization: str) -> complex:
    """Fresnel reflection coefficient from vacuum onto a medium of permittivity ``eps``.

    ``incidence_angle`` is measured from the surface normal.  A perfect
    conductor gives -1 (perpendicular) and +1 (parallel).
    """
    if polarization not in (PERPENDICULAR, PARALLEL):
        raise ValueError(f"unknown polarization {polarization!r}")
    if cmath.isinf(eps):
        return -1.0 + 0j if polarization == PERPENDICULAR else 1.0 + 0j
    cos_t = math.cos(incidence_angle)
    root = cmath.sqrt(eps - math.sin(incidence_angle) ** 2)
    if polarization == PERPENDICULAR:
        return (cos_t - root) / (cos_t + root)
    return (eps * cos_t - root) / (eps * cos_t + root)


def _angles(u) -> tuple[float, float]:
    zen = math.acos(max(-1.0, min(1.0, u[2])))
    azi = math.atan2(u[1], u[0])
    if azi <= -math.pi:
        azi = math.pi
    return zen, azi


def _unit(v):
    n = math.sqrt(_dot(v, v))
    return (v[0] / n, v[1] / n, v[2] / n)


def path_coefficient(path: PropagationPath, frequency_hz: float, facets: Sequence[Facet]) -> PropagationPath:
    """Fill in channel coefficient, phase, delay and departure/arrival angles.

    Walls reflect with the perpendicular Fresnel coefficient, horizontal
    surfaces (ground, ceiling, box tops) with the parallel one.
    """
    lam = SPEED_OF_LIGHT / frequency_hz
    v = path.vertices
    gamma = 1.0 + 0j
    for k, fidx in enumerate(path.facets):
        f = facets[fidx]
        u = _unit(_sub(v[k + 1], v[k]))
        cos_i = min(1.0, abs(_dot(u, f.normal)))
        pol = PARALLEL if f.is_horizontal else PERPENDICULAR
        gamma *= fresnel_gamma(material_properties(f.material, frequency_hz), math.acos(cos_i), pol)
    d = path.length
    theta = lam / (4.0 * math.pi * d) * gamma * cmath.exp(-2j * math.pi * d / lam)
    phase = cmath.phase(theta) % (2.0 * math.pi)
    if phase >= 2.0 * math.pi:
        phase = 0.0
    zen_d, azi_d = _angles(_unit(_sub(v[1], v[0])))
    zen_a, azi_a = _angles(_unit(_sub(v[-2], v[-1])))
    return replace(
        path,
        theta=theta,
        phase=phase,
        delay=d / SPEED_OF_LIGHT,
        zen_aod=zen_d,
        azi_aod=azi_d,
        zen_aoa=zen_a,
        azi_aoa=azi_a,
    )


# --------------------------------------------------------------------------
# vectorized incremental route


def _gamma_vec(eps: np.ndarray, cos_i: np.ndarray, parallel: np.ndarray) -> np.ndarray:
    pec = np.isinf(eps.real)
    e = np.where(pec, 1.0, eps)
    root = np.sqrt(e - (1.0 - cos_i**2))
    perp = (cos_i - root) / (cos_i + root)
    par = (e * cos_i - root) / (e * cos_i + root)
    g = np.where(parallel, par, perp)
    return np.where(pec, np.where(parallel, 1.0 + 0j, -1.0 + 0j), g)


class Tracer:
    """Cached image tree for one transmitter; cheap receiver moves.

    Immutable after construction, so ``move_receiver`` may be called from
    several threads at once.
    """

    def __init__(self, facets: Sequence[Facet], tx: Sequence[float], frequency_hz: float, max_depth: int):
        self.facets = tuple(facets)
        self.tx = np.asarray(tx, dtype=float)
        self.frequency_hz = float(frequency_hz)
        self.wavelength = SPEED_OF_LIGHT / self.frequency_hz
        self.tree = build_image_tree(tx, self.facets, max_depth)
        self._boxes = _owner_boxes(self.facets)

        self._axis = np.array([f.axis for f in self.facets], dtype=np.intp)
        self._sign = np.array([f.normal[f.axis] for f in self.facets])
        self._coord = np.array([f.corners[0][f.axis] for f in self.facets])
        corners = np.array([f.corners for f in self.facets])
        self._lo = corners.min(axis=1)
        self._hi = corners.max(axis=1)
        self._eps = np.array([material_properties(f.material, self.frequency_hz) for f in self.facets])
        self._horizontal = self._axis == 2

        # per-depth node arrays: facet chains (N, d) and image chains (N, d, 3)
        self._levels: list[tuple[np.ndarray, np.ndarray]] = []
        by_depth: dict[int, list[int]] = {}
        for idx, node in enumerate(self.tree.nodes):
            if node.depth > 0:
                by_depth.setdefault(node.depth, []).append(idx)
        for depth in sorted(by_depth):
            chains = [self.tree.chain(idx) for idx in by_depth[depth]]
            fac = np.array([[n.facet for n in ch] for ch in chains], dtype=np.intp)
            img = np.array([[n.position for n in ch] for ch in chains], dtype=float)
            self._levels.append((fac, img))
        for arr in (self._axis, self._sign, self._coord, self._lo, self._hi, self._eps):
            arr.flags.writeable = False

    @classmethod
    def for_scene(cls, scene: Scene, tx_id: str | None = None, max_depth: int | None = None) -> "Tracer":
        tx = scene.transmitters[0] if tx_id is None else scene.transmitter(tx_id)
        depth = scene.max_reflections if max_depth is None else max_depth
        return cls(build_facets(scene), tx.position, tx.frequency_hz, depth)

    # -- geometry

    def _blocked(self, p: np.ndarray, q: np.ndarray) -> np.ndarray:
        """Occlusion flag per segment p[k] -> q[k] against every facet."""
        d = q - p
        length = np.linalg.norm(d, axis=1)
        ax = self._axis
        pa = p[:, ax]
        da = d[:, ax]
        with np.errstate(divide="ignore", invalid="ignore"):
            t = (self._coord[None, :] - pa) / da
            eps_t = (ENDPOINT_EPS / length)[:, None]
            cand = (t > eps_t) & (t < 1.0 - eps_t)
        blocked = np.zeros(len(p), dtype=bool)
        rows, cols = np.nonzero(cand)
        if rows.size == 0:
            return blocked
        hit = p[rows] + t[rows, cols, None] * d[rows]
        inside = np.all((hit >= self._lo[cols] - GEOM_TOL) & (hit <= self._hi[cols] + GEOM_TOL), axis=1)
        blocked[rows[inside]] = True
        return blocked

    def _unfold(self, fac: np.ndarray, img: np.ndarray, rx: np.ndarray):
        """Reflection points for every node of one depth; returns (node idx, vertices)."""
        n, depth = fac.shape
        keep = np.arange(n)
        q = np.broadcast_to(rx, (n, 3))
        verts = np.empty((n, depth, 3))
        for k in range(depth - 1, -1, -1):
            f = fac[keep, k]
            im = img[keep, k]
            a = self._axis[f]
            c = self._coord[f]
            rows = np.arange(len(keep))
            qa = q[rows, a]
            front = self._sign[f] * (qa - c) > GEOM_TOL
            keep, f, im, a, c, q, qa = keep[front], f[front], im[front], a[front], c[front], q[front], qa[front]
            rows = np.arange(len(keep))
            t = (c - qa) / (im[rows, a] - qa)
            r = q + t[:, None] * (im - q)
            r[rows, a] = c
            inside = np.all((r >= self._lo[f] - GEOM_TOL) & (r <= self._hi[f] + GEOM_TOL), axis=1)
            keep, r = keep[inside], r[inside]
            verts[keep, k] = r
            q = r
            if keep.size == 0:
                break
        return keep, verts[keep]

    def move_receiver(self, rx: Sequence[float]) -> list[PropagationPath]:
        """All completed paths to ``rx``; the image tree is reused, never rebuilt."""
        rx = np.asarray(rx, dtype=float)
        _check_receiver(rx, self._boxes)
        tx = self.tx
        groups = []  # (facet chains (n, d), vertex arrays (n, d+2, 3))
        if np.any(tx != rx) and not self._blocked(tx[None], rx[None])[0]:
            groups.append((np.empty((1, 0), dtype=np.intp), np.stack([tx, rx])[None]))
        for fac, img in self._levels:
            keep, verts = self._unfold(fac, img, rx)
            if keep.size == 0:
                continue
            n, depth = len(keep), fac.shape[1]
            pts = np.concatenate([np.broadcast_to(tx, (n, 1, 3)), verts, np.broadcast_to(rx, (n, 1, 3))], axis=1)
            blocked = self._blocked(pts[:, :-1].reshape(-1, 3), pts[:, 1:].reshape(-1, 3))
            ok = ~blocked.reshape(n, depth + 1).any(axis=1)
            if ok.any():
                groups.append((fac[keep[ok]], pts[ok]))
        paths = []
        for fac, pts in groups:
            paths.extend(self._complete(fac, pts))
        paths.sort(key=PropagationPath.sort_key)
        return paths

    def _complete(self, fac: np.ndarray, pts: np.ndarray) -> list[PropagationPath]:
        seg = pts[:, 1:] - pts[:, :-1]
        seg_len = np.linalg.norm(seg, axis=2)
        length = seg_len.sum(axis=1)
        unit = seg / seg_len[..., None]
        gamma = np.ones(len(pts), dtype=complex)
        for k in range(fac.shape[1]):
            f = fac[:, k]
            cos_i = np.minimum(1.0, np.abs(unit[np.arange(len(f)), k, self._axis[f]]))
            gamma *= _gamma_vec(self._eps[f], cos_i, self._horizontal[f])
        lam = self.wavelength
        theta = lam / (4.0 * np.pi * length) * gamma * np.exp(-2j * np.pi * length / lam)
        phase = np.mod(np.angle(theta), 2.0 * np.pi)
        phase[phase >= 2.0 * np.pi] = 0.0
        dep = unit[:, 0]
        arr = -unit[:, -1]
        zen_d = np.arccos(np.clip(dep[:, 2], -1.0, 1.0))
        zen_a = np.arccos(np.clip(arr[:, 2], -1.0, 1.0))
        azi_d = np.arctan2(dep[:, 1], dep[:, 0])
        azi_a = np.arctan2(arr[:, 1], arr[:, 0])
        azi_d[azi_d <= -np.pi] = np.pi
        azi_a[azi_a <= -np.pi] = np.pi
        delay = length / SPEED_OF_LIGHT
        out = []
        for k in range(len(pts)):
            out.append(
                PropagationPath(
                    vertices=tuple(tuple(float(c) for c in p) for p in pts[k]),
                    facets=tuple(int(f) for f in fac[k]),
                    length=float(length[k]),
                    theta=complex(theta[k]),
                    phase=float(phase[k]),
                    delay=float(delay[k]),
                    zen_aod=float(zen_d[k]),
                    azi_aod=float(azi_d[k]),
                    zen_aoa=float(zen_a[k]),
                    azi_aoa=float(azi_a[k]),
                )
            )
        return out


def move_receiver(tracer: Tracer, new_rx: Sequence[float]) -> list[PropagationPath]:
    return tracer.move_receiver(new_rx)


# --------------------------------------------------------------------------
# coverage


def cell_record(i: int, j: int, paths: Sequence[PropagationPath]) -> CellRecord:
    if not paths:
        return CellRecord(i, j, (), None, None)
    total = sum(p.theta for p in paths)
    power = abs(total) ** 2
    gain = 10.0 * math.log10(power) if power > 0 else -math.inf
    strongest = max(range(len(paths)), key=lambda k: (abs(paths[k].theta), -k))
    return CellRecord(i, j, tuple(paths), gain, strongest)


def worker_count() -> int:
    raw = os.environ.get("RAYDAR_THREADS", "")
    try:
        n = int(raw)
    except ValueError:
        n = os.cpu_count() or 1
    return max(1, n)


def coverage_map(scene: Scene, tx_id: str | None = None, workers: int | None = None,
                 max_depth: int | None = None) -> CoverageMap:
    """Trace every free grid cell at receiver height.

    Cells whose footprint touches an obstacle are dead without tracing.
    Output is ordered by (i, j) and does not depend on ``workers``
    (default: ``RAYDAR_THREADS``, else the CPU count).
    """
    tx = scene.transmitters[0] if tx_id is None else scene.transmitter(tx_id)
    tracer = Tracer.for_scene(scene, tx.id, max_depth)
    occ = to_occupancy(scene)
    g = scene.grid
    cells = [(i, j) for i in range(g.nx) for j in range(g.ny)]

    def run(chunk):
        out = []
        for i, j in chunk:
            if occ.blocked[i, j]:
                out.append(CellRecord(i, j, (), None, None))
                continue
            try:
                paths = tracer.move_receiver(g.receiver_position(i, j))
            except ReceiverInObstacle:
                paths = []
            out.append(cell_record(i, j, paths))
        return out

    workers = worker_count() if workers is None else max(1, workers)
    size = max(1, math.ceil(len(cells) / (workers * 4)))
    chunks = [cells[k:k + size] for k in range(0, len(cells), size)]
    if workers == 1:
        results = [run(c) for c in chunks]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(run, chunks))
    records = tuple(rec for chunk in results for rec in chunk)
    return CoverageMap(g, tx.id, tx.power_dbm, records)


COVERAGE_HEADER = "i,j,x,y,n_paths,gain_db,strongest_theta_re,strongest_theta_im"


def _fmt(v: float) -> str:
    return format(v, ".17g")


def coverage_csv(cmap: CoverageMap) -> str:
    lines = [COVERAGE_HEADER]
    for rec in cmap.cells:
        x, y = cmap.grid.cell_center(rec.i, rec.j)
        if rec.dead:
            lines.append(f"{rec.i},{rec.j},{_fmt(x)},{_fmt(y)},0,,,")
            continue
        th = rec.paths[rec.strongest].theta
        lines.append(
            f"{rec.i},{rec.j},{_fmt(x)},{_fmt(y)},{len(rec.paths)},"
            f"{_fmt(rec.coherent_gain_db)},{_fmt(th.real)},{_fmt(th.imag)}"
        )
    return "\n".join(lines) + "\n"
