import cmath
import math
from itertools import product

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import box, make_scene, random_point, random_scene
from raydar.raytrace import (
    COVERAGE_HEADER,
    ImageNode,
    ImageTree,
    PARALLEL,
    PERPENDICULAR,
    ReceiverInObstacle,
    Tracer,
    build_facets,
    build_image_tree,
    coverage_csv,
    coverage_map,
    fresnel_gamma,
    mirror,
    move_receiver,
    path_coefficient,
    rect_facet,
    trace_paths,
)
from raydar.scene import PEC, SPEED_OF_LIGHT, GridSpec, material_properties, to_occupancy

F = 2.4e9
LAM = SPEED_OF_LIGHT / F

# frozen from a 40-digit independent evaluation
LAMBDA_2G4 = 0.12491352416666667
LOS_5M_ABS_THETA = 1.988060483015393e-3
LOS_5M_DELAY = 1.667820475990760e-8
SQRT_116 = 10.770329614269008
CONCRETE_NORMAL_ABS_GAMMA = 0.39632024
WOOD_NORMAL_ABS_GAMMA = 0.17097732
ATAN2_4_3 = 0.9272952180016122
ATAN2_M4_M3 = -2.214297435588181


def wall_x5():
    return [rect_facet("wall", 0, 0, 5.0, -1, (-50.0, -50.0), (50.0, 50.0), "metal", None)]


def complete(paths, facets, f=F):
    return [path_coefficient(p, f, facets) for p in paths]


# ---------------------------------------------------------------- facets


def test_single_box_gives_six_facets():
    assert len(build_facets(make_scene([box("a", 3, 3)]))) == 6


def test_empty_outdoor_scene_gives_ground_only():
    facets = build_facets(make_scene())
    assert [f.id for f in facets] == ["ground"]
    assert facets[0].normal == (0.0, 0.0, 1.0)


def test_two_boxes_with_ceiling():
    facets = build_facets(make_scene([box("a", 3, 3), box("b", -3, -3)], ceiling=4.0))
    # 4 walls + 1 top per box, plus ground and ceiling
    assert len(facets) == 2 * 5 + 2
    assert facets[1].id == "ceiling" and facets[1].normal == (0.0, 0.0, -1.0)


def test_facet_geometry_invariants(cubicle):
    for f in build_facets(cubicle):
        n = np.array(f.normal)
        assert np.linalg.norm(n) == 1.0
        c = np.array(f.corners)
        assert np.ptp(c @ n) <= 1e-9
        if f.owner is not None:
            b = next(o for o in cubicle.objects if o.id == f.owner)
            centroid = np.array([*b.center, b.height / 2])
            # outward normal: the box center sits behind the facet
            assert (centroid - c[0]) @ n < 0


# ---------------------------------------------------------------- image tree


def test_depth_zero_tree_is_root_only():
    tree = build_image_tree((0, 0, 5), build_facets(make_scene([box("a", 3, 3)])), 0)
    assert len(tree.nodes) == 1 and tree.root.facet == -1


def test_single_facet_never_repeats():
    tree = build_image_tree((0, 0, 1.5), wall_x5(), 2)
    assert len(tree.nodes) == 2
    assert tree.nodes[1].position == (10.0, 0.0, 1.5)


def test_six_facet_tree_within_combinatorial_bound():
    facets = build_facets(make_scene([box("a", 3, 3)]))
    tree = build_image_tree((0, 0, 1.5), facets, 2)
    non_root = len(tree.nodes) - 1
    # enumeration of all length-<=2 facet words without immediate repeats
    words = [(a,) for a in range(6)] + [(a, b) for a, b in product(range(6), repeat=2) if a != b]
    assert len(words) == 36
    assert non_root <= 36
    for node in tree.nodes[1:]:
        chain = [n.facet for n in tree.chain(tree.nodes.index(node))]
        assert tuple(chain) in words
        assert node.depth == len(chain) <= 2


def test_tree_has_no_consecutive_repeats(cubicle):
    tree = build_image_tree((0, 0, 2.7), build_facets(cubicle), 2)
    for node in tree.nodes[1:]:
        parent = tree.nodes[node.parent]
        assert node.facet != parent.facet
        assert node.depth == parent.depth + 1


# ---------------------------------------------------------------- reference tracing


def test_free_space_los_only():
    paths = trace_paths(build_image_tree((0, 0, 5), [], 0), [], (3, 4, 5))
    assert len(paths) == 1 and paths[0].length == 5.0 and paths[0].n_reflections == 0


def test_metal_wall_reflection():
    facets = wall_x5()
    paths = complete(trace_paths(build_image_tree((0, 0, 1.5), facets, 2), facets, (0, 4, 1.5)), facets)
    assert [p.n_reflections for p in paths] == [0, 1]
    assert paths[0].length == 4.0
    refl = paths[1]
    assert refl.length == pytest.approx(SQRT_116, rel=1e-12)
    assert np.allclose(refl.vertices[1], (5.0, 2.0, 1.5), atol=1e-9, rtol=0)
    assert abs(refl.theta) == pytest.approx(LAMBDA_2G4 / (4 * math.pi * SQRT_116), rel=1e-9)


def test_enclosed_receiver_has_no_paths():
    # closed metal shell around the receiver, tx outside
    shell = [
        rect_facet("w-x", 0, 0, -1.0, +1, (-1.0, 0.0), (1.0, 2.0), "metal", None),
        rect_facet("w+x", 1, 0, 1.0, -1, (-1.0, 0.0), (1.0, 2.0), "metal", None),
        rect_facet("w-y", 2, 1, -1.0, +1, (-1.0, 0.0), (1.0, 2.0), "metal", None),
        rect_facet("w+y", 3, 1, 1.0, -1, (-1.0, 0.0), (1.0, 2.0), "metal", None),
        rect_facet("roof", 4, 2, 2.0, -1, (-1.0, -1.0), (1.0, 1.0), "metal", None),
        rect_facet("ground", 5, 2, 0.0, +1, (-20.0, -20.0), (20.0, 20.0), "concrete", None),
    ]
    tree = build_image_tree((8, 3, 4), shell, 2)
    assert trace_paths(tree, shell, (0, 0, 1)) == []
    assert Tracer(shell, (8, 3, 4), F, 2).move_receiver((0, 0, 1)) == []


def test_receiver_inside_obstacle_raises():
    scene = make_scene([box("a", 3, 3)])
    facets = build_facets(scene)
    with pytest.raises(ReceiverInObstacle):
        trace_paths(build_image_tree((0, 0, 5), facets, 1), facets, (3, 3, 1))
    with pytest.raises(ReceiverInObstacle):
        Tracer.for_scene(scene).move_receiver((3, 3, 1))


# ---------------------------------------------------------------- coefficients


def test_los_coefficient_and_delay():
    p = complete(trace_paths(build_image_tree((0, 0, 5), [], 0), [], (3, 4, 5)), [])[0]
    assert LAM == LAMBDA_2G4
    assert abs(p.theta) == pytest.approx(LOS_5M_ABS_THETA, rel=1e-12)
    assert p.delay == pytest.approx(LOS_5M_DELAY, rel=1e-12)
    assert p.phase == pytest.approx(cmath.phase(p.theta) % (2 * math.pi), abs=1e-15)


def test_los_angles():
    p = complete(trace_paths(build_image_tree((0, 0, 5), [], 0), [], (3, 4, 5)), [])[0]
    assert p.azi_aod == pytest.approx(ATAN2_4_3, abs=1e-15)
    assert p.azi_aoa == pytest.approx(ATAN2_M4_M3, abs=1e-15)
    assert p.zen_aod == pytest.approx(math.pi / 2, abs=1e-15)
    assert p.zen_aoa == pytest.approx(math.pi / 2, abs=1e-15)


def test_azimuth_minus_pi_maps_to_plus_pi():
    p = complete(trace_paths(build_image_tree((0, 0, 5), [], 0), [], (3, 0, 5)), [])[0]
    assert p.azi_aod == 0.0
    assert p.azi_aoa == math.pi


def test_metal_bounce_keeps_friis_magnitude():
    facets = wall_x5()
    refl = complete(trace_paths(build_image_tree((1, -2, 2), facets, 1), facets, (-1, 3, 1)), facets)[-1]
    assert refl.n_reflections == 1
    assert abs(refl.theta) == pytest.approx(LAM / (4 * math.pi * refl.length), rel=1e-12)


def test_fresnel_pec():
    for angle in (0.0, 0.4, 1.2, 1.5):
        assert fresnel_gamma(PEC, angle, PERPENDICULAR) == -1
        assert fresnel_gamma(PEC, angle, PARALLEL) == 1


def test_fresnel_vacuum_is_zero():
    for angle in (0.0, 0.3, 0.9, 1.4):
        assert abs(fresnel_gamma(1.0 + 0j, angle, PERPENDICULAR)) < 1e-15
        assert abs(fresnel_gamma(1.0 + 0j, angle, PARALLEL)) < 1e-15


def test_fresnel_concrete_normal_incidence():
    eps = material_properties("concrete", F)
    g = fresnel_gamma(eps, 0.0, PERPENDICULAR)
    assert abs(g) == pytest.approx(CONCRETE_NORMAL_ABS_GAMMA, rel=1e-7)
    assert g == pytest.approx((1 - cmath.sqrt(eps)) / (1 + cmath.sqrt(eps)), rel=1e-14)
    # at normal incidence the two polarizations differ only in sign
    assert fresnel_gamma(eps, 0.0, PARALLEL) == pytest.approx(-g, rel=1e-14)


def test_fresnel_wood_normal_incidence():
    g = fresnel_gamma(material_properties("wood", F), 0.0, PERPENDICULAR)
    assert abs(g) == pytest.approx(WOOD_NORMAL_ABS_GAMMA, rel=1e-7)


def test_fresnel_unknown_polarization():
    with pytest.raises(ValueError):
        fresnel_gamma(4 + 0j, 0.1, "circular")


@settings(max_examples=100, deadline=None)
@given(st.sampled_from(["concrete", "brick", "wood", "glass", "marble"]), st.floats(0, 1.5607))
def test_fresnel_never_amplifies(material, angle):
    eps = material_properties(material, F)
    for pol in (PERPENDICULAR, PARALLEL):
        assert abs(fresnel_gamma(eps, angle, pol)) <= 1.0


# ---------------------------------------------------------------- incremental route


def reference(scene, rx):
    facets = build_facets(scene)
    tx = scene.transmitters[0]
    tree = build_image_tree(tx.position, facets, scene.max_reflections)
    return complete(trace_paths(tree, facets, rx), facets, tx.frequency_hz)


def assert_same_paths(fast, slow):
    assert [p.facets for p in fast] == [p.facets for p in slow]
    assert [len(p.vertices) for p in fast] == [len(p.vertices) for p in slow]
    for a, b in zip(fast, slow):
        assert abs(a.theta - b.theta) <= 1e-12 * abs(b.theta)
        assert a.length == pytest.approx(b.length, rel=1e-12)
        assert np.allclose(a.vertices, b.vertices, rtol=0, atol=1e-9)


def test_move_within_free_space_keeps_los_family():
    scene = make_scene(rho=0)
    tracer = Tracer.for_scene(scene)
    for rx in ((3, 4, 5), (-6, 2, 1), (0.5, 0.5, 9)):
        paths = move_receiver(tracer, rx)
        assert len(paths) == 1 and paths[0].facets == ()
        assert paths[0].length == pytest.approx(math.dist((0, 0, 5), rx), rel=1e-15)


def test_move_behind_occluder_drops_los():
    scene = make_scene([box("wall", 5, 0, w=1, l=8, h=10)], tx=(0, 0, 2))
    tracer = Tracer.for_scene(scene)
    assert move_receiver(tracer, (2, 0, 2))[0].facets == ()
    hidden = move_receiver(tracer, (8, 0, 2))
    assert all(p.facets != () for p in hidden)


def test_incremental_matches_full_retrace_five_boxes():
    rng = np.random.default_rng(11)
    scene = random_scene(rng, max_boxes=5, rho=2)
    while len(scene.objects) < 5:
        scene = random_scene(rng, max_boxes=5, rho=2)
    tracer = Tracer.for_scene(scene)
    for _ in range(100):
        rx = random_point(rng, scene)
        assert_same_paths(tracer.move_receiver(rx), reference(scene, rx))


def test_incremental_matches_with_ceiling_and_depth_three():
    rng = np.random.default_rng(5)
    scene = random_scene(rng, max_boxes=3, rho=3, ceiling=5.5)
    tracer = Tracer.for_scene(scene)
    for _ in range(15):
        rx = random_point(rng, scene)
        assert_same_paths(tracer.move_receiver(rx), reference(scene, rx))


def test_tracer_does_not_rebuild_tree():
    tracer = Tracer.for_scene(make_scene([box("a", 3, 3)]))
    tree = tracer.tree
    tracer.move_receiver((0, 5, 1))
    tracer.move_receiver((-4, 5, 1))
    assert tracer.tree is tree


def unpruned_tree(tx, facets, depth):
    nodes = [ImageNode(tuple(float(c) for c in tx), -1, 0, -1)]
    frontier = [0]
    for d in range(1, depth + 1):
        nxt = []
        for idx in frontier:
            for f in facets:
                if f.index != nodes[idx].facet:
                    nodes.append(ImageNode(mirror(nodes[idx].position, f), f.index, d, idx))
                    nxt.append(len(nodes) - 1)
        frontier = nxt
    return ImageTree(tuple(nodes), depth)


@pytest.mark.parametrize("seed", range(3))
def test_back_face_pruning_loses_no_paths(seed):
    rng = np.random.default_rng(seed + 70)
    scene = random_scene(rng, max_boxes=3, rho=2, ceiling=6.0)
    facets = build_facets(scene)
    tx = scene.transmitters[0].position
    pruned = build_image_tree(tx, facets, 2)
    full = unpruned_tree(tx, facets, 2)
    assert len(pruned.nodes) < len(full.nodes)
    for _ in range(10):
        rx = random_point(rng, scene)
        a, b = trace_paths(pruned, facets, rx), trace_paths(full, facets, rx)
        assert [p.facets for p in a] == [p.facets for p in b]
        assert [p.length for p in a] == [p.length for p in b]


# ---------------------------------------------------------------- path invariants


def audit_paths(scene, rx):
    paths = Tracer.for_scene(scene).move_receiver(rx)
    facets = build_facets(scene)
    lam = scene.transmitters[0].wavelength
    for p in paths:
        assert p.n_reflections == len(p.vertices) - 2 == len(p.facets)
        assert abs(p.theta) > 0
        assert abs(p.theta) <= lam / (4 * math.pi * p.length) * (1 + 1e-12)
        assert p.delay == pytest.approx(p.length / SPEED_OF_LIGHT, rel=1e-15)
        assert 0 <= p.phase < 2 * math.pi
        assert p.phase == pytest.approx(cmath.phase(p.theta) % (2 * math.pi), abs=1e-12)
        for zen in (p.zen_aod, p.zen_aoa):
            assert 0 <= zen <= math.pi
        for azi in (p.azi_aod, p.azi_aoa):
            assert -math.pi < azi <= math.pi
        v = np.array(p.vertices)
        for k, fidx in enumerate(p.facets):
            n = np.array(facets[fidx].normal)
            a, b = v[k] - v[k + 1], v[k + 2] - v[k + 1]
            inc = math.acos(min(1.0, a @ n / np.linalg.norm(a)))
            out = math.acos(min(1.0, b @ n / np.linalg.norm(b)))
            assert abs(inc - out) <= 1e-9
    return paths


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_path_invariants_on_random_scenes(seed):
    rng = np.random.default_rng(seed)
    scene = random_scene(rng, max_boxes=5, rho=2, ceiling=rng.choice([None, 6.0]))
    for _ in range(3):
        audit_paths(scene, random_point(rng, scene))


def test_path_invariants_on_cubicle(cubicle):
    rng = np.random.default_rng(1)
    occ = to_occupancy(cubicle)
    free = occ.free_cells()
    n = 0
    for k in rng.choice(len(free), size=10, replace=False):
        n += len(audit_paths(cubicle, cubicle.grid.receiver_position(*free[k])))
    assert n > 0


@settings(max_examples=15, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_reciprocity_property(seed):
    rng = np.random.default_rng(seed)
    scene = random_scene(rng, max_boxes=5, rho=2)
    a = scene.transmitters[0].position
    b = random_point(rng, scene)
    forward = Tracer(build_facets(scene), a, F, 2).move_receiver(b)
    backward = Tracer(build_facets(scene), b, F, 2).move_receiver(a)
    key = lambda p: (round(p.length, 9), p.length)  # noqa: E731
    fw = sorted(forward, key=key)
    bw = sorted(backward, key=key)
    assert len(fw) == len(bw)
    for p, q in zip(fw, bw):
        assert p.length == pytest.approx(q.length, rel=1e-12)
        assert abs(p.theta) == pytest.approx(abs(q.theta), rel=1e-12)


# ---------------------------------------------------------------- coverage


def test_free_space_gain_falls_with_distance():
    grid = GridSpec((-0.5, -0.5), 15, 1, 1.0, 1.5)
    scene = make_scene(tx=(0, 0, 5), rho=0, grid=grid)
    gains = coverage_map(scene, workers=1).gain_array()[:, 0]
    assert np.all(np.diff(gains) < 0)


def test_receiver_on_transmitter_has_no_los():
    tracer = Tracer.for_scene(make_scene(tx=(0, 0, 5), rho=1))
    paths = tracer.move_receiver((0, 0, 5))
    assert [p.facets for p in paths] == [(0,)]
    facets = build_facets(make_scene(tx=(0, 0, 5), rho=1))
    assert [p.facets for p in trace_paths(build_image_tree((0, 0, 5), facets, 1), facets, (0, 0, 5))] == [(0,)]


def test_cells_under_building_are_dead():
    scene = make_scene([box("bldg", 4, 4, w=4, l=4, h=10)], tx=(-5, -5, 5))
    cmap = coverage_map(scene, workers=1)
    occ = to_occupancy(scene)
    for rec in cmap.cells:
        if occ.blocked[rec.i, rec.j]:
            assert rec.dead and rec.coherent_gain_db is None and rec.strongest is None
        else:
            assert (rec.coherent_gain_db is None) == rec.dead


def test_cubicle_map_has_756_records(cubicle_map):
    assert len(cubicle_map.cells) == 756
    assert [(r.i, r.j) for r in cubicle_map.cells] == [(i, j) for i in range(42) for j in range(18)]
    assert 0 < cubicle_map.dead_fraction() < 1


def test_coherent_gain_and_strongest(cubicle_map):
    for rec in cubicle_map.cells[::37]:
        if rec.dead:
            continue
        total = sum(p.theta for p in rec.paths)
        assert rec.coherent_gain_db == pytest.approx(10 * math.log10(abs(total) ** 2), rel=1e-12)
        assert abs(rec.paths[rec.strongest].theta) == max(abs(p.theta) for p in rec.paths)


def test_coverage_csv_layout(cubicle_map):
    lines = coverage_csv(cubicle_map).splitlines()
    assert lines[0] == COVERAGE_HEADER
    assert len(lines) == 757
    dead = next(r for r in cubicle_map.cells if r.dead)
    row = lines[1 + dead.i * 18 + dead.j].split(",")
    assert row[4] == "0" and row[5:] == ["", "", ""]


def test_coverage_identical_across_worker_counts(monkeypatch):
    scene = make_scene([box("a", 3, 3), box("b", -4, 2, h=1)], tx=(0, -3, 2.5))
    ref = coverage_csv(coverage_map(scene, workers=1))
    for n in ("2", "5"):
        monkeypatch.setenv("RAYDAR_THREADS", n)
        assert coverage_csv(coverage_map(scene)) == ref
