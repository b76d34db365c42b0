import numpy as np
import pytest

from packbench.errors import SceneCorruption
from packbench.geometry import GridDims, GridSpec
from packbench.oracle import (
    GROUND,
    ContactGraph,
    PlacedBox,
    build_contacts,
    equilibrium_feasible,
    judge_next,
    settle_check,
)


def box(i, x, y, z, w, d, h, density=1.0):
    return PlacedBox(i, x, y, z, GridDims(w, d, h), density)


class TestBuildContacts:
    def test_single_box_on_floor(self):
        g = build_contacts([box(0, 2, 2, 0, 4, 4, 4)])
        assert len(g.contacts) == 1
        c = g.contacts[0]
        assert c.below == GROUND and c.above == 0
        assert (c.x0, c.x1, c.y0, c.y1) == (2, 6, 2, 6)

    def test_bridge_on_two_pillars(self):
        pillars = [box(0, 0, 0, 0, 2, 4, 10), box(1, 6, 0, 0, 2, 4, 10)]
        bridge = box(2, 0, 0, 10, 8, 4, 2)
        g = build_contacts(pillars + [bridge])
        ups = [(c.below, c.above) for c in g.contacts if c.above == 2]
        assert sorted(ups) == [(0, 2), (1, 2)]
        rects = {c.below: (c.x0, c.x1) for c in g.contacts if c.above == 2}
        assert rects[0] == (0, 2) and rects[1] == (6, 8)

    def test_stacked_chain(self):
        chain = [box(0, 0, 0, 0, 6, 6, 4), box(1, 1, 1, 4, 4, 4, 4), box(2, 2, 2, 8, 2, 2, 4)]
        g = build_contacts(chain)
        pairs = sorted((c.below, c.above) for c in g.contacts)
        assert pairs == [(GROUND, 0), (0, 1), (1, 2)]

    def test_no_contact_across_gap(self):
        g = build_contacts([box(0, 0, 0, 0, 4, 4, 4), box(1, 0, 0, 6, 4, 4, 2)])
        assert [(c.below, c.above) for c in g.contacts if c.below != GROUND] == []

    def test_interpenetration_detected(self):
        with pytest.raises(SceneCorruption):
            build_contacts([box(0, 0, 0, 0, 4, 4, 4), box(1, 2, 2, 2, 4, 4, 4)])


class TestEquilibrium:
    def test_centered_box_stable(self):
        g = build_contacts([box(0, 0, 0, 0, 4, 4, 4)])
        assert equilibrium_feasible(g).stable

    def test_overhang_beyond_support_unstable(self):
        # CoM projects outside the contact rectangle -> lever rule fails
        base = box(0, 0, 0, 0, 2, 2, 4)
        top = box(1, 1, 0, 4, 6, 2, 2)  # contact x 1..2, CoM at x 4
        g = build_contacts([base, top])
        v = equilibrium_feasible(g)
        assert not v.stable
        assert v.first_infeasible in (0, 1)

    def test_floating_box_unstable(self):
        g = ContactGraph([box(0, 0, 0, 4, 2, 2, 2)])  # nothing below
        assert not equilibrium_feasible(g).stable

    def test_heavy_cap_tips_cantilever(self):
        # plate balanced on its pillar until a heavy box loads the overhang
        pillar = box(0, 0, 0, 0, 2, 4, 2)
        plate = box(1, 0, 0, 2, 2, 6, 2)
        assert equilibrium_feasible(build_contacts([pillar, plate])).stable
        light = box(2, 0, 4, 4, 2, 2, 2)
        heavy = box(2, 0, 4, 4, 2, 2, 8)
        assert equilibrium_feasible(build_contacts([pillar, plate, light])).stable
        assert not equilibrium_feasible(build_contacts([pillar, plate, heavy])).stable

    def test_mass_scale_invariance(self):
        rng = np.random.default_rng(41)
        flips = 0
        for _ in range(100):
            boxes, top = [], {}
            for i in range(6):
                w, d, h = (int(v) for v in rng.integers(1, 5, 3))
                x = int(rng.integers(0, 10 - w))
                y = int(rng.integers(0, 10 - d))
                z = max(
                    (bz for (bx0, bx1, by0, by1, bz) in top.values()
                     if bx0 < x + w and x < bx1 and by0 < y + d and y < by1),
                    default=0,
                )
                boxes.append(box(i, x, y, z, w, d, h))
                top[i] = (x, x + w, y, y + d, z + h)
            base = equilibrium_feasible(build_contacts(boxes)).stable
            scaled = [
                PlacedBox(b.index, b.x, b.y, b.z, b.gd, b.density * 1000) for b in boxes
            ]
            if equilibrium_feasible(build_contacts(scaled)).stable != base:
                flips += 1
        assert flips == 0

    def test_ground_only_scene_stable(self):
        rng = np.random.default_rng(42)
        boxes = []
        x = 0
        for i in range(8):
            w, d, h = (int(v) for v in rng.integers(1, 4, 3))
            boxes.append(box(i, x, 0, 0, w, d, h))
            x += w
        assert equilibrium_feasible(build_contacts(boxes)).stable

    def test_monotone_support(self):
        # enlarging a contact rectangle never flips stable -> unstable
        base = box(0, 0, 0, 0, 4, 4, 4)
        top = box(1, 1, 1, 4, 2, 2, 2)
        narrow = build_contacts([base, top])
        v_narrow = equilibrium_feasible(narrow)
        wide = ContactGraph(
            [base, top],
            [c if c.above != 1 or c.below != 0 else type(c)(0, 1, 0.0, 4.0, 0.0, 4.0)
             for c in narrow.contacts],
        )
        v_wide = equilibrium_feasible(wide)
        assert v_narrow.stable
        assert v_wide.stable

    def test_agrees_with_support_polygon_rule_exhaustive(self):
        # single box on a single grounded support: stable iff the top box's
        # CoM projects into the (closed) contact rectangle
        failures = []
        base = box(0, 2, 2, 0, 4, 4, 3)
        for w in (1, 2, 3, 5):
            for d in (1, 2, 3):
                for x in range(0, 10 - w + 1):
                    for y in range(0, 10 - d + 1):
                        ox0, ox1 = max(x, 2), min(x + w, 6)
                        oy0, oy1 = max(y, 2), min(y + d, 6)
                        if ox1 <= ox0 or oy1 <= oy0:
                            continue  # no contact at all
                        top = box(1, x, y, 3, w, d, 2)
                        cx, cy = x + w / 2, y + d / 2
                        expected = ox0 <= cx <= ox1 and oy0 <= cy <= oy1
                        got = equilibrium_feasible(build_contacts([base, top])).stable
                        if got != expected:
                            failures.append((w, d, x, y, expected, got))
        assert failures == []


class TestSettleCheck:
    def test_all_ground_episode_no_falls(self):
        placements = [((0, 0), GridDims(2, 2, 2), 0), ((4, 4), GridDims(3, 3, 3), 0)]
        report = settle_check(GridSpec(0.05, 0.05, 0.05, 0.005), placements)
        assert report.falls == 0

    def test_fallen_box_removed_from_scene(self):
        # the second placement falls; the third rests (per heightmap) on the
        # fallen box and is therefore floating for the oracle
        placements = [
            ((0, 0), GridDims(2, 2, 2), 0),
            ((1, 0), GridDims(6, 2, 2), 2),  # huge overhang: falls
            ((4, 0), GridDims(2, 2, 2), 4),  # on top of the fallen box
        ]
        report = settle_check(GridSpec(0.05, 0.05, 0.05, 0.005), placements)
        assert [v.stable for v in report.verdicts] == [True, False, False]

    def test_judge_next_incremental_matches(self):
        scene = [box(0, 0, 0, 0, 4, 4, 4)]
        nxt = box(1, 0, 0, 4, 4, 4, 2)
        assert judge_next(scene, nxt).stable
