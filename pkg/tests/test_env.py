from fractions import Fraction

import numpy as np
import pytest

from packbench import env as penv
from packbench.datasets import ItemSequence, SequenceSpec, gen_rs
from packbench.env import Action
from packbench.errors import PlacementRejected
from packbench.geometry import BoxDims, GridSpec
from packbench.stability import CheckerMode

from oracles import solid_volume_map


SPEC = GridSpec(0.6, 0.6, 0.6)


def seq_of(dims_list, kind="rs", seed=0):
    spec = SequenceSpec(kind=kind, seed=seed, count=len(dims_list), grid=SPEC)
    return ItemSequence(spec, [BoxDims(*t) for t in dims_list])


class TestReset:
    def test_fresh_state(self):
        state = penv.reset(SPEC, seq_of([(0.1, 0.1, 0.1)]))
        assert not state.done
        assert state.heightmap.cells.sum() == 0
        assert penv.utilization(state) == 0
        assert state.current.gd.as_tuple() == (20, 20, 20)

    def test_empty_sequence_rejected(self):
        spec = SequenceSpec(kind="rs", seed=0, count=1, grid=SPEC)
        with pytest.raises(ValueError):
            penv.reset(SPEC, ItemSequence(spec, []))

    def test_oversized_first_item_ends_episode(self):
        state = penv.reset(SPEC, seq_of([(0.7, 0.7, 0.7)]))
        assert state.done
        assert state.reject_reason == "item_exceeds_bin"


class TestStep:
    def test_single_cube_reward(self):
        # 20^3 voxels in a 120^3 bin, no trapped gap
        state = penv.reset(SPEC, seq_of([(0.1, 0.1, 0.1)]))
        state, r, done = penv.step(state, Action(0, 0, 0))
        assert r.r_v == Fraction(8000, 1728000)
        assert r.r_waste == 0
        assert r.total == Fraction(1, 216)
        assert done  # sequence exhausted
        assert penv.utilization(state) == Fraction(8000, 1728000)

    def test_bridge_traps_gap(self):
        # two 2-voxel-tall pillars 2 apart, bridged by a plate: 2x2x4 = 16 trapped
        state = penv.reset(
            SPEC,
            seq_of([(0.01, 0.01, 0.02), (0.01, 0.01, 0.02), (0.03, 0.01, 0.01)]),
            checker=CheckerMode.CH1,
        )
        state, _, _ = penv.step(state, Action(0, 0, 0))
        state, _, _ = penv.step(state, Action(0, 4, 0))
        state, r, _ = penv.step(state, Action(0, 0, 0))
        assert r.r_waste == Fraction(16, SPEC.bin_voxels)
        assert state.wasted_voxels == 16
        assert penv.wasted_fraction(state) == Fraction(16, 1728000)

    def test_reward_sums_to_utilization(self):
        spec = SequenceSpec(kind="rs", seed=20, count=40, grid=SPEC)
        state = penv.reset(SPEC, gen_rs(spec))
        rng = np.random.default_rng(7)
        while not state.done:
            o = next(i for i, m in enumerate(state.current.maps) if m.any())
            xs, ys = np.nonzero(state.current.maps[o])
            k = int(rng.integers(len(xs)))
            state, _, _ = penv.step(state, Action(o, int(xs[k]), int(ys[k])))
        assert sum(r.r_v for r in state.rewards) == penv.utilization(state)
        assert sum(r.r_waste for r in state.rewards) == penv.wasted_fraction(state)

    def test_accounting_identity_against_solid_map(self):
        spec = SequenceSpec(kind="rs", seed=21, count=30, grid=SPEC)
        state = penv.reset(SPEC, gen_rs(spec))
        while not state.done:
            o = next(i for i, m in enumerate(state.current.maps) if m.any())
            xs, ys = np.nonzero(state.current.maps[o])
            state, _, _ = penv.step(state, Action(o, int(xs[0]), int(ys[0])))
        solid = solid_volume_map(
            (SPEC.nx, SPEC.ny), [((p.action.x, p.action.y), p.gd) for p in state.placements]
        )
        assert (state.heightmap.cells == solid + state.empty.cells).all()

    def test_rejected_action_leaves_state_unchanged(self):
        state = penv.reset(SPEC, seq_of([(0.1, 0.1, 0.1), (0.1, 0.1, 0.1)]))
        state, _, _ = penv.step(state, Action(0, 0, 0))
        hm = state.heightmap.cells.copy()
        step_index = state.step_index
        # anchor inside the bin but overlapping the first cube's edge region:
        # resting on a partial ledge is unstable, the map is false there
        with pytest.raises(PlacementRejected):
            penv.step(state, Action(0, 19, 19))
        with pytest.raises(PlacementRejected):
            penv.step(state, Action(0, 110, 110))  # footprint out of bounds
        with pytest.raises(PlacementRejected):
            penv.step(state, Action(9, 0, 0))  # orientation out of range
        assert (state.heightmap.cells == hm).all()
        assert state.step_index == step_index
        assert len(state.rewards) == 1

    def test_step_after_done(self):
        state = penv.reset(SPEC, seq_of([(0.1, 0.1, 0.1)]))
        state, _, done = penv.step(state, Action(0, 0, 0))
        assert done
        with pytest.raises(PlacementRejected):
            penv.step(state, Action(0, 0, 0))
        with pytest.raises(PlacementRejected):
            penv.observation(state)
        with pytest.raises(PlacementRejected):
            penv.orientation_mask(state)

    def test_cannot_pack_termination(self):
        # bin holds exactly one 0.3 cube layer corner; second tall item cannot fit
        tiny = GridSpec(0.05, 0.05, 0.05)
        spec = SequenceSpec(kind="rs", seed=0, count=2, min_dim=0.03, max_dim=0.05, grid=tiny)
        seq = ItemSequence(spec, [BoxDims(0.05, 0.05, 0.04), BoxDims(0.05, 0.05, 0.04)])
        state = penv.reset(tiny, seq)
        state, _, done = penv.step(state, Action(0, 0, 0))
        assert done
        assert state.reject_reason == "cannot_pack"


class TestObservation:
    def test_channels(self):
        state = penv.reset(SPEC, seq_of([(0.1, 0.15, 0.2)]))
        obs = penv.observation(state)
        ch = obs.channels()
        assert ch.shape == (4, 120, 120)
        assert (ch[0] == 0).all()
        assert ch[1, 0, 0] == 0.1 and ch[2, 5, 7] == 0.15 and ch[3, -1, -1] == 0.2

    def test_heightmap_is_a_copy(self):
        state = penv.reset(SPEC, seq_of([(0.1, 0.1, 0.1), (0.1, 0.1, 0.1)]))
        obs = penv.observation(state)
        obs.heightmap[:] = 99
        assert state.heightmap.cells.sum() == 0

    def test_orientation_mask(self):
        state = penv.reset(SPEC, seq_of([(0.1, 0.1, 0.1)]))
        assert penv.orientation_mask(state) == [True] * 6


class TestDeterminism:
    def test_same_seed_same_episode(self):
        results = []
        for _ in range(2):
            spec = SequenceSpec(kind="rs", seed=33, count=25, grid=SPEC)
            state = penv.reset(SPEC, gen_rs(spec))
            rng = np.random.default_rng(11)
            while not state.done:
                opts = [i for i, m in enumerate(state.current.maps) if m.any()]
                o = opts[int(rng.integers(len(opts)))]
                xs, ys = np.nonzero(state.current.maps[o])
                k = int(rng.integers(len(xs)))
                state, _, _ = penv.step(state, Action(o, int(xs[k]), int(ys[k])))
            results.append(penv.episode_result(state))
        a, b = results
        assert a.utilization == b.utilization
        assert a.items_placed == b.items_placed
        assert [p.total for p in a.step_rewards] == [p.total for p in b.step_rewards]


class TestEpisodeResult:
    def test_fields(self):
        state = penv.reset(SPEC, seq_of([(0.1, 0.1, 0.1), (0.2, 0.2, 0.2)]))
        state, _, _ = penv.step(state, Action(0, 0, 0))
        state, _, done = penv.step(state, Action(0, 40, 40))
        assert done
        res = penv.episode_result(state)
        assert res.items_placed == 2
        assert res.utilization == Fraction(8000 + 64000, 1728000)
        assert res.reject_reason == "sequence_exhausted"
        vols = np.array([0.1**3, 0.2**3])
        assert res.volume_std == pytest.approx(float(vols.std()))
