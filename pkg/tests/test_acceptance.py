"""End-to-end acceptance checks. Each test prints one PASS/FAIL verdict line.

These are the release gates: statistical behavior of the two stability
checkers against the equilibrium judge, exact accounting identities, oracle
cross-checks of the geometry, and byte-level determinism.
"""
import itertools
from fractions import Fraction

import numpy as np

from packbench import env as penv
from packbench.datasets import ItemSequence, SequenceSpec, gen_cut, gen_rs
from packbench.env import Action
from packbench.errors import PlacementRejected
from packbench.geometry import GridDims, GridSpec, Heightmap, place_box
from packbench.oracle import PlacedBox, build_contacts, equilibrium_feasible
from packbench.policies import Policy, PolicyKind
from packbench.runner import fall_experiment, run_episode, run_many
from packbench.stability import (
    CheckerMode,
    EmptyMap,
    center_in_hull,
    convex_hull,
    stable_action_map,
    update_empty_map,
)

from oracles import brute_hull_vertices, solid_volume_map, winding_inside


SPEC = GridSpec(0.6, 0.6, 0.6, resolution=0.005)


def _verdict(name: str, ok: bool, detail: str = "") -> None:
    from conftest import record_verdict

    tail = f"  ({detail})" if detail else ""
    line = f"[acceptance] {name}: {'PASS' if ok else 'FAIL'}{tail}"
    print(line)
    record_verdict(line)
    assert ok, f"{name}{tail}"


def random_scene(rng, boxes=15):
    """Random placements straight onto the heightmap, no stability filtering."""
    hm, em = Heightmap(SPEC), EmptyMap(SPEC)
    placements = []
    for _ in range(boxes):
        gd = GridDims(*(int(v) for v in rng.integers(6, 61, 3)))
        x = int(rng.integers(0, SPEC.nx - gd.w + 1))
        y = int(rng.integers(0, SPEC.ny - gd.d + 1))
        try:
            em = update_empty_map(hm, em, (x, y), gd)
            hm, _ = place_box(hm, (x, y), gd)
        except PlacementRejected:
            continue
        placements.append(((x, y), gd))
    return hm, em, placements


def test_fall_rates_of_the_two_checkers():
    seq = gen_rs(SequenceSpec(kind="rs", seed=0, count=3000, grid=SPEC))
    ch1 = fall_experiment(SPEC, CheckerMode.CH1, seq, seed=0)
    cha = fall_experiment(SPEC, CheckerMode.CHA, seq, seed=0)
    ok = (
        ch1.placements == 3000
        and cha.placements == 3000
        and cha.fall_rate <= 0.01
        and 0.02 <= ch1.fall_rate <= 0.12
        and ch1.fall_rate >= 10 * cha.fall_rate
    )
    _verdict(
        "fall-rates",
        ok,
        f"ch1 {ch1.falls}/{ch1.placements} = {100 * ch1.fall_rate:.2f}%, "
        f"cha {cha.falls}/{cha.placements} = {100 * cha.fall_rate:.2f}%",
    )


def test_hull_construction_matches_brute_force():
    rng = np.random.default_rng(1)
    mismatches = 0
    checked = 0

    def check(pts):
        nonlocal mismatches, checked
        checked += 1
        if set(convex_hull(pts).vertices) != brute_hull_vertices(pts):
            mismatches += 1

    for _ in range(1000):
        w = int(rng.integers(1, 32))
        d = int(rng.integers(1, 32))
        n = int(rng.integers(1, 65))
        check([(int(rng.integers(w)), int(rng.integers(d))) for _ in range(n)])

    # small-set sweep on a 6x6 window: every set of up to three cells
    # exhaustively, larger cardinalities by dense random sampling
    cells = list(itertools.product(range(6), range(6)))
    for k in (1, 2, 3):
        for combo in itertools.combinations(cells, k):
            check(list(combo))
    for _ in range(5000):
        k = int(rng.integers(4, 13))
        idx = rng.choice(len(cells), size=k, replace=False)
        check([cells[i] for i in idx])

    _verdict("hull-vs-brute-force", mismatches == 0, f"{checked} sets, {mismatches} mismatches")


def test_center_test_matches_winding_oracle():
    rng = np.random.default_rng(2)
    mismatches = 0
    queries = 0
    while queries < 10_000:
        n = int(rng.integers(3, 20))
        pts = [(int(rng.integers(0, 30)), int(rng.integers(0, 30))) for _ in range(n)]
        hull = convex_hull(pts)
        for _ in range(20):
            queries += 1
            q = (int(rng.integers(0, 60)) / 2, int(rng.integers(0, 60)) / 2)
            got = center_in_hull(hull, q)
            want = False if hull.degenerate else winding_inside(hull.vertices, q)
            if got != want:
                mismatches += 1
    _verdict("center-vs-winding-oracle", mismatches == 0, f"{queries} queries")


def test_volume_accounting_is_exact():
    rng = np.random.default_rng(3)
    bad = 0
    for ep in range(100):
        seq = gen_rs(SequenceSpec(kind="rs", seed=100 + ep, count=20, grid=SPEC))
        state = penv.reset(SPEC, seq)
        policy = Policy(PolicyKind.RANDOM_STABLE, rng)
        while not state.done:
            a = policy(state)
            if a is None:
                break
            state, _, _ = penv.step(state, a)
            solid = solid_volume_map(
                (SPEC.nx, SPEC.ny),
                [((p.action.x, p.action.y), p.gd) for p in state.placements],
            )
            if not (state.heightmap.cells == solid + state.empty.cells).all():
                bad += 1
        if sum((r.r_v for r in state.rewards), Fraction(0)) != penv.utilization(state):
            bad += 1
        if sum(r.r_waste for r in state.rewards) * SPEC.bin_voxels != state.empty.total_gap_voxels():
            bad += 1
    _verdict("volume-accounting", bad == 0, "100 episodes, per-step column identity")


def test_grounded_acceptance_is_subset_of_plain():
    rng = np.random.default_rng(4)
    violations = 0
    pairs = 0
    for _ in range(100):
        hm, em, _ = random_scene(rng)
        for _ in range(100):
            pairs += 1
            gd = GridDims(*(int(v) for v in rng.integers(6, 61, 3)))
            cha = stable_action_map(hm, em, gd, CheckerMode.CHA)
            ch1 = stable_action_map(hm, em, gd, CheckerMode.CH1)
            if (cha & ~ch1).any():
                violations += 1
    _verdict("grounded-subset-invariant", violations == 0, f"{pairs} scene/item pairs")


def test_masked_policies_never_rejected_never_fall():
    rejects = 0
    falls = 0
    for kind in (PolicyKind.RANDOM_STABLE, PolicyKind.DBLF, PolicyKind.GREEDY_MIN_WASTE):
        for ep in range(100):
            seq = gen_rs(SequenceSpec(kind="rs", seed=1000 + ep, count=15, grid=SPEC))
            policy = Policy(kind, np.random.default_rng(ep))
            try:
                outcome = run_episode(
                    SPEC, seq, policy, checker=CheckerMode.CHA, seed=ep, with_oracle=True
                )
            except PlacementRejected:
                rejects += 1
                continue
            falls += outcome.falls
    _verdict(
        "masked-safety",
        rejects == 0 and falls == 0,
        f"300 episodes, {rejects} rejects, {falls} falls",
    )


def test_cut_sequences_replay_to_full_bin():
    bad = 0
    runs = 0
    for kind in ("cut1", "cut2"):
        for seed in (0, 1, 2):
            runs += 1
            seq = gen_cut(SequenceSpec(kind=kind, seed=seed, count=40, grid=SPEC))
            state = penv.reset(SPEC, seq)
            for (x, y, _) in seq.positions:
                state, _, _ = penv.step(state, Action(0, x, y))
            if penv.utilization(state) != 1:
                bad += 1
    _verdict("perfect-replay", bad == 0, f"{runs} sequences to utilization 1")


def test_equilibrium_judge_properties():
    rng = np.random.default_rng(5)
    scale_flips = 0
    for _ in range(1000):
        boxes, tops = [], []
        for i in range(5):
            w, d, h = (int(v) for v in rng.integers(1, 5, 3))
            x = int(rng.integers(0, 10 - w))
            y = int(rng.integers(0, 10 - d))
            z = max(
                (tz for (tx0, tx1, ty0, ty1, tz) in tops
                 if tx0 < x + w and x < tx1 and ty0 < y + d and y < ty1),
                default=0,
            )
            boxes.append(PlacedBox(i, x, y, z, GridDims(w, d, h), float(rng.uniform(0.5, 2))))
            tops.append((x, x + w, y, y + d, z + h))
        base = equilibrium_feasible(build_contacts(boxes)).stable
        scaled = [
            PlacedBox(b.index, b.x, b.y, b.z, b.gd, b.density * 1e4) for b in boxes
        ]
        if equilibrium_feasible(build_contacts(scaled)).stable != base:
            scale_flips += 1

    polygon_disagreements = 0
    support = PlacedBox(0, 2, 2, 0, GridDims(4, 4, 3))
    for w in range(1, 7):
        for d in range(1, 7):
            for x in range(0, 11 - w):
                for y in range(0, 11 - d):
                    ox0, ox1 = max(x, 2), min(x + w, 6)
                    oy0, oy1 = max(y, 2), min(y + d, 6)
                    if ox1 <= ox0 or oy1 <= oy0:
                        continue
                    top = PlacedBox(1, x, y, 3, GridDims(w, d, 2))
                    inside = ox0 <= x + w / 2 <= ox1 and oy0 <= y + d / 2 <= oy1
                    got = equilibrium_feasible(build_contacts([support, top])).stable
                    if got != inside:
                        polygon_disagreements += 1

    _verdict(
        "equilibrium-judge-properties",
        scale_flips == 0 and polygon_disagreements == 0,
        f"{scale_flips} mass-scale flips, {polygon_disagreements} support-polygon disagreements",
    )


def test_repeated_runs_are_byte_identical(tmp_path):
    blobs = []
    for sub in ("first", "second"):
        out = tmp_path / sub
        out.mkdir()
        seqspec = SequenceSpec(kind="rs", seed=7, count=20, grid=SPEC)
        run_many(SPEC, seqspec, PolicyKind.RANDOM_STABLE, episodes=3, seed=7, out_dir=out)
        blobs.append(b"".join(p.read_bytes() for p in sorted(out.glob("*.pbtrace"))))
    _verdict("trace-determinism", blobs[0] == blobs[1], "3 episodes, identical bytes")


def test_evaluation_report_emits_spread_statistic():
    # per-episode (item-volume std, utilization) pairs plus their correlation
    from packbench.cli import _aggregate_report

    seqspec = SequenceSpec(kind="rs", seed=11, count=15, grid=SPEC)
    outcomes = run_many(SPEC, seqspec, PolicyKind.RANDOM_STABLE, episodes=8, seed=11)
    agg = _aggregate_report([o.result for o in outcomes], None)
    ok = (
        len(agg["utilization_vs_volume_std"]) == 8
        and agg["volume_std_utilization_corr"] is not None
        and -1 <= agg["volume_std_utilization_corr"] <= 1
    )
    _verdict("report-spread-statistic", ok, f"corr={agg['volume_std_utilization_corr']}")
