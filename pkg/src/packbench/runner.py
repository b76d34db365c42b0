"""Episode driving: policy loops, trace files, oracle judging, experiments."""
from __future__ import annotations

import json
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import env as penv
from .datasets import ItemSequence, SequenceSpec, generate
from .env import TRACE_FORMAT, EnvState, EpisodeResult
from .geometry import GridSpec
from .oracle import VERDICT_FORMAT, PlacedBox, SettleReport, judge_next
from .policies import Policy, PolicyKind
from .stability import CheckerMode


def worker_count() -> int:
    raw = os.environ.get("PACKBENCH_THREADS", "")
    try:
        return max(1, int(raw))
    except ValueError:
        return 1


def trace_header(state: EnvState, policy: str) -> dict:
    g = state.spec
    s = state.sequence.spec
    return {
        "format": TRACE_FORMAT,
        "policy": policy,
        "checker": state.checker.value,
        "seed": state.seed,
        "bin": [g.bin_w, g.bin_d, g.bin_h],
        "resolution": g.resolution,
        "items": len(state.sequence),
        "sequence": {
            "kind": s.kind,
            "seed": s.seed,
            "count": s.count,
            "min_dim": s.min_dim,
            "max_dim": s.max_dim,
        },
    }


@dataclass
class EpisodeOutcome:
    result: EpisodeResult
    oracle: SettleReport | None = None

    @property
    def falls(self) -> int:
        return self.oracle.falls if self.oracle else 0


def run_episode(
    spec: GridSpec,
    sequence: ItemSequence,
    policy: Policy,
    checker: CheckerMode = CheckerMode.CHA,
    seed: int = 0,
    trace_path: str | Path | None = None,
    verdict_path: str | Path | None = None,
    with_oracle: bool = False,
) -> EpisodeOutcome:
    """Drive one episode to termination; optionally judge every placement."""
    state = penv.reset(spec, sequence, checker=checker, seed=seed)
    trace_lines: list[dict] = []
    verdicts = [] if with_oracle or verdict_path else None
    scene: list[PlacedBox] = []
    while not state.done:
        action = policy(state)
        if action is None:
            break
        state, reward, _ = penv.step(state, action)
        placed = state.placements[-1]
        trace_lines.append(
            {
                "step": placed.step,
                "o": action.orientation,
                "x": action.x,
                "y": action.y,
                "r_v": float(reward.r_v),
                "r_waste": float(reward.r_waste),
                "utilization": float(penv.utilization(state)),
            }
        )
        if verdicts is not None:
            box = PlacedBox(placed.step, action.x, action.y, placed.rest, placed.gd)
            verdict = judge_next(scene, box)
            verdicts.append(verdict)
            if verdict.stable:
                scene.append(box)
    if trace_path is not None:
        with open(trace_path, "w") as f:
            f.write(json.dumps(trace_header(state, policy.kind.value)) + "\n")
            for line in trace_lines:
                f.write(json.dumps(line) + "\n")
    if verdict_path is not None and verdicts is not None:
        with open(verdict_path, "w") as f:
            f.write(json.dumps({"format": VERDICT_FORMAT, "seed": seed}) + "\n")
            for i, v in enumerate(verdicts):
                f.write(
                    json.dumps(
                        {"step": i, "stable": v.stable, "first_infeasible": v.first_infeasible}
                    )
                    + "\n"
                )
    report = SettleReport(verdicts) if verdicts is not None else None
    return EpisodeOutcome(penv.episode_result(state), report)


def _episode_task(args) -> EpisodeOutcome:
    (spec, seqspec, kind, checker, seed, trace_path, with_oracle) = args
    sequence = generate(seqspec)
    policy = Policy(kind, np.random.default_rng(seed))
    return run_episode(
        spec,
        sequence,
        policy,
        checker=checker,
        seed=seed,
        trace_path=trace_path,
        with_oracle=with_oracle,
    )


def run_many(
    spec: GridSpec,
    seq_template: SequenceSpec,
    kind: PolicyKind,
    episodes: int,
    seed: int,
    checker: CheckerMode = CheckerMode.CHA,
    out_dir: str | Path | None = None,
    with_oracle: bool = False,
) -> list[EpisodeOutcome]:
    """Run independent episodes on per-episode seeds; results ordered by index."""
    tasks = []
    for i in range(episodes):
        ep_seed = seed + i
        seqspec = SequenceSpec(
            kind=seq_template.kind,
            seed=ep_seed,
            count=seq_template.count,
            min_dim=seq_template.min_dim,
            max_dim=seq_template.max_dim,
            grid=spec,
        )
        trace_path = None
        if out_dir is not None:
            trace_path = Path(out_dir) / f"episode_{i:04d}.pbtrace"
        tasks.append((spec, seqspec, kind, checker, ep_seed, trace_path, with_oracle))
    workers = worker_count()
    if workers == 1 or episodes <= 1:
        return [_episode_task(t) for t in tasks]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(_episode_task, tasks))


@dataclass
class FallStats:
    mode: str
    placements: int
    falls: int
    accepted_anchors: int  # total stable anchors summed over every decision point
    wall_seconds: float

    @property
    def fall_rate(self) -> float:
        return self.falls / self.placements if self.placements else 0.0


def fall_experiment(
    spec: GridSpec,
    mode: CheckerMode,
    sequence: ItemSequence,
    seed: int = 0,
) -> FallStats:
    """Random-stable placements judged by the equilibrium oracle.

    The whole sequence is consumed in order: when an episode ends because the
    next item has no stable anchor, the bin is emptied and packing continues
    with that same item, so every item is eventually placed and judged.
    """
    from .policies import random_stable

    rng = np.random.default_rng(seed)
    placements = 0
    falls = 0
    accepted = 0
    consumed = 0
    t0 = time.perf_counter()
    while consumed < len(sequence):
        remaining = ItemSequence(sequence.spec, sequence.items[consumed:])
        state = penv.reset(spec, remaining, checker=mode, seed=seed)
        scene: list[PlacedBox] = []
        while not state.done:
            accepted += sum(int(m.sum()) for m in state.current.maps)
            action = random_stable(state, rng)
            if action is None:
                break
            state, _, _ = penv.step(state, action)
            placed = state.placements[-1]
            box = PlacedBox(placed.step, action.x, action.y, placed.rest, placed.gd)
            verdict = judge_next(scene, box)
            placements += 1
            if verdict.stable:
                scene.append(box)
            else:
                falls += 1
        consumed += len(state.placements)
        if state.reject_reason == "sequence_exhausted":
            break
        if not state.placements and state.reject_reason != "cannot_pack":
            # an item that cannot even start an episode would loop forever
            raise RuntimeError(f"sequence item {consumed} is unplaceable: {state.reject_reason}")
        if not state.placements and state.reject_reason == "cannot_pack":
            raise RuntimeError(f"sequence item {consumed} has no stable anchor in an empty bin")
    return FallStats(mode.value, placements, falls, accepted, time.perf_counter() - t0)
