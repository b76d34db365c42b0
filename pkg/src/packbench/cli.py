"""Command-line entry points: gen / compare-stability / run / render / serve."""
from __future__ import annotations

import json
import subprocess
import sys
import time
from pathlib import Path

import click
import numpy as np

from . import env as penv
from .datasets import ItemSequence, SequenceSpec, generate, load_sequence, save_sequence
from .env import Action
from .geometry import GridSpec
from .gridio import save_map_text, to_gray, write_pgm
from .policies import Policy, PolicyKind
from .protocol import EnvServer
from .runner import fall_experiment, run_many, worker_count
from .stability import CheckerMode, EmptyMap, stable_action_map, update_empty_map
from .geometry import Heightmap, place_box, snap_dims


def _grid_options(f):
    f = click.option("--bin", "bin_dims", nargs=3, type=float, default=(0.6, 0.6, 0.6),
                     show_default=True, help="Bin W D H in meters.")(f)
    f = click.option("--resolution", type=float, default=0.005, show_default=True)(f)
    return f


def _bounds_options(f):
    f = click.option("--min", "min_dim", type=float, default=0.03, show_default=True)(f)
    f = click.option("--max", "max_dim", type=float, default=0.3, show_default=True)(f)
    return f


def _spec(bin_dims, resolution) -> GridSpec:
    return GridSpec(*bin_dims, resolution=resolution)


@click.group()
def main():
    """Deterministic online 3D bin-packing engine and experiments."""
    try:
        import numba

        numba.set_num_threads(max(1, worker_count()))
    except (ImportError, ValueError):
        pass


@main.command()
@click.option("--kind", type=click.Choice(["rs", "cut1", "cut2"]), default="rs", show_default=True)
@click.option("--count", type=int, default=100, show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
@_bounds_options
@_grid_options
@click.option("--out", type=click.Path(dir_okay=False), required=True)
def gen(kind, count, seed, min_dim, max_dim, bin_dims, resolution, out):
    """Generate an item sequence and write it as a PBSEQ v1 file."""
    spec = SequenceSpec(kind=kind, seed=seed, count=count, min_dim=min_dim,
                        max_dim=max_dim, grid=_spec(bin_dims, resolution))
    seq = generate(spec)
    save_sequence(seq, out)
    vols = seq.volumes()
    click.echo(
        f"wrote {len(seq)} items to {out}  "
        f"(volume mean {vols.mean():.6f} m^3, std {vols.std():.6f} m^3, "
        f"total {vols.sum():.6f} m^3)"
    )


@main.command("compare-stability")
@click.option("--seq", "seq_path", type=click.Path(exists=True, dir_okay=False), default=None,
              help="PBSEQ v1 file with the items to pack; generated when omitted.")
@click.option("--items", type=int, default=3000, show_default=True,
              help="Items to generate when no --seq file is given.")
@click.option("--seed", type=int, default=0, show_default=True)
@_bounds_options
@_grid_options
@click.option("--out", type=click.Path(file_okay=False), default=None)
def compare_stability(seq_path, items, seed, min_dim, max_dim, bin_dims, resolution, out):
    """Random-stable placements under CH1 and CH-alpha, judged by the equilibrium oracle."""
    spec = _spec(bin_dims, resolution)
    if seq_path is not None:
        seq = load_sequence(seq_path)
        items = len(seq)
    elif items > 0:
        seq = generate(SequenceSpec(kind="rs", seed=seed, count=items, min_dim=min_dim,
                                    max_dim=max_dim, grid=spec))
    stats = {}
    if items > 0:
        for mode in (CheckerMode.CH1, CheckerMode.CHA):
            stats[mode.value] = fall_experiment(spec, mode, seq, seed)

    rows = [
        ("", "convexHull-1", "convexHull-a"),
        ("Object number", *(str(stats[m].placements) if stats else "0" for m in ("ch1", "cha"))),
        ("Fall number", *(str(stats[m].falls) if stats else "0" for m in ("ch1", "cha"))),
        ("Time cost(s)", *(f"{stats[m].wall_seconds:.1f}" if stats else "0.0" for m in ("ch1", "cha"))),
        ("Fall rate", *(f"{100 * stats[m].fall_rate:.2f}%" if stats else "-" for m in ("ch1", "cha"))),
    ]
    width = max(len(c) for row in rows for c in row) + 2
    for row in rows:
        click.echo("".join(c.ljust(width) for c in row))

    if out is not None:
        out_dir = Path(out)
        out_dir.mkdir(parents=True, exist_ok=True)
        payload = {
            m: {
                "placements": s.placements,
                "falls": s.falls,
                "fall_rate": s.fall_rate,
                "wall_seconds": s.wall_seconds,
            }
            for m, s in stats.items()
        }
        with open(out_dir / "fall_report.json", "w") as f:
            f.write(json.dumps({"timestamp": time.time()}) + "\n")
            f.write(json.dumps({"items": items, "seed": seed, "modes": payload}, sort_keys=True) + "\n")


def _aggregate_report(results, out_dir: Path | None):
    utils = np.array([float(r.utilization) for r in results])
    stds = np.array([r.volume_std for r in results])
    corr = None
    if len(results) >= 2 and utils.std() > 0 and stds.std() > 0:
        corr = float(np.corrcoef(stds, utils)[0, 1])
    agg = {
        "episodes": len(results),
        "utilization_mean": float(utils.mean()) if len(results) else None,
        "utilization_median": float(np.median(utils)) if len(results) else None,
        "utilization_vs_volume_std": [[float(s), float(u)] for s, u in zip(stds, utils)],
        "volume_std_utilization_corr": corr,
    }
    if out_dir is not None:
        with open(out_dir / "report.json", "w") as f:
            f.write(json.dumps({"timestamp": time.time()}) + "\n")
            f.write(json.dumps(agg, sort_keys=True) + "\n")
    return agg


@main.command()
@click.option("--policy", type=click.Choice([k.value for k in PolicyKind]),
              default="random", show_default=True)
@click.option("--checker", type=click.Choice(["ch1", "cha"]), default="cha", show_default=True)
@click.option("--episodes", type=int, default=10, show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--kind", type=click.Choice(["rs", "cut1", "cut2"]), default="rs", show_default=True)
@click.option("--count", type=int, default=200, show_default=True,
              help="Items per episode sequence.")
@_bounds_options
@_grid_options
@click.option("--out", type=click.Path(file_okay=False), default=None)
@click.option("--oracle/--no-oracle", default=False, help="Judge every placement.")
@click.option("--agent-cmd", default=None,
              help="Spawn this command as an external agent speaking PBENV v1.")
def run(policy, checker, episodes, seed, kind, count, min_dim, max_dim,
        bin_dims, resolution, out, oracle, agent_cmd):
    """Run policy-driven episodes; write PBTRACE files and an aggregate report."""
    spec = _spec(bin_dims, resolution)
    out_dir = None
    if out is not None:
        out_dir = Path(out)
        out_dir.mkdir(parents=True, exist_ok=True)

    if policy == PolicyKind.EXTERNAL.value or agent_cmd is not None:
        if agent_cmd is None:
            raise click.UsageError("--policy external requires --agent-cmd")
        results = []
        proc = subprocess.Popen(agent_cmd, shell=True, text=True,
                                stdin=subprocess.PIPE, stdout=subprocess.PIPE)
        server = EnvServer(
            proc.stdout, proc.stdin, spec, checker=CheckerMode(checker),
            default_kind=kind, default_count=count, min_dim=min_dim, max_dim=max_dim,
            max_episodes=episodes, on_episode=results.append,
        )
        stats = server.serve()
        proc.stdin.close()
        proc.wait(timeout=30)
        agg = _aggregate_report(results, out_dir)
        click.echo(json.dumps({"rejected_actions": stats.rejected_actions, **agg}))
        return

    seq_template = SequenceSpec(kind=kind, seed=seed, count=count, min_dim=min_dim,
                                max_dim=max_dim, grid=spec)
    outcomes = run_many(spec, seq_template, PolicyKind(policy), episodes, seed,
                        checker=CheckerMode(checker), out_dir=out_dir, with_oracle=oracle)
    agg = _aggregate_report([o.result for o in outcomes], out_dir)
    if oracle:
        agg["oracle_falls"] = sum(o.falls for o in outcomes)
    click.echo(json.dumps(agg))


@main.command()
@click.option("--trace", type=click.Path(exists=True, dir_okay=False), required=True)
@click.option("--step", "step_index", type=int, required=True,
              help="Render state after this many placements.")
@click.option("--out", type=click.Path(file_okay=False), required=True)
def render(trace, step_index, out):
    """Replay a PBTRACE file and render heightmap/empty/stable maps as PGM."""
    with open(trace) as f:
        lines = [json.loads(x) for x in f.read().splitlines() if x.strip()]
    header, steps = lines[0], lines[1:]
    if step_index < 0 or step_index > len(steps):
        raise click.ClickException(f"step {step_index} outside trace of {len(steps)} placements")
    spec = GridSpec(*header["bin"], resolution=header["resolution"])
    seqinfo = header["sequence"]
    seq = generate(SequenceSpec(kind=seqinfo["kind"], seed=seqinfo["seed"],
                                count=seqinfo["count"], min_dim=seqinfo["min_dim"],
                                max_dim=seqinfo["max_dim"], grid=spec))
    hm, em = Heightmap(spec), EmptyMap(spec)
    for rec in steps[:step_index]:
        gd = snap_dims(seq.items[rec["step"]], spec).oriented(rec["o"])
        anchor = (rec["x"], rec["y"])
        em = update_empty_map(hm, em, anchor, gd)
        hm, _ = place_box(hm, anchor, gd)
    out_dir = Path(out)
    out_dir.mkdir(parents=True, exist_ok=True)
    write_pgm(to_gray(hm.cells, spec.nz), out_dir / "heightmap.pgm")
    write_pgm(to_gray(em.cells, spec.nz), out_dir / "emptymap.pgm")
    save_map_text(hm.cells, "height", out_dir / "heightmap.pbmap")
    save_map_text(em.cells, "empty", out_dir / "emptymap.pbmap")
    if step_index < len(seq.items):
        gd = snap_dims(seq.items[step_index], spec)
        for o in range(6):
            amap = stable_action_map(hm, em, gd.oriented(o), CheckerMode(header["checker"]))
            write_pgm(to_gray(amap), out_dir / f"stable_o{o}.pgm")
            save_map_text(amap.astype(np.int64), "stable", out_dir / f"stable_o{o}.pbmap")
    click.echo(f"rendered step {step_index} to {out_dir}")


@main.command()
@click.option("--checker", type=click.Choice(["ch1", "cha"]), default="cha", show_default=True)
@click.option("--kind", type=click.Choice(["rs", "cut1", "cut2"]), default="rs", show_default=True)
@click.option("--count", type=int, default=200, show_default=True)
@_bounds_options
@_grid_options
@click.option("--max-episodes", type=int, default=None)
def serve(checker, kind, count, min_dim, max_dim, bin_dims, resolution, max_episodes):
    """Serve PBENV v1 on standard streams (agent is the client)."""
    server = EnvServer(
        sys.stdin, sys.stdout, _spec(bin_dims, resolution), checker=CheckerMode(checker),
        default_kind=kind, default_count=count, min_dim=min_dim, max_dim=max_dim,
        max_episodes=max_episodes,
    )
    stats = server.serve()
    print(
        f"served {stats.episodes_finished} episodes, {stats.steps} steps, "
        f"{stats.rejected_actions} rejected",
        file=sys.stderr,
    )


if __name__ == "__main__":
    main()
