/**
 * Training entry point: spawns the engine, alternates rollout collection and
 * policy updates, evaluates against the RandomStable baseline on identical
 * seeds, and persists a CSV learning curve plus a reloadable checkpoint.
 */
import * as fs from "node:fs";
import * as path from "node:path";

import { parseArgs } from "node:util";

import * as tf from "@tensorflow/tfjs";

import { randomStableMean } from "./baseline.js";
import { ActorPair, GridShape } from "./model.js";
import {
  DEFAULT_CONFIG,
  PpoConfig,
  chooseAction,
  collectRollout,
  ppoUpdate,
} from "./ppo.js";
import { EnvClient, spawnEngine } from "./protocol.js";
import { Rng } from "./rng.js";

export interface TrainOptions {
  epochs: number;
  rolloutSteps: number;
  seed: number;
  evalEvery: number;
  evalEpisodes: number;
  out: string;
  bin: [number, number, number];
  resolution: number;
  count: number;
  minDim: number;
  maxDim: number;
  ppo: PpoConfig;
  log?: (line: string) => void;
}

export interface TrainReport {
  epochs: number;
  maskViolations: number;
  bestEvalUtilization: number;
  finalEvalUtilization: number;
  baselineUtilization: number;
}

function gridOf(opts: TrainOptions): GridShape {
  return {
    nx: Math.round(opts.bin[0] / opts.resolution),
    ny: Math.round(opts.bin[1] / opts.resolution),
    nz: Math.round(opts.bin[2] / opts.resolution),
    binDims: opts.bin,
  };
}

export async function evaluatePolicy(
  client: EnvClient,
  actors: ActorPair,
  grid: GridShape,
  seeds: number[]
): Promise<number> {
  const rng = new Rng(0); // greedy evaluation never consults it
  let total = 0;
  for (const seed of seeds) {
    let obs = await client.reset(seed);
    let util = obs.utilization;
    while (!obs.done) {
      const { mask, stable } = await client.maps();
      const choice = chooseAction(actors, grid, obs, mask, stable, rng, true);
      const result = await client.step(
        choice.o,
        Math.floor(choice.p / grid.ny),
        choice.p % grid.ny
      );
      if (result.error) throw new Error(`evaluation rejected: ${result.error}`);
      util = result.utilization ?? util;
      if (result.done || !result.observation) break;
      obs = result.observation;
    }
    total += util;
  }
  return total / seeds.length;
}

export async function train(opts: TrainOptions): Promise<TrainReport> {
  const log = opts.log ?? ((line: string) => console.log(line));
  const grid = gridOf(opts);
  const actors = new ActorPair(grid);
  const optimizer = tf.train.adam(opts.ppo.learningRate);
  const rng = new Rng(opts.seed);

  fs.mkdirSync(opts.out, { recursive: true });
  const curvePath = path.join(opts.out, "curve.csv");
  const ckptPath = path.join(opts.out, "checkpoint.json");
  fs.writeFileSync(
    curvePath,
    "epoch,rollout_utilization,eval_utilization,baseline_utilization,policy_loss,value_loss,entropy,mask_violations\n"
  );

  const engine = await spawnEngine({
    bin: opts.bin,
    resolution: opts.resolution,
    count: opts.count,
    minDim: opts.minDim,
    maxDim: opts.maxDim,
  });
  const evalSeeds = Array.from({ length: opts.evalEpisodes }, (_, i) => 900_000 + i);

  let maskViolations = 0;
  let best = -1;
  let lastEval = 0;
  let baseline = 0;
  try {
    baseline = await randomStableMean(engine.client, evalSeeds, opts.seed);
    log(`baseline RandomStable utilization over ${evalSeeds.length} episodes: ${baseline.toFixed(4)}`);

    for (let epoch = 1; epoch <= opts.epochs; epoch++) {
      const { transitions, stats } = await collectRollout(
        engine.client,
        actors,
        grid,
        opts.rolloutSteps,
        rng,
        opts.seed + epoch * 10_000
      );
      maskViolations += stats.maskViolations;
      const metrics = ppoUpdate(actors, optimizer, transitions, opts.ppo, rng);

      let evalUtil = NaN;
      if (epoch % opts.evalEvery === 0 || epoch === opts.epochs) {
        evalUtil = await evaluatePolicy(engine.client, actors, grid, evalSeeds);
        lastEval = evalUtil;
        if (evalUtil > best) {
          best = evalUtil;
          fs.writeFileSync(ckptPath, JSON.stringify(actors.checkpoint()));
        }
        log(
          `epoch ${epoch}: rollout util ${stats.meanUtilization.toFixed(4)}, ` +
            `eval util ${evalUtil.toFixed(4)} (baseline ${baseline.toFixed(4)}), ` +
            `violations ${maskViolations}`
        );
      }
      fs.appendFileSync(
        curvePath,
        `${epoch},${stats.meanUtilization},${Number.isNaN(evalUtil) ? "" : evalUtil},` +
          `${baseline},${metrics.policyLoss},${metrics.valueLoss},${metrics.entropy},` +
          `${maskViolations}\n`
      );
    }
  } finally {
    // keep whatever checkpoint exists even when the engine dies mid-run
    await engine.shutdown();
  }

  return {
    epochs: opts.epochs,
    maskViolations,
    bestEvalUtilization: best,
    finalEvalUtilization: lastEval,
    baselineUtilization: baseline,
  };
}

const isMain = process.argv[1] && process.argv[1].endsWith("train.js");

if (isMain) {
  const { values } = parseArgs({
    options: {
      epochs: { type: "string", default: "300" },
      rollout: { type: "string", default: "256" },
      seed: { type: "string", default: "0" },
      "eval-every": { type: "string", default: "10" },
      "eval-episodes": { type: "string", default: "20" },
      out: { type: "string", default: "runs/latest" },
      count: { type: "string", default: "50" },
      "min-dim": { type: "string", default: "0.01" },
      "max-dim": { type: "string", default: "0.05" },
      lr: { type: "string", default: String(DEFAULT_CONFIG.learningRate) },
      gamma: { type: "string", default: String(DEFAULT_CONFIG.gamma) },
      clip: { type: "string", default: String(DEFAULT_CONFIG.clipRatio) },
      entropy: { type: "string", default: String(DEFAULT_CONFIG.entropyCoef) },
    },
  });

  train({
    epochs: Number(values.epochs),
    rolloutSteps: Number(values.rollout),
    seed: Number(values.seed),
    evalEvery: Number(values["eval-every"]),
    evalEpisodes: Number(values["eval-episodes"]),
    out: values.out as string,
    bin: [0.1, 0.1, 0.1], // 20x20x20 cells at the default resolution
    resolution: 0.005,
    count: Number(values.count),
    minDim: Number(values["min-dim"]),
    maxDim: Number(values["max-dim"]),
    ppo: {
      ...DEFAULT_CONFIG,
      learningRate: Number(values.lr),
      gamma: Number(values.gamma),
      clipRatio: Number(values.clip),
      entropyCoef: Number(values.entropy),
    },
  })
    .then((report) => {
      console.log(JSON.stringify(report));
      const gain = report.bestEvalUtilization - report.baselineUtilization;
      console.log(
        `best eval ${report.bestEvalUtilization.toFixed(4)} vs baseline ` +
          `${report.baselineUtilization.toFixed(4)} (gain ${(100 * gain).toFixed(2)} pp), ` +
          `mask violations ${report.maskViolations}`
      );
      process.exit(0);
    })
    .catch((err) => {
      console.error(err);
      process.exit(1);
    });
}
