/**
 * Clipped-surrogate policy optimization over the two masked actors.
 *
 * One transition carries both sub-actions (orientation, anchor); their
 * log-probabilities add, so a single ratio drives the surrogate for both
 * heads. Advantages are normalized per batch.
 */
import * as tf from "@tensorflow/tfjs";

import { ActorPair, GridShape, encodeObservation, maskLogits, orientDims, N_ORIENTATIONS } from "./model.js";
import { EnvClient, ObservationMsg } from "./protocol.js";
import { Rng } from "./rng.js";

export interface Transition {
  obsO: Float32Array; // observation as the orientation actor sees it
  obsP: Float32Array; // dim channels shuffled to the sampled orientation
  oMask: Float32Array; // length 6
  pMask: Float32Array; // length nx*ny, stable map of the sampled orientation
  o: number;
  p: number; // flat anchor index x*ny + y
  logp: number; // behavior log-prob, orientation + position
  value: number;
  reward: number;
  done: boolean;
}

export interface RolloutStats {
  steps: number;
  episodes: number;
  maskViolations: number;
  meanUtilization: number;
  meanReward: number;
}

export interface PpoConfig {
  gamma: number;
  clipRatio: number;
  entropyCoef: number;
  valueCoef: number;
  learningRate: number;
  updateEpochs: number;
  minibatchSize: number;
}

export const DEFAULT_CONFIG: PpoConfig = {
  gamma: 0.99,
  clipRatio: 0.2,
  entropyCoef: 0.01,
  valueCoef: 0.5,
  learningRate: 1e-3,
  updateEpochs: 4,
  minibatchSize: 128,
};

function masked<T extends Float32Array>(probs: T, mask: Float32Array): T {
  const out = probs.slice() as T;
  for (let i = 0; i < out.length; i++) if (mask[i] === 0) out[i] = 0;
  return out;
}

/** Masked softmax probabilities and log-probs computed outside the graph. */
export function maskedPolicy(
  logits: Float32Array,
  mask: Float32Array
): { probs: Float32Array; logps: Float32Array } {
  let max = -Infinity;
  for (let i = 0; i < logits.length; i++) {
    if (mask[i] > 0 && logits[i] > max) max = logits[i];
  }
  const exps = new Float32Array(logits.length);
  let total = 0;
  for (let i = 0; i < logits.length; i++) {
    if (mask[i] > 0) {
      exps[i] = Math.exp(logits[i] - max);
      total += exps[i];
    }
  }
  const probs = new Float32Array(logits.length);
  const logps = new Float32Array(logits.length).fill(-Infinity);
  for (let i = 0; i < logits.length; i++) {
    if (mask[i] > 0) {
      probs[i] = exps[i] / total;
      logps[i] = logits[i] - max - Math.log(total);
    }
  }
  return { probs, logps };
}

export interface ActionChoice {
  o: number;
  p: number;
  logp: number;
  value: number;
  obsO: Float32Array;
  obsP: Float32Array;
  oMask: Float32Array;
  pMask: Float32Array;
}

/** Sample (orientation, anchor) from the masked actors; never off-mask. */
export function chooseAction(
  actors: ActorPair,
  grid: GridShape,
  obs: ObservationMsg,
  mask: boolean[],
  stable: boolean[][][],
  rng: Rng,
  greedy: boolean
): ActionChoice {
  const dims = obs.item as [number, number, number];
  const obsO = encodeObservation(grid, obs.heightmap, dims);
  const oMask = Float32Array.from(mask, (b) => (b ? 1 : 0));

  const [oLogits, value] = tf.tidy(() => {
    const t = tf.tensor2d(obsO, [1, obsO.length]);
    const logits = actors.orientationLogits(t);
    const v = actors.values(t);
    return [logits.dataSync() as Float32Array, (v.dataSync() as Float32Array)[0]] as const;
  });
  const oPolicy = maskedPolicy(oLogits, oMask);
  const o = greedy
    ? oPolicy.probs.indexOf(Math.max(...oPolicy.probs))
    : rng.categorical(masked(oPolicy.probs, oMask));

  const obsP = encodeObservation(grid, obs.heightmap, orientDims(dims, o));
  const flatStable = stable[o].flat();
  const pMask = Float32Array.from(flatStable, (b) => (b ? 1 : 0));
  const pLogits = tf.tidy(() => {
    const t = tf.tensor2d(obsP, [1, obsP.length]);
    return actors.positionLogits(t).dataSync() as Float32Array;
  });
  const pPolicy = maskedPolicy(pLogits, pMask);
  const p = greedy
    ? pPolicy.probs.indexOf(Math.max(...pPolicy.probs))
    : rng.categorical(masked(pPolicy.probs, pMask));

  return {
    o,
    p,
    logp: oPolicy.logps[o] + pPolicy.logps[p],
    value,
    obsO,
    obsP,
    oMask,
    pMask,
  };
}

/** Run episodes until at least `minSteps` transitions are collected. */
export async function collectRollout(
  client: EnvClient,
  actors: ActorPair,
  grid: GridShape,
  minSteps: number,
  rng: Rng,
  seedBase: number
): Promise<{ transitions: Transition[]; stats: RolloutStats }> {
  const transitions: Transition[] = [];
  let episodes = 0;
  let maskViolations = 0;
  let utilSum = 0;
  let rewardSum = 0;

  while (transitions.length < minSteps) {
    let obs = await client.reset(seedBase + episodes);
    episodes++;
    let lastUtil = 0;
    while (!obs.done) {
      const { mask, stable } = await client.maps();
      const choice = chooseAction(actors, grid, obs, mask, stable, rng, false);
      const x = Math.floor(choice.p / grid.ny);
      const y = choice.p % grid.ny;
      const result = await client.step(choice.o, x, y);
      if (result.error === "rejected_action") {
        maskViolations++;
        break;
      }
      const reward = result.reward ?? 0;
      rewardSum += reward;
      lastUtil = result.utilization ?? lastUtil;
      transitions.push({
        obsO: choice.obsO,
        obsP: choice.obsP,
        oMask: choice.oMask,
        pMask: choice.pMask,
        o: choice.o,
        p: choice.p,
        logp: choice.logp,
        value: choice.value,
        reward,
        done: result.done,
      });
      if (result.done || !result.observation) break;
      obs = result.observation;
    }
    utilSum += lastUtil;
  }

  return {
    transitions,
    stats: {
      steps: transitions.length,
      episodes,
      maskViolations,
      meanUtilization: utilSum / episodes,
      meanReward: rewardSum / transitions.length,
    },
  };
}

/** Discounted returns, reset at episode boundaries; advantages normalized. */
export function computeAdvantages(
  transitions: Transition[],
  gamma: number
): { returns: Float32Array; advantages: Float32Array } {
  const n = transitions.length;
  const returns = new Float32Array(n);
  let running = 0;
  for (let i = n - 1; i >= 0; i--) {
    if (transitions[i].done) running = 0;
    running = transitions[i].reward + gamma * running;
    returns[i] = running;
  }
  const advantages = new Float32Array(n);
  let mean = 0;
  for (let i = 0; i < n; i++) {
    advantages[i] = returns[i] - transitions[i].value;
    mean += advantages[i];
  }
  mean /= n;
  let variance = 0;
  for (let i = 0; i < n; i++) variance += (advantages[i] - mean) ** 2;
  const std = Math.sqrt(variance / n) || 1;
  for (let i = 0; i < n; i++) advantages[i] = (advantages[i] - mean) / std;
  return { returns, advantages };
}

export interface UpdateMetrics {
  policyLoss: number;
  valueLoss: number;
  entropy: number;
}

/** The batched PPO loss; exposed separately so tests can probe it. */
export function ppoLoss(
  actors: ActorPair,
  batch: {
    obsO: tf.Tensor2D;
    obsP: tf.Tensor2D;
    oMask: tf.Tensor2D;
    pMask: tf.Tensor2D;
    o: tf.Tensor1D;
    p: tf.Tensor1D;
    logp: tf.Tensor1D;
    advantages: tf.Tensor1D;
    returns: tf.Tensor1D;
  },
  cfg: PpoConfig
): { loss: tf.Scalar; policyLoss: tf.Scalar; valueLoss: tf.Scalar; entropy: tf.Scalar } {
  const oLogp = tf.logSoftmax(maskLogits(actors.orientationLogits(batch.obsO), batch.oMask));
  const pLogp = tf.logSoftmax(maskLogits(actors.positionLogits(batch.obsP), batch.pMask));

  const oTaken = tf.sum(oLogp.mul(tf.oneHot(batch.o, N_ORIENTATIONS)), 1) as tf.Tensor1D;
  const nCells = batch.pMask.shape[1];
  const pTaken = tf.sum(pLogp.mul(tf.oneHot(batch.p, nCells)), 1) as tf.Tensor1D;
  const logpNew = oTaken.add(pTaken) as tf.Tensor1D;

  const ratio = tf.exp(logpNew.sub(batch.logp));
  const clipped = tf.clipByValue(ratio, 1 - cfg.clipRatio, 1 + cfg.clipRatio);
  const surrogate = tf.minimum(ratio.mul(batch.advantages), clipped.mul(batch.advantages));
  const policyLoss = tf.neg(tf.mean(surrogate)) as tf.Scalar;

  const values = actors.values(batch.obsO);
  const valueLoss = tf.mean(tf.squaredDifference(values, batch.returns)) as tf.Scalar;

  // entropy only over allowed entries: p log p is 0 where the mask is 0
  const oEnt = tf.neg(tf.sum(tf.exp(oLogp).mul(oLogp).mul(batch.oMask), 1));
  const pEnt = tf.neg(tf.sum(tf.exp(pLogp).mul(pLogp).mul(batch.pMask), 1));
  const entropy = tf.mean(oEnt.add(pEnt)) as tf.Scalar;

  const loss = policyLoss
    .add(valueLoss.mul(cfg.valueCoef))
    .sub(entropy.mul(cfg.entropyCoef)) as tf.Scalar;
  return { loss, policyLoss, valueLoss, entropy };
}

function gather<T>(arr: T[], idx: number[]): T[] {
  return idx.map((i) => arr[i]);
}

export function ppoUpdate(
  actors: ActorPair,
  optimizer: tf.Optimizer,
  transitions: Transition[],
  cfg: PpoConfig,
  rng: Rng
): UpdateMetrics {
  const { returns, advantages } = computeAdvantages(transitions, cfg.gamma);
  const n = transitions.length;
  const nCells = transitions[0].pMask.length;
  const metrics: UpdateMetrics = { policyLoss: 0, valueLoss: 0, entropy: 0 };
  let updates = 0;

  for (let epoch = 0; epoch < cfg.updateEpochs; epoch++) {
    const order = Array.from({ length: n }, (_, i) => i);
    for (let i = n - 1; i > 0; i--) {
      const j = rng.int(i + 1);
      [order[i], order[j]] = [order[j], order[i]];
    }
    for (let start = 0; start < n; start += cfg.minibatchSize) {
      const idx = order.slice(start, start + cfg.minibatchSize);
      const mb = gather(transitions, idx);
      const batch = tf.tidy(() => ({
        obsO: tf.tensor2d(
          mb.flatMap((t) => Array.from(t.obsO)),
          [mb.length, mb[0].obsO.length]
        ),
        obsP: tf.tensor2d(
          mb.flatMap((t) => Array.from(t.obsP)),
          [mb.length, mb[0].obsP.length]
        ),
        oMask: tf.tensor2d(
          mb.flatMap((t) => Array.from(t.oMask)),
          [mb.length, N_ORIENTATIONS]
        ),
        pMask: tf.tensor2d(
          mb.flatMap((t) => Array.from(t.pMask)),
          [mb.length, nCells]
        ),
        o: tf.tensor1d(mb.map((t) => t.o), "int32"),
        p: tf.tensor1d(mb.map((t) => t.p), "int32"),
        logp: tf.tensor1d(mb.map((t) => t.logp)),
        advantages: tf.tensor1d(idx.map((i) => advantages[i])),
        returns: tf.tensor1d(idx.map((i) => returns[i])),
      }));
      const vars = actors.trainableVariables();
      let pieces: { policyLoss: number; valueLoss: number; entropy: number } | null = null;
      optimizer.minimize(
        () => {
          const out = ppoLoss(actors, batch, cfg);
          pieces = {
            policyLoss: out.policyLoss.dataSync()[0],
            valueLoss: out.valueLoss.dataSync()[0],
            entropy: out.entropy.dataSync()[0],
          };
          return out.loss;
        },
        false,
        vars
      );
      Object.values(batch).forEach((t) => t.dispose());
      if (pieces === null) throw new Error("optimizer did not evaluate the loss");
      const got = pieces as { policyLoss: number; valueLoss: number; entropy: number };
      if (!Number.isFinite(got.policyLoss) || !Number.isFinite(got.valueLoss)) {
        throw new Error(
          `non-finite loss: policy ${got.policyLoss}, value ${got.valueLoss}`
        );
      }
      metrics.policyLoss += got.policyLoss;
      metrics.valueLoss += got.valueLoss;
      metrics.entropy += got.entropy;
      updates++;
    }
  }
  metrics.policyLoss /= updates;
  metrics.valueLoss /= updates;
  metrics.entropy /= updates;
  return metrics;
}
