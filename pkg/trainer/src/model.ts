/**
 * Two-actor network per the masked packing pipeline: an orientation actor
 * over 6 axis permutations, a position actor scoring every anchor cell, and
 * a shared critic. The position actor sees the item-dimension channels
 * shuffled to the sampled orientation.
 */
import * as tf from "@tensorflow/tfjs";

/** Axis permutations applied to (w, d, h); index order matches the engine. */
export const ORIENTATION_PERMS: ReadonlyArray<readonly [number, number, number]> = [
  [0, 1, 2],
  [0, 2, 1],
  [1, 0, 2],
  [1, 2, 0],
  [2, 0, 1],
  [2, 1, 0],
];

export const N_ORIENTATIONS = 6;
const MASK_PENALTY = -1e9;

export function orientDims(
  dims: [number, number, number],
  o: number
): [number, number, number] {
  const p = ORIENTATION_PERMS[o];
  return [dims[p[0]], dims[p[1]], dims[p[2]]];
}

export interface GridShape {
  nx: number;
  ny: number;
  nz: number;
  binDims: [number, number, number]; // meters, for normalizing item channels
}

/** Flat 4-channel observation: heightmap plus three constant dim channels. */
export function encodeObservation(
  grid: GridShape,
  heightmap: number[][],
  dims: [number, number, number]
): Float32Array {
  const { nx, ny, nz, binDims } = grid;
  const out = new Float32Array(nx * ny * 4);
  const scale = Math.max(...binDims);
  for (let x = 0; x < nx; x++) {
    for (let y = 0; y < ny; y++) {
      const base = (x * ny + y) * 4;
      out[base] = heightmap[x][y] / nz;
      out[base + 1] = dims[0] / scale;
      out[base + 2] = dims[1] / scale;
      out[base + 3] = dims[2] / scale;
    }
  }
  return out;
}

/** logits + log(mask): disallowed entries get a large negative penalty. */
export function maskLogits(logits: tf.Tensor2D, mask: tf.Tensor2D): tf.Tensor2D {
  return tf.tidy(() =>
    logits.add(tf.sub(1, mask).mul(MASK_PENALTY))
  ) as tf.Tensor2D;
}

export interface CheckpointData {
  format: string;
  grid: GridShape;
  weights: Array<{ shape: number[]; values: number[] }>;
}

export class ActorPair {
  readonly grid: GridShape;
  readonly encoder: tf.LayersModel;
  readonly orientationHead: tf.LayersModel;
  readonly positionHead: tf.LayersModel;
  readonly critic: tf.LayersModel;

  constructor(grid: GridShape) {
    this.grid = grid;
    const { nx, ny } = grid;
    // deliberately small: gradient updates run on the pure-JS CPU backend
    const featureDim = 64;

    const inp = tf.input({ shape: [nx, ny, 4] });
    let h = tf.layers
      .conv2d({ filters: 4, kernelSize: 3, strides: 2, padding: "same", activation: "relu" })
      .apply(inp) as tf.SymbolicTensor;
    h = tf.layers.flatten().apply(h) as tf.SymbolicTensor;
    h = tf.layers.dense({ units: featureDim, activation: "relu" }).apply(h) as tf.SymbolicTensor;
    this.encoder = tf.model({ inputs: inp, outputs: h });

    const feat = tf.input({ shape: [featureDim] });
    const o = tf.layers.dense({ units: N_ORIENTATIONS }).apply(feat) as tf.SymbolicTensor;
    this.orientationHead = tf.model({ inputs: feat, outputs: o });

    const featP = tf.input({ shape: [featureDim] });
    const p = tf.layers.dense({ units: nx * ny }).apply(featP) as tf.SymbolicTensor;
    this.positionHead = tf.model({ inputs: featP, outputs: p });

    const featV = tf.input({ shape: [featureDim] });
    const v = tf.layers.dense({ units: 1 }).apply(featV) as tf.SymbolicTensor;
    this.critic = tf.model({ inputs: featV, outputs: v });
  }

  private models(): tf.LayersModel[] {
    return [this.encoder, this.orientationHead, this.positionHead, this.critic];
  }

  trainableVariables(): tf.Variable[] {
    // LayerVariable.val is the backing tf.Variable the optimizer mutates
    return this.models().flatMap((m) =>
      m.trainableWeights.map((w) => (w as unknown as { val: tf.Variable }).val)
    );
  }

  /** Orientation logits for a batch of flat observations. */
  orientationLogits(obs: tf.Tensor2D): tf.Tensor2D {
    const { nx, ny } = this.grid;
    const img = obs.reshape([-1, nx, ny, 4]);
    const feat = this.encoder.apply(img) as tf.Tensor2D;
    return this.orientationHead.apply(feat) as tf.Tensor2D;
  }

  /** Anchor logits (nx*ny) for observations already orientation-shuffled. */
  positionLogits(obsP: tf.Tensor2D): tf.Tensor2D {
    const { nx, ny } = this.grid;
    const img = obsP.reshape([-1, nx, ny, 4]);
    const feat = this.encoder.apply(img) as tf.Tensor2D;
    return this.positionHead.apply(feat) as tf.Tensor2D;
  }

  values(obs: tf.Tensor2D): tf.Tensor1D {
    const { nx, ny } = this.grid;
    const img = obs.reshape([-1, nx, ny, 4]);
    const feat = this.encoder.apply(img) as tf.Tensor2D;
    return (this.critic.apply(feat) as tf.Tensor2D).squeeze([1]);
  }

  checkpoint(): CheckpointData {
    const weights: CheckpointData["weights"] = [];
    for (const m of this.models()) {
      for (const w of m.getWeights()) {
        weights.push({ shape: w.shape.slice(), values: Array.from(w.dataSync()) });
      }
    }
    return { format: "PBCKPT v1", grid: this.grid, weights };
  }

  restore(data: CheckpointData): void {
    if (data.format !== "PBCKPT v1") throw new Error(`unknown checkpoint format ${data.format}`);
    let i = 0;
    for (const m of this.models()) {
      const current = m.getWeights();
      const next = current.map(() => {
        const w = data.weights[i++];
        return tf.tensor(w.values, w.shape);
      });
      m.setWeights(next);
      next.forEach((t) => t.dispose());
    }
    if (i !== data.weights.length) {
      throw new Error(`checkpoint has ${data.weights.length} arrays, model expects ${i}`);
    }
  }
}
