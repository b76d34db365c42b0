/** RandomStable baseline: uniform over every allowed (orientation, x, y). */
import { EnvClient } from "./protocol.js";
import { Rng } from "./rng.js";

export async function randomStableEpisode(
  client: EnvClient,
  seed: number,
  rng: Rng
): Promise<number> {
  let obs = await client.reset(seed);
  let util = obs.utilization;
  while (!obs.done) {
    const { stable } = await client.maps();
    const actions: Array<[number, number, number]> = [];
    for (let o = 0; o < stable.length; o++) {
      for (let x = 0; x < stable[o].length; x++) {
        for (let y = 0; y < stable[o][x].length; y++) {
          if (stable[o][x][y]) actions.push([o, x, y]);
        }
      }
    }
    if (actions.length === 0) break;
    const [o, x, y] = actions[rng.int(actions.length)];
    const result = await client.step(o, x, y);
    if (result.error) throw new Error(`baseline rejected: ${result.error}`);
    util = result.utilization ?? util;
    if (result.done || !result.observation) break;
    obs = result.observation;
  }
  return util;
}

export async function randomStableMean(
  client: EnvClient,
  seeds: number[],
  rngSeed: number
): Promise<number> {
  const rng = new Rng(rngSeed);
  let total = 0;
  for (const seed of seeds) {
    total += await randomStableEpisode(client, seed, rng);
  }
  return total / seeds.length;
}
