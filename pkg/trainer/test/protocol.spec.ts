import { afterAll, beforeAll, describe, expect, it } from "vitest";

import { decodeBoolMap, spawnEngine, EngineHandle } from "../src/protocol.js";

describe("decodeBoolMap", () => {
  it("expands alternating runs starting with false", () => {
    const grid = decodeBoolMap({ shape: [2, 3], runs: [1, 2, 3] });
    expect(grid).toEqual([
      [false, true, true],
      [false, false, false],
    ]);
  });

  it("leading zero run means the grid starts true", () => {
    const grid = decodeBoolMap({ shape: [1, 4], runs: [0, 4] });
    expect(grid).toEqual([[true, true, true, true]]);
  });

  it("rejects runs that do not cover the grid", () => {
    expect(() => decodeBoolMap({ shape: [2, 2], runs: [3] })).toThrow();
  });
});

describe("engine round trip", () => {
  let engine: EngineHandle;

  beforeAll(async () => {
    engine = await spawnEngine({ bin: [0.1, 0.1, 0.1], count: 10 });
  });

  afterAll(async () => {
    await engine.shutdown();
  });

  it("reset returns a 20x20 heightmap and an item", async () => {
    const obs = await engine.client.reset(0);
    expect(obs.done).toBe(false);
    expect(obs.heightmap.length).toBe(20);
    expect(obs.heightmap[0].length).toBe(20);
    expect(obs.item).toHaveLength(3);
    expect(obs.utilization).toBe(0);
  });

  it("maps expose six stable grids consistent with the mask", async () => {
    await engine.client.reset(1);
    const { mask, stable } = await engine.client.maps();
    expect(mask).toHaveLength(6);
    expect(stable).toHaveLength(6);
    for (let o = 0; o < 6; o++) {
      const any = stable[o].some((row) => row.some(Boolean));
      expect(any).toBe(mask[o]);
    }
  });

  it("stepping a stable anchor yields a positive volume reward", async () => {
    await engine.client.reset(2);
    const { stable } = await engine.client.maps();
    let found: [number, number, number] | null = null;
    for (let o = 0; o < 6 && !found; o++) {
      for (let x = 0; x < 20 && !found; x++) {
        for (let y = 0; y < 20 && !found; y++) {
          if (stable[o][x][y]) found = [o, x, y];
        }
      }
    }
    expect(found).not.toBeNull();
    const [o, x, y] = found as [number, number, number];
    const result = await engine.client.step(o, x, y);
    expect(result.error).toBeUndefined();
    expect(result.r_v).toBeGreaterThan(0);
    expect(result.utilization).toBeGreaterThan(0);
  });

  it("replaying the same actions gives identical rewards", async () => {
    const rewards: number[][] = [];
    for (let round = 0; round < 2; round++) {
      await engine.client.reset(3);
      const got: number[] = [];
      for (let i = 0; i < 3; i++) {
        const { stable } = await engine.client.maps();
        outer: for (let o = 0; o < 6; o++) {
          for (let x = 0; x < 20; x++) {
            for (let y = 0; y < 20; y++) {
              if (stable[o][x][y]) {
                const result = await engine.client.step(o, x, y);
                got.push(result.reward ?? NaN);
                if (result.done) i = 3;
                break outer;
              }
            }
          }
        }
      }
      rewards.push(got);
    }
    expect(rewards[0]).toEqual(rewards[1]);
  });

  it("an off-mask step reports a rejected action and ends the episode", async () => {
    await engine.client.reset(4);
    const { stable } = await engine.client.maps();
    let off: [number, number, number] | null = null;
    for (let x = 0; x < 20 && !off; x++) {
      for (let y = 0; y < 20 && !off; y++) {
        if (!stable[0][x][y]) off = [0, x, y];
      }
    }
    expect(off).not.toBeNull();
    const [o, x, y] = off as [number, number, number];
    const result = await engine.client.step(o, x, y);
    expect(result.error).toBe("rejected_action");
    expect(result.done).toBe(true);
  });
});
