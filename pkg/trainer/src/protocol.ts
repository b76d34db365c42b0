/**
 * PBENV v1 client: line-delimited JSON over the engine's standard streams.
 *
 * The engine is the server; this side opens with a hello carrying the
 * protocol version, then drives reset / maps / step / close. Every request
 * gets exactly one reply, so requests are resolved FIFO.
 */
import { spawn, ChildProcessByStdio } from "node:child_process";
import { createInterface, Interface } from "node:readline";
import { Writable, Readable } from "node:stream";

export const PROTO = "PBENV v1";

export interface RleMap {
  shape: number[];
  runs: number[];
}

export interface ObservationMsg {
  type: "observation";
  heightmap: number[][];
  item: [number, number, number] | null;
  done: boolean;
  utilization: number;
}

export interface MapsMsg {
  type: "maps";
  orientation_mask: boolean[];
  stable_maps: RleMap[];
}

export interface StepResultMsg {
  type: "step_result";
  error?: string;
  r_v?: number;
  r_waste?: number;
  reward?: number;
  done: boolean;
  utilization?: number;
  observation?: ObservationMsg | null;
}

export interface SequenceRequest {
  kind?: string;
  count?: number;
  min_dim?: number;
  max_dim?: number;
}

/** Expand a run-length-encoded boolean grid; runs alternate starting False. */
export function decodeBoolMap(payload: RleMap): boolean[][] {
  const [nx, ny] = payload.shape;
  const flat = new Array<boolean>(nx * ny).fill(false);
  let pos = 0;
  let value = false;
  for (const n of payload.runs) {
    if (value) flat.fill(true, pos, pos + n);
    pos += n;
    value = !value;
  }
  if (pos !== nx * ny) {
    throw new Error(`run lengths cover ${pos} cells, expected ${nx * ny}`);
  }
  const out: boolean[][] = [];
  for (let x = 0; x < nx; x++) out.push(flat.slice(x * ny, (x + 1) * ny));
  return out;
}

export class EnvClient {
  private rl: Interface;
  private writer: Writable;
  private pending: Array<{
    resolve: (msg: Record<string, unknown>) => void;
    reject: (err: Error) => void;
  }> = [];

  constructor(readable: Readable, writer: Writable) {
    this.writer = writer;
    this.rl = createInterface({ input: readable });
    this.rl.on("line", (line) => {
      const waiter = this.pending.shift();
      if (!waiter) return; // unsolicited line, e.g. after close
      try {
        waiter.resolve(JSON.parse(line));
      } catch (err) {
        waiter.reject(err as Error);
      }
    });
    this.rl.on("close", () => {
      for (const waiter of this.pending.splice(0)) {
        waiter.reject(new Error("server closed the stream"));
      }
    });
  }

  private request(payload: Record<string, unknown>): Promise<Record<string, unknown>> {
    return new Promise((resolve, reject) => {
      this.pending.push({ resolve, reject });
      this.writer.write(JSON.stringify(payload) + "\n");
    });
  }

  async hello(): Promise<void> {
    const reply = await this.request({ type: "hello", proto: PROTO });
    if (reply.type !== "hello" || reply.proto !== PROTO) {
      throw new Error(`bad handshake reply: ${JSON.stringify(reply)}`);
    }
  }

  async reset(seed: number, sequence?: SequenceRequest): Promise<ObservationMsg> {
    const msg: Record<string, unknown> = { type: "reset", seed };
    if (sequence) msg.sequence = sequence;
    const reply = await this.request(msg);
    if (reply.type !== "observation") {
      throw new Error(`reset failed: ${JSON.stringify(reply)}`);
    }
    return reply as unknown as ObservationMsg;
  }

  async maps(): Promise<{ mask: boolean[]; stable: boolean[][][] }> {
    const reply = await this.request({ type: "maps" });
    if (reply.type !== "maps") {
      throw new Error(`maps failed: ${JSON.stringify(reply)}`);
    }
    const msg = reply as unknown as MapsMsg;
    return { mask: msg.orientation_mask, stable: msg.stable_maps.map(decodeBoolMap) };
  }

  async step(o: number, x: number, y: number): Promise<StepResultMsg> {
    const reply = await this.request({ type: "step", o, x, y });
    if (reply.type !== "step_result") {
      throw new Error(`step failed: ${JSON.stringify(reply)}`);
    }
    return reply as unknown as StepResultMsg;
  }

  async close(): Promise<void> {
    try {
      await this.request({ type: "close" });
    } catch {
      // server may exit before replying; that is a normal shutdown
    }
  }
}

export interface EngineOptions {
  bin?: [number, number, number];
  resolution?: number;
  checker?: "ch1" | "cha";
  kind?: string;
  count?: number;
  minDim?: number;
  maxDim?: number;
  maxEpisodes?: number;
}

export interface EngineHandle {
  client: EnvClient;
  proc: ChildProcessByStdio<Writable, Readable, null>;
  shutdown: () => Promise<void>;
}

/** Spawn `packbench serve` and complete the handshake. */
export async function spawnEngine(opts: EngineOptions = {}): Promise<EngineHandle> {
  const args = ["serve"];
  const bin = opts.bin ?? [0.1, 0.1, 0.1];
  args.push("--bin", ...bin.map(String));
  args.push("--resolution", String(opts.resolution ?? 0.005));
  args.push("--checker", opts.checker ?? "cha");
  args.push("--kind", opts.kind ?? "rs");
  args.push("--count", String(opts.count ?? 50));
  args.push("--min", String(opts.minDim ?? 0.01));
  args.push("--max", String(opts.maxDim ?? 0.05));
  if (opts.maxEpisodes !== undefined) {
    args.push("--max-episodes", String(opts.maxEpisodes));
  }
  const proc = spawn("packbench", args, { stdio: ["pipe", "pipe", "inherit"] });
  const client = new EnvClient(proc.stdout, proc.stdin);
  await client.hello();
  const shutdown = async () => {
    await client.close();
    proc.stdin.end();
    await new Promise<void>((resolve) => {
      proc.once("exit", () => resolve());
      setTimeout(() => {
        proc.kill();
        resolve();
      }, 10_000).unref();
    });
  };
  return { client, proc, shutdown };
}
