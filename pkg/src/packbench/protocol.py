"""PBENV v1: line-delimited JSON environment protocol.

The engine is the server: the agent (trainer) sends requests and receives
responses over standard streams. Handshake is a hello message carrying the
protocol version; stable maps travel run-length encoded.

Requests:  {"type":"hello","proto":"PBENV v1"}
           {"type":"reset","seed":int,"sequence":{kind,count,min_dim,max_dim}?}
           {"type":"maps"}
           {"type":"step","o":int,"x":int,"y":int}
           {"type":"close"}
Responses: hello / observation / maps / step_result / error (see handlers).
"""
from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from . import env as penv
from .datasets import SequenceSpec, generate
from .env import Action, EnvState
from .errors import PlacementRejected, ProtocolError
from .geometry import GridSpec
from .stability import CheckerMode

PROTO = "PBENV v1"


def encode_bool_map(arr: np.ndarray) -> dict:
    """Run-length encoding of a boolean grid, row-major, first run is False."""
    flat = np.asarray(arr, dtype=bool).ravel()
    runs: list[int] = []
    if flat.size:
        edges = np.flatnonzero(np.diff(flat)) + 1
        bounds = np.concatenate([[0], edges, [flat.size]])
        lengths = np.diff(bounds).tolist()
        if flat[0]:
            runs.append(0)
        runs.extend(int(v) for v in lengths)
    return {"shape": list(arr.shape), "runs": runs}


def decode_bool_map(payload: dict) -> np.ndarray:
    shape = tuple(payload["shape"])
    runs = payload["runs"]
    flat = np.zeros(int(np.prod(shape)), dtype=bool)
    pos = 0
    value = False
    for n in runs:
        if value:
            flat[pos : pos + n] = True
        pos += n
        value = not value
    if pos != flat.size:
        raise ProtocolError(f"run lengths cover {pos} cells, expected {flat.size}")
    return flat.reshape(shape)


def _observation_payload(state: EnvState) -> dict:
    payload = {
        "type": "observation",
        "heightmap": state.heightmap.cells.tolist(),
        "done": state.done,
        "item": None,
        "utilization": float(penv.utilization(state)),
    }
    if state.current is not None:
        payload["item"] = list(state.current.dims.as_tuple())
    return payload


@dataclass
class ServerStats:
    episodes_finished: int = 0
    steps: int = 0
    rejected_actions: int = 0


class EnvServer:
    """Serves one environment over (reader, writer) text streams."""

    def __init__(
        self,
        reader,
        writer,
        spec: GridSpec,
        checker: CheckerMode = CheckerMode.CHA,
        default_kind: str = "rs",
        default_count: int = 200,
        min_dim: float = 0.03,
        max_dim: float = 0.3,
        max_episodes: int | None = None,
        on_episode=None,
    ):
        self.reader = reader
        self.writer = writer
        self.spec = spec
        self.checker = checker
        self.default_kind = default_kind
        self.default_count = default_count
        self.min_dim = min_dim
        self.max_dim = max_dim
        self.max_episodes = max_episodes
        self.on_episode = on_episode
        self.state: EnvState | None = None
        self.stats = ServerStats()
        self._greeted = False

    def _send(self, payload: dict) -> None:
        self.writer.write(json.dumps(payload) + "\n")
        self.writer.flush()

    def serve(self) -> ServerStats:
        for raw in self.reader:
            raw = raw.strip()
            if not raw:
                continue
            try:
                msg = json.loads(raw)
            except json.JSONDecodeError:
                self._send({"type": "error", "error": "bad_json"})
                continue
            if not self._handle(msg):
                break
        self._finish_episode()
        return self.stats

    def _finish_episode(self):
        if self.state is not None and self.state.placements:
            self.stats.episodes_finished += 1
            if self.on_episode is not None:
                self.on_episode(penv.episode_result(self.state))
        self.state = None

    def _handle(self, msg: dict) -> bool:
        mtype = msg.get("type")
        if not self._greeted:
            if mtype != "hello" or msg.get("proto") != PROTO:
                self._send({"type": "error", "error": "handshake_required", "proto": PROTO})
                return False
            self._greeted = True
            self._send({"type": "hello", "proto": PROTO})
            return True
        if mtype == "close":
            self._send({"type": "bye"})
            return False
        if mtype == "reset":
            return self._handle_reset(msg)
        if mtype == "maps":
            return self._handle_maps()
        if mtype == "step":
            return self._handle_step(msg)
        self._send({"type": "error", "error": f"unknown_message:{mtype}"})
        return True

    def _handle_reset(self, msg: dict) -> bool:
        self._finish_episode()
        if self.max_episodes is not None and self.stats.episodes_finished >= self.max_episodes:
            self._send({"type": "error", "error": "episode_budget_exhausted"})
            return False
        seed = int(msg.get("seed", 0))
        seq_req = msg.get("sequence") or {}
        seqspec = SequenceSpec(
            kind=seq_req.get("kind", self.default_kind),
            seed=seed,
            count=int(seq_req.get("count", self.default_count)),
            min_dim=float(seq_req.get("min_dim", self.min_dim)),
            max_dim=float(seq_req.get("max_dim", self.max_dim)),
            grid=self.spec,
        )
        self.state = penv.reset(self.spec, generate(seqspec), checker=self.checker, seed=seed)
        self._send(_observation_payload(self.state))
        return True

    def _handle_maps(self) -> bool:
        if self.state is None or self.state.done or self.state.current is None:
            self._send({"type": "error", "error": "no_active_episode"})
            return True
        self._send(
            {
                "type": "maps",
                "orientation_mask": penv.orientation_mask(self.state),
                "stable_maps": [encode_bool_map(m) for m in self.state.current.maps],
            }
        )
        return True

    def _handle_step(self, msg: dict) -> bool:
        if self.state is None or self.state.done:
            self._send({"type": "error", "error": "no_active_episode"})
            return True
        try:
            action = Action(int(msg["o"]), int(msg["x"]), int(msg["y"]))
        except (KeyError, TypeError, ValueError):
            self._send({"type": "error", "error": "malformed_step"})
            return True
        try:
            self.state, reward, done = penv.step(self.state, action)
        except PlacementRejected as e:
            # contract violation by the agent: episode is terminal
            self.stats.rejected_actions += 1
            self.state.done = True
            self.state.reject_reason = "rejected_action"
            self._send(
                {
                    "type": "step_result",
                    "error": "rejected_action",
                    "detail": str(e),
                    "done": True,
                }
            )
            return True
        self.stats.steps += 1
        payload = {
            "type": "step_result",
            "r_v": float(reward.r_v),
            "r_waste": float(reward.r_waste),
            "reward": float(reward.total),
            "done": done,
            "utilization": float(penv.utilization(self.state)),
            "observation": None if done else _observation_payload(self.state),
        }
        self._send(payload)
        return True


class EnvClient:
    """Minimal client used by tests and by reference agents."""

    def __init__(self, reader, writer):
        self.reader = reader
        self.writer = writer

    def _send(self, payload: dict) -> dict:
        self.writer.write(json.dumps(payload) + "\n")
        self.writer.flush()
        raw = self.reader.readline()
        if not raw:
            raise ProtocolError("server closed the stream")
        return json.loads(raw)

    def hello(self) -> dict:
        reply = self._send({"type": "hello", "proto": PROTO})
        if reply.get("type") != "hello" or reply.get("proto") != PROTO:
            raise ProtocolError(f"bad handshake reply: {reply}")
        return reply

    def reset(self, seed: int, sequence: dict | None = None) -> dict:
        msg: dict = {"type": "reset", "seed": seed}
        if sequence:
            msg["sequence"] = sequence
        return self._send(msg)

    def maps(self) -> tuple[list[bool], list[np.ndarray]]:
        reply = self._send({"type": "maps"})
        if reply.get("type") != "maps":
            raise ProtocolError(f"expected maps, got {reply}")
        return reply["orientation_mask"], [decode_bool_map(m) for m in reply["stable_maps"]]

    def step(self, o: int, x: int, y: int) -> dict:
        return self._send({"type": "step", "o": o, "x": x, "y": y})

    def close(self) -> None:
        try:
            self._send({"type": "close"})
        except ProtocolError:
            pass
