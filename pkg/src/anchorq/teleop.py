"""Teleoperation session service: record human demonstrations over WebSocket.

The protocol is JSON text messages on a persistent socket. Client sends
{"type":"reset","seed":int} | {"type":"action","a":[f64]} |
{"type":"record","on":bool} | {"type":"discard"}; the server answers every
reset/action with exactly one {"type":"state",...} carrying a scene block
that is sufficient to render the 2-D world, and emits {"type":"notice",...}
when a recorded episode is retained or dropped. Malformed input gets
{"type":"error","msg":...} and leaves the session untouched.

The WebSocket layer is a deliberately small RFC 6455 subset: text frames,
client-to-server masking, ping/pong, close. One session per connection;
sessions never touch learner state.
"""

from __future__ import annotations

import base64
import hashlib
import json
import os
import socket
import struct
import threading

import numpy as np

from .buffers import Transition, append_episode
from .config import RunConfig
from .envs import EpisodeOver

WS_GUID = "258EAFA5-E914-47DA-95CA-C5AB0DC85B11"


class TeleopSession:
    """One environment instance driven by one operator connection."""

    def __init__(self, cfg: RunConfig, demo_path: str, safe_only: bool = True,
                 episode_id_start: int = 0):
        self.cfg = cfg
        self.demo_path = demo_path
        self.safe_only = safe_only
        self.env = cfg.make_env(seed=cfg.seed)
        self.recording = False
        self.episode: list[Transition] = []
        self.episode_reward = 0.0
        self.episode_cost = 0.0
        self.state: np.ndarray | None = None
        self.done = True
        self.step_index = 0
        self.next_episode_id = episode_id_start
        self.retained_count = 0

    def _state_msg(self, reward: float, cost: float) -> dict:
        return {
            "type": "state",
            "s": [float(x) for x in self.state],
            "r": float(reward),
            "c": float(cost),
            "done": self.done,
            "scene": self.env.scene(self.episode_reward, self.episode_cost),
        }

    def _finish_episode(self) -> dict:
        retained = (not self.safe_only) or self.episode_cost == 0.0
        if retained and self.episode:
            for i in range(len(self.episode) - 1):
                self.episode[i].next_action = self.episode[i + 1].action
            append_episode(self.episode, self.demo_path)
            self.retained_count += 1
            self.next_episode_id += 1
            msg = f"retained, cost {self.episode_cost:g}"
        else:
            msg = f"dropped, cost {self.episode_cost:g}"
        self.episode = []
        return {"type": "notice", "retained": retained, "episode_cost": self.episode_cost, "msg": msg}

    def handle(self, msg: dict) -> list[dict]:
        """Process one client message; returns the server responses in order."""
        if not isinstance(msg, dict) or "type" not in msg:
            return [{"type": "error", "msg": "message must be an object with a 'type' field"}]
        kind = msg["type"]
        if kind == "reset":
            try:
                seed = int(msg.get("seed", 0))
            except (TypeError, ValueError):
                return [{"type": "error", "msg": "reset.seed must be an integer"}]
            self.state = self.env.reset(seed=seed)
            self.done = False
            self.episode = []
            self.episode_reward = 0.0
            self.episode_cost = 0.0
            self.step_index = 0
            return [self._state_msg(0.0, 0.0)]
        if kind == "action":
            if self.done or self.state is None:
                return [{"type": "error", "msg": "episode finished; send reset"}]
            a = msg.get("a")
            if not isinstance(a, list) or len(a) != self.env.action_dim:
                return [{"type": "error", "msg": f"action must be a list of {self.env.action_dim} numbers"}]
            try:
                action = np.array([float(x) for x in a], dtype=np.float64)
            except (TypeError, ValueError):
                return [{"type": "error", "msg": "action entries must be numbers"}]
            prev_state = self.state
            try:
                res = self.env.step(action)
            except EpisodeOver:
                return [{"type": "error", "msg": "episode finished; send reset"}]
            self.state = res.next_state
            self.done = res.done
            self.episode_reward += res.task_reward
            self.episode_cost += res.cost
            if self.recording:
                self.episode.append(Transition(
                    state=prev_state, action=action, task_reward=res.task_reward,
                    cost=res.cost, next_state=res.next_state, next_action=None,
                    done=res.done, episode_id=self.next_episode_id, step_index=self.step_index,
                ))
            self.step_index += 1
            out = [self._state_msg(res.task_reward, res.cost)]
            if self.done and self.recording:
                out.append(self._finish_episode())
            return out
        if kind == "record":
            self.recording = bool(msg.get("on"))
            if not self.recording:
                self.episode = []
            return [{"type": "notice", "retained": False, "episode_cost": self.episode_cost,
                     "msg": f"recording {'on' if self.recording else 'off'}"}]
        if kind == "discard":
            self.episode = []
            return [{"type": "notice", "retained": False, "episode_cost": self.episode_cost,
                     "msg": "discarded"}]
        return [{"type": "error", "msg": f"unknown message type {kind!r}"}]


def count_episodes(demo_path: str) -> int:
    if not os.path.exists(demo_path):
        return 0
    eps = set()
    with open(demo_path, "r", encoding="utf-8") as f:
        for line in f:
            line = line.strip()
            if line:
                eps.add(json.loads(line)["ep"])
    return len(eps)


# --- RFC 6455 subset -------------------------------------------------------

def _recv_exact(conn: socket.socket, n: int) -> bytes:
    buf = b""
    while len(buf) < n:
        chunk = conn.recv(n - len(buf))
        if not chunk:
            raise ConnectionError("socket closed")
        buf += chunk
    return buf


def ws_accept_value(key: str) -> str:
    digest = hashlib.sha1((key + WS_GUID).encode("ascii")).digest()
    return base64.b64encode(digest).decode("ascii")


def ws_handshake_server(conn: socket.socket) -> None:
    data = b""
    while b"\r\n\r\n" not in data:
        chunk = conn.recv(4096)
        if not chunk:
            raise ConnectionError("client closed during handshake")
        data += chunk
    key = None
    for line in data.split(b"\r\n"):
        if line.lower().startswith(b"sec-websocket-key:"):
            key = line.split(b":", 1)[1].strip().decode("ascii")
    if key is None:
        raise ConnectionError("missing Sec-WebSocket-Key")
    resp = (
        "HTTP/1.1 101 Switching Protocols\r\n"
        "Upgrade: websocket\r\n"
        "Connection: Upgrade\r\n"
        f"Sec-WebSocket-Accept: {ws_accept_value(key)}\r\n\r\n"
    )
    conn.sendall(resp.encode("ascii"))


def ws_send_text(conn: socket.socket, text: str, mask: bool = False) -> None:
    payload = text.encode("utf-8")
    header = bytearray([0x81])  # FIN + text
    n = len(payload)
    mask_bit = 0x80 if mask else 0
    if n < 126:
        header.append(mask_bit | n)
    elif n < 65536:
        header.append(mask_bit | 126)
        header += struct.pack(">H", n)
    else:
        header.append(mask_bit | 127)
        header += struct.pack(">Q", n)
    if mask:
        key = os.urandom(4)
        header += key
        payload = bytes(b ^ key[i % 4] for i, b in enumerate(payload))
    conn.sendall(bytes(header) + payload)


def ws_recv_message(conn: socket.socket) -> str | None:
    """Next text message, answering pings; None when the peer closes."""
    while True:
        head = _recv_exact(conn, 2)
        opcode = head[0] & 0x0F
        masked = bool(head[1] & 0x80)
        n = head[1] & 0x7F
        if n == 126:
            n = struct.unpack(">H", _recv_exact(conn, 2))[0]
        elif n == 127:
            n = struct.unpack(">Q", _recv_exact(conn, 8))[0]
        key = _recv_exact(conn, 4) if masked else None
        payload = _recv_exact(conn, n) if n else b""
        if masked:
            payload = bytes(b ^ key[i % 4] for i, b in enumerate(payload))
        if opcode == 0x8:  # close
            return None
        if opcode == 0x9:  # ping -> pong
            conn.sendall(bytes([0x8A, len(payload)]) + payload)
            continue
        if opcode in (0x1, 0x2):
            return payload.decode("utf-8")


class TeleopServer:
    """One WebSocket session per connection; collection is decoupled from training."""

    def __init__(self, cfg: RunConfig, demo_path: str, safe_only: bool = True,
                 host: str = "127.0.0.1", port: int | None = None):
        self.cfg = cfg
        self.demo_path = demo_path
        self.safe_only = safe_only
        self._sock = socket.socket(socket.AF_INET, socket.SOCK_STREAM)
        self._sock.setsockopt(socket.SOL_SOCKET, socket.SO_REUSEADDR, 1)
        self._sock.bind((host, port if port is not None else cfg.teleop_port))
        self._sock.listen(4)
        self.port = self._sock.getsockname()[1]
        self._lock = threading.Lock()
        self._episode_counter = count_episodes(demo_path)
        self.retained_total = 0
        self._stopping = False
        self._threads: list[threading.Thread] = []

    def _serve_connection(self, conn: socket.socket) -> None:
        try:
            ws_handshake_server(conn)
            with self._lock:
                session = TeleopSession(self.cfg, self.demo_path, self.safe_only,
                                        episode_id_start=self._episode_counter)
            while True:
                raw = ws_recv_message(conn)
                if raw is None:
                    break
                try:
                    msg = json.loads(raw)
                except json.JSONDecodeError as exc:
                    ws_send_text(conn, json.dumps({"type": "error", "msg": f"invalid JSON: {exc.msg}"}))
                    continue
                with self._lock:
                    before = session.retained_count
                    responses = session.handle(msg)
                    gained = session.retained_count - before
                    if gained:
                        self._episode_counter += gained
                        self.retained_total += gained
                for resp in responses:
                    ws_send_text(conn, json.dumps(resp))
        except (ConnectionError, OSError):
            pass
        finally:
            conn.close()

    def serve_until(self, target_episodes: int | None = None) -> None:
        """Accept connections until `target_episodes` retained episodes exist (or forever)."""
        while not self._stopping:
            if target_episodes is not None and self.retained_total >= target_episodes:
                break
            try:
                self._sock.settimeout(0.2)
                conn, _ = self._sock.accept()
            except socket.timeout:
                continue
            except OSError:
                break
            t = threading.Thread(target=self._serve_connection, args=(conn,), daemon=True)
            t.start()
            self._threads.append(t)
        self.stop()

    def start_background(self) -> threading.Thread:
        t = threading.Thread(target=self.serve_until, daemon=True)
        t.start()
        return t

    def stop(self) -> None:
        self._stopping = True
        try:
            self._sock.close()
        except OSError:
            pass


class TeleopClient:
    """Tiny test-side WebSocket client speaking the same protocol."""

    def __init__(self, host: str, port: int, timeout: float = 10.0):
        self.sock = socket.create_connection((host, port), timeout=timeout)
        key = base64.b64encode(os.urandom(16)).decode("ascii")
        req = (
            f"GET / HTTP/1.1\r\nHost: {host}:{port}\r\n"
            "Upgrade: websocket\r\nConnection: Upgrade\r\n"
            f"Sec-WebSocket-Key: {key}\r\nSec-WebSocket-Version: 13\r\n\r\n"
        )
        self.sock.sendall(req.encode("ascii"))
        data = b""
        while b"\r\n\r\n" not in data:
            chunk = self.sock.recv(4096)
            if not chunk:
                raise ConnectionError("server closed during handshake")
            data += chunk
        if b"101" not in data.split(b"\r\n", 1)[0]:
            raise ConnectionError("handshake rejected")
        expected = ws_accept_value(key).encode("ascii")
        if expected not in data:
            raise ConnectionError("bad Sec-WebSocket-Accept")

    def send(self, obj: dict) -> None:
        ws_send_text(self.sock, json.dumps(obj), mask=True)

    def recv(self) -> dict | None:
        raw = ws_recv_message(self.sock)
        return None if raw is None else json.loads(raw)

    def request(self, obj: dict) -> dict:
        self.send(obj)
        resp = self.recv()
        if resp is None:
            raise ConnectionError("server closed")
        return resp

    def close(self) -> None:
        try:
            self.sock.close()
        except OSError:
            pass
