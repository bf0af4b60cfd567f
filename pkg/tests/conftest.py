import json
import os
import re
import signal
import socket
import subprocess
import sys
import time

import pytest


class NdjsonClient:
    """Headless test client speaking the newline-delimited JSON framing."""

    def __init__(self, port, host="127.0.0.1", timeout=10.0):
        self.sock = socket.create_connection((host, port), timeout=timeout)
        self.sock.settimeout(timeout)
        self._buffer = b""
        self._seq = 0
        self.received = []

    def close(self):
        try:
            self.sock.close()
        except OSError:
            pass

    def send_raw(self, data: bytes):
        self.sock.sendall(data)

    def send(self, kind, payload):
        self._seq += 1
        msg = {"v": 1, "seq": self._seq, "kind": kind, "payload": payload}
        self.send_raw((json.dumps(msg) + "\n").encode())
        return self._seq

    def command(self, name, params=None):
        return self.send("command", {"name": name, "params": params or {}})

    def recv(self):
        while b"\n" not in self._buffer:
            chunk = self.sock.recv(65536)
            if not chunk:
                raise ConnectionError("server closed the connection")
            self._buffer += chunk
        line, self._buffer = self._buffer.split(b"\n", 1)
        msg = json.loads(line)
        self.received.append(msg)
        return msg

    def recv_until(self, predicate, max_messages=500):
        for _ in range(max_messages):
            msg = self.recv()
            if predicate(msg):
                return msg
        raise AssertionError("predicate not satisfied within message budget")

    def expect_reply(self, client_seq):
        """Next snapshot/rejection/error answering the given client seq."""
        return self.recv_until(
            lambda m: m.get("in_reply_to") == client_seq
            and m["kind"] in ("state_snapshot", "command_rejected", "error")
        )

    def wait_connected(self):
        return self.recv_until(lambda m: m["kind"] == "state_snapshot")


class ServeProcess:
    """`holonav serve` in a child process; ports parsed from its banner."""

    def __init__(self, tmp_path, log_name="session.jsonl", env_extra=None):
        self.log_path = str(tmp_path / log_name)
        env = dict(os.environ)
        env.setdefault("PYTHONUNBUFFERED", "1")
        if env_extra:
            env.update(env_extra)
        self.proc = subprocess.Popen(
            [sys.executable, "-m", "holonav", "serve", "--port", "0", "--ws-port", "0",
             "--log", self.log_path],
            stdout=subprocess.PIPE,
            stderr=subprocess.PIPE,
            env=env,
        )
        banner = self.proc.stderr.readline().decode()
        m = re.search(r"tcp=[^:]+:(\d+) ws=[^:]+:(\d+)", banner)
        if not m:
            self.proc.kill()
            raise RuntimeError(f"no listen banner, got {banner!r}")
        self.tcp_port = int(m.group(1))
        self.ws_port = int(m.group(2))

    def client(self) -> NdjsonClient:
        c = NdjsonClient(self.tcp_port)
        c.wait_connected()
        return c

    def kill(self):
        """Hard kill, as in a crash: no flush, no cleanup."""
        self.proc.send_signal(signal.SIGKILL)
        self.proc.wait(timeout=10)

    def stop(self):
        if self.proc.poll() is None:
            self.proc.terminate()
            try:
                self.proc.wait(timeout=10)
            except subprocess.TimeoutExpired:
                self.proc.kill()
                self.proc.wait(timeout=10)


@pytest.fixture
def serve_process(tmp_path):
    procs = []

    def spawn(**kwargs) -> ServeProcess:
        p = ServeProcess(tmp_path, **kwargs)
        procs.append(p)
        return p

    yield spawn
    for p in procs:
        p.stop()
