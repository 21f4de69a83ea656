"""Remote-critic wire protocol over a persistent byte stream.

Frame layout (little endian):

    u32 header_len | header JSON (utf-8) | u32 payload_len | payload

Denoise request header:
    {"kind": "denoise", "width": W, "height": H, "channels": C,
     "t": f32 value, "guidance_scale": f32 value,
     "weights": [f32; N], "prompts": [str; N]}
with the noised image as payload, row-major f32 little endian.
The response is {"kind": "epsilon", ...same dims...} plus an identically
encoded payload; shapes must match bit-exactly.  Failures come back as
{"kind": "error", "message": ...} with an empty payload.
"""

from __future__ import annotations

import json
import queue
import socket
import socketserver
import struct
import threading

import numpy as np

from .guidance import Conditioning, GuidanceError

_U32 = struct.Struct("<I")
_MAX_FRAME = 1 << 26  # 64 MiB guard against corrupt lengths


def _read_exact(sock: socket.socket, n: int) -> bytes:
    buf = bytearray()
    while len(buf) < n:
        chunk = sock.recv(n - len(buf))
        if not chunk:
            raise ConnectionError("peer closed the stream mid-frame")
        buf.extend(chunk)
    return bytes(buf)


def send_frame(sock: socket.socket, header: dict, payload: bytes = b"") -> None:
    head = json.dumps(header).encode("utf-8")
    sock.sendall(_U32.pack(len(head)) + head + _U32.pack(len(payload)) + payload)


def recv_frame(sock: socket.socket) -> tuple[dict, bytes]:
    (head_len,) = _U32.unpack(_read_exact(sock, 4))
    if head_len > _MAX_FRAME:
        raise GuidanceError(f"oversized header ({head_len} bytes)")
    header = json.loads(_read_exact(sock, head_len).decode("utf-8"))
    (payload_len,) = _U32.unpack(_read_exact(sock, 4))
    if payload_len > _MAX_FRAME:
        raise GuidanceError(f"oversized payload ({payload_len} bytes)")
    payload = _read_exact(sock, payload_len)
    return header, payload


def _image_from(header: dict, payload: bytes) -> np.ndarray:
    h, w, c = int(header["height"]), int(header["width"]), int(header["channels"])
    expected = h * w * c * 4
    if len(payload) != expected:
        raise GuidanceError(f"payload is {len(payload)} bytes, dims require {expected}")
    return np.frombuffer(payload, dtype="<f4").reshape(h, w, c).copy()


class _CriticHandler(socketserver.BaseRequestHandler):
    def handle(self):
        critic = self.server.critic  # type: ignore[attr-defined]
        while True:
            try:
                header, payload = recv_frame(self.request)
            except (ConnectionError, GuidanceError):
                return
            try:
                if header.get("kind") != "denoise":
                    raise GuidanceError(f"unexpected frame kind {header.get('kind')!r}")
                x_t = _image_from(header, payload)
                cond = Conditioning(
                    weights=np.asarray(header.get("weights", []), dtype=np.float32),
                    prompts=tuple(header.get("prompts", [])),
                    guidance_scale=float(header.get("guidance_scale", 1.0)),
                )
                eps = critic.denoise(x_t, float(header["t"]), cond)
                eps = np.ascontiguousarray(eps, dtype="<f4")
                reply = {
                    "kind": "epsilon",
                    "width": int(header["width"]),
                    "height": int(header["height"]),
                    "channels": int(header["channels"]),
                }
                send_frame(self.request, reply, eps.tobytes())
            except Exception as exc:  # report, keep the stream alive
                try:
                    send_frame(self.request, {"kind": "error", "message": str(exc)})
                except OSError:
                    return


class _ThreadingServer(socketserver.ThreadingTCPServer):
    daemon_threads = True
    allow_reuse_address = True


class CriticServer:
    """Serves any in-process critic over the wire protocol (loopback tests,
    or a process boundary in front of a real diffusion model)."""

    def __init__(self, critic, host: str = "127.0.0.1", port: int = 0):
        self._server = _ThreadingServer((host, port), _CriticHandler)
        self._server.critic = critic  # type: ignore[attr-defined]
        self._thread = threading.Thread(target=self._server.serve_forever, daemon=True)

    @property
    def address(self) -> tuple[str, int]:
        return self._server.server_address[:2]

    def start(self) -> "CriticServer":
        self._thread.start()
        return self

    def stop(self) -> None:
        self._server.shutdown()
        self._server.server_close()

    def __enter__(self):
        return self.start()

    def __exit__(self, *exc):
        self.stop()


class RemoteCritic:
    """Client side: a pooled-connection critic with a retry budget.

    At most ``max_in_flight`` requests are on the wire concurrently; extra
    callers block until a connection frees up.  Transport failures are
    retried up to ``max_attempts`` in total, protocol violations (wrong
    shape, error frames) surface immediately as GuidanceError.
    """

    def __init__(
        self,
        host: str,
        port: int,
        max_attempts: int = 3,
        timeout: float = 10.0,
        max_in_flight: int = 4,
    ):
        self.host = host
        self.port = port
        self.max_attempts = max_attempts
        self.timeout = timeout
        self._idle: queue.LifoQueue = queue.LifoQueue(maxsize=max_in_flight)
        self._slots = threading.Semaphore(max_in_flight)
        self._closed = False

    def _connect(self) -> socket.socket:
        sock = socket.create_connection((self.host, self.port), timeout=self.timeout)
        sock.setsockopt(socket.IPPROTO_TCP, socket.TCP_NODELAY, 1)
        return sock

    def _acquire(self) -> socket.socket:
        self._slots.acquire()
        try:
            return self._idle.get_nowait()
        except queue.Empty:
            try:
                return self._connect()
            except OSError as exc:
                self._slots.release()
                raise GuidanceError(f"cannot reach critic at {self.host}:{self.port}: {exc}")

    def _release(self, sock: socket.socket | None) -> None:
        if sock is not None and not self._closed:
            self._idle.put(sock)
        elif sock is not None:
            sock.close()
        self._slots.release()

    def denoise(self, x_t: np.ndarray, t: float, cond: Conditioning | None = None) -> np.ndarray:
        x_t = np.ascontiguousarray(x_t, dtype="<f4")
        if x_t.ndim != 3:
            raise GuidanceError(f"remote critic needs [H,W,C] images, got shape {x_t.shape}")
        h, w, c = x_t.shape
        header = {
            "kind": "denoise",
            "width": int(w),
            "height": int(h),
            "channels": int(c),
            "t": float(np.float32(t)),
            "guidance_scale": float(cond.guidance_scale) if cond else 1.0,
            "weights": [float(v) for v in (cond.weights if cond is not None else [])],
            "prompts": list(cond.prompts) if cond else [],
        }
        payload = x_t.tobytes()
        last_exc: Exception | None = None
        for _ in range(self.max_attempts):
            sock = self._acquire()
            try:
                send_frame(sock, header, payload)
                reply, body = recv_frame(sock)
            except (OSError, ConnectionError) as exc:  # transport: retry
                sock.close()
                self._release(None)
                last_exc = exc
                continue
            self._release(sock)
            if reply.get("kind") == "error":
                raise GuidanceError(f"critic error: {reply.get('message')}")
            if reply.get("kind") != "epsilon":
                raise GuidanceError(f"unexpected reply kind {reply.get('kind')!r}")
            dims = (int(reply["height"]), int(reply["width"]), int(reply["channels"]))
            if dims != (h, w, c) or len(body) != h * w * c * 4:
                raise GuidanceError(
                    f"shape mismatch: sent {(h, w, c)}, received {dims} with {len(body)} bytes"
                )
            return np.frombuffer(body, dtype="<f4").reshape(h, w, c).copy()
        raise GuidanceError(
            f"critic unreachable after {self.max_attempts} attempts: {last_exc}"
        )

    def close(self) -> None:
        self._closed = True
        while True:
            try:
                self._idle.get_nowait().close()
            except queue.Empty:
                break

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()
