"""Client side of the encoder bridge wire protocol.

Transport is a local TCP socket carrying framed messages:

    frame  := length(uint32 LE) header payload?
    header := JSON object (utf-8), must carry "type", "cid", "payload_bytes"
    payload:= raw little-endian float32 array, row-major,
              exactly header["payload_bytes"] bytes

length counts header bytes + payload bytes. One frame per message; responses
echo the request's "cid". Request types and payload layouts:

    hello        {"version": 1}                     -> hello_ok
    describe     {}                                 -> describe_ok {h, w, m, d, d_g}
    forward      payload: image h*w*3               -> forward_ok payload: d_g + m*d
                                                       (global vector, then local
                                                        matrix row-major)
    vjp          payload: image h*w*3, then         -> vjp_ok payload: h*w*3
                 cot_global d_g, then cot_local m*d
    region_score {"regions": [{id, bbox, label}]}   -> region_score_ok
                 payload: image h*w*3                  {"scores": {id: score}}

Errors come back as {"type": "error", "message": ...}. floats are 32-bit on
the wire; the engine works in float64 internally.
"""

from __future__ import annotations

import json
import socket
import struct

import numpy as np

from .encoders import EncoderSpec, FeatureBundle

PROTOCOL_VERSION = 1
MAX_FRAME_BYTES = 1 << 28


class BridgeError(Exception):
    pass


class BridgeProtocolError(BridgeError):
    """Malformed frame, version mismatch, or shape disagreement."""


class BridgeTransportError(BridgeError, ConnectionError):
    """Connection failed or dropped mid-request; no partial results."""


def pack_frame(header: dict, payload: bytes = b"") -> bytes:
    header = dict(header, payload_bytes=len(payload))
    hbytes = json.dumps(header, separators=(",", ":")).encode("utf-8")
    return struct.pack("<I", len(hbytes) + len(payload)) + hbytes + payload


def split_frame(body: bytes) -> tuple[dict, bytes]:
    """Split a frame body (after the length prefix) into header and payload."""
    try:
        header, end = json.JSONDecoder().raw_decode(body.decode("latin-1"))
    except (UnicodeDecodeError, json.JSONDecodeError) as e:
        raise BridgeProtocolError(f"unparseable frame header: {e}") from e
    if not isinstance(header, dict):
        raise BridgeProtocolError("frame header is not a JSON object")
    payload = body[end:]
    declared = header.get("payload_bytes", 0)
    if declared != len(payload):
        raise BridgeProtocolError(
            f"payload_bytes={declared} but {len(payload)} payload bytes present"
        )
    return header, payload


def floats_to_bytes(arr: np.ndarray) -> bytes:
    return np.ascontiguousarray(arr, dtype="<f4").tobytes()


def bytes_to_floats(raw: bytes, count: int) -> np.ndarray:
    if len(raw) != 4 * count:
        raise BridgeProtocolError(f"expected {4 * count} payload bytes, got {len(raw)}")
    return np.frombuffer(raw, dtype="<f4").astype(np.float64)


class BridgeConnection:
    """One TCP connection; one in-flight request at a time."""

    def __init__(self, endpoint: str, timeout: float = 10.0):
        host, _, port = endpoint.rpartition(":")
        try:
            self.sock = socket.create_connection((host or "127.0.0.1", int(port)), timeout=timeout)
        except OSError as e:
            raise BridgeTransportError(f"cannot connect to {endpoint}: {e}") from e
        self._cid = 0

    def close(self) -> None:
        try:
            self.sock.close()
        except OSError:
            pass

    def _recv_exact(self, n: int) -> bytes:
        buf = b""
        while len(buf) < n:
            try:
                chunk = self.sock.recv(n - len(buf))
            except OSError as e:
                raise BridgeTransportError(f"receive failed: {e}") from e
            if not chunk:
                raise BridgeTransportError("connection closed mid-frame")
            buf += chunk
        return buf

    def request(self, header: dict, payload: bytes = b"") -> tuple[dict, bytes]:
        self._cid += 1
        header = dict(header, cid=self._cid)
        try:
            self.sock.sendall(pack_frame(header, payload))
        except OSError as e:
            raise BridgeTransportError(f"send failed: {e}") from e
        (length,) = struct.unpack("<I", self._recv_exact(4))
        if length > MAX_FRAME_BYTES:
            raise BridgeProtocolError(f"oversized response frame ({length} bytes)")
        resp, resp_payload = split_frame(self._recv_exact(length))
        if resp.get("cid") != self._cid:
            raise BridgeProtocolError(
                f"correlation id mismatch: sent {self._cid}, got {resp.get('cid')}"
            )
        if resp.get("type") == "error":
            raise BridgeProtocolError(f"server error: {resp.get('message')}")
        return resp, resp_payload


class BridgedEncoder:
    """Encoder whose forward/vjp round-trip the wire protocol."""

    def __init__(self, endpoint: str, timeout: float = 10.0):
        self.conn = BridgeConnection(endpoint, timeout=timeout)
        resp, _ = self.conn.request({"type": "hello", "version": PROTOCOL_VERSION})
        if resp.get("type") != "hello_ok":
            raise BridgeProtocolError(f"unexpected hello response: {resp}")
        if resp.get("version") != PROTOCOL_VERSION:
            raise BridgeProtocolError(
                f"protocol version mismatch: client {PROTOCOL_VERSION}, "
                f"server {resp.get('version')}"
            )
        desc, _ = self.conn.request({"type": "describe"})
        if desc.get("type") != "describe_ok":
            raise BridgeProtocolError(f"unexpected describe response: {desc}")
        try:
            h, w, m, d, d_g = (int(desc[k]) for k in ("h", "w", "m", "d", "d_g"))
            rows, cols = int(desc.get("grid_rows", 1)), int(desc.get("grid_cols", m))
        except (KeyError, TypeError, ValueError) as e:
            raise BridgeProtocolError(f"bad describe response: {desc}") from e
        if rows * cols != m:
            raise BridgeProtocolError(f"describe grid {rows}x{cols} != m={m}")
        self.spec = EncoderSpec(
            height=h, width=w, grid_rows=rows, grid_cols=cols,
            dim=d, global_dim=d_g, kind="bridged", seed=int(desc.get("seed", 0)),
        )

    def close(self) -> None:
        self.conn.close()

    def _check(self, img: np.ndarray) -> np.ndarray:
        img = np.asarray(img, dtype=np.float64)
        expected = (self.spec.height, self.spec.width, 3)
        if img.shape != expected:
            raise ValueError(f"encoder expects {expected}, got {img.shape}")
        return img

    def encode(self, img: np.ndarray) -> FeatureBundle:
        img = self._check(img)
        resp, payload = self.conn.request({"type": "forward"}, floats_to_bytes(img))
        d_g, m, d = self.spec.global_dim, self.spec.tokens, self.spec.dim
        flat = bytes_to_floats(payload, d_g + m * d)
        return FeatureBundle(flat[:d_g], flat[d_g:].reshape(m, d))

    def encode_vjp(self, img: np.ndarray, cot: FeatureBundle) -> np.ndarray:
        img = self._check(img)
        payload = (
            floats_to_bytes(img)
            + floats_to_bytes(np.asarray(cot.global_feat))
            + floats_to_bytes(np.asarray(cot.local_feat))
        )
        resp, resp_payload = self.conn.request({"type": "vjp"}, payload)
        h, w = self.spec.height, self.spec.width
        return bytes_to_floats(resp_payload, h * w * 3).reshape(h, w, 3)


def score_regions(endpoint: str, img: np.ndarray, region_set) -> dict[int, float]:
    """Ask a bridge server to score candidate regions (external policy)."""
    conn = BridgeConnection(endpoint)
    try:
        regions = [
            {"id": r.id, "bbox": list(r.bbox), "label": r.label}
            for r in region_set.regions
        ]
        resp, _ = conn.request(
            {"type": "region_score", "regions": regions},
            floats_to_bytes(np.asarray(img, dtype=np.float64)),
        )
        if resp.get("type") != "region_score_ok":
            raise BridgeProtocolError(f"unexpected region_score response: {resp}")
        return {int(k): float(v) for k, v in resp.get("scores", {}).items()}
    finally:
        conn.close()
