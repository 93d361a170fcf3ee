"""Framed wire format spoken by the encoder bridge.

    frame  := length(uint32 LE) header payload?
    header := JSON object (utf-8) carrying "type", "cid", "payload_bytes"
    payload:= raw little-endian float32 array, row-major

length counts header bytes plus payload bytes; one frame per message, and a
response echoes the request's "cid". This module is the server-side
implementation, written against the format specification rather than shared
with any client code, so round-trip tests exercise two independent codecs.
"""

from __future__ import annotations

import json
import struct

import numpy as np

PROTOCOL_VERSION = 1
MAX_FRAME_BYTES = 1 << 28


class ProtocolError(ValueError):
    pass


def pack(header: dict, payload: bytes = b"") -> bytes:
    header = dict(header, payload_bytes=len(payload))
    hbytes = json.dumps(header, separators=(",", ":")).encode("utf-8")
    return struct.pack("<I", len(hbytes) + len(payload)) + hbytes + payload


def unpack_body(body: bytes) -> tuple[dict, bytes]:
    """Split a frame body (everything after the length prefix)."""
    try:
        header, end = json.JSONDecoder().raw_decode(body.decode("latin-1"))
    except (json.JSONDecodeError, UnicodeDecodeError) as e:
        raise ProtocolError(f"unparseable header: {e}") from e
    if not isinstance(header, dict):
        raise ProtocolError("header is not a JSON object")
    payload = body[end:]
    declared = header.get("payload_bytes", 0)
    if declared != len(payload):
        raise ProtocolError(
            f"payload_bytes={declared}, actual payload {len(payload)} bytes"
        )
    return header, payload


def read_frame(sock) -> tuple[dict, bytes]:
    prefix = _read_exact(sock, 4)
    (length,) = struct.unpack("<I", prefix)
    if length > MAX_FRAME_BYTES:
        raise ProtocolError(f"frame of {length} bytes exceeds the limit")
    return unpack_body(_read_exact(sock, length))


def _read_exact(sock, n: int) -> bytes:
    buf = b""
    while len(buf) < n:
        chunk = sock.recv(n - len(buf))
        if not chunk:
            raise ConnectionError("peer closed the connection")
        buf += chunk
    return buf


def floats_to_bytes(arr) -> bytes:
    return np.ascontiguousarray(arr, dtype="<f4").tobytes()


def floats_from_bytes(raw: bytes, count: int) -> np.ndarray:
    if len(raw) != 4 * count:
        raise ProtocolError(f"expected {4 * count} payload bytes, got {len(raw)}")
    return np.frombuffer(raw, dtype="<f4").astype(np.float64)
