"""Reference server for the encoder bridge wire protocol.

One thread per connection; requests on a connection are handled serially.
Adapter exceptions come back as error frames and the connection survives;
malformed frames get an error frame and the connection is closed. The server
itself never dies on bad input.

    encoder-bridge-server --port 9000 --adapter reference:seed=0,h=64,w=64
"""

from __future__ import annotations

import argparse
import socket
import threading

import numpy as np

from .adapters import load_adapter
from .protocol import (
    PROTOCOL_VERSION,
    ProtocolError,
    floats_from_bytes,
    floats_to_bytes,
    pack,
    read_frame,
)


class BridgeServer:
    def __init__(self, adapter, host="127.0.0.1", port=0):
        self.adapter = adapter
        self.sock = socket.create_server((host, port))
        self.host, self.port = self.sock.getsockname()[:2]
        self._threads = []
        self._closing = False

    def serve_forever(self):
        try:
            while True:
                conn, _ = self.sock.accept()
                t = threading.Thread(target=self._serve_connection, args=(conn,),
                                     daemon=True)
                t.start()
                self._threads.append(t)
        except OSError:
            if not self._closing:
                raise

    def close(self):
        self._closing = True
        self.sock.close()

    def _serve_connection(self, conn):
        try:
            while True:
                try:
                    header, payload = read_frame(conn)
                except ProtocolError as e:
                    # malformed frame: error frame, then drop the connection
                    self._safe_send(conn, {"type": "error", "cid": None,
                                           "message": str(e)})
                    return
                except (ConnectionError, OSError):
                    return
                try:
                    resp, resp_payload = self._handle(header, payload)
                except ProtocolError as e:
                    self._safe_send(conn, {"type": "error",
                                           "cid": header.get("cid"),
                                           "message": str(e)})
                    return
                except Exception as e:  # adapter failure: connection preserved
                    self._safe_send(conn, {"type": "error",
                                           "cid": header.get("cid"),
                                           "message": f"adapter error: {e}"})
                    continue
                try:
                    conn.sendall(pack(dict(resp, cid=header.get("cid")), resp_payload))
                except OSError:
                    return
        finally:
            conn.close()

    @staticmethod
    def _safe_send(conn, header, payload=b""):
        try:
            conn.sendall(pack(header, payload))
        except OSError:
            pass

    def _handle(self, header: dict, payload: bytes):
        kind = header.get("type")
        desc = self.adapter.describe()
        h, w = desc["h"], desc["w"]
        m, d, d_g = desc["m"], desc["d"], desc["d_g"]
        if kind == "hello":
            if header.get("version") != PROTOCOL_VERSION:
                raise ProtocolError(
                    f"unsupported protocol version {header.get('version')}"
                )
            return {"type": "hello_ok", "version": PROTOCOL_VERSION}, b""
        if kind == "describe":
            return dict(desc, type="describe_ok"), b""
        if kind == "forward":
            img = floats_from_bytes(payload, h * w * 3).reshape(h, w, 3)
            g, local = self.adapter.forward(img)
            if g.shape != (d_g,) or local.shape != (m, d):
                raise ProtocolError("adapter returned mismatched feature shapes")
            out = np.concatenate([np.asarray(g).ravel(), np.asarray(local).ravel()])
            return {"type": "forward_ok"}, floats_to_bytes(out)
        if kind == "vjp":
            n_img = h * w * 3
            flat = floats_from_bytes(payload, n_img + d_g + m * d)
            img = flat[:n_img].reshape(h, w, 3)
            cot_g = flat[n_img:n_img + d_g]
            cot_local = flat[n_img + d_g:].reshape(m, d)
            grad = np.asarray(self.adapter.vjp(img, cot_g, cot_local))
            if grad.shape != (h, w, 3):
                raise ProtocolError("adapter returned a mismatched gradient shape")
            return {"type": "vjp_ok"}, floats_to_bytes(grad)
        if kind == "region_score":
            scorer = getattr(self.adapter, "score_regions", None)
            if scorer is None:
                raise ProtocolError("adapter does not score regions")
            img = floats_from_bytes(payload, h * w * 3).reshape(h, w, 3)
            scores = scorer(img, header.get("regions", []))
            return {"type": "region_score_ok",
                    "scores": {str(k): float(v) for k, v in scores.items()}}, b""
        raise ProtocolError(f"unknown request type {kind!r}")


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="encoder-bridge-server")
    parser.add_argument("--port", type=int, default=9000)
    parser.add_argument("--host", default="127.0.0.1")
    parser.add_argument("--adapter", default="reference")
    args = parser.parse_args(argv)
    server = BridgeServer(load_adapter(args.adapter), host=args.host, port=args.port)
    print(f"serving {args.adapter} on {server.host}:{server.port}")
    try:
        server.serve_forever()
    except KeyboardInterrupt:
        server.close()
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
