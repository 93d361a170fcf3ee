import json
import socket
import struct
import threading

import numpy as np
import pytest

from oracles import central_diff, direct_conv3x3, rel_err
from patchfield.bridge import BridgeProtocolError, BridgeTransportError
from patchfield.encoders import (
    EncoderSpec,
    FeatureBundle,
    connect_bridge_encoder,
    make_toy_encoder,
)


def spec(kind="toy-linear", seed=0, size=16, grid=4, dim=8, gdim=6, **kw):
    return EncoderSpec(size, size, grid, grid, dim, gdim, kind, seed, **kw)


def test_linear_zero_image_zero_features():
    enc = make_toy_encoder(spec())
    b = enc.encode(np.zeros((16, 16, 3)))
    np.testing.assert_array_equal(b.global_feat, 0.0)
    np.testing.assert_array_equal(b.local_feat, 0.0)


def test_linear_homogeneity(rng):
    enc = make_toy_encoder(spec())
    img = rng.random((16, 16, 3))
    b1 = enc.encode(img)
    b2 = enc.encode(0.37 * img)
    np.testing.assert_allclose(b2.local_feat, 0.37 * b1.local_feat, atol=1e-12)
    np.testing.assert_allclose(b2.global_feat, 0.37 * b1.global_feat, atol=1e-12)


def test_declared_shapes_respected(rng):
    enc = make_toy_encoder(spec(dim=5, gdim=3))
    b = enc.encode(rng.random((16, 16, 3)))
    assert b.local_feat.shape == (16, 5)
    assert b.global_feat.shape == (3,)


def test_seeds_differentiate(rng):
    img = rng.random((16, 16, 3))
    b0 = make_toy_encoder(spec(seed=0)).encode(img)
    b1 = make_toy_encoder(spec(seed=1)).encode(img)
    assert not np.allclose(b0.local_feat, b1.local_feat)


def test_same_seed_identical_weights():
    a = make_toy_encoder(spec(seed=4))
    b = make_toy_encoder(spec(seed=4))
    np.testing.assert_array_equal(a.w_token, b.w_token)
    np.testing.assert_array_equal(a.w_global, b.w_global)


def test_input_shape_rejected(rng):
    enc = make_toy_encoder(spec())
    with pytest.raises(ValueError):
        enc.encode(rng.random((8, 8, 3)))


def test_spec_validation():
    with pytest.raises(ValueError):
        spec(kind="resnet")
    with pytest.raises(ValueError):
        EncoderSpec(16, 16, 5, 4, 8, 6)  # 16 % 5 != 0
    with pytest.raises(ValueError):
        spec(gain=0.0)
    with pytest.raises(ValueError):
        spec(pool=3)  # does not divide the 4x4 patch


def test_conv_matches_direct_convolution(rng):
    s = spec("toy-conv", seed=2, size=8, grid=2, dim=4, gdim=3)
    enc = make_toy_encoder(s)
    img = rng.random((8, 8, 3))
    fm = direct_conv3x3(img, enc.w_conv)
    cells = fm.reshape(2, 4, 2, 4, fm.shape[2]).mean(axis=(1, 3)).reshape(4, -1)
    local = cells @ enc.w_token.T
    glob = enc.w_global @ local.mean(axis=0)
    b = enc.encode(img)
    np.testing.assert_allclose(b.local_feat, local, atol=1e-12)
    np.testing.assert_allclose(b.global_feat, glob, atol=1e-12)


def test_vjp_adjoint_identity_linear_kinds(rng):
    for s in (spec(), spec("toy-conv", seed=3), spec(pool=2, seed=5)):
        enc = make_toy_encoder(s)
        v = rng.standard_normal((16, 16, 3))
        cg = rng.standard_normal(s.global_dim)
        cl = rng.standard_normal((s.tokens, s.dim))
        b = enc.encode(v)  # linear map: encode(v) = J v
        lhs = float(cg @ b.global_feat + np.sum(cl * b.local_feat))
        rhs = float(np.sum(v * enc.encode_vjp(v, FeatureBundle(cg, cl))))
        assert abs(lhs - rhs) <= 1e-10 * max(1.0, abs(lhs))


def test_vjp_zero_cotangent(rng):
    enc = make_toy_encoder(spec())
    img = rng.random((16, 16, 3))
    g = enc.encode_vjp(img, FeatureBundle(np.zeros(6), np.zeros((16, 8))))
    np.testing.assert_array_equal(g, 0.0)


def test_vjp_finite_differences_all_kinds(rng):
    for s in (spec(), spec("toy-conv", seed=1), spec("toy-tanh", seed=2, gain=3.0),
              spec("toy-tanh", seed=3, gain=2.0, pool=2)):
        enc = make_toy_encoder(s)
        img = rng.uniform(0.2, 0.8, size=(16, 16, 3))
        cg = rng.standard_normal(s.global_dim)
        cl = rng.standard_normal((s.tokens, s.dim))

        def f(x):
            b = enc.encode(x)
            return float(cg @ b.global_feat + np.sum(cl * b.local_feat))

        g_fd = central_diff(f, img)
        g_an = enc.encode_vjp(img, FeatureBundle(cg, cl))
        assert rel_err(g_fd, g_an) < 1e-4, s.kind


# --- bridge client against an in-test stub server ---


def _read_exact(conn, n):
    buf = b""
    while len(buf) < n:
        chunk = conn.recv(n - len(buf))
        if not chunk:
            raise ConnectionError("closed")
        buf += chunk
    return buf


def _read_frame(conn):
    (length,) = struct.unpack("<I", _read_exact(conn, 4))
    body = _read_exact(conn, length)
    text = body.decode("latin-1")
    header, end = json.JSONDecoder().raw_decode(text)
    return header, body[end:]


def _send_frame(conn, header, payload=b""):
    header = dict(header, payload_bytes=len(payload))
    hb = json.dumps(header).encode("utf-8")
    conn.sendall(struct.pack("<I", len(hb) + len(payload)) + hb + payload)


class StubServer(threading.Thread):
    """Minimal single-connection server speaking the wire format by hand."""

    def __init__(self, encoder, version=1, die_after=None):
        super().__init__(daemon=True)
        self.encoder = encoder
        self.version = version
        self.die_after = die_after
        self.sock = socket.create_server(("127.0.0.1", 0))
        self.port = self.sock.getsockname()[1]

    def run(self):
        conn, _ = self.sock.accept()
        served = 0
        try:
            while True:
                header, payload = _read_frame(conn)
                if self.die_after is not None and served >= self.die_after:
                    conn.close()
                    return
                served += 1
                cid = header.get("cid")
                s = self.encoder.spec
                if header["type"] == "hello":
                    _send_frame(conn, {"type": "hello_ok", "cid": cid,
                                       "version": self.version})
                elif header["type"] == "describe":
                    _send_frame(conn, {"type": "describe_ok", "cid": cid,
                                       "h": s.height, "w": s.width,
                                       "m": s.tokens, "d": s.dim, "d_g": s.global_dim,
                                       "grid_rows": s.grid_rows, "grid_cols": s.grid_cols,
                                       "seed": s.seed})
                elif header["type"] == "forward":
                    img = np.frombuffer(payload, dtype="<f4").astype(np.float64)
                    img = img.reshape(s.height, s.width, 3)
                    b = self.encoder.encode(img)
                    out = np.concatenate([b.global_feat, b.local_feat.ravel()])
                    _send_frame(conn, {"type": "forward_ok", "cid": cid},
                                out.astype("<f4").tobytes())
                elif header["type"] == "vjp":
                    n_img = s.height * s.width * 3
                    flat = np.frombuffer(payload, dtype="<f4").astype(np.float64)
                    img = flat[:n_img].reshape(s.height, s.width, 3)
                    cg = flat[n_img:n_img + s.global_dim]
                    cl = flat[n_img + s.global_dim:].reshape(s.tokens, s.dim)
                    g = self.encoder.encode_vjp(img, FeatureBundle(cg, cl))
                    _send_frame(conn, {"type": "vjp_ok", "cid": cid},
                                g.astype("<f4").tobytes())
                else:
                    _send_frame(conn, {"type": "error", "cid": cid,
                                       "message": "unknown type"})
        except (ConnectionError, OSError):
            pass
        finally:
            conn.close()
            self.sock.close()


def test_bridge_round_trip(rng):
    ref = make_toy_encoder(spec(seed=6))
    server = StubServer(ref)
    server.start()
    enc = connect_bridge_encoder(f"127.0.0.1:{server.port}")
    assert (enc.spec.height, enc.spec.width) == (16, 16)
    assert enc.spec.tokens == 16 and enc.spec.dim == 8 and enc.spec.global_dim == 6

    img = rng.random((16, 16, 3))
    got = enc.encode(img)
    want = ref.encode(img)
    assert rel_err(got.global_feat, want.global_feat) < 1e-6
    assert rel_err(got.local_feat, want.local_feat) < 1e-6

    cot = FeatureBundle(rng.standard_normal(6), rng.standard_normal((16, 8)))
    g_got = enc.encode_vjp(img, cot)
    g_want = ref.encode_vjp(img, cot)
    assert rel_err(g_got, g_want) < 1e-5
    enc.close()


def test_bridge_version_mismatch():
    server = StubServer(make_toy_encoder(spec()), version=99)
    server.start()
    with pytest.raises(BridgeProtocolError, match="version"):
        connect_bridge_encoder(f"127.0.0.1:{server.port}")


def test_bridge_connection_refused():
    with pytest.raises(BridgeTransportError):
        connect_bridge_encoder("127.0.0.1:1")  # nothing listens there


def test_bridge_drop_mid_request_raises_transport_error(rng):
    server = StubServer(make_toy_encoder(spec()), die_after=2)  # hello+describe only
    server.start()
    enc = connect_bridge_encoder(f"127.0.0.1:{server.port}")
    with pytest.raises(BridgeTransportError):
        enc.encode(rng.random((16, 16, 3)))
