"""HTTP adapter for out-of-process denoisers.

Request (POST, JSON)::

    {"tile": <base64 .tensor bytes>, "t": int, "T": int,
     "embedding": [float, ...], "seed": int}

Response (JSON)::

    {"tile": <base64 .tensor bytes>}

``t`` counts from the noisiest step. ``seed`` is drawn from the window's
sub-stream so a server that honours it stays deterministic.
"""

from __future__ import annotations

import base64
import json
import threading
from dataclasses import dataclass
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer

import httpx
import numpy as np

from scrollgen.errors import BackendError
from scrollgen.tensorio import decode_tensor, encode_tensor
from scrollgen.types import DEFAULT_WINDOW


def encode_request(tile: np.ndarray, t: int, total: int, embedding: np.ndarray, seed: int) -> dict:
    return {
        "tile": base64.b64encode(encode_tensor(tile)).decode("ascii"),
        "t": int(t),
        "T": int(total),
        "embedding": [float(v) for v in embedding],
        "seed": int(seed),
    }


def decode_tile(payload: str) -> np.ndarray:
    return decode_tensor(base64.b64decode(payload)).astype(np.float64)


@dataclass
class ExternalDenoiser:
    endpoint: str
    window: tuple[int, int] = DEFAULT_WINDOW
    channels: int = 4
    timeout: float = 120.0

    def step(self, tile, t, total, embedding, rng):
        body = encode_request(tile, t, total, embedding, int(rng.integers(0, 2**63 - 1)))
        try:
            resp = httpx.post(self.endpoint, json=body, timeout=self.timeout)
            resp.raise_for_status()
            out = decode_tile(resp.json()["tile"])
        except (httpx.HTTPError, KeyError, ValueError) as exc:
            raise BackendError(f"external denoiser at {self.endpoint} failed: {exc}") from exc
        if out.shape != tile.shape:
            raise BackendError(f"external denoiser returned shape {out.shape}, expected {tile.shape}")
        return out


def make_handler(denoiser):
    """A request handler class serving ``denoiser`` over the wire format above."""

    class Handler(BaseHTTPRequestHandler):
        def do_POST(self):
            length = int(self.headers.get("Content-Length", 0))
            try:
                req = json.loads(self.rfile.read(length))
                tile = decode_tile(req["tile"])
                rng = np.random.default_rng(int(req["seed"]))
                out = denoiser.step(tile, int(req["t"]), int(req["T"]), np.asarray(req["embedding"]), rng)
                body = json.dumps({"tile": base64.b64encode(encode_tensor(out)).decode("ascii")}).encode()
                status = 200
            except Exception as exc:  # report any failure to the caller
                body = json.dumps({"error": str(exc)}).encode()
                status = 400
            self.send_response(status)
            self.send_header("Content-Type", "application/json")
            self.send_header("Content-Length", str(len(body)))
            self.end_headers()
            self.wfile.write(body)

        def log_message(self, format, *args):
            pass

    return Handler


def serve_in_thread(denoiser, host: str = "127.0.0.1", port: int = 0) -> ThreadingHTTPServer:
    """Start a background server for ``denoiser``; call ``shutdown()`` when done."""
    server = ThreadingHTTPServer((host, port), make_handler(denoiser))
    threading.Thread(target=server.serve_forever, daemon=True).start()
    return server
