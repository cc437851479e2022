"""Velocity snapshots: one JSON header line, then raw little-endian float64.

The payload holds the velocity components one after another, each in
row-major (C) order, so a snapshot of an n^d grid is d * n^d * 8 bytes after
the header.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .dynamics import FlowState
from .errors import ConfigError
from .spectral import Grid, VectorField

HEADER_KEYS = ("dim", "n", "nu", "t", "seed", "condition")


def encode_snapshot(state: FlowState, seed: int | None = None, condition: str = "") -> bytes:
    grid = state.grid
    header = {
        "dim": grid.dim,
        "n": grid.n,
        "nu": float(state.nu),
        "t": float(state.t),
        "seed": seed,
        "condition": condition,
    }
    line = json.dumps(header, sort_keys=True).encode() + b"\n"
    payload = np.ascontiguousarray(state.v.array, dtype="<f8").tobytes()
    return line + payload


def write_snapshot(path, state: FlowState, seed: int | None = None, condition: str = "") -> Path:
    path = Path(path)
    path.write_bytes(encode_snapshot(state, seed, condition))
    return path


def read_snapshot(path) -> tuple[FlowState, dict]:
    """State and header of a snapshot file.

    The velocity is taken to be solenoidal on trust (the flag is a claim);
    ``spectral.is_solenoidal`` is how callers check it.
    """
    path = Path(path)
    try:
        raw = path.read_bytes()
    except OSError as exc:
        raise ConfigError(f"cannot read snapshot {path}: {exc}") from exc
    head, sep, payload = raw.partition(b"\n")
    if not sep:
        raise ConfigError(f"{path}: missing header line")
    try:
        header = json.loads(head.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise ConfigError(f"{path}: bad header: {exc}") from exc
    if not isinstance(header, dict):
        raise ConfigError(f"{path}: header is not a JSON object")
    missing = [k for k in HEADER_KEYS if k not in header]
    if missing:
        raise ConfigError(f"{path}: header lacks {missing}")
    try:
        grid = Grid(int(header["dim"]), int(header["n"]))
    except ValueError as exc:
        raise ConfigError(f"{path}: {exc}") from exc
    expected = grid.dim * grid.n**grid.dim * 8
    if len(payload) != expected:
        raise ConfigError(f"{path}: payload has {len(payload)} bytes, expected {expected}")
    data = np.frombuffer(payload, dtype="<f8").reshape((grid.dim,) + grid.shape)
    if not np.all(np.isfinite(data)):
        raise ConfigError(f"{path}: non-finite velocity samples")
    v = VectorField.from_arrays(grid, list(data), divergence_free=True)
    try:
        state = FlowState(v, float(header["nu"]), float(header["t"]))
    except ValueError as exc:
        raise ConfigError(f"{path}: {exc}") from exc
    return state, header
