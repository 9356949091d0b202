"""Matrix and result file formats.

MTU1 layout: 8-byte magic ``b"MTUMAT1\\0"``, two little-endian uint64
(rows, cols), then ``rows * cols`` little-endian float64 values, row-major.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from .market import DenseMu, FactorizedMu, MassSpec, ScalingState

MAGIC = b"MTUMAT1\x00"
CSV_MAX_ENTRIES = 10**4
_HEADER = struct.Struct("<8sQQ")


def write_mtu(path, matrix) -> None:
    arr = np.asarray(matrix, dtype="<f8")
    if arr.ndim == 1:
        arr = arr[None, :]
    if arr.ndim != 2:
        raise ValueError(f"MTU1 stores 2-D matrices, got shape {arr.shape}")
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(MAGIC, arr.shape[0], arr.shape[1]))
        fh.write(np.ascontiguousarray(arr).tobytes())


def read_mtu(path) -> np.ndarray:
    with open(path, "rb") as fh:
        head = fh.read(_HEADER.size)
        if len(head) < _HEADER.size:
            raise ValueError(f"{path}: truncated MTU1 header")
        magic, rows, cols = _HEADER.unpack(head)
        if magic != MAGIC:
            raise ValueError(f"{path}: bad magic {magic!r}")
        payload = fh.read()
    expected = rows * cols * 8
    if len(payload) != expected:
        raise ValueError(f"{path}: expected {expected} payload bytes, found {len(payload)}")
    return np.frombuffer(payload, dtype="<f8").reshape(rows, cols).astype(np.float64)


def read_csv_matrix(path) -> np.ndarray:
    """Headerless comma-separated matrix, one row per line."""
    rows = []
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line:
                continue
            try:
                rows.append([float(tok) for tok in line.split(",")])
            except ValueError as exc:
                raise ValueError(f"{path}:{lineno}: {exc}") from None
            if rows and len(rows[-1]) != len(rows[0]):
                raise ValueError(f"{path}:{lineno}: ragged row ({len(rows[-1])} vs {len(rows[0])} columns)")
            if len(rows) * len(rows[0]) > CSV_MAX_ENTRIES:
                raise ValueError(f"{path}: CSV matrices are limited to {CSV_MAX_ENTRIES} entries; use MTU1")
    if not rows:
        raise ValueError(f"{path}: empty matrix")
    return np.array(rows, dtype=np.float64)


def write_csv_matrix(path, matrix) -> None:
    arr = np.atleast_2d(np.asarray(matrix, dtype=np.float64))
    with open(path, "w") as fh:
        for row in arr:
            fh.write(",".join(repr(float(v)) for v in row) + "\n")


def read_matrix(path) -> np.ndarray:
    """Dispatch on extension: ``.csv`` is text, everything else is MTU1."""
    if Path(path).suffix.lower() == ".csv":
        return read_csv_matrix(path)
    return read_mtu(path)


def write_json(path, obj) -> None:
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=2)
        fh.write("\n")


def read_json(path):
    with open(path) as fh:
        return json.load(fh)


def save_mass(path, mass: MassSpec) -> None:
    write_json(path, mass.to_dict())


def load_mass(path) -> MassSpec:
    return MassSpec.from_dict(read_json(path))


def save_state(path, state: ScalingState) -> None:
    write_json(path, state.to_dict())


def load_state(path) -> ScalingState:
    return ScalingState.from_dict(read_json(path))


def save_dense_mu(directory, pattern: DenseMu) -> None:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    write_mtu(directory / "mu.mtu", pattern.mu)
    write_json(directory / "mu.json", {"mu_x0": pattern.mu_x0.tolist(), "mu_0y": pattern.mu_0y.tolist()})


def load_dense_mu(directory) -> DenseMu:
    directory = Path(directory)
    side = read_json(directory / "mu.json")
    return DenseMu(read_mtu(directory / "mu.mtu"), np.asarray(side["mu_x0"]), np.asarray(side["mu_0y"]))


def save_factorized_mu(directory, pattern: FactorizedMu) -> None:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    write_mtu(directory / "Psi.mtu", pattern.Psi)
    write_mtu(directory / "Xi.mtu", pattern.Xi)
    write_json(directory / "stable_factors.json", {"beta": pattern.beta})


def load_factorized_mu(directory) -> FactorizedMu:
    directory = Path(directory)
    beta = read_json(directory / "stable_factors.json")["beta"]
    return FactorizedMu(read_mtu(directory / "Psi.mtu"), read_mtu(directory / "Xi.mtu"), float(beta))
