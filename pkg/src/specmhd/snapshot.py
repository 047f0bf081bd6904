"""SPECF01 snapshot files.

Layout: one JSON header line terminated by a newline, then the coefficients as
little-endian float64 (re, im) pairs.  Within each component the modes run in
row-major order over wavevectors k_i = -N/2, ..., N/2 - 1 along every axis.
"""

from __future__ import annotations

import json

import numpy as np

from .errors import PreconditionError
from .spectral import SpectralField, SpectralGrid, VectorField

MAGIC = "SPECF01"


def _to_centered(c: np.ndarray, n_dim: int) -> np.ndarray:
    return np.fft.fftshift(c, axes=tuple(range(-n_dim, 0)))


def _from_centered(c: np.ndarray, n_dim: int) -> np.ndarray:
    return np.fft.ifftshift(c, axes=tuple(range(-n_dim, 0)))


def write_snapshot(path, fields) -> None:
    """Write one or more fields on a common grid; components are concatenated."""
    if not isinstance(fields, (list, tuple)):
        fields = [fields]
    grid = fields[0].grid
    blocks, hermitian = [], True
    for f in fields:
        if f.grid != grid:
            raise PreconditionError("all fields in a snapshot must share one grid")
        c = f.coeffs if isinstance(f, VectorField) else f.coeffs[None]
        blocks.append(c)
        hermitian = hermitian and f.hermitian
    data = _to_centered(np.concatenate(blocks), grid.n_dim)
    header = {"magic": MAGIC, "n_dim": grid.n_dim, "L": grid.L, "N": grid.N, "K_R": grid.K_R,
              "components": int(data.shape[0]), "hermitian": bool(hermitian)}
    pairs = np.empty(data.shape + (2,), dtype="<f8")
    pairs[..., 0] = data.real
    pairs[..., 1] = data.imag
    with open(path, "wb") as fh:
        fh.write((json.dumps(header, sort_keys=True) + "\n").encode("ascii"))
        fh.write(pairs.tobytes(order="C"))


def read_snapshot(path):
    """Return (header, grid, coeffs) with coeffs shaped (components, N, ..., N) in FFT order."""
    with open(path, "rb") as fh:
        line = fh.readline()
        try:
            header = json.loads(line.decode("ascii"))
        except (UnicodeDecodeError, json.JSONDecodeError) as exc:
            raise PreconditionError(f"{path}: not a snapshot file") from exc
        if header.get("magic") != MAGIC:
            raise PreconditionError(f"{path}: bad magic {header.get('magic')!r}")
        grid = SpectralGrid(header["n_dim"], float(header["L"]), header["N"], header["K_R"])
        shape = (header["components"],) + grid.shape + (2,)
        raw = np.frombuffer(fh.read(), dtype="<f8")
    if raw.size != int(np.prod(shape)):
        raise PreconditionError(f"{path}: payload size does not match header")
    pairs = raw.reshape(shape)
    coeffs = _from_centered(pairs[..., 0] + 1j * pairs[..., 1], grid.n_dim)
    return header, grid, coeffs


def load_fields(path):
    """Split a snapshot back into vector fields of n_dim components (scalars if 1)."""
    header, grid, coeffs = read_snapshot(path)
    herm = header["hermitian"]
    n = grid.n_dim
    if coeffs.shape[0] == 1:
        return [SpectralField(grid, coeffs[0], herm)]
    if coeffs.shape[0] % n:
        raise PreconditionError("component count is not a multiple of n_dim")
    return [VectorField(grid, coeffs[i:i + n], herm) for i in range(0, coeffs.shape[0], n)]
