"""Reproducible Brownian increments on dyadic grids.

Each path is drawn from its own Philox4x64 stream keyed by ``(seed,
path_index)``. Uniforms are built from the top 53 bits of each raw 64-bit
word as ``(k + 1/2) / 2**53`` and mapped to standard normals through the
inverse normal CDF, so a path depends on nothing but its key.

Coarsening sums neighbouring pairs, repeated ``log2(factor)`` times. This
fixes the summation tree, which makes ``coarsen(coarsen(w, a), b)`` and
``coarsen(w, a * b)`` bit-identical and leaves ``W(T)`` unchanged.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np
from scipy.special import ndtri

__all__ = ["WienerGrid", "generate", "coarsen", "standard_normals", "uniforms",
           "is_power_of_two", "write_csv"]

_MAX_KEY = 2**64


def is_power_of_two(n) -> bool:
    return isinstance(n, (int, np.integer)) and n >= 1 and (n & (n - 1)) == 0


def _bit_generator(seed, stream):
    if not (0 <= seed < _MAX_KEY and 0 <= stream < _MAX_KEY):
        raise ValueError("seed and stream index must lie in [0, 2**64)")
    return np.random.Philox(key=np.array([seed, stream], dtype=np.uint64),
                            counter=np.zeros(4, dtype=np.uint64))


def uniforms(seed: int, stream: int, n: int) -> np.ndarray:
    """``n`` uniforms in the open interval (0, 1) from stream ``(seed, stream)``."""
    raw = _bit_generator(seed, stream).random_raw(n)
    return ((raw >> np.uint64(11)).astype(np.float64) + 0.5) * 2.0**-53


def standard_normals(seed: int, stream: int, n: int) -> np.ndarray:
    return ndtri(uniforms(seed, stream, n))


@dataclass(frozen=True, eq=False)
class WienerGrid:
    """Increments ``W(t_{n+1}) - W(t_n)`` of an ``m``-dimensional Brownian path
    on ``N`` equal steps over ``[0, T]``; ``increments`` has shape ``(N, m)``."""

    seed: int
    path_index: int
    m: int
    N: int
    T: float
    increments: np.ndarray

    @property
    def h(self) -> float:
        return self.T / self.N

    @property
    def W_T(self) -> np.ndarray:
        """Terminal value, accumulated along the dyadic summation tree."""
        return coarsen(self, self.N).increments[0]

    def path(self) -> np.ndarray:
        """Cumulative values ``W(t_0), ..., W(t_N)`` (left-to-right sums)."""
        out = np.zeros((self.N + 1, self.m))
        np.cumsum(self.increments, axis=0, out=out[1:])
        return out


def generate(seed: int, path_index: int, m: int, N: int, T: float) -> WienerGrid:
    if not is_power_of_two(N):
        raise ValueError(f"N must be a power of two, got {N}")
    if m < 1:
        raise ValueError("m must be at least 1")
    if not (T > 0 and np.isfinite(T)):
        raise ValueError("T must be positive and finite")
    z = standard_normals(seed, path_index, N * m).reshape(N, m)
    inc = z * np.sqrt(T / N)
    inc.setflags(write=False)
    return WienerGrid(seed=seed, path_index=path_index, m=m, N=N, T=float(T), increments=inc)


def coarsen_increments(inc: np.ndarray, factor: int) -> np.ndarray:
    """Block sums of ``factor`` consecutive rows along axis ``-2``."""
    if not is_power_of_two(factor):
        raise ValueError(f"factor must be a power of two, got {factor}")
    n = inc.shape[-2]
    if n % factor:
        raise ValueError(f"factor {factor} does not divide N = {n}")
    out = np.asarray(inc)
    while factor > 1:
        out = out[..., 0::2, :] + out[..., 1::2, :]
        factor //= 2
    return out


def coarsen(w: WienerGrid, factor: int) -> WienerGrid:
    inc = np.array(coarsen_increments(w.increments, factor))
    inc.setflags(write=False)
    return WienerGrid(seed=w.seed, path_index=w.path_index, m=w.m, N=w.N // factor,
                      T=w.T, increments=inc)


def write_csv(w: WienerGrid, path) -> None:
    """Columns: ``t`` (left end of the step), ``dW_1 .. dW_m``."""
    with open(path, "w", newline="") as fh:
        out = csv.writer(fh, lineterminator="\n")
        out.writerow(["t"] + [f"dW_{j + 1}" for j in range(w.m)])
        for n, row in enumerate(w.increments):
            out.writerow([repr(n * w.h)] + [repr(float(v)) for v in row])
