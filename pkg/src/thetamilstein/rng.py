"""Counter-based Gaussian increments.

The k-th increment of path ``i`` under ``seed`` is a pure function of
``(seed, i, k)``: two 64-bit words are produced by the SplitMix64 finaliser
applied to a keyed counter, turned into uniforms with 53-bit resolution and
mapped to a standard normal with Box-Muller.  Paths can therefore be generated
in any order, in any chunking, on any number of workers, and reproduce
bit-for-bit.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

ALGORITHM = "splitmix64-counter/box-muller/v1"

_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_PATH_GAMMA = np.uint64(0xD1B54A32D192ED03)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)
_TWO53 = 2.0 ** -53


def _mix64(z):
    with np.errstate(over="ignore"):
        z = (z ^ (z >> np.uint64(30))) * _M1
        z = (z ^ (z >> np.uint64(27))) * _M2
    return z ^ (z >> np.uint64(31))


def _path_keys(seed: int, paths) -> np.ndarray:
    s = np.uint64(int(seed) & 0xFFFFFFFFFFFFFFFF)
    p = np.asarray(paths, dtype=np.uint64)
    with np.errstate(over="ignore"):
        return _mix64(_mix64(s ^ _GOLDEN) + (p + np.uint64(1)) * _PATH_GAMMA)


def standard_normals(seed: int, paths, start: int, count: int) -> np.ndarray:
    """Array of shape (len(paths), count): normals for steps start..start+count-1."""
    keys = _path_keys(seed, np.atleast_1d(paths))[:, None]
    k = np.arange(start, start + count, dtype=np.uint64)[None, :]
    with np.errstate(over="ignore"):
        c = keys + (np.uint64(2) * k + np.uint64(1)) * _GOLDEN
        w1 = _mix64(c)
        w2 = _mix64(c + _GOLDEN)
    u1 = ((w1 >> np.uint64(11)).astype(np.float64) + 1.0) * _TWO53  # (0, 1]
    u2 = (w2 >> np.uint64(11)).astype(np.float64) * _TWO53
    return np.sqrt(-2.0 * np.log(u1)) * np.cos(2.0 * np.pi * u2)


@dataclass(frozen=True)
class IncrementStream:
    """Brownian increments for one path at ``level_dt = coarsening * base_dt``.

    Coarse streams never resample: their increments are sums of the
    ``coarsening`` consecutive base increments.
    """

    master_seed: int
    path_index: int
    base_dt: float
    coarsening: int = 1

    @property
    def level_dt(self) -> float:
        return self.coarsening * self.base_dt

    def increments(self, start: int, count: int) -> np.ndarray:
        return block_increments(self.master_seed, [self.path_index], self.base_dt,
                                start, count, self.coarsening)[0]

    def __getitem__(self, k: int) -> float:
        return float(self.increments(k, 1)[0])


def block_increments(seed: int, paths, base_dt: float, start: int, count: int,
                     coarsening: int = 1) -> np.ndarray:
    """Increments k = start..start+count-1 at level ``coarsening * base_dt`` for many paths."""
    z = standard_normals(seed, paths, start * coarsening, count * coarsening)
    dw = np.sqrt(base_dt) * z
    if coarsening == 1:
        return dw
    return coarsen(dw, coarsening)


def coarsen(fine: np.ndarray, m: int) -> np.ndarray:
    """Sum consecutive groups of ``m`` increments along the last axis."""
    fine = np.asarray(fine)
    n = fine.shape[-1]
    if n % m:
        raise ValueError(f"{n} fine increments do not split into groups of {m}")
    return fine.reshape(fine.shape[:-1] + (n // m, m)).sum(axis=-1)


def coupled_increments(stream: IncrementStream, m: int) -> IncrementStream:
    """The stream at ``m`` times the step, sharing the same Brownian path."""
    if m < 2:
        raise ValueError("coarsening factor must be >= 2")
    return IncrementStream(stream.master_seed, stream.path_index, stream.base_dt,
                           stream.coarsening * m)
