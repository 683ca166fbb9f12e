"""Counter-based Gaussian increments.

Every increment is a pure function of ``(seed, label, particle, step, component)``,
so a run can be evaluated in any order, split over any number of workers, or
replayed for a second (coupled) system and still see identical noise.

The generator is Philox4x32-10 (Salmon et al., SC'11). The 64-bit key is derived
from ``blake2b(seed || label)``; the 128-bit counter is
``(particle, step_lo, step_hi, pair)``. Each Philox block yields four 32-bit words,
which become two 53-bit uniforms and then two normals via Box-Muller.
"""
from __future__ import annotations

import hashlib
from dataclasses import dataclass

import numpy as np

_M0 = np.uint64(0xD2511F53)
_M1 = np.uint64(0xCD9E8D57)
_W0 = 0x9E3779B9
_W1 = 0xBB67AE85
_MASK32 = np.uint64(0xFFFFFFFF)
_SHIFT32 = np.uint64(32)
_ROUNDS = 10


def philox4x32(counter, key):
    """Philox4x32-10 on broadcastable uint32-valued counter words.

    ``counter`` is a sequence of four integer arrays (or scalars) holding 32-bit
    values, ``key`` a pair of Python ints. Returns four uint64 arrays whose values
    fit in 32 bits.
    """
    c0, c1, c2, c3 = (np.asarray(c, dtype=np.uint64) & _MASK32 for c in counter)
    c0, c1, c2, c3 = np.broadcast_arrays(c0, c1, c2, c3)
    k0, k1 = int(key[0]) & 0xFFFFFFFF, int(key[1]) & 0xFFFFFFFF
    for r in range(_ROUNDS):
        if r:
            k0 = (k0 + _W0) & 0xFFFFFFFF
            k1 = (k1 + _W1) & 0xFFFFFFFF
        p0 = _M0 * c0
        p1 = _M1 * c2
        hi0, lo0 = p0 >> _SHIFT32, p0 & _MASK32
        hi1, lo1 = p1 >> _SHIFT32, p1 & _MASK32
        c0, c1, c2, c3 = (
            hi1 ^ c1 ^ np.uint64(k0),
            lo1,
            hi0 ^ c3 ^ np.uint64(k1),
            lo0,
        )
    return c0, c1, c2, c3


def _uniform53(hi, lo):
    # 27 + 26 bits, offset by half an ulp so the value lies strictly inside (0, 1)
    k = (hi >> np.uint64(5)) * np.uint64(1 << 26) + (lo >> np.uint64(6))
    return (k.astype(np.float64) + 0.5) / float(1 << 53)


def _derive_key(seed: int, label: str) -> tuple[int, int]:
    h = hashlib.blake2b(digest_size=8)
    h.update(int(seed).to_bytes(8, "little", signed=False))
    h.update(label.encode("utf-8"))
    k = int.from_bytes(h.digest(), "little")
    return k & 0xFFFFFFFF, k >> 32


@dataclass(frozen=True)
class BrownianSource:
    """Keyed stream of N(0, dt I_n) increments.

    ``increment(i, j)`` depends only on ``(seed, stream_label, i, j)``; the object
    carries no mutable state and is safe to share across threads and processes.
    """

    seed: int
    stream_label: str = "root"
    n: int = 1
    dt: float = 1.0

    def __post_init__(self):
        if not 0 <= int(self.seed) < 2**64:
            raise ValueError(f"seed must fit in 64 unsigned bits, got {self.seed}")
        if self.n < 1:
            raise ValueError(f"noise dimension must be >= 1, got {self.n}")
        if self.dt < 0:
            raise ValueError(f"dt must be >= 0, got {self.dt}")

    @property
    def key(self) -> tuple[int, int]:
        return _derive_key(self.seed, self.stream_label)

    def with_dt(self, dt: float) -> "BrownianSource":
        return BrownianSource(self.seed, self.stream_label, self.n, float(dt))

    def with_dim(self, n: int) -> "BrownianSource":
        return BrownianSource(self.seed, self.stream_label, int(n), self.dt)

    def _blocks(self, particles, step: int, pairs: int):
        particles = np.asarray(particles, dtype=np.int64)
        if particles.size and (particles.min() < 0 or particles.max() >= 2**32):
            raise ValueError("particle indices must lie in [0, 2**32)")
        if step < 0 or step >= 2**64:
            raise ValueError(f"step index must lie in [0, 2**64), got {step}")
        p = particles.astype(np.uint64)[:, None]
        pair = np.arange(pairs, dtype=np.uint64)[None, :]
        return philox4x32((p, step & 0xFFFFFFFF, step >> 32, pair), self.key)

    def uniforms(self, particles, step: int = 0, count: int = 2) -> np.ndarray:
        """Uniforms on (0, 1), shape ``(len(particles), count)``; two per Philox block."""
        pairs = (count + 1) // 2
        w0, w1, w2, w3 = self._blocks(particles, step, pairs)
        u = np.stack([_uniform53(w0, w1), _uniform53(w2, w3)], axis=-1)
        return u.reshape(len(np.atleast_1d(particles)), 2 * pairs)[:, :count]

    def standard_normals(self, particles, step: int, count: int | None = None) -> np.ndarray:
        """Standard normals, shape ``(len(particles), count)`` (default ``n``)."""
        count = self.n if count is None else count
        pairs = (count + 1) // 2
        w0, w1, w2, w3 = self._blocks(particles, step, pairs)
        u1 = _uniform53(w0, w1)
        u2 = _uniform53(w2, w3)
        r = np.sqrt(-2.0 * np.log(u1))
        theta = 2.0 * np.pi * u2
        z = np.stack([r * np.cos(theta), r * np.sin(theta)], axis=-1)
        return z.reshape(z.shape[0], 2 * pairs)[:, :count]

    def increments(self, particles, step: int) -> np.ndarray:
        """Brownian increments for many particles at one step, shape ``(P, n)``."""
        return np.sqrt(self.dt) * self.standard_normals(particles, step)


def gaussian_increment(src: BrownianSource, particle: int, step: int) -> np.ndarray:
    """Single increment dW for one (particle, step), length ``src.n``."""
    if particle < 0 or step < 0:
        raise ValueError("particle and step indices must be non-negative")
    return src.increments(np.array([particle]), step)[0]


def split_stream(src: BrownianSource, label: str) -> BrownianSource:
    """Independent substream; the same label always gives the same stream."""
    return BrownianSource(src.seed, f"{src.stream_label}/{label}", src.n, src.dt)
