"""Directions, angles and deterministic splittable random streams.

Everything else in the package builds on three primitives defined here:

* ``UnitVec``, a direction in 3-space (instrument orientations, hidden
  spin axes),
* ``angle_between``, the angle of two directions in ``[0, pi]``,
* ``RandomStream``, a counter-based (Philox) random stream addressed by
  a ``(seed, stream)`` pair of 64-bit integers.

Streams are *splittable*: ``split_stream(rng, k)`` derives a child
stream that depends only on the parent's address and ``k``.  Work that
is chunked over ``k`` therefore produces identical output no matter how
many workers execute the chunks, which is what makes every pipeline in
this package reproducible byte for byte.

Scalar angles are plain floats in radians, kept in ``[0, pi]``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numpy.random import Generator, Philox

__all__ = [
    "UnitVec",
    "RandomStream",
    "split_stream",
    "sample_uniform_direction",
    "sample_uniform_directions",
    "angle_between",
    "angle_between_arrays",
]

_U64 = np.uint64
_MASK64 = (1 << 64) - 1


def _splitmix64(x: int) -> int:
    """One SplitMix64 scramble round; a bijection on 64-bit integers."""
    x = (x + 0x9E3779B97F4A7C15) & _MASK64
    z = x
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
    return z ^ (z >> 31)


@dataclass(frozen=True)
class UnitVec:
    """A unit vector in 3-space.

    The squared norm must equal 1 within 1e-9 at construction time;
    use :meth:`from_array` with ``normalize=True`` for raw coordinates.
    """

    x: float
    y: float
    z: float

    def __post_init__(self):
        n2 = self.x * self.x + self.y * self.y + self.z * self.z
        if abs(n2 - 1.0) > 1e-9:
            raise ValueError(f"not a unit vector, |v|^2 = {n2!r}")

    @classmethod
    def from_array(cls, v, normalize: bool = False) -> "UnitVec":
        v = np.asarray(v, dtype=float)
        if normalize:
            n = float(np.linalg.norm(v))
            if n == 0.0:
                raise ValueError("cannot normalize the zero vector")
            v = v / n
        return cls(float(v[0]), float(v[1]), float(v[2]))

    def as_array(self) -> np.ndarray:
        return np.array([self.x, self.y, self.z], dtype=float)

    def dot(self, other: "UnitVec") -> float:
        return self.x * other.x + self.y * other.y + self.z * other.z

    def __neg__(self) -> "UnitVec":
        return UnitVec(-self.x, -self.y, -self.z)


class RandomStream:
    """Deterministic random stream addressed by ``(seed, stream)``.

    Two instances with the same address produce the same value
    sequence; distinct stream indices give statistically independent
    sequences (Philox counter-based generator keyed on the address).
    Instances are cheap; each execution context should own its own.
    """

    __slots__ = ("seed", "stream", "_gen")

    def __init__(self, seed: int, stream: int = 0):
        self.seed = int(seed) & _MASK64
        self.stream = int(stream) & _MASK64
        self._gen: Generator | None = None

    @property
    def generator(self) -> Generator:
        if self._gen is None:
            key = np.array([self.seed, self.stream], dtype=_U64)
            self._gen = Generator(Philox(key=key))
        return self._gen

    def uniform(self, low: float = 0.0, high: float = 1.0, size=None):
        return self.generator.uniform(low, high, size)

    def integers(self, high: int, size=None):
        """Uniform integers in ``[0, high)``."""
        return self.generator.integers(0, high, size=size)

    def split(self, index: int) -> "RandomStream":
        return split_stream(self, index)

    def __repr__(self):
        return f"RandomStream(seed={self.seed}, stream={self.stream})"


def split_stream(rng: RandomStream, index: int) -> RandomStream:
    """Derive the ``index``-th child stream of ``rng``.

    The child address is a pure function of the parent address and
    ``index``; children of one parent are pairwise distinct because the
    scramble is a bijection applied to distinct inputs.
    """
    if index < 0:
        raise ValueError("stream index must be nonnegative")
    child = _splitmix64((_splitmix64(rng.stream) + index + 1) & _MASK64)
    return RandomStream(rng.seed, child)


def sample_uniform_directions(rng: RandomStream, n: int) -> np.ndarray:
    """Sample ``n`` isotropic directions, shape ``(n, 3)``.

    Uses the measure-exact parameterization z ~ U[-1, 1],
    azimuth ~ U[0, 2pi): the inner product with any fixed axis is then
    uniform on [-1, 1], which is the defining property of isotropy.
    """
    z = rng.uniform(-1.0, 1.0, n)
    az = rng.uniform(0.0, 2.0 * np.pi, n)
    rho = np.sqrt(1.0 - z * z)
    return np.stack([rho * np.cos(az), rho * np.sin(az), z], axis=1)


def sample_uniform_direction(rng: RandomStream) -> UnitVec:
    """Sample one isotropic direction."""
    v = sample_uniform_directions(rng, 1)[0]
    return UnitVec(float(v[0]), float(v[1]), float(v[2]))


def angle_between(a: UnitVec, b: UnitVec) -> float:
    """Angle between two directions, in ``[0, pi]``.

    The inner product is clamped to [-1, 1] before the arccos so that
    rounding just outside the domain cannot produce NaN.
    """
    d = a.dot(b)
    return float(np.arccos(min(1.0, max(-1.0, d))))


def angle_between_arrays(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Rowwise angles between two ``(n, 3)`` arrays of unit vectors."""
    d = np.einsum("ij,ij->i", a, b)
    return np.arccos(np.clip(d, -1.0, 1.0))
