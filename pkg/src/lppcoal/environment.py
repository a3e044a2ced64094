"""Counter-based random environment.

Every draw is a pure function of ``(master_seed, label_path, counter)``: the
label path is hashed into a 64-bit key and the counter is mixed with that key
by a SplitMix64-style finalizer. No generator state exists, so sites can be
evaluated lazily, out of order, or in separate processes without changing a
single bit.
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass, field
from typing import Sequence, Union

import numpy as np

from . import kernels

Label = Union[str, int]
Site = tuple[int, int]


class ParameterError(ValueError):
    """A numeric parameter lies outside its admissible range."""


class DomainError(ValueError):
    """A lattice point or path lies outside the region an operation accepts."""


class BoundsError(IndexError):
    """A site or index falls outside the stored region."""


def _encode_label(label: Label) -> bytes:
    if isinstance(label, bool) or not isinstance(label, (str, int)):
        raise TypeError(f"labels must be str or int, got {type(label).__name__}")
    if isinstance(label, int):
        body = str(label).encode()
        tag = b"i"
    else:
        body = label.encode("utf-8")
        tag = b"s"
    return tag + len(body).to_bytes(4, "little") + body


@dataclass(frozen=True)
class RngStream:
    master_seed: int
    label_path: tuple[Label, ...] = ()
    key: int = field(init=False, repr=False, compare=False)

    def __post_init__(self) -> None:
        if not 0 <= self.master_seed < 2**64:
            raise ParameterError("master_seed must fit in 64 unsigned bits")
        h = hashlib.blake2b(digest_size=8, person=b"lppcoal-rng")
        h.update(self.master_seed.to_bytes(8, "little"))
        for label in self.label_path:
            h.update(_encode_label(label))
        object.__setattr__(self, "label_path", tuple(self.label_path))
        object.__setattr__(self, "key", int.from_bytes(h.digest(), "little"))

    def derive(self, label: Label) -> "RngStream":
        return derive_stream(self, label)

    def uniforms(self, start: int, n: int) -> np.ndarray:
        """Open-interval uniforms for counters ``start .. start+n-1``."""
        if start < 0 or n < 0:
            raise ParameterError("counters are non-negative")
        return kernels.uniform_seq(np.uint64(self.key), start, n)

    def exponentials(self, rate: float, start: int, n: int) -> np.ndarray:
        if not rate > 0:
            raise ParameterError(f"rate must be positive, got {rate}")
        return -np.log(self.uniforms(start, n)) / rate


def derive_stream(parent: RngStream, label: Label) -> RngStream:
    return RngStream(parent.master_seed, parent.label_path + (label,))


def exponential_from_uniform(u: float, rate: float) -> float:
    """Inverse CDF of Exp(rate) at ``u`` in (0, 1]."""
    if not rate > 0:
        raise ParameterError(f"rate must be positive, got {rate}")
    if not 0.0 < u <= 1.0:
        raise ParameterError(f"uniform must lie in (0, 1], got {u}")
    return -math.log(u) / rate


def sample_exponential(stream: RngStream, rate: float, counter: int) -> float:
    if not rate > 0:
        raise ParameterError(f"rate must be positive, got {rate}")
    return float(stream.exponentials(rate, counter, 1)[0])


class WeightField:
    """I.i.d. Exp(1) weights on the rectangle ``[lo, hi]`` (inclusive).

    Site ``x`` draws from counter ``(x1 mod 2^32) << 32 | (x2 mod 2^32)``, so
    two fields built from the same stream agree wherever they overlap.
    """

    def __init__(self, stream: RngStream | None, lo: Site, hi: Site, weights: np.ndarray | None = None):
        lo = (int(lo[0]), int(lo[1]))
        hi = (int(hi[0]), int(hi[1]))
        if hi[0] < lo[0] or hi[1] < lo[1]:
            raise DomainError(f"empty region {lo}..{hi}")
        shape = (hi[0] - lo[0] + 1, hi[1] - lo[1] + 1)
        if weights is None:
            if stream is None:
                raise ParameterError("need a stream or an explicit weight array")
            u = kernels.uniform_block(np.uint64(stream.key), lo[0], lo[1], shape[0], shape[1])
            weights = -np.log(u)
        else:
            weights = np.ascontiguousarray(weights, dtype=np.float64)
            if weights.shape != shape:
                raise ParameterError(f"weights shape {weights.shape} does not match region {shape}")
        weights.setflags(write=False)
        self.stream = stream
        self.lo = lo
        self.hi = hi
        self.weights = weights

    @classmethod
    def from_array(cls, weights: Sequence[Sequence[float]], lo: Site = (0, 0)) -> "WeightField":
        arr = np.asarray(weights, dtype=np.float64)
        hi = (lo[0] + arr.shape[0] - 1, lo[1] + arr.shape[1] - 1)
        return cls(None, lo, hi, arr.copy())

    @property
    def shape(self) -> tuple[int, int]:
        return self.weights.shape

    def contains(self, site: Site) -> bool:
        return self.lo[0] <= site[0] <= self.hi[0] and self.lo[1] <= site[1] <= self.hi[1]

    def block(self, lo: Site, hi: Site) -> np.ndarray:
        """Read-only view of the weights on ``[lo, hi]``."""
        if not (self.contains(lo) and self.contains(hi)):
            raise BoundsError(f"block {lo}..{hi} not inside field {self.lo}..{self.hi}")
        return self.weights[lo[0] - self.lo[0]: hi[0] - self.lo[0] + 1,
                            lo[1] - self.lo[1]: hi[1] - self.lo[1] + 1]

    def reflected(self, apex: Site | None = None) -> "WeightField":
        """Point reflection x -> apex - x (default apex: hi), as a new field."""
        apex = self.hi if apex is None else apex
        lo = (apex[0] - self.hi[0], apex[1] - self.hi[1])
        return WeightField(None, lo, (lo[0] + self.shape[0] - 1, lo[1] + self.shape[1] - 1),
                           self.weights[::-1, ::-1].copy())


def weight_at(field: WeightField, site: Site) -> float:
    if not field.contains(site):
        raise BoundsError(f"site {site} outside field {field.lo}..{field.hi}")
    return float(field.weights[site[0] - field.lo[0], site[1] - field.lo[1]])


def bulk_field(trial: RngStream, lo: Site, hi: Site) -> WeightField:
    """The shared bulk environment of one trial."""
    return WeightField(trial.derive("bulk"), lo, hi)
