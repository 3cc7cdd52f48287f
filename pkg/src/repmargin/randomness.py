"""Deterministic, splittable pseudorandom streams.

Shared-randomness experiments need paired runs to consume *identical*
random values no matter how work is scheduled.  A stream here is keyed
by a (seed, label) pair, where the label is a path of names and indices
("algo2", "batch", 17, ...).  Every stream's output is a pure function
of that pair, and consuming one stream never affects another, so draw
order across subsystems is irrelevant.

Draw accounting is explicit and fixed: every value produced by
``uniform``, ``gaussian``, ``rademacher`` or ``integers`` consumes
exactly one 64-bit slot of the underlying counter-based generator.  A
stream is therefore fully described by (seed, label, counter) and can
be reconstructed mid-sequence.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass
from typing import Iterable, Sequence, Union

import numpy as np
from numpy.random import Philox
from scipy.special import ndtri

LabelPart = Union[str, int]

_U53 = float(2**-53)


@dataclass(frozen=True)
class SharedSeed:
    """Opaque nonnegative integer seed, shared across paired runs."""

    value: int

    def __post_init__(self) -> None:
        if not isinstance(self.value, int) or isinstance(self.value, bool):
            raise TypeError("seed must be an int")
        if self.value < 0:
            raise ValueError("seed must be nonnegative")

    @classmethod
    def parse(cls, text: str) -> "SharedSeed":
        """Accept decimal ("12345") or hex ("0xdeadbeef") notation."""
        text = text.strip()
        base = 16 if text.lower().startswith("0x") else 10
        return cls(int(text, base))

    def __str__(self) -> str:
        return str(self.value)


def _as_seed(seed: Union[SharedSeed, int]) -> SharedSeed:
    return seed if isinstance(seed, SharedSeed) else SharedSeed(seed)


def _check_label(label: Sequence[LabelPart]) -> tuple:
    parts = tuple(label)
    for p in parts:
        if isinstance(p, bool) or not isinstance(p, (str, int)):
            raise TypeError(f"label parts must be str or int, got {p!r}")
    return parts


def _derive_key(seed: SharedSeed, label: tuple) -> int:
    """128-bit Philox key from a hash of the (seed, label) pair.

    Each component is length-prefixed so that distinct paths can never
    collide by concatenation (("ab",) vs ("a","b")).
    """
    h = hashlib.sha256()
    s = format(seed.value, "x").encode()
    h.update(len(s).to_bytes(4, "big"))
    h.update(s)
    for part in label:
        enc = (b"i" + str(part).encode()) if isinstance(part, int) else (b"s" + part.encode("utf-8"))
        h.update(len(enc).to_bytes(4, "big"))
        h.update(enc)
    return int.from_bytes(h.digest()[:16], "big")


class RandomStream:
    """A positioned, replayable stream of random values.

    The generator is Philox with a derived 128-bit key; ``counter``
    counts 64-bit draws consumed so far.  Two streams with equal
    (seed, label) produce byte-identical sequences.
    """

    __slots__ = ("seed", "label", "counter", "_key")

    def __init__(self, seed: Union[SharedSeed, int], label: Sequence[LabelPart], counter: int = 0):
        self.seed = _as_seed(seed)
        self.label = _check_label(label)
        if counter < 0:
            raise ValueError("counter must be nonnegative")
        self.counter = counter
        self._key = _derive_key(self.seed, self.label)

    @property
    def label_str(self) -> str:
        return "/".join(str(p) for p in self.label)

    def __repr__(self) -> str:
        return f"RandomStream(seed={self.seed.value}, label={self.label_str!r}, counter={self.counter})"

    def child(self, *parts: LabelPart) -> "RandomStream":
        """Fresh stream for a sub-task; independent of this stream's position."""
        return RandomStream(self.seed, self.label + parts)

    def raw(self, n: int) -> np.ndarray:
        """Next ``n`` raw uint64 draws, advancing the counter by ``n``."""
        if n < 0:
            raise ValueError("n must be nonnegative")
        if n == 0:
            return np.empty(0, dtype=np.uint64)
        # Philox emits blocks of four 64-bit words; position inside a
        # block by discarding counter % 4 leading draws.
        block, within = divmod(self.counter, 4)
        bg = Philox(counter=[block, 0, 0, 0], key=self._key)
        if within:
            bg.random_raw(within)
        out = bg.random_raw(n)
        self.counter += n
        return np.atleast_1d(np.asarray(out, dtype=np.uint64))

    def _unit(self, n: int) -> np.ndarray:
        # top 53 bits -> float64 in [0, 1)
        return (self.raw(n) >> np.uint64(11)) * _U53

    def uniform(self, lo: float = 0.0, hi: float = 1.0, size: int | None = None):
        """Uniform draws in [lo, hi).  One 64-bit slot per value."""
        if not (np.isfinite(lo) and np.isfinite(hi) and lo < hi):
            raise ValueError(f"need finite lo < hi, got [{lo}, {hi})")
        n = 1 if size is None else int(size)
        vals = lo + self._unit(n) * (hi - lo)
        return float(vals[0]) if size is None else vals

    def gaussian(self, mean: float = 0.0, stddev: float = 1.0, size: int | None = None):
        """Normal draws via the inverse CDF.  One 64-bit slot per value.

        The uniform argument is offset to the open interval (0, 1) so the
        result is always finite.
        """
        if not (np.isfinite(stddev) and stddev > 0):
            raise ValueError(f"stddev must be positive, got {stddev}")
        n = 1 if size is None else int(size)
        u = ((self.raw(n) >> np.uint64(11)) + 0.5) * _U53
        vals = mean + stddev * ndtri(u)
        return float(vals[0]) if size is None else vals

    def rademacher(self, size: int | None = None):
        """Draws in {-1, +1} from the low bit.  One 64-bit slot per value."""
        n = 1 if size is None else int(size)
        vals = 1 - 2 * (self.raw(n) & np.uint64(1)).astype(np.int64)
        return int(vals[0]) if size is None else vals

    def integers(self, upper: int, size: int | None = None):
        """Draws in [0, upper).  One 64-bit slot per value.

        Computed as floor(u * upper); the bias against any single value
        is below 2**-53 * upper, negligible for index use.
        """
        if upper < 1:
            raise ValueError("upper must be >= 1")
        n = 1 if size is None else int(size)
        vals = np.minimum((self._unit(n) * upper).astype(np.int64), upper - 1)
        return int(vals[0]) if size is None else vals


def derive_stream(seed: Union[SharedSeed, int], label: Iterable[LabelPart]) -> RandomStream:
    """Stream at position 0 for the given (seed, label) pair."""
    return RandomStream(seed, tuple(label))
