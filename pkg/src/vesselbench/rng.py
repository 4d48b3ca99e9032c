"""Counter-based random number generator.

Every stochastic stage of the pipeline (phantom geometry, noise, weight
init, patch sampling, augmentation draws, dataset shuffles) draws from
this generator instead of a global RNG, so a run is a pure function of
its integer seeds. The core is the splitmix64 finalizer applied to
``seed, counter`` pairs: output ``i`` of a stream is ``mix64(seed ^
mix64(i+1))``, which needs no sequential state and therefore vectorizes
and reproduces identically regardless of how draws are batched.

Streams are split with :meth:`CounterRng.derive`, which hashes string or
integer labels into a child seed. Deriving is cheap and collision-safe
for the handful of labels used here; children never share output with
the parent.
"""

from __future__ import annotations

import numpy as np

_MASK = np.uint64(0xFFFFFFFFFFFFFFFF)
_GOLDEN = 0x9E3779B97F4A7C15
_MIX1 = 0xBF58476D1CE4E5B9
_MIX2 = 0x94D049BB133111EB


def _mix64_int(z: int) -> int:
    """splitmix64 finalizer on a Python int (mod 2**64)."""
    z = (z + _GOLDEN) & 0xFFFFFFFFFFFFFFFF
    z = ((z ^ (z >> 30)) * _MIX1) & 0xFFFFFFFFFFFFFFFF
    z = ((z ^ (z >> 27)) * _MIX2) & 0xFFFFFFFFFFFFFFFF
    return z ^ (z >> 31)


def _mix64_array(z: np.ndarray) -> np.ndarray:
    """Vectorized splitmix64 finalizer on a uint64 array."""
    with np.errstate(over="ignore"):
        z = (z + np.uint64(_GOLDEN)) & _MASK
        z = ((z ^ (z >> np.uint64(30))) * np.uint64(_MIX1)) & _MASK
        z = ((z ^ (z >> np.uint64(27))) * np.uint64(_MIX2)) & _MASK
        return z ^ (z >> np.uint64(31))


def _label_to_int(label) -> int:
    if isinstance(label, (int, np.integer)):
        return int(label) & 0xFFFFFFFFFFFFFFFF
    if isinstance(label, str):
        # FNV-1a 64-bit over utf-8 bytes
        h = 0xCBF29CE484222325
        for b in label.encode("utf-8"):
            h = ((h ^ b) * 0x100000001B3) & 0xFFFFFFFFFFFFFFFF
        return h
    raise TypeError(f"rng derive labels must be int or str, got {type(label)!r}")


class CounterRng:
    """Splittable counter-based RNG.

    A stream is defined by a 64-bit seed; draws consume counters
    starting at 0. ``derive(*labels)`` produces an independent child
    stream whose seed mixes the parent seed with the labels.
    """

    def __init__(self, seed: int, counter: int = 0):
        self.seed = int(seed) & 0xFFFFFFFFFFFFFFFF
        self.counter = int(counter)

    def derive(self, *labels) -> "CounterRng":
        s = self.seed
        for lab in labels:
            s = _mix64_int(s ^ _mix64_int(_label_to_int(lab)))
        return CounterRng(s)

    def derive_seed(self, *labels) -> int:
        return self.derive(*labels).seed

    # -- raw draws ---------------------------------------------------------

    def next_u64(self, n: int) -> np.ndarray:
        """Next ``n`` raw 64-bit outputs as a uint64 array."""
        ctr = np.arange(self.counter + 1, self.counter + n + 1, dtype=np.uint64)
        self.counter += n
        return _mix64_array(np.uint64(self.seed) ^ _mix64_array(ctr))

    def uniform(self, n: int | None = None) -> np.ndarray | float:
        """Uniforms in [0, 1) with 53-bit resolution."""
        scalar = n is None
        u = (self.next_u64(1 if scalar else n) >> np.uint64(11)).astype(np.float64)
        u *= 2.0 ** -53
        return float(u[0]) if scalar else u

    def normal(self, n: int | None = None) -> np.ndarray | float:
        """Standard normals via Box-Muller on consecutive uniform pairs."""
        scalar = n is None
        m = 1 if scalar else n
        npairs = (m + 1) // 2
        raw = self.next_u64(2 * npairs)
        # shift into (0, 1] so log() is finite
        u1 = ((raw[:npairs] >> np.uint64(11)).astype(np.float64) + 1.0) * 2.0 ** -53
        u2 = (raw[npairs:] >> np.uint64(11)).astype(np.float64) * 2.0 ** -53
        r = np.sqrt(-2.0 * np.log(u1))
        theta = 2.0 * np.pi * u2
        z = np.concatenate([r * np.cos(theta), r * np.sin(theta)])[:m]
        return float(z[0]) if scalar else z

    # -- convenience draws -------------------------------------------------

    def integers(self, high: int, n: int | None = None) -> np.ndarray | int:
        """Uniform ints in [0, high). Uses floor(u * high); the bias for
        high << 2**53 is far below anything observable here."""
        if high <= 0:
            raise ValueError("high must be positive")
        scalar = n is None
        u = self.uniform(1 if scalar else n)
        v = np.minimum((np.atleast_1d(u) * high).astype(np.int64), high - 1)
        return int(v[0]) if scalar else v

    def choice(self, n_options: int) -> int:
        return self.integers(n_options)

    def shuffle(self, items: list) -> list:
        """Fisher-Yates shuffle; returns a new list."""
        out = list(items)
        for i in range(len(out) - 1, 0, -1):
            j = self.integers(i + 1)
            out[i], out[j] = out[j], out[i]
        return out
