"""Training-time augmentation: Gaussian blur, right-angle rotation, flips.

Rotations are restricted to quarter turns and flips to axis mirrors, so
image and label undergo the exact same index permutation and labels stay
binary — no interpolation ambiguity. Blur touches only the image.

Rotation convention: one quarter turn in the plane (a, b) maps in-plane
index (i, j) to (j, n-1-i).
"""

from __future__ import annotations

import math
from itertools import combinations

import numpy as np

from .errors import GeometryError, ParameterError
from .rng import CounterRng
from .sampling import PatchBatch, PatchItem

REGIMES = ("none", "blur", "rotflip", "all")

BLUR_PROBABILITY = 0.5
BLUR_SIGMA_RANGE = (0.5, 1.5)


def gaussian_kernel(sigma: float) -> np.ndarray:
    """1D Gaussian of radius ceil(3*sigma), renormalized to sum 1."""
    r = int(math.ceil(3.0 * sigma))
    xs = np.arange(-r, r + 1, dtype=np.float64)
    k = np.exp(-0.5 * (xs / sigma) ** 2)
    return k / k.sum()


def gaussian_blur(patch: np.ndarray, sigma_voxels: float) -> np.ndarray:
    """Separable Gaussian blur with reflect padding; preserves total mass
    away from borders."""
    if sigma_voxels <= 0:
        raise ParameterError(f"sigma must be > 0, got {sigma_voxels}")
    k = gaussian_kernel(sigma_voxels).astype(np.float64)
    r = (len(k) - 1) // 2
    out = patch.astype(np.float64)
    for ax in range(patch.ndim):
        pad = [(0, 0)] * patch.ndim
        pad[ax] = (r, r)
        padded = np.pad(out, pad, mode="reflect")
        windows = np.lib.stride_tricks.sliding_window_view(padded, len(k), axis=ax)
        out = windows @ k
    return out.astype(patch.dtype, copy=False)


def rotate90(image: np.ndarray, label: np.ndarray, axes: tuple[int, int], k: int):
    """Rotate image and label by k quarter turns in the plane ``axes``.

    Requires the two in-plane dims to be equal so shapes are preserved.
    """
    a, b = axes
    if image.shape[a] != image.shape[b]:
        raise GeometryError(
            f"rotation plane {axes} is not square: {image.shape[a]} vs {image.shape[b]}"
        )
    if k % 4 == 0:
        return image.copy(), label.copy()
    # (i, j) -> (j, n-1-i) is a clockwise np.rot90 in plane (a, b)
    img = np.rot90(image, k=-k, axes=(a, b))
    lab = np.rot90(label, k=-k, axes=(a, b))
    return np.ascontiguousarray(img), np.ascontiguousarray(lab)


def flip(image: np.ndarray, label: np.ndarray, axis: int):
    """Mirror image and label along ``axis``; applying twice is identity."""
    if not -image.ndim <= axis < image.ndim:
        raise ParameterError(f"axis {axis} invalid for ndim {image.ndim}")
    return (
        np.ascontiguousarray(np.flip(image, axis=axis)),
        np.ascontiguousarray(np.flip(label, axis=axis)),
    )


def _eligible_planes(shape: tuple[int, ...]) -> list[tuple[int, int]]:
    return [(a, b) for a, b in combinations(range(len(shape)), 2)
            if shape[a] == shape[b]]


def augment_batch(batch: PatchBatch, regime: str, rng_seed: int) -> PatchBatch:
    """Apply a named augmentation regime with independent per-patch draws.

    blur: p=0.5, sigma ~ U[0.5, 1.5] voxels. rotflip: a uniform quarter
    turn about a random eligible plane plus independent p=0.5 flips per
    axis. "all" composes blur then rotflip; "none" returns copies.
    """
    if regime not in REGIMES:
        raise ParameterError(f"regime must be one of {REGIMES}, got {regime!r}")
    root = CounterRng(rng_seed)
    out = PatchBatch()
    for i, item in enumerate(batch.items):
        img, lab = item.image.copy(), item.label.copy()
        rng = root.derive("patch", i)
        if regime in ("blur", "all"):
            if rng.uniform() < BLUR_PROBABILITY:
                lo, hi = BLUR_SIGMA_RANGE
                sigma = lo + (hi - lo) * rng.uniform()
                img = gaussian_blur(img, sigma)
        if regime in ("rotflip", "all"):
            planes = _eligible_planes(img.shape)
            if planes:
                plane = planes[rng.integers(len(planes))]
                k = rng.integers(4)
                if k:
                    img, lab = rotate90(img, lab, plane, k)
            for ax in range(img.ndim):
                if rng.uniform() < 0.5:
                    img, lab = flip(img, lab, ax)
        out.items.append(PatchItem(img, lab, item.case_id, item.center, item.is_vessel))
    return out
