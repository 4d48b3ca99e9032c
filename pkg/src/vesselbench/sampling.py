"""Balanced patch and slice extraction for training.

Patches are classed by their center voxel: if the ground truth labels it
as vessel the patch counts towards the vessel quota (80% by default).
Patches never cross the volume border; candidate centers are restricted
to positions where the whole patch fits (no padding), which keeps patch
statistics clean. Even patch sizes use floor(dim/2) as the center index.

Full-slice mode feeds whole (zero-padded) z-slices to the 2D network.
Center-voxel classing is meaningless for a sample whose position is
fixed, so a slice counts as "vessel" when it contains any vessel voxel.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import BoundsError, ParameterError, SamplingError
from .rng import CounterRng
from .volume import LabelMask, Volume

PATCH_MODES = {
    "patch2d-64": (64, 64),
    "patch3d-16": (16, 16, 16),
    "patch3d-64": (64, 64, 64),
    "slice2d": None,
}


@dataclass(frozen=True)
class PatchSpec:
    """What to sample: mode, how many, class balance, and the RNG seed."""

    mode: str
    count: int
    vessel_fraction: float = 0.8
    rng_seed: int = 0

    def __post_init__(self):
        if self.mode not in PATCH_MODES:
            raise ParameterError(
                f"mode must be one of {sorted(PATCH_MODES)}, got {self.mode!r}"
            )
        if not 0.0 <= self.vessel_fraction <= 1.0:
            raise ParameterError(
                f"vessel_fraction must be in [0, 1], got {self.vessel_fraction}"
            )
        if self.count < 1:
            raise ParameterError(f"count must be >= 1, got {self.count}")

    @property
    def patch_dims(self) -> tuple[int, ...] | None:
        """(dx, dy) or (dx, dy, dz); None for full slices."""
        return PATCH_MODES[self.mode]


@dataclass
class PatchItem:
    image: np.ndarray   # (dy, dx) or (dz, dy, dx), float32
    label: np.ndarray   # same shape, uint8
    case_id: str
    center: tuple[int, int, int]
    is_vessel: bool


@dataclass
class PatchBatch:
    items: list[PatchItem] = field(default_factory=list)

    def __len__(self):
        return len(self.items)

    def images(self) -> np.ndarray:
        return np.stack([it.image for it in self.items])

    def labels(self) -> np.ndarray:
        return np.stack([it.label for it in self.items])


@dataclass(frozen=True)
class LabeledCase:
    """A volume paired with its ground truth, as fed to the sampler."""

    case_id: str
    volume: Volume
    mask: LabelMask


def vessel_patch_quota(count: int, vessel_fraction: float = 0.8) -> int:
    return int(round(vessel_fraction * count))


def extract_patch(v: Volume, m: LabelMask, center, dims):
    """Cut an image/label patch centered (by floor(dim/2)) at ``center``.

    ``dims`` is (dx, dy) for an in-plane patch on the slice z=center[2],
    or (dx, dy, dz) for a volumetric patch. Raises BoundsError if the
    patch would exceed the volume.
    """
    cx, cy, cz = (int(c) for c in center)
    nx, ny, nz = v.dims
    if len(dims) == 2:
        dx, dy = dims
        dz = 1
        if not 0 <= cz < nz:
            raise BoundsError(f"center z={cz} outside [0, {nz})")
        z0 = cz
    elif len(dims) == 3:
        dx, dy, dz = dims
        z0 = cz - dz // 2
        if z0 < 0 or z0 + dz > nz:
            raise BoundsError(f"patch dims {dims} at center {center} exceed z extent {nz}")
    else:
        raise ParameterError(f"dims must have 2 or 3 components, got {dims}")
    x0 = cx - dx // 2
    y0 = cy - dy // 2
    if x0 < 0 or x0 + dx > nx or y0 < 0 or y0 + dy > ny:
        raise BoundsError(
            f"patch dims {dims} at center {center} exceed extents {(nx, ny, nz)}"
        )
    img = v.data[z0:z0 + dz, y0:y0 + dy, x0:x0 + dx]
    lab = m.data[z0:z0 + dz, y0:y0 + dy, x0:x0 + dx]
    if len(dims) == 2:
        img, lab = img[0], lab[0]
    return np.ascontiguousarray(img), np.ascontiguousarray(lab)


def _eligible_centers(case: LabeledCase, dims, want_vessel: bool) -> np.ndarray:
    """(k, 3) array of (x, y, z) centers where the patch fits and the
    center voxel has the requested class."""
    nx, ny, nz = case.volume.dims
    dx, dy = dims[0], dims[1]
    x_lo, x_hi = dx // 2, nx - dx + dx // 2
    y_lo, y_hi = dy // 2, ny - dy + dy // 2
    if len(dims) == 3:
        dz = dims[2]
        z_lo, z_hi = dz // 2, nz - dz + dz // 2
    else:
        z_lo, z_hi = 0, nz - 1
    if x_hi < x_lo or y_hi < y_lo or z_hi < z_lo:
        return np.empty((0, 3), dtype=np.int64)
    interior = case.mask.data[z_lo:z_hi + 1, y_lo:y_hi + 1, x_lo:x_hi + 1]
    zz, yy, xx = np.nonzero(interior == (1 if want_vessel else 0))
    return np.stack([xx + x_lo, yy + y_lo, zz + z_lo], axis=1)


def sample_balanced(cases: list[LabeledCase], spec: PatchSpec) -> PatchBatch:
    """Draw ``spec.count`` patches with an exact vessel/non-vessel split.

    Exactly round(vessel_fraction * count) samples are vessel-class;
    the rest are non-vessel. Each draw picks a case uniformly, then an
    eligible center uniformly within it. Deterministic in spec.rng_seed.
    """
    if not cases:
        raise ParameterError("no cases to sample from")
    if spec.mode == "slice2d":
        return _sample_balanced_slices(cases, spec)
    dims = spec.patch_dims
    rng = CounterRng(spec.rng_seed)
    n_vessel = vessel_patch_quota(spec.count, spec.vessel_fraction)
    cache: dict[tuple[int, bool], np.ndarray] = {}
    batch = PatchBatch()
    for i in range(spec.count):
        want_vessel = i < n_vessel
        ci = rng.integers(len(cases))
        case = cases[ci]
        key = (ci, want_vessel)
        if key not in cache:
            cache[key] = _eligible_centers(case, dims, want_vessel)
        centers = cache[key]
        if centers.shape[0] == 0:
            cls = "vessel" if want_vessel else "non-vessel"
            raise SamplingError(
                f"case {case.case_id!r} has no eligible {cls} center for dims {dims}"
            )
        center = tuple(int(c) for c in centers[rng.integers(centers.shape[0])])
        img, lab = extract_patch(case.volume, case.mask, center, dims)
        batch.items.append(PatchItem(img.astype(np.float32), lab, case.case_id,
                                     center, want_vessel))
    return batch


# -- full slices -------------------------------------------------------------


def extract_slices(v: Volume, m: LabelMask, axis: str = "z"):
    """All (image slice, label slice) pairs along ``axis``, ascending."""
    from .volume import extract_slice

    n = v.dims[{"x": 0, "y": 1, "z": 2}[axis]]
    out = []
    for idx in range(n):
        out.append((extract_slice(v, axis, idx), extract_slice(m, axis, idx).pixels))
    return out


def padded_slice_shape(cases: list[LabeledCase]) -> tuple[int, int]:
    """(height, width) = max in-plane dims over cases, rounded up to 8."""
    h = max(c.volume.dims[1] for c in cases)
    w = max(c.volume.dims[0] for c in cases)
    rounded = lambda n: ((n + 7) // 8) * 8
    return rounded(h), rounded(w)


def pad_slice(arr: np.ndarray, shape: tuple[int, int], fill=0) -> np.ndarray:
    """Zero-pad (bottom/right) or crop a 2D array to ``shape``."""
    h, w = shape
    arr = arr[:h, :w]
    if arr.shape == (h, w):
        return np.ascontiguousarray(arr)
    out = np.full((h, w), fill, dtype=arr.dtype)
    out[: arr.shape[0], : arr.shape[1]] = arr
    return out


def _sample_balanced_slices(cases: list[LabeledCase], spec: PatchSpec) -> PatchBatch:
    rng = CounterRng(spec.rng_seed)
    n_vessel = vessel_patch_quota(spec.count, spec.vessel_fraction)
    shape = padded_slice_shape(cases)
    cache: dict[tuple[int, bool], np.ndarray] = {}
    batch = PatchBatch()
    for i in range(spec.count):
        want_vessel = i < n_vessel
        ci = rng.integers(len(cases))
        case = cases[ci]
        key = (ci, want_vessel)
        if key not in cache:
            has_vessel = case.mask.data.any(axis=(1, 2))
            cache[key] = np.nonzero(has_vessel == want_vessel)[0]
        zs = cache[key]
        if zs.size == 0:
            cls = "vessel-bearing" if want_vessel else "vessel-free"
            raise SamplingError(f"case {case.case_id!r} has no {cls} slice")
        z = int(zs[rng.integers(zs.size)])
        img = pad_slice(case.volume.data[z], shape).astype(np.float32)
        lab = pad_slice(case.mask.data[z], shape)
        nx, ny, _ = case.volume.dims
        batch.items.append(PatchItem(img, lab, case.case_id,
                                     (nx // 2, ny // 2, z), want_vessel))
    return batch
