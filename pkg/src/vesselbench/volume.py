"""Volume and mask types plus slice/histogram utilities.

Canonical memory layout: the scalar grid is stored as a C-ordered numpy
array indexed ``data[z, y, x]``, so the flat buffer is x-fastest and the
linear index of voxel ``(x, y, z)`` is ``x + nx * (y + ny * z)``. Every
module in the package assumes this layout. Public coordinates are always
``(x, y, z)`` triples.

Volumes and masks are immutable after construction (their arrays are
marked read-only), so they can be shared freely across threads.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import BoundsError, ParameterError, ValidationError

AXES = ("x", "y", "z")


def _freeze(arr: np.ndarray) -> np.ndarray:
    arr = np.ascontiguousarray(arr)
    arr.flags.writeable = False
    return arr


def _check_spacing(spacing) -> tuple[float, float, float]:
    sp = tuple(float(s) for s in spacing)
    if len(sp) != 3:
        raise ValidationError(f"spacing must have 3 components, got {len(sp)}")
    if not all(np.isfinite(s) and s > 0 for s in sp):
        raise ValidationError(f"spacing components must be finite and > 0, got {sp}")
    return sp


@dataclass(eq=False)
class Volume:
    """3D scalar grid with anisotropic voxel spacing in mm.

    ``data`` is float32, shape ``(nz, ny, nx)``. ``spacing`` is
    ``(sx, sy, sz)`` in mm. ``header_meta`` optionally carries the raw
    348-byte header of the file the volume was read from, so orientation
    fields can be passed through verbatim on write.
    """

    data: np.ndarray
    spacing: tuple[float, float, float]
    header_meta: bytes | None = field(default=None, repr=False)

    def __post_init__(self):
        arr = np.asarray(self.data, dtype=np.float32)
        if arr.ndim != 3:
            raise ValidationError(f"volume data must be 3D, got shape {arr.shape}")
        if not np.isfinite(arr).all():
            raise ValidationError("volume contains non-finite values")
        self.data = _freeze(arr)
        self.spacing = _check_spacing(self.spacing)

    @property
    def dims(self) -> tuple[int, int, int]:
        """(nx, ny, nz)"""
        nz, ny, nx = self.data.shape
        return (nx, ny, nz)

    @property
    def n_voxels(self) -> int:
        return self.data.size

    def value_at(self, voxel) -> float:
        x, y, z = voxel
        return float(self.data[z, y, x])

    def with_data(self, data: np.ndarray) -> "Volume":
        """New volume with the same geometry and different values."""
        return Volume(data, self.spacing, self.header_meta)


@dataclass(eq=False)
class LabelMask:
    """Binary 3D grid aligned to a Volume. ``data`` is uint8 in {0, 1}."""

    data: np.ndarray
    spacing: tuple[float, float, float]
    header_meta: bytes | None = field(default=None, repr=False)

    def __post_init__(self):
        arr = np.asarray(self.data)
        if arr.ndim != 3:
            raise ValidationError(f"mask data must be 3D, got shape {arr.shape}")
        if arr.dtype != np.uint8:
            if not np.isin(arr, (0, 1)).all():
                raise ValidationError("mask values must be strictly binary")
            arr = arr.astype(np.uint8)
        elif arr.max(initial=0) > 1:
            raise ValidationError("mask values must be strictly binary")
        self.data = _freeze(arr)
        self.spacing = _check_spacing(self.spacing)

    @property
    def dims(self) -> tuple[int, int, int]:
        nz, ny, nx = self.data.shape
        return (nx, ny, nz)

    @property
    def n_voxels(self) -> int:
        return self.data.size

    def voxel_count(self) -> int:
        """Number of foreground voxels."""
        return int(self.data.sum())

    def matches_geometry(self, other) -> bool:
        return self.data.shape == other.data.shape and np.allclose(
            self.spacing, other.spacing
        )


@dataclass(eq=False)
class SliceImage:
    """One planar cut through a volume.

    ``pixels`` has shape ``(height, width)``; pixel ``(i, j)`` (column i,
    row j) is the voxel whose two in-plane coordinates are ``(i, j)`` in
    the order given by :func:`slice_plane_axes`.
    """

    axis: str
    index: int
    pixels: np.ndarray

    def __post_init__(self):
        if self.axis not in AXES:
            raise ParameterError(f"axis must be one of {AXES}, got {self.axis!r}")
        self.pixels = np.asarray(self.pixels)

    @property
    def width(self) -> int:
        return self.pixels.shape[1]

    @property
    def height(self) -> int:
        return self.pixels.shape[0]


def slice_plane_axes(axis: str) -> tuple[str, str]:
    """(width axis, height axis) of a slice perpendicular to ``axis``."""
    return {"z": ("x", "y"), "y": ("x", "z"), "x": ("y", "z")}[axis]


def extract_slice(v: Volume | LabelMask, axis: str, index: int) -> SliceImage:
    """Planar cut perpendicular to ``axis`` at the given index."""
    if axis not in AXES:
        raise ParameterError(f"axis must be one of {AXES}, got {axis!r}")
    n = v.dims[AXES.index(axis)]
    if not 0 <= index < n:
        raise BoundsError(f"slice index {index} out of range [0, {n}) on axis {axis}")
    if axis == "z":
        pixels = v.data[index]            # (ny, nx)
    elif axis == "y":
        pixels = v.data[:, index, :]      # (nz, nx)
    else:
        pixels = v.data[:, :, index]      # (nz, ny)
    return SliceImage(axis=axis, index=index, pixels=pixels)


def intensity_histogram(v: Volume, bins: int) -> tuple[np.ndarray, np.ndarray]:
    """Histogram of voxel intensities.

    Returns ``(edges, counts)`` with ``len(edges) == bins + 1``; edges
    span [min, max] uniformly and counts sum to the voxel count. A
    constant volume lands in a single occupied bin.
    """
    if bins < 2:
        raise ParameterError(f"bins must be >= 2, got {bins}")
    counts, edges = np.histogram(v.data, bins=bins)
    return edges, counts
