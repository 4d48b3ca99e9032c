"""Interactive ground-truth generation: threshold, seed, grow, correct.

The labeling recipe is: pick a high intensity threshold (as a fraction of
the maximum, or of the cumulative histogram), derive one seed per
connected component of the thresholded mask, flood-fill from those seeds,
then paint/erase manual corrections. Sessions record threshold, seeds and
the edit log so a saved mask can be replayed exactly.

Connectivity is 26-connected throughout (vessels cross voxel corners
diagonally); the same convention is reused by post-processing.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage

from .errors import BoundsError, ParameterError
from .volume import LabelMask, Volume

THRESHOLD_FRACTION_RANGE = (0.90, 0.999)

_STRUCT_26 = np.ones((3, 3, 3), dtype=bool)


def threshold_value(v: Volume, fraction: float, mode: str = "max") -> float:
    """Intensity threshold at ``fraction`` of the maximum (or quantile).

    mode "max": fraction * max(v). mode "percentile": the smallest
    intensity whose cumulative rank reaches ``fraction`` (the
    ceil(fraction*n)-th order statistic).
    """
    if not 0.0 < fraction <= 1.0:
        raise ParameterError(f"fraction must be in (0, 1], got {fraction}")
    if mode == "max":
        return fraction * float(v.data.max())
    if mode == "percentile":
        flat = np.sort(v.data, axis=None)
        k = int(np.ceil(fraction * flat.size)) - 1
        return float(flat[k])
    raise ParameterError(f"mode must be 'max' or 'percentile', got {mode!r}")


def apply_threshold(v: Volume, t: float) -> LabelMask:
    """Mask of voxels with intensity >= t."""
    return LabelMask((v.data >= t).astype(np.uint8), v.spacing)


def seeds_from_mask(v: Volume, m: LabelMask) -> list[tuple[int, int, int]]:
    """One seed per 26-connected component: its maximum-intensity voxel.

    Ties resolve to the lowest linear index (x-fastest order). Seeds are
    (x, y, z) tuples. Empty mask gives an empty list.
    """
    labels, n = ndimage.label(m.data, structure=_STRUCT_26)
    if n == 0:
        return []
    comp_max = ndimage.maximum(v.data, labels=labels, index=np.arange(1, n + 1))
    flat_labels = labels.ravel()
    flat_data = v.data.ravel()
    lookup = np.empty(n + 1, dtype=v.data.dtype)
    lookup[0] = np.inf  # background never matches
    lookup[1:] = comp_max
    hits = np.flatnonzero(flat_data == lookup[flat_labels])
    # hits are ascending in linear (x-fastest) order; unique() keeps the
    # first occurrence per component, i.e. the lowest linear index on ties
    comp_ids, first = np.unique(flat_labels[hits], return_index=True)
    seeds_flat = hits[first]
    order = np.argsort(comp_ids)
    nzy, nyx = labels.shape[1] * labels.shape[2], labels.shape[2]
    seeds = []
    for f in seeds_flat[order]:
        z, rem = divmod(int(f), nzy)
        y, x = divmod(rem, nyx)
        seeds.append((x, y, z))
    return seeds


def _check_seeds(dims, seeds):
    nx, ny, nz = dims
    for s in seeds:
        if len(s) != 3:
            raise ParameterError(f"seed {s!r} is not an (x, y, z) triple")
        x, y, z = s
        if not (0 <= x < nx and 0 <= y < ny and 0 <= z < nz):
            raise BoundsError(f"seed {tuple(s)} outside dims {dims}")


def region_grow(v: Volume, seeds, low: float) -> LabelMask:
    """Union of 26-connected components of {intensity >= low} hit by seeds.

    Seeds whose own intensity is below ``low`` contribute nothing.
    """
    _check_seeds(v.dims, seeds)
    above = v.data >= low
    labels, n = ndimage.label(above, structure=_STRUCT_26)
    keep = set()
    for x, y, z in seeds:
        lab = int(labels[z, y, x])
        if lab > 0:
            keep.add(lab)
    if not keep:
        out = np.zeros_like(labels, dtype=np.uint8)
    else:
        out = np.isin(labels, sorted(keep)).astype(np.uint8)
    return LabelMask(out, v.spacing)


@dataclass
class AnnotationSession:
    """Mutable labeling state for one volume.

    The working mask is always reproducible from (threshold fraction,
    mode, seeds, edit log): growing resets the mask and the edit log,
    edits append to the log. ``revision`` increments on every mutation
    so concurrent writers can detect staleness.
    """

    case_id: str
    volume: Volume
    threshold_fraction: float = 0.97
    threshold_mode: str = "max"
    seeds: list[tuple[int, int, int]] = field(default_factory=list)
    seeds_are_auto: bool = True
    edit_log: list[dict] = field(default_factory=list)
    revision: int = 0

    def __post_init__(self):
        self._working = np.zeros(self.volume.data.shape, dtype=np.uint8)
        self._grown = False

    # -- queries -----------------------------------------------------------

    @property
    def threshold(self) -> float:
        return threshold_value(self.volume, self.threshold_fraction, self.threshold_mode)

    def thresholded_mask(self) -> LabelMask:
        return apply_threshold(self.volume, self.threshold)

    def working_mask(self) -> LabelMask:
        return LabelMask(self._working.copy(), self.volume.spacing)

    # -- mutations ---------------------------------------------------------

    def set_threshold(self, fraction: float, mode: str = "max",
                      clamp_range=THRESHOLD_FRACTION_RANGE) -> float:
        if clamp_range is not None:
            lo, hi = clamp_range
            if not lo <= fraction <= hi:
                raise ParameterError(
                    f"threshold fraction {fraction} outside allowed range "
                    f"[{lo}, {hi}]"
                )
        elif not 0.0 < fraction <= 1.0:
            raise ParameterError(f"fraction must be in (0, 1], got {fraction}")
        if mode not in ("max", "percentile"):
            raise ParameterError(f"mode must be 'max' or 'percentile', got {mode!r}")
        self.threshold_fraction = float(fraction)
        self.threshold_mode = mode
        self.revision += 1
        return self.threshold

    def set_seeds(self, add=(), remove=()) -> list[tuple[int, int, int]]:
        add = [tuple(int(c) for c in s) for s in add]
        remove = {tuple(int(c) for c in s) for s in remove}
        _check_seeds(self.volume.dims, add)
        if self.seeds_are_auto:
            self.seeds = []
            self.seeds_are_auto = False
        self.seeds = [s for s in self.seeds if s not in remove]
        self.seeds.extend(s for s in add if s not in self.seeds)
        self.revision += 1
        return self.seeds

    def grow(self) -> LabelMask:
        """Region-grow from the session seeds (auto-derived if none set)."""
        if self.seeds_are_auto:
            self.seeds = seeds_from_mask(self.volume, self.thresholded_mask())
        mask = region_grow(self.volume, self.seeds, self.threshold)
        self._working = mask.data.copy()
        self._grown = True
        self.edit_log = []
        self.revision += 1
        return mask


def apply_edit(session: AnnotationSession, edit: dict) -> AnnotationSession:
    """Paint or erase the listed voxels; appends to the session edit log.

    edit = {"op": "paint" | "erase", "voxels": [(x, y, z), ...]}. Raises
    before mutating anything if any voxel is out of bounds.
    """
    op = edit.get("op")
    if op not in ("paint", "erase"):
        raise ParameterError(f"edit op must be 'paint' or 'erase', got {op!r}")
    voxels = [tuple(int(c) for c in vox) for vox in edit.get("voxels", [])]
    _check_seeds(session.volume.dims, voxels)
    value = 1 if op == "paint" else 0
    work = session._working
    for x, y, z in voxels:
        work[z, y, x] = value
    session.edit_log.append({"op": op, "voxels": [list(v) for v in voxels]})
    session.revision += 1
    return session


# -- persistence -------------------------------------------------------------


def session_to_json(session: AnnotationSession) -> str:
    return json.dumps(
        {
            "schema": "vesselbench-session/1",
            "case_id": session.case_id,
            "threshold_fraction": session.threshold_fraction,
            "threshold_mode": session.threshold_mode,
            "seeds": [list(s) for s in session.seeds],
            "seeds_are_auto": session.seeds_are_auto,
            "edit_log": session.edit_log,
            "revision": session.revision,
        },
        indent=2,
    )


def session_from_json(text: str, volume: Volume) -> AnnotationSession:
    """Rebuild a session by replaying threshold -> grow -> edits."""
    raw = json.loads(text)
    session = AnnotationSession(
        case_id=raw["case_id"],
        volume=volume,
        threshold_fraction=raw["threshold_fraction"],
        threshold_mode=raw["threshold_mode"],
    )
    if not raw["seeds_are_auto"]:
        session.set_seeds(add=[tuple(s) for s in raw["seeds"]])
    session.grow()
    for edit in raw["edit_log"]:
        apply_edit(session, edit)
    session.revision = raw["revision"]
    return session
