"""HTTP facade over annotation sessions.

Thin by design: every mutation maps 1:1 onto a groundtruth-module
operation, so the session JSON replays to exactly the served state.
Mutating requests must carry the session revision they were based on;
a stale revision gets 409 and the client re-reads. Slices stream as
PNG (grayscale in L, mask overlay in the alpha channel) so the client
never downloads whole volumes.
"""

from __future__ import annotations

import io
import os
import threading
import uuid

import numpy as np
from fastapi import FastAPI, HTTPException, Query, Response
from fastapi.middleware.cors import CORSMiddleware
from fastapi.staticfiles import StaticFiles
from pydantic import BaseModel
from PIL import Image

from .errors import VesselBenchError
from .groundtruth import (
    AnnotationSession,
    apply_edit,
    session_from_json,
    session_to_json,
)
from .nifti import read_nifti, write_nifti
from .volume import AXES, extract_slice


class ThresholdBody(BaseModel):
    fraction: float
    mode: str = "max"
    revision: int
    unclamped: bool = False


class SeedsBody(BaseModel):
    add: list[list[int]] = []
    remove: list[list[int]] = []
    revision: int


class GrowBody(BaseModel):
    revision: int


class EditBody(BaseModel):
    op: str
    voxels: list[list[int]]
    revision: int


class SaveBody(BaseModel):
    revision: int


class _SessionBox:
    """Session plus the lock serializing its mutations."""

    def __init__(self, session: AnnotationSession):
        self.session = session
        self.lock = threading.Lock()


def _window_to_u8(pixels: np.ndarray, lo: float, hi: float) -> np.ndarray:
    if hi <= lo:
        hi = lo + 1.0
    scaled = (pixels.astype(np.float64) - lo) / (hi - lo)
    return (np.clip(scaled, 0.0, 1.0) * 255.0).astype(np.uint8)


def create_app(data_dir: str) -> FastAPI:
    if not os.path.isdir(data_dir):
        raise VesselBenchError(f"data directory {data_dir!r} does not exist")
    app = FastAPI(title="vesselbench annotator")
    app.add_middleware(
        CORSMiddleware,
        allow_origins=["*"],
        allow_methods=["*"],
        allow_headers=["*"],
    )
    sessions: dict[str, _SessionBox] = {}

    def list_volume_ids() -> list[str]:
        out = []
        for name in sorted(os.listdir(data_dir)):
            if name.endswith(".nii") and not name.endswith(("_gt.nii", "_label.nii")):
                out.append(name[:-4])
        return out

    def get_box(sid: str) -> _SessionBox:
        box = sessions.get(sid)
        if box is None:
            raise HTTPException(status_code=404, detail=f"unknown session {sid!r}")
        return box

    def check_revision(session: AnnotationSession, revision: int):
        if revision != session.revision:
            raise HTTPException(
                status_code=409,
                detail={
                    "error": "stale revision",
                    "yours": revision,
                    "current": session.revision,
                },
            )

    def run_op(fn):
        try:
            return fn()
        except VesselBenchError as exc:
            raise HTTPException(status_code=400, detail=str(exc)) from exc

    @app.get("/volumes")
    def volumes():
        out = []
        for vid in list_volume_ids():
            v = read_nifti(os.path.join(data_dir, f"{vid}.nii"), kind="volume")
            out.append({"id": vid, "dims": list(v.dims), "spacing": list(v.spacing)})
        return out

    @app.post("/volumes/{vid}/open")
    def open_volume(vid: str):
        path = os.path.join(data_dir, f"{vid}.nii")
        if not os.path.exists(path):
            raise HTTPException(status_code=404, detail=f"no volume {vid!r}")
        volume = read_nifti(path, kind="volume")
        session_path = os.path.join(data_dir, f"{vid}_session.json")
        if os.path.exists(session_path):
            with open(session_path) as f:
                session = session_from_json(f.read(), volume)
        else:
            session = AnnotationSession(case_id=vid, volume=volume)
        sid = uuid.uuid4().hex[:12]
        sessions[sid] = _SessionBox(session)
        return {
            "session_id": sid,
            "case_id": vid,
            "dims": list(volume.dims),
            "spacing": list(volume.spacing),
            "revision": session.revision,
            "threshold_fraction": session.threshold_fraction,
            "threshold_mode": session.threshold_mode,
            "seeds": [list(s) for s in session.seeds],
        }

    @app.get("/sessions/{sid}/histogram")
    def histogram(sid: str, bins: int = Query(default=256, ge=2, le=4096)):
        from .volume import intensity_histogram

        box = get_box(sid)
        edges, counts = run_op(lambda: intensity_histogram(box.session.volume, bins))
        return {"edges": edges.tolist(), "counts": counts.tolist()}

    @app.post("/sessions/{sid}/threshold")
    def set_threshold(sid: str, body: ThresholdBody):
        box = get_box(sid)
        with box.lock:
            check_revision(box.session, body.revision)
            clamp = None if body.unclamped else (0.90, 0.999)
            value = run_op(
                lambda: box.session.set_threshold(body.fraction, body.mode,
                                                  clamp_range=clamp)
            )
            selected = int(box.session.thresholded_mask().data.sum())
            return {
                "threshold_value": value,
                "voxels_selected": selected,
                "revision": box.session.revision,
            }

    @app.post("/sessions/{sid}/seeds")
    def set_seeds(sid: str, body: SeedsBody):
        box = get_box(sid)
        with box.lock:
            check_revision(box.session, body.revision)
            seeds = run_op(lambda: box.session.set_seeds(body.add, body.remove))
            return {"seeds": [list(s) for s in seeds],
                    "revision": box.session.revision}

    @app.post("/sessions/{sid}/grow")
    def grow(sid: str, body: GrowBody):
        box = get_box(sid)
        with box.lock:
            check_revision(box.session, body.revision)
            mask = run_op(box.session.grow)
            return {
                "mask_voxels": mask.voxel_count(),
                "seeds": [list(s) for s in box.session.seeds],
                "revision": box.session.revision,
            }

    @app.post("/sessions/{sid}/edits")
    def edits(sid: str, body: EditBody):
        box = get_box(sid)
        with box.lock:
            check_revision(box.session, body.revision)
            run_op(lambda: apply_edit(box.session,
                                      {"op": body.op, "voxels": body.voxels}))
            return {
                "revision": box.session.revision,
                "mask_voxels": int(box.session._working.sum()),
            }

    @app.get("/sessions/{sid}/slice")
    def slice_image(
        sid: str,
        axis: str = "z",
        index: int = 0,
        overlay: int = 1,
        format: str = "png",
        preview: int = 0,
    ):
        box = get_box(sid)
        if axis not in AXES:
            raise HTTPException(status_code=400, detail=f"axis must be one of {AXES}")
        session = box.session
        img = run_op(lambda: extract_slice(session.volume, axis, index))
        if preview:
            mask_data = session.thresholded_mask().data
        else:
            mask_data = session._working
        if axis == "z":
            mpix = mask_data[index]
        elif axis == "y":
            mpix = mask_data[:, index, :]
        else:
            mpix = mask_data[:, :, index]
        if format == "json":
            return {
                "axis": axis,
                "index": index,
                "width": img.width,
                "height": img.height,
                "pixels": img.pixels.tolist(),
                "mask": mpix.tolist() if overlay else None,
            }
        lo = float(session.volume.data.min())
        hi = float(session.volume.data.max())
        gray = _window_to_u8(img.pixels, lo, hi)
        if overlay:
            la = np.stack([gray, (mpix > 0).astype(np.uint8) * 255], axis=-1)
            pil = Image.fromarray(la, mode="LA")
        else:
            pil = Image.fromarray(gray, mode="L")
        buf = io.BytesIO()
        pil.save(buf, format="PNG")
        return Response(content=buf.getvalue(), media_type="image/png")

    @app.post("/sessions/{sid}/save")
    def save(sid: str, body: SaveBody):
        box = get_box(sid)
        with box.lock:
            check_revision(box.session, body.revision)
            session = box.session
            mask_path = os.path.join(data_dir, f"{session.case_id}_label.nii")
            session_path = os.path.join(data_dir, f"{session.case_id}_session.json")
            write_nifti(session.working_mask(), mask_path)
            with open(session_path, "w") as f:
                f.write(session_to_json(session))
                f.write("\n")
            return {
                "mask_path": mask_path,
                "session_path": session_path,
                "revision": session.revision,
            }

    ui_dir = os.environ.get(
        "VESSELBENCH_UI_DIR",
        os.path.join(os.path.dirname(__file__), "..", "..", "frontend", "dist"),
    )
    if os.path.isdir(ui_dir):
        app.mount("/", StaticFiles(directory=ui_dir, html=True), name="ui")
    return app


def serve(data_dir: str, port: int = 8080, host: str = "127.0.0.1"):
    import uvicorn

    uvicorn.run(create_app(data_dir), host=host, port=port, log_level="warning")
