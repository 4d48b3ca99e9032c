"""Training, whole-volume inference, post-processing, and the a-e
experiment matrix.

The fixed processing order for a test volume is: z-score preprocessing,
tiled prediction, binarization at probability > 0.7 (strict), removal of
26-connected components under 200 voxels (strict), then evaluation.

Experiments:

    a  patches, no augmentation
    b  patches, Gaussian blur
    c  patches, rotation and flipping
    d  patches, blur + rotation + flipping
    e  larger patches (3D) or full slices (2D), blur + rotation + flipping

All five run on one shared train/val/test split and are deterministic
given their seeds.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np
from scipy import ndimage

from .augment import augment_batch
from .errors import ConfigError, InferenceError, TrainingError, ValidationError
from .metrics import CaseMetrics, MetricReport, evaluate_pair, wilcoxon_signed_rank
from .nn import (
    AdamState,
    UNet,
    UNetConfig,
    UNetParams,
    adam_step,
    build_unet,
    dice_loss,
)
from .preprocess import zscore_normalize
from .rng import CounterRng
from .sampling import LabeledCase, PatchBatch, PatchSpec, pad_slice, sample_balanced
from .volume import LabelMask, Volume
from .errors import VesselBenchError

_STRUCT_26 = np.ones((3, 3, 3), dtype=bool)

EXPERIMENT_IDS = ("a", "b", "c", "d", "e")

#: experiment id -> (mode key, augmentation regime); mode key "patch" is the
#: dimensionality's standard patch, "large" the big-patch/slice variant.
EXPERIMENT_TABLE = {
    "a": ("patch", "none"),
    "b": ("patch", "blur"),
    "c": ("patch", "rotflip"),
    "d": ("patch", "all"),
    "e": ("large", "all"),
}

REGIME_LABELS = {
    "none": "None",
    "blur": "Gaussian blur",
    "rotflip": "Rotation and flipping",
    "all": "Gaussian blur, rotation and flipping",
}

DEFAULT_RATIOS = (0.64, 0.16, 0.20)


def _mode_for(exp_id: str, ndim: int) -> str:
    kind = EXPERIMENT_TABLE[exp_id][0]
    if ndim == 2:
        return "patch2d-64" if kind == "patch" else "slice2d"
    return "patch3d-16" if kind == "patch" else "patch3d-64"


@dataclass(frozen=True)
class ExperimentSpec:
    """One row of the experiment matrix, fully seeded."""

    exp_id: str
    ndim: int
    mode: str
    regime: str
    ratios: tuple[float, float, float] = DEFAULT_RATIOS
    epochs: int = 30
    patches_per_epoch: int = 500
    batch_size: int = 8
    val_patches: int = 100
    depth: int = 2
    base_channels: int = 10
    lr: float = 1e-4
    rng_seed: int = 0

    def __post_init__(self):
        if self.exp_id not in EXPERIMENT_IDS:
            raise ConfigError(f"experiment id must be one of {EXPERIMENT_IDS}")
        if abs(sum(self.ratios) - 1.0) > 1e-9:
            raise ConfigError(f"split ratios must sum to 1, got {self.ratios}")
        expect_mode = _mode_for(self.exp_id, self.ndim)
        expect_regime = EXPERIMENT_TABLE[self.exp_id][1]
        if self.mode != expect_mode or self.regime != expect_regime:
            raise ConfigError(
                f"experiment {self.exp_id!r} ({self.ndim}D) requires mode "
                f"{expect_mode!r} regime {expect_regime!r}, got "
                f"{self.mode!r}/{self.regime!r}"
            )
        if self.epochs < 0 or self.patches_per_epoch < 1 or self.batch_size < 1:
            raise ConfigError("epochs >= 0, patches_per_epoch >= 1, batch >= 1")

    @classmethod
    def for_id(cls, exp_id: str, ndim: int, **kwargs) -> "ExperimentSpec":
        mode = _mode_for(exp_id, ndim)
        regime = EXPERIMENT_TABLE[exp_id][1]
        if exp_id == "e" and ndim == 3 and "batch_size" not in kwargs:
            kwargs["batch_size"] = 2
        return cls(exp_id=exp_id, ndim=ndim, mode=mode, regime=regime, **kwargs)

    def label(self) -> str:
        return REGIME_LABELS[self.regime]

    def input_label(self) -> str:
        if self.mode == "slice2d":
            return "Slices"
        dims = {"patch2d-64": "64x64", "patch3d-16": "16x16x16",
                "patch3d-64": "64x64x64"}[self.mode]
        return f"Patches ({dims})"


@dataclass
class TrainedModel:
    config: UNetConfig
    params: UNetParams
    log: list[dict] = field(default_factory=list)
    best_epoch: int = -1

    @property
    def epochs_run(self) -> int:
        return len(self.log)


def split_dataset(cases: list, ratios, rng_seed: int):
    """Deterministic shuffle-split: val/test get rounded shares, the
    remainder trains. Returns (train, val, test) lists."""
    if abs(sum(ratios) - 1.0) > 1e-9:
        raise ConfigError(f"ratios must sum to 1, got {ratios}")
    n = len(cases)
    if n < 3:
        raise ConfigError(f"need at least 3 cases to split, got {n}")
    n_val = int(round(ratios[1] * n))
    n_test = int(round(ratios[2] * n))
    n_train = n - n_val - n_test
    if min(n_train, n_val, n_test) < 1:
        raise ConfigError(
            f"split of {n} cases by {ratios} leaves an empty subset "
            f"({n_train}/{n_val}/{n_test})"
        )
    order = CounterRng(rng_seed).shuffle(list(range(n)))
    picked = [cases[i] for i in order]
    return (
        picked[:n_train],
        picked[n_train:n_train + n_val],
        picked[n_train + n_val:],
    )


def unet_config_for(spec: ExperimentSpec, cases: list[LabeledCase]) -> UNetConfig:
    """Network input shape implied by the experiment's sampling mode."""
    from .sampling import PATCH_MODES, padded_slice_shape

    if spec.mode == "slice2d":
        in_shape = padded_slice_shape(cases)
    else:
        dims = PATCH_MODES[spec.mode]
        in_shape = tuple(reversed(dims))  # (x, y[, z]) -> array order
    return UNetConfig(
        ndim=spec.ndim,
        in_shape=in_shape,
        depth=spec.depth,
        base_channels=spec.base_channels,
    )


def _to_batch_arrays(batch: PatchBatch, dtype=np.float32):
    x = batch.images().astype(dtype)[:, None]
    t = batch.labels().astype(dtype)[:, None]
    return x, t


def train(
    cfg: UNetConfig,
    spec: ExperimentSpec,
    train_cases: list[LabeledCase],
    val_cases: list[LabeledCase],
) -> TrainedModel:
    """Patch-based training with online augmentation and best-val selection.

    Each epoch draws a fresh balanced patch set, augments it, and runs
    Adam on dice loss; validation dice is computed on a patch set fixed
    once up front. Returns the parameters of the best validation epoch
    (the initial parameters when epochs == 0).
    """
    root = CounterRng(spec.rng_seed)
    params = build_unet(cfg, root.derive_seed("init"))
    net = UNet(cfg, params)
    state = AdamState.for_params(params, lr=spec.lr)

    val_batch = sample_balanced(
        val_cases,
        PatchSpec(spec.mode, count=spec.val_patches,
                  rng_seed=root.derive_seed("val")),
    )
    xv, tv = _to_batch_arrays(val_batch)

    model = TrainedModel(config=cfg, params=params.copy())
    best_val = math.inf
    for epoch in range(spec.epochs):
        batch = sample_balanced(
            train_cases,
            PatchSpec(spec.mode, count=spec.patches_per_epoch,
                      rng_seed=root.derive_seed("epoch", epoch, "sample")),
        )
        batch = augment_batch(batch, spec.regime,
                              root.derive_seed("epoch", epoch, "augment"))
        x, t = _to_batch_arrays(batch)
        order = CounterRng(root.derive_seed("epoch", epoch, "order")).shuffle(
            list(range(len(batch)))
        )
        losses = []
        for i0 in range(0, len(order), spec.batch_size):
            idx = order[i0:i0 + spec.batch_size]
            xb, tb = x[idx], t[idx]
            y = net.forward(xb)
            loss, gy = dice_loss(y, tb)
            if not np.isfinite(loss):
                raise TrainingError(f"dice loss diverged at epoch {epoch}")
            params.zero_grad()
            net.backward(gy)
            adam_step(params, [p.grad for p in params], state)
            losses.append(loss)
        train_loss = float(np.mean(losses)) if losses else math.nan
        val_loss = _eval_loss(net, xv, tv, spec.batch_size)
        if not np.isfinite(val_loss):
            raise TrainingError(f"validation loss diverged at epoch {epoch}")
        model.log.append({"epoch": epoch, "train_loss": train_loss,
                          "val_loss": val_loss})
        if val_loss < best_val:
            best_val = val_loss
            model.params = params.copy()
            model.best_epoch = epoch
    return model


def _eval_loss(net: UNet, x, t, batch_size: int) -> float:
    losses = []
    sizes = []
    for i0 in range(0, x.shape[0], batch_size):
        xb, tb = x[i0:i0 + batch_size], t[i0:i0 + batch_size]
        y = net.predict(xb)
        loss, _ = dice_loss(y, tb)
        losses.append(loss)
        sizes.append(xb.shape[0])
    return float(np.average(losses, weights=sizes))


# ---------------------------------------------------------------------------
# inference and post-processing
# ---------------------------------------------------------------------------


def _tile_starts(extent: int, tile: int) -> list[int]:
    """Start offsets with 50% overlap; the last tile aligns inward."""
    if extent < tile:
        raise InferenceError(f"volume extent {extent} smaller than tile {tile}")
    step = max(tile // 2, 1)
    starts = list(range(0, extent - tile + 1, step))
    if starts[-1] != extent - tile:
        starts.append(extent - tile)
    return starts


def predict_volume(model: TrainedModel, v: Volume, tile_batch: int | None = None) -> Volume:
    """Tiled whole-volume inference with overlap averaging.

    Tiles are the training input shape with 50% overlap; overlapping
    predictions are averaged. 2D models run per slice. The volume is
    expected to be preprocessed the same way the training data was.
    """
    cfg = model.config
    net = UNet(cfg, model.params)
    data = v.data
    nz, ny, nx = data.shape
    if cfg.ndim == 3:
        tz, ty, tx = cfg.in_shape
        acc = np.zeros(data.shape, dtype=np.float32)
        cnt = np.zeros(data.shape, dtype=np.uint16)
        tiles = [
            (z0, y0, x0)
            for z0 in _tile_starts(nz, tz)
            for y0 in _tile_starts(ny, ty)
            for x0 in _tile_starts(nx, tx)
        ]
        if tile_batch is None:
            tile_batch = max(1, 2**17 // (tz * ty * tx))
        for i0 in range(0, len(tiles), tile_batch):
            chunk = tiles[i0:i0 + tile_batch]
            xb = np.stack(
                [data[z0:z0 + tz, y0:y0 + ty, x0:x0 + tx] for z0, y0, x0 in chunk]
            )[:, None]
            yb = net.predict(xb)
            for (z0, y0, x0), pr in zip(chunk, yb[:, 0]):
                acc[z0:z0 + tz, y0:y0 + ty, x0:x0 + tx] += pr
                cnt[z0:z0 + tz, y0:y0 + ty, x0:x0 + tx] += 1
        probs = acc / cnt
    else:
        th, tw = cfg.in_shape
        if ny <= th and nx <= tw:
            # model input covers the whole slice (full-slice training):
            # pad exactly like training did and crop the prediction back
            probs = np.empty(data.shape, dtype=np.float32)
            for z in range(nz):
                xb = pad_slice(data[z], (th, tw)).astype(np.float32)[None, None]
                yb = net.predict(xb)
                probs[z] = yb[0, 0, :ny, :nx]
        else:
            acc = np.zeros(data.shape, dtype=np.float32)
            cnt = np.zeros(data.shape, dtype=np.uint16)
            starts = [
                (y0, x0) for y0 in _tile_starts(ny, th) for x0 in _tile_starts(nx, tw)
            ]
            if tile_batch is None:
                tile_batch = max(1, 2**17 // (th * tw))
            jobs = [(z, y0, x0) for z in range(nz) for (y0, x0) in starts]
            for i0 in range(0, len(jobs), tile_batch):
                chunk = jobs[i0:i0 + tile_batch]
                xb = np.stack(
                    [data[z, y0:y0 + th, x0:x0 + tw] for z, y0, x0 in chunk]
                )[:, None]
                yb = net.predict(xb)
                for (z, y0, x0), pr in zip(chunk, yb[:, 0]):
                    acc[z, y0:y0 + th, x0:x0 + tw] += pr
                    cnt[z, y0:y0 + th, x0:x0 + tw] += 1
            probs = acc / cnt
    return Volume(np.clip(probs, 0.0, 1.0), v.spacing)


def binarize(p: Volume, threshold: float = 0.7) -> LabelMask:
    """Probability volume to mask: strictly greater than the threshold."""
    if p.data.min() < 0.0 or p.data.max() > 1.0:
        raise ValidationError("probability volume must lie in [0, 1]")
    return LabelMask((p.data > threshold).astype(np.uint8), p.spacing)


def postprocess_cc(m: LabelMask, min_size: int = 200) -> LabelMask:
    """Drop 26-connected components with strictly fewer than min_size voxels."""
    labels, n = ndimage.label(m.data, structure=_STRUCT_26)
    if n == 0:
        return LabelMask(m.data.copy(), m.spacing)
    sizes = np.bincount(labels.ravel())
    keep = sizes >= min_size
    keep[0] = False
    return LabelMask(keep[labels].astype(np.uint8), m.spacing)


# ---------------------------------------------------------------------------
# experiment matrix
# ---------------------------------------------------------------------------


@dataclass
class ExperimentResult:
    spec: ExperimentSpec
    model: TrainedModel
    report: MetricReport

    def to_dict(self) -> dict:
        d = self.report.to_dict()
        d.update(
            {
                "id": self.spec.exp_id,
                "input": self.spec.input_label(),
                "augmentation": self.spec.label(),
                "mode": self.spec.mode,
                "regime": self.spec.regime,
                "epochs": self.spec.epochs,
                "best_epoch": self.model.best_epoch,
                "n_params": self.model.params.n_params(),
                "training_log": self.model.log,
            }
        )
        return d


@dataclass
class MatrixReport:
    results: list[ExperimentResult]
    p_values: dict
    split_sizes: tuple[int, int, int]
    test_case_ids: list[str]
    base_seed: int

    def to_dict(self) -> dict:
        return {
            "schema": "vesselbench-report/1",
            "base_seed": self.base_seed,
            "split_sizes": list(self.split_sizes),
            "test_case_ids": self.test_case_ids,
            "experiments": [r.to_dict() for r in self.results],
            "wilcoxon_p": self.p_values,
        }


def evaluate_model(
    model: TrainedModel,
    test_cases: list[LabeledCase],
    binarize_threshold: float = 0.7,
    min_component: int = 200,
) -> MetricReport:
    """preprocess -> predict -> binarize -> postprocess -> metrics."""
    report = MetricReport()
    for case in test_cases:
        prob = predict_volume(model, zscore_normalize(case.volume))
        mask = postprocess_cc(binarize(prob, binarize_threshold), min_component)
        report.rows.append(evaluate_pair(case.case_id, mask, case.mask))
    return report


def run_experiment(
    spec: ExperimentSpec,
    train_cases: list[LabeledCase],
    val_cases: list[LabeledCase],
    test_cases: list[LabeledCase],
) -> ExperimentResult:
    norm = lambda cs: [
        LabeledCase(c.case_id, zscore_normalize(c.volume), c.mask) for c in cs
    ]
    cfg = unet_config_for(spec, train_cases)
    model = train(cfg, spec, norm(train_cases), norm(val_cases))
    report = evaluate_model(model, test_cases)
    return ExperimentResult(spec=spec, model=model, report=report)


def run_experiment_matrix(
    cases: list[LabeledCase],
    base_seed: int,
    ndim: int = 3,
    ratios=DEFAULT_RATIOS,
    spec_overrides: dict | None = None,
    experiment_ids=EXPERIMENT_IDS,
) -> MatrixReport:
    """Run experiments a-e on one shared split and report Wilcoxon
    comparisons between experiment pairs per metric.

    ``experiment_ids`` restricts the run (used by parallel workers); the
    split and per-experiment seeds do not depend on which subset runs.
    """
    root = CounterRng(base_seed)
    tr, va, te = split_dataset(cases, ratios, root.derive_seed("split"))
    results = []
    for exp_id in experiment_ids:
        overrides = dict(spec_overrides or {})
        per_exp = overrides.pop("per_experiment", {})
        overrides.update(per_exp.get(exp_id, {}))
        overrides.setdefault("ratios", tuple(ratios))
        spec = ExperimentSpec.for_id(
            exp_id, ndim, rng_seed=root.derive_seed("exp", exp_id), **overrides
        )
        results.append(run_experiment(spec, tr, va, te))

    p_values = {}
    for i, ra in enumerate(results):
        for rb in results[i + 1:]:
            key = f"{ra.spec.exp_id}-vs-{rb.spec.exp_id}"
            p_values[key] = {}
            for metric in MetricReport.METRICS:
                pair = _paired_values(ra.report, rb.report, metric)
                if pair is None:
                    p_values[key][metric] = None
                    continue
                try:
                    _, p = wilcoxon_signed_rank(pair[0], pair[1])
                    p_values[key][metric] = p
                except VesselBenchError as exc:
                    p_values[key][metric] = None
                    p_values[key][f"{metric}_note"] = str(exc)
    return MatrixReport(
        results=results,
        p_values=p_values,
        split_sizes=(len(tr), len(va), len(te)),
        test_case_ids=[c.case_id for c in te],
        base_seed=base_seed,
    )


def _paired_values(ra: MetricReport, rb: MetricReport, metric: str):
    da = {r.case_id: getattr(r, metric) for r in ra.rows}
    db = {r.case_id: getattr(r, metric) for r in rb.rows}
    ids = [k for k in da if k in db and da[k] is not None and db[k] is not None]
    if len(ids) < 2:
        return None
    return [da[k] for k in ids], [db[k] for k in ids]
