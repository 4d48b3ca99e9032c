"""Command-line entry point: every pipeline stage as a subcommand.

Exit codes: 0 success, 1 operation failure (error text on stderr),
2 usage error. JSON config files can be combined with flags; flags win.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

from . import phantom as ph
from .errors import VesselBenchError
from .nifti import read_nifti, write_nifti
from .preprocess import DEFAULT_BIAS_SIGMA_MM, bias_correct, zscore_normalize


def _parse_triple(text: str, cast=int) -> tuple:
    parts = [cast(p) for p in text.split(",")]
    if len(parts) != 3:
        raise argparse.ArgumentTypeError(f"expected 3 comma-separated values: {text!r}")
    return tuple(parts)


def build_parser() -> argparse.ArgumentParser:
    top = argparse.ArgumentParser(
        prog="vesselbench",
        description="Vessel segmentation workbench: phantoms, ground truth, "
        "U-Net training, evaluation.",
    )
    sub = top.add_subparsers(dest="command", required=True)

    p = sub.add_parser("preprocess", help="bias-correct and z-score a volume")
    p.add_argument("--in", dest="inp", required=True, help="input .nii")
    p.add_argument("--out", required=True, help="output .nii")
    p.add_argument("--bias-sigma-mm", type=float, default=DEFAULT_BIAS_SIGMA_MM)
    p.add_argument("--skip-bias", action="store_true")
    p.add_argument("--skip-zscore", action="store_true")

    p = sub.add_parser("phantom", help="synthetic dataset generation")
    psub = p.add_subparsers(dest="phantom_command", required=True)
    g = psub.add_parser("gen", help="generate phantom cases with ground truth")
    g.add_argument("--out", required=True, help="output directory")
    g.add_argument("--n", type=int, default=30, help="number of cases")
    g.add_argument("--dims", type=lambda s: _parse_triple(s, int), default=(64, 64, 64))
    g.add_argument("--spacing", type=lambda s: _parse_triple(s, float),
                   default=(0.5, 0.5, 0.6))
    g.add_argument("--seed", type=int, default=7)
    g.add_argument("--n-trees", type=int, default=2)
    g.add_argument("--branch-depth", type=int, default=3)
    g.add_argument("--radius-root-mm", type=float, default=1.6)
    g.add_argument("--noise-std", type=float, default=15.0)
    g.add_argument("--bias-amplitude", type=float, default=0.15)

    p = sub.add_parser("gt", help="scripted threshold + region-grow ground truth")
    p.add_argument("--in", dest="inp", required=True)
    p.add_argument("--out", required=True, help="output mask .nii")
    p.add_argument("--fraction", type=float, default=0.97)
    p.add_argument("--mode", choices=("max", "percentile"), default="max")
    p.add_argument("--session-out", help="also write the session JSON here")

    p = sub.add_parser("train", help="train one experiment configuration")
    p.add_argument("--data", required=True, help="dataset directory (phantom gen layout)")
    p.add_argument("--out", required=True, help="checkpoint path")
    p.add_argument("--dim", type=int, choices=(2, 3), default=3)
    p.add_argument("--experiment", choices=("a", "b", "c", "d", "e"), default="d")
    p.add_argument("--config", help="JSON file with ExperimentSpec overrides")
    p.add_argument("--epochs", type=int)
    p.add_argument("--patches-per-epoch", type=int)
    p.add_argument("--batch-size", type=int)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--log-out", help="write the per-epoch loss log JSON here")

    p = sub.add_parser("predict", help="tiled inference on one volume")
    p.add_argument("--model", required=True, help="checkpoint path")
    p.add_argument("--in", dest="inp", required=True)
    p.add_argument("--out", required=True, help="probability volume .nii")
    p.add_argument("--no-preprocess", action="store_true",
                   help="input is already z-scored")

    p = sub.add_parser("postprocess", help="binarize and filter small components")
    p.add_argument("--in", dest="inp", required=True, help="probability .nii")
    p.add_argument("--out", required=True, help="mask .nii")
    p.add_argument("--threshold", type=float, default=0.7)
    p.add_argument("--min-size", type=int, default=200)

    p = sub.add_parser("evaluate", help="compare predicted masks to ground truth")
    p.add_argument("--pred", required=True, help="directory of *_pred.nii masks")
    p.add_argument("--gt", required=True, help="directory of *_gt.nii masks")
    p.add_argument("--out", required=True, help="report JSON path")
    p.add_argument("--figures", help="also render figures into this directory")

    p = sub.add_parser("experiment", help="run the full a-e experiment matrix")
    p.add_argument("--data", required=True, help="dataset directory")
    p.add_argument("--out", required=True, help="report output directory")
    p.add_argument("--dim", type=int, choices=(2, 3), default=3)
    p.add_argument("--config", help="JSON file with spec overrides")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--epochs", type=int)
    p.add_argument("--patches-per-epoch", type=int)
    p.add_argument("--batch-size", type=int)
    p.add_argument("--jobs", type=int, default=1,
                   help="worker processes for independent experiments")
    p.add_argument("--no-figures", action="store_true")

    p = sub.add_parser("serve", help="run the annotation HTTP service")
    p.add_argument("--data", required=True, help="directory with .nii volumes")
    p.add_argument("--port", type=int, default=8080)
    p.add_argument("--host", default="127.0.0.1")

    return top


# ---------------------------------------------------------------------------
# dataset directory helpers
# ---------------------------------------------------------------------------


def case_paths(data_dir: str) -> list[tuple[str, str, str]]:
    """(case_id, volume path, gt path) triples from a dataset directory."""
    out = []
    for name in sorted(os.listdir(data_dir)):
        if name.endswith(".nii") and not name.endswith("_gt.nii"):
            case_id = name[:-4]
            gt = os.path.join(data_dir, f"{case_id}_gt.nii")
            out.append((case_id, os.path.join(data_dir, name),
                        gt if os.path.exists(gt) else ""))
    return out


def load_labeled_cases(data_dir: str):
    from .sampling import LabeledCase

    cases = []
    for case_id, vol_path, gt_path in case_paths(data_dir):
        if not gt_path:
            raise VesselBenchError(f"case {case_id!r} has no ground truth mask")
        vol = read_nifti(vol_path, kind="volume")
        gt = read_nifti(gt_path, kind="mask")
        cases.append(LabeledCase(case_id, vol, gt))
    if not cases:
        raise VesselBenchError(f"no cases found in {data_dir!r}")
    return cases


# ---------------------------------------------------------------------------
# command implementations
# ---------------------------------------------------------------------------


def _cmd_preprocess(args) -> int:
    v = read_nifti(args.inp, kind="volume")
    if not args.skip_bias:
        v = bias_correct(v, args.bias_sigma_mm)
    if not args.skip_zscore:
        v = zscore_normalize(v)
    write_nifti(v, args.out)
    return 0


def _cmd_phantom_gen(args) -> int:
    spec = ph.PhantomSpec(
        dims=args.dims,
        spacing=args.spacing,
        rng_seed=args.seed,
        n_trees=args.n_trees,
        branch_depth=args.branch_depth,
        radius_root_mm=args.radius_root_mm,
        noise_std=args.noise_std,
        bias_field_amplitude=args.bias_amplitude,
    )
    os.makedirs(args.out, exist_ok=True)
    cases = ph.generate_dataset(spec, args.n, args.seed)
    for i, (vol, mask) in enumerate(cases):
        write_nifti(vol, os.path.join(args.out, f"case_{i:03d}.nii"))
        write_nifti(mask, os.path.join(args.out, f"case_{i:03d}_gt.nii"))
    with open(os.path.join(args.out, "spec.json"), "w") as f:
        f.write(ph.spec_to_json(spec))
        f.write("\n")
    print(f"wrote {len(cases)} cases to {args.out}")
    return 0


def _cmd_gt(args) -> int:
    from .groundtruth import AnnotationSession, session_to_json

    v = read_nifti(args.inp, kind="volume")
    session = AnnotationSession(case_id=os.path.basename(args.inp), volume=v)
    session.set_threshold(args.fraction, args.mode)
    mask = session.grow()
    write_nifti(mask, args.out)
    if args.session_out:
        with open(args.session_out, "w") as f:
            f.write(session_to_json(session))
            f.write("\n")
    print(f"mask voxels: {mask.voxel_count()}")
    return 0


def _load_config(path) -> dict:
    if not path:
        return {}
    with open(path) as f:
        return json.load(f)


def _spec_overrides(args, config: dict) -> dict:
    overrides = dict(config)
    for key in ("epochs", "patches_per_epoch", "batch_size"):
        val = getattr(args, key, None)
        if val is not None:
            overrides[key] = val
    return overrides


def _cmd_train(args) -> int:
    from .pipeline import (
        ExperimentSpec,
        split_dataset,
        train,
        unet_config_for,
    )
    from .preprocess import zscore_normalize
    from .sampling import LabeledCase
    from .nn import save_checkpoint

    cases = load_labeled_cases(args.data)
    overrides = _spec_overrides(args, _load_config(args.config))
    overrides.pop("per_experiment", None)
    spec = ExperimentSpec.for_id(args.experiment, args.dim, rng_seed=args.seed,
                                 **overrides)
    tr, va, _ = split_dataset(cases, spec.ratios, args.seed)
    norm = [LabeledCase(c.case_id, zscore_normalize(c.volume), c.mask) for c in tr]
    norm_val = [LabeledCase(c.case_id, zscore_normalize(c.volume), c.mask) for c in va]
    cfg = unet_config_for(spec, norm)
    model = train(cfg, spec, norm, norm_val)
    save_checkpoint(args.out, cfg, model.params)
    if args.log_out:
        with open(args.log_out, "w") as f:
            json.dump({"log": model.log, "best_epoch": model.best_epoch}, f, indent=2)
            f.write("\n")
    last = model.log[-1] if model.log else {}
    print(f"trained {spec.exp_id}/{args.dim}D: {model.params.n_params()} params, "
          f"best epoch {model.best_epoch}, last {last}")
    return 0


def _cmd_predict(args) -> int:
    from .nn import load_checkpoint
    from .pipeline import TrainedModel, predict_volume

    cfg, params = load_checkpoint(args.model)
    v = read_nifti(args.inp, kind="volume")
    if not args.no_preprocess:
        v = zscore_normalize(v)
    prob = predict_volume(TrainedModel(config=cfg, params=params), v)
    write_nifti(prob, args.out)
    return 0


def _cmd_postprocess(args) -> int:
    from .pipeline import binarize, postprocess_cc

    p = read_nifti(args.inp, kind="volume")
    mask = postprocess_cc(binarize(p, args.threshold), args.min_size)
    write_nifti(mask, args.out)
    print(f"mask voxels: {mask.voxel_count()}")
    return 0


def _match_eval_cases(pred_dir, gt_dir):
    def stems(d):
        out = {}
        for name in sorted(os.listdir(d)):
            if name.endswith(".nii"):
                stem = name[:-4]
                for suf in ("_pred", "_gt", "_label"):
                    if stem.endswith(suf):
                        stem = stem[: -len(suf)]
                        break
                out[stem] = os.path.join(d, name)
        return out

    preds = stems(pred_dir)
    gts = stems(gt_dir)
    missing_gt = sorted(set(preds) - set(gts))
    missing_pred = sorted(set(gts) - set(preds))
    if missing_gt or missing_pred:
        raise VesselBenchError(
            "case lists do not match; "
            f"missing ground truth for {missing_gt}, missing predictions for "
            f"{missing_pred}"
        )
    return [(stem, preds[stem], gts[stem]) for stem in sorted(preds)]


def _cmd_evaluate(args) -> int:
    from .metrics import MetricReport, evaluate_pair
    from .report import write_single_report

    report = MetricReport()
    for stem, pred_path, gt_path in _match_eval_cases(args.pred, args.gt):
        pred = read_nifti(pred_path, kind="mask")
        gt = read_nifti(gt_path, kind="mask")
        report.rows.append(evaluate_pair(stem, pred, gt))
    write_single_report(report, args.out, args.figures)
    aggs = report.aggregates()
    for metric, agg in aggs.items():
        line = "n/a" if agg is None else f"{agg['mean']:.3f} ± {agg['sd']:.3f} (n={agg['n']})"
        print(f"{metric}: {line}")
    return 0


def _cmd_experiment(args) -> int:
    from .pipeline import run_experiment_matrix
    from .report import render_text_table, write_matrix_report

    cases = load_labeled_cases(args.data)
    overrides = _spec_overrides(args, _load_config(args.config))
    if args.jobs > 1:
        report = _run_matrix_parallel(cases, args.seed, args.dim, overrides, args.jobs)
    else:
        report = run_experiment_matrix(cases, args.seed, ndim=args.dim,
                                       spec_overrides=overrides)
    paths = write_matrix_report(report, args.out, figures=not args.no_figures)
    print(render_text_table(report))
    print(f"report written to {paths['json']}")
    return 0


def _run_matrix_parallel(cases, seed, ndim, overrides, jobs):
    """Experiments are independent given the shared split; run them in
    worker processes and merge, keeping the a-e order."""
    import multiprocessing as mp

    from .pipeline import (
        EXPERIMENT_IDS,
        MatrixReport,
        run_experiment_matrix,
    )

    with mp.get_context("spawn").Pool(min(jobs, len(EXPERIMENT_IDS))) as pool:
        partials = pool.starmap(
            _matrix_single,
            [(cases, seed, ndim, overrides, exp_id) for exp_id in EXPERIMENT_IDS],
        )
    full = partials[0]
    merged = MatrixReport(
        results=[p.results[0] for p in partials],
        p_values={},
        split_sizes=full.split_sizes,
        test_case_ids=full.test_case_ids,
        base_seed=seed,
    )
    # recompute pairwise stats over the merged results
    from .metrics import MetricReport as MR
    from .pipeline import _paired_values
    from .metrics import wilcoxon_signed_rank

    for i, ra in enumerate(merged.results):
        for rb in merged.results[i + 1:]:
            key = f"{ra.spec.exp_id}-vs-{rb.spec.exp_id}"
            merged.p_values[key] = {}
            for metric in MR.METRICS:
                pair = _paired_values(ra.report, rb.report, metric)
                if pair is None:
                    merged.p_values[key][metric] = None
                    continue
                try:
                    _, p = wilcoxon_signed_rank(pair[0], pair[1])
                    merged.p_values[key][metric] = p
                except VesselBenchError as exc:
                    merged.p_values[key][metric] = None
                    merged.p_values[key][f"{metric}_note"] = str(exc)
    return merged


def _matrix_single(cases, seed, ndim, overrides, exp_id):
    from .pipeline import run_experiment_matrix

    return run_experiment_matrix(cases, seed, ndim=ndim, spec_overrides=overrides,
                                 experiment_ids=(exp_id,))


def _cmd_serve(args) -> int:
    import uvicorn

    from .service import create_app

    app = create_app(args.data)
    uvicorn.run(app, host=args.host, port=args.port, log_level="warning")
    return 0


_DISPATCH = {
    "preprocess": _cmd_preprocess,
    "gt": _cmd_gt,
    "train": _cmd_train,
    "predict": _cmd_predict,
    "postprocess": _cmd_postprocess,
    "evaluate": _cmd_evaluate,
    "experiment": _cmd_experiment,
    "serve": _cmd_serve,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "phantom":
            return _cmd_phantom_gen(args)
        return _DISPATCH[args.command](args)
    except VesselBenchError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
