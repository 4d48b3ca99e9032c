import numpy as np
import pytest

from oracles import small_component_filter
from vesselbench.errors import ConfigError, InferenceError, ValidationError
from vesselbench.nn import UNetConfig, build_unet, save_checkpoint
from vesselbench.phantom import PhantomSpec, generate_dataset
from vesselbench.pipeline import (
    EXPERIMENT_IDS,
    ExperimentSpec,
    TrainedModel,
    binarize,
    postprocess_cc,
    predict_volume,
    run_experiment_matrix,
    split_dataset,
    train,
    unet_config_for,
)
from vesselbench.preprocess import zscore_normalize
from vesselbench.sampling import LabeledCase
from vesselbench.volume import LabelMask, Volume

TINY_PHANTOM = PhantomSpec(dims=(32, 32, 32), spacing=(0.5, 0.5, 0.6),
                           n_trees=1, branch_depth=2, radius_root_mm=1.4,
                           noise_std=8.0)


def tiny_cases(n=6, seed=0):
    cases = generate_dataset(TINY_PHANTOM, n, rng_seed=seed)
    return [LabeledCase(f"case_{i:03d}", v, m) for i, (v, m) in enumerate(cases)]


def micro_spec(**kw):
    kw.setdefault("epochs", 2)
    kw.setdefault("patches_per_epoch", 16)
    kw.setdefault("batch_size", 4)
    kw.setdefault("val_patches", 8)
    kw.setdefault("base_channels", 4)
    kw.setdefault("rng_seed", 1)
    return ExperimentSpec.for_id(kw.pop("exp_id", "d"), kw.pop("ndim", 3), **kw)


class TestSplit:
    def test_paper_sizes(self):
        tr, va, te = split_dataset(list(range(131)), (0.64, 0.16, 0.20), 1)
        assert (len(tr), len(va), len(te)) == (84, 21, 26)

    def test_ten_cases(self):
        tr, va, te = split_dataset(list(range(10)), (0.64, 0.16, 0.20), 1)
        assert (len(tr), len(va), len(te)) == (6, 2, 2)

    def test_disjoint_exhaustive_deterministic(self):
        cases = list(range(30))
        a = split_dataset(cases, (0.64, 0.16, 0.20), 7)
        b = split_dataset(cases, (0.64, 0.16, 0.20), 7)
        assert a == b
        merged = sorted(a[0] + a[1] + a[2])
        assert merged == cases
        c = split_dataset(cases, (0.64, 0.16, 0.20), 8)
        assert c != a

    def test_too_few(self):
        with pytest.raises(ConfigError):
            split_dataset([1, 2], (0.64, 0.16, 0.20), 0)

    def test_bad_ratios(self):
        with pytest.raises(ConfigError):
            split_dataset(list(range(10)), (0.5, 0.2, 0.2), 0)


class TestExperimentSpec:
    def test_id_table(self):
        for exp_id, (mode3, regime) in {
            "a": ("patch3d-16", "none"),
            "b": ("patch3d-16", "blur"),
            "c": ("patch3d-16", "rotflip"),
            "d": ("patch3d-16", "all"),
            "e": ("patch3d-64", "all"),
        }.items():
            spec = ExperimentSpec.for_id(exp_id, 3)
            assert (spec.mode, spec.regime) == (mode3, regime)
        assert ExperimentSpec.for_id("e", 2).mode == "slice2d"
        assert ExperimentSpec.for_id("e", 3).batch_size == 2

    def test_mismatched_mode_rejected(self):
        with pytest.raises(ConfigError):
            ExperimentSpec(exp_id="a", ndim=3, mode="patch3d-64", regime="none")


class TestBinarize:
    def test_strictness_at_exact_threshold(self):
        p = Volume(np.array([[[0.7, 0.700001, 1.0, 0.0]]], np.float32), (1, 1, 1))
        m = binarize(p, 0.7)
        assert m.data.ravel().tolist() == [0, 1, 1, 0]

    def test_all_ones(self):
        p = Volume(np.ones((2, 2, 2), np.float32), (1, 1, 1))
        assert binarize(p).voxel_count() == 8

    def test_monotone(self):
        rng = np.random.default_rng(0)
        base = rng.random((4, 4, 4)).astype(np.float32)
        m1 = binarize(Volume(base, (1, 1, 1)))
        bumped = np.clip(base + 0.05, 0, 1).astype(np.float32)
        m2 = binarize(Volume(bumped, (1, 1, 1)))
        assert (m2.data >= m1.data).all()

    def test_range_validated(self):
        with pytest.raises(ValidationError):
            binarize(Volume(np.full((2, 2, 2), 1.5, np.float32), (1, 1, 1)))


class TestPostprocess:
    def test_component_sizes_199_200_201(self):
        # three separated z-columns bent into blocks of controlled size
        data = np.zeros((30, 40, 40), np.uint8)
        def block(y0, n):
            # 5 x 5 footprint, stacked in z until n voxels are placed
            count = 0
            z = 0
            while count < n:
                for yy in range(5):
                    for xx in range(5):
                        if count < n:
                            data[z, y0 + yy, xx] = 1
                            count += 1
                z += 1
        block(0, 199)
        block(10, 200)
        block(20, 201)
        m = LabelMask(data, (1, 1, 1))
        out = postprocess_cc(m, min_size=200)
        assert out.data[:, 0:5, :].sum() == 0      # 199 removed
        assert out.data[:, 10:15, :].sum() == 200  # exactly 200 kept
        assert out.data[:, 20:25, :].sum() == 201

    def test_matches_bfs_oracle(self):
        rng = np.random.default_rng(1)
        for trial in range(10):
            mask = (rng.random((16, 16, 16)) < 0.25).astype(np.uint8)
            m = LabelMask(mask, (1, 1, 1))
            got = postprocess_cc(m, min_size=20)
            want = small_component_filter(mask, 20)
            assert np.array_equal(got.data, want), f"trial {trial}"

    def test_idempotent_and_never_adds(self):
        rng = np.random.default_rng(2)
        mask = (rng.random((12, 12, 12)) < 0.3).astype(np.uint8)
        m = LabelMask(mask, (1, 1, 1))
        once = postprocess_cc(m, 50)
        twice = postprocess_cc(once, 50)
        assert np.array_equal(once.data, twice.data)
        assert (once.data <= m.data).all()


class TestPredictVolume:
    def make_model(self, in_shape=(16, 16, 16), base=4):
        cfg = UNetConfig(ndim=3, in_shape=in_shape, depth=2, base_channels=base)
        return TrainedModel(config=cfg, params=build_unet(cfg, 3))

    def test_shape_and_range(self):
        model = self.make_model()
        v = zscore_normalize(tiny_cases(1)[0].volume)
        prob = predict_volume(model, v)
        assert prob.data.shape == v.data.shape
        assert prob.data.min() >= 0.0 and prob.data.max() <= 1.0

    def test_volume_smaller_than_tile(self):
        model = self.make_model()
        small = Volume(np.zeros((8, 20, 20), np.float32), (1, 1, 1))
        with pytest.raises(InferenceError):
            predict_volume(model, small)

    def test_overlap_averaging_matches_direct_tiles(self):
        # 24-wide axis with 16-tiles: starts 0 and 8; overlap region [8, 16)
        model = self.make_model()
        rng = np.random.default_rng(4)
        v = Volume(rng.normal(size=(16, 16, 24)).astype(np.float32), (1, 1, 1))
        prob = predict_volume(model, v)
        from vesselbench.nn import UNet

        net = UNet(model.config, model.params)
        t1 = net.predict(v.data[:, :, 0:16][None, None])[0, 0]
        t2 = net.predict(v.data[:, :, 8:24][None, None])[0, 0]
        assert np.allclose(prob.data[:, :, 0:8], t1[:, :, 0:8], atol=1e-6)
        assert np.allclose(prob.data[:, :, 16:24], t2[:, :, 8:16], atol=1e-6)
        mean = 0.5 * (t1[:, :, 8:16] + t2[:, :, 0:8])
        assert np.allclose(prob.data[:, :, 8:16], mean, atol=1e-6)

    def test_constant_model_yields_constant_probability(self):
        # zero all weights: network output is sigmoid(final bias) everywhere,
        # so tiling/averaging must introduce no seams
        model = self.make_model()
        for tns in model.params:
            tns.data[:] = 0.0
        model.params.tensors[-1].data[:] = 0.3
        v = Volume(np.random.default_rng(5).normal(size=(20, 24, 28)).astype(np.float32),
                   (1, 1, 1))
        prob = predict_volume(model, v)
        expected = 1.0 / (1.0 + np.exp(-0.3))
        assert np.allclose(prob.data, expected, atol=1e-6)

    def test_2d_per_slice(self):
        cfg = UNetConfig(ndim=2, in_shape=(16, 16), depth=2, base_channels=4)
        model = TrainedModel(config=cfg, params=build_unet(cfg, 6))
        rng = np.random.default_rng(6)
        v = Volume(rng.normal(size=(4, 24, 24)).astype(np.float32), (1, 1, 1))
        prob = predict_volume(model, v)
        assert prob.data.shape == v.data.shape
        # slices are independent in 2D mode
        v2 = Volume(np.ascontiguousarray(v.data[[1, 0, 2, 3]]), (1, 1, 1))
        prob2 = predict_volume(model, v2)
        assert np.allclose(prob2.data[1], prob.data[0], atol=1e-6)


class TestTrain:
    def test_zero_epochs_returns_init(self):
        cases = tiny_cases(4)
        spec = micro_spec(epochs=0)
        cfg = unet_config_for(spec, cases)
        model = train(cfg, spec, cases[:2], cases[2:])
        init = build_unet(cfg, __import__("vesselbench.rng", fromlist=["CounterRng"])
                          .CounterRng(spec.rng_seed).derive_seed("init"))
        assert model.log == []
        assert model.best_epoch == -1
        for a, b in zip(model.params, init):
            assert np.array_equal(a.data, b.data)

    def test_training_reduces_loss_and_is_deterministic(self, tmp_path):
        cases = tiny_cases(6)
        spec = micro_spec(epochs=4, patches_per_epoch=24)
        cfg = unet_config_for(spec, cases)
        norm = [LabeledCase(c.case_id, zscore_normalize(c.volume), c.mask)
                for c in cases]
        m1 = train(cfg, spec, norm[:4], norm[4:])
        assert len(m1.log) == 4
        assert m1.log[-1]["train_loss"] < m1.log[0]["train_loss"]
        m2 = train(cfg, spec, norm[:4], norm[4:])
        p1, p2 = tmp_path / "a.ckpt", tmp_path / "b.ckpt"
        save_checkpoint(p1, cfg, m1.params)
        save_checkpoint(p2, cfg, m2.params)
        assert p1.read_bytes() == p2.read_bytes()
        assert m1.log == m2.log


@pytest.mark.slow
class TestMatrixSmoke:
    def test_five_rows_shared_split_deterministic(self):
        # flat slabs: big enough in-plane for 64x64 patches, cheap in z
        slab = PhantomSpec(dims=(80, 80, 8), spacing=(0.5, 0.5, 0.6), n_trees=3,
                           branch_depth=2, radius_root_mm=2.0, noise_std=8.0)
        cases = [LabeledCase(f"case_{i:03d}", v, m)
                 for i, (v, m) in enumerate(generate_dataset(slab, 6, rng_seed=3))]
        overrides = {
            "epochs": 1,
            "patches_per_epoch": 8,
            "batch_size": 4,
            "val_patches": 4,
            "base_channels": 2,
            "per_experiment": {"e": {"patches_per_epoch": 2, "batch_size": 1,
                                     "val_patches": 2}},
        }
        # 32^3 phantoms cannot host 64^3 patches; use 2D where e = slices
        rep = run_experiment_matrix(cases, base_seed=5, ndim=2,
                                    spec_overrides=overrides)
        assert [r.spec.exp_id for r in rep.results] == list(EXPERIMENT_IDS)
        labels = [r.spec.label() for r in rep.results]
        assert labels == [
            "None",
            "Gaussian blur",
            "Rotation and flipping",
            "Gaussian blur, rotation and flipping",
            "Gaussian blur, rotation and flipping",
        ]
        ids = {tuple(r.case_id for r in res.report.rows) for res in rep.results}
        assert len(ids) == 1  # same test cases everywhere
        d = rep.to_dict()
        assert len(d["experiments"]) == 5
        rep2 = run_experiment_matrix(cases, base_seed=5, ndim=2,
                                     spec_overrides=overrides)
        import json

        assert json.dumps(d, sort_keys=True) == json.dumps(rep2.to_dict(),
                                                           sort_keys=True)
