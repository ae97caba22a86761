import filecmp

import numpy as np
import pytest

from swirpad.data import DEFAULT_CROP, ROI_SHAPE, extract_roi, load_manifest, load_sample
from swirpad.errors import BadConfig
from swirpad.synth import (
    DEFAULT_HOLDOUT,
    DEFAULT_MATERIALS,
    MaterialModel,
    SynthConfig,
    format_config,
    generate_dataset,
    material_patch,
    material_signature,
    mean_diff_vector,
    parse_config,
    render_frame,
    sample_rng,
)

SKIN = DEFAULT_MATERIALS[0]
SMALL = dict(train_bona_fide=3, train_attack=3, validation_bona_fide=2, validation_attack=2,
             test_bona_fide=2, test_attack=3, test_unknown_per_material=1)


def trees_identical(a, b):
    cmp = filecmp.dircmp(a, b)
    if cmp.left_only or cmp.right_only or cmp.funny_files:
        return False
    _, mismatch, errors = filecmp.cmpfiles(a, b, cmp.common_files, shallow=False)
    if mismatch or errors:
        return False
    return all(trees_identical(a / d, b / d) for d in cmp.common_dirs)


class TestMaterials:
    def test_zero_noise_returns_mean(self):
        m = MaterialModel("flat", "pai", (0.1, 0.2, 0.3, 0.4), 0.0, 5.0, 0.0)
        sig = material_signature(m, np.random.default_rng(0))
        assert sig.tolist() == [0.1, 0.2, 0.3, 0.4]
        patch = material_patch(m, np.random.default_rng(0))
        assert np.array_equal(patch, np.broadcast_to(np.array([0.1, 0.2, 0.3, 0.4])[:, None, None], patch.shape))

    def test_skin_dips_at_1450(self):
        rng = np.random.default_rng(123)
        draws = np.array([material_signature(SKIN, rng) for _ in range(10_000)])
        means = draws.mean(0)
        se = draws.std(0, ddof=1) / np.sqrt(len(draws))
        assert int(np.argmin(means)) == 2
        others = [k for k in range(4) if k != 2]
        assert all(means[2] + 3 * se[2] < means[k] - 3 * se[k] for k in others)

    def test_same_state_same_draw(self):
        a = material_signature(SKIN, np.random.default_rng(7))
        b = material_signature(SKIN, np.random.default_rng(7))
        assert np.array_equal(a, b)

    def test_signature_in_unit_range(self):
        bright = MaterialModel("bright", "pai", (1.0, 1.0, 0.0, 0.0), 0.3, 5.0, 0.1)
        rng = np.random.default_rng(0)
        for _ in range(200):
            s = material_signature(bright, rng)
            assert np.all((0 <= s) & (s <= 1))

    def test_patch_marginal_sd(self):
        m = MaterialModel("m", "pai", (0.5,) * 4, 0.02, 5.0, 0.0)
        patch = material_patch(m, np.random.default_rng(1), (200, 200))
        # texture and white noise each carry half of the configured variance
        assert patch.std() == pytest.approx(0.02, rel=0.1)

    @pytest.mark.parametrize("bad", [
        dict(kind="metal"), dict(mean_remission=(0.1, 0.2, 0.3)), dict(mean_remission=(0.1, 0.2, 0.3, 1.2)),
        dict(pixel_noise_sd=-0.1),
    ])
    def test_invalid_model(self, bad):
        args = dict(name="m", kind="pai", mean_remission=(0.1, 0.2, 0.3, 0.4)) | bad
        with pytest.raises(BadConfig):
            MaterialModel(**args)


class TestSeparability:
    def test_every_pai_differs_from_skin(self):
        skin = mean_diff_vector(SKIN)
        for m in DEFAULT_MATERIALS[1:]:
            assert np.max(np.abs(mean_diff_vector(m) - skin)) >= 0.05, m.name

    def test_confuser_close_to_skin(self):
        (play,) = [m for m in DEFAULT_MATERIALS if m.name == "playdoh_like"]
        close = np.abs(mean_diff_vector(play) - mean_diff_vector(SKIN)) <= 0.05
        assert close.sum() >= 4

    def test_roster_shape(self):
        assert sum(m.kind == "pai" for m in DEFAULT_MATERIALS) == 8
        assert len(DEFAULT_HOLDOUT) == 5
        assert "playdoh_like" not in DEFAULT_HOLDOUT and "latex_like" not in DEFAULT_HOLDOUT


class TestFrames:
    def test_slot_at_default_crop(self):
        frame = render_frame(SKIN, np.random.default_rng(0))
        assert frame.shape == (4, 64, 64) and frame.dtype == np.uint16
        r, c = DEFAULT_CROP
        inside = frame[:, r:r + ROI_SHAPE[0], c:c + ROI_SHAPE[1]] / 65535
        outside = frame[:, :r] / 65535
        assert outside.mean() < 0.05
        np.testing.assert_allclose(inside.mean(axis=(1, 2)), SKIN.mean_remission, atol=0.02)

    def test_sample_streams_independent_of_order(self):
        a = sample_rng(0, "train_bf_0001").standard_normal(3)
        sample_rng(0, "other").standard_normal(100)
        assert np.array_equal(a, sample_rng(0, "train_bf_0001").standard_normal(3))
        assert not np.array_equal(a, sample_rng(1, "train_bf_0001").standard_normal(3))


class TestConfig:
    def test_unknown_holdout(self):
        with pytest.raises(BadConfig):
            SynthConfig(holdout=("unobtainium",))

    def test_skin_holdout_rejected(self):
        with pytest.raises(BadConfig):
            SynthConfig(holdout=("skin",))

    def test_negative_count(self):
        with pytest.raises(BadConfig):
            SynthConfig(train_attack=-1)

    def test_roundtrip(self):
        cfg = SynthConfig(seed=9, **SMALL)
        assert parse_config(format_config(cfg)) == cfg

    def test_parse_keys(self):
        cfg = parse_config(
            "# small corpus\nseed = 4\ntrain_attack = 7\nholdout = wax_like, gelatin_like\n"
            "material.foam_like = pai, 0.2, 0.2, 0.2, 0.2, 0.01, 3, 0.01\n"
        )
        assert cfg.seed == 4 and cfg.train_attack == 7
        assert cfg.holdout == ("wax_like", "gelatin_like")
        assert cfg.material("foam_like").mean_remission == (0.2, 0.2, 0.2, 0.2)

    @pytest.mark.parametrize("text", ["seed 4", "seed = four", "colour = red", "holdout = nope",
                                      "material.x = pai, 0.1"])
    def test_bad_config(self, text):
        with pytest.raises(BadConfig):
            parse_config(text)


class TestGenerate:
    def test_table_iii_shape(self, tmp_path):
        cfg = SynthConfig(test_bona_fide=4, test_attack=3, test_unknown_per_material=1)
        man = generate_dataset(cfg, tmp_path / "c")
        counts = man.counts()
        assert counts["train"] == {"bona_fide": 130, "attack": 130, "total": 260}
        assert counts["validation"] == {"bona_fide": 90, "attack": 90, "total": 180}
        assert counts["test"] == {"bona_fide": 4, "attack": 8, "total": 12}
        holdout = set(DEFAULT_HOLDOUT)
        for e in man.entries:
            if e.pai_species in holdout:
                assert e.split == "test"
        test_species = {e.pai_species for e in man.entries if e.split == "test" and e.label == "attack"}
        assert holdout <= test_species

    def test_byte_identical(self, tmp_path):
        cfg = SynthConfig(seed=3, **SMALL)
        generate_dataset(cfg, tmp_path / "a")
        generate_dataset(cfg, tmp_path / "b")
        assert trees_identical(tmp_path / "a", tmp_path / "b")
        generate_dataset(SynthConfig(seed=4, **SMALL), tmp_path / "c")
        assert not trees_identical(tmp_path / "a", tmp_path / "c")

    def test_samples_load_with_their_material(self, tmp_path):
        man = generate_dataset(SynthConfig(seed=1, **SMALL), tmp_path / "c")
        for sid in man.ids():
            s = load_sample(man, sid)
            roi = extract_roi(s, DEFAULT_CROP).channels / 65535
            if s.label == "bona_fide":
                assert int(np.argmin(roi.mean(axis=(1, 2)))) == 2
        assert load_manifest(tmp_path / "c").counts() == man.counts()
