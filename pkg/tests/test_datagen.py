import json

import numpy as np
import pytest

from bivgs import datagen
from bivgs.datagen import GenerationConfig, generate
from bivgs.errors import ConfigError, FormatError, VersionError
from conftest import TINY


def raw_nn_concept_rate(split, cap):
    """Fraction of samples whose nearest other caption (raw-tensor cosine) shares the concept."""
    x = getattr(split, cap).reshape(len(split), -1).astype(np.float64)
    x /= np.linalg.norm(x, axis=1, keepdims=True)
    best = np.empty(len(x), dtype=int)
    for i in range(len(x)):  # brute-force scan
        sims = x @ x[i]
        sims[i] = -np.inf
        best[i] = int(np.argmax(sims))
    return float(np.mean(split.concept_ids[best] == split.concept_ids))


class TestGenerate:
    def test_split_sizes_and_shapes(self, small_ds):
        cfg = small_ds.config
        hrl, bi, val = (small_ds.splits[s] for s in datagen.SPLITS)
        assert len(hrl) == 4 * len(bi) == 4 * 256 and len(val) == 200
        assert bi.cap1.shape == (256, cfg.frames_hrl, 40)
        assert bi.cap2.shape == (256, cfg.frames_lrl, 40)
        assert hrl.cap2.shape[1] == 0
        assert bi.images.shape == (256, cfg.image_dim)

    def test_same_seed_bit_identical(self):
        assert generate(TINY, 5) == generate(TINY, 5)

    def test_different_seed_differs(self):
        assert generate(TINY, 5) != generate(TINY, 6)

    def test_zero_noise_duplicates_identical(self):
        cfg = GenerationConfig(n_concepts=3, duplicates_per_concept=2, hrl_factor=1, n_validation=2,
                               sigma_sample=0, sigma_image=0, sigma_hrl=0, sigma_lrl=0, sigma_frame=0)
        bi = generate(cfg, 0).splits["train_bilingual"]
        for k in range(3):
            a, b = 2 * k, 2 * k + 1
            assert bi.concept_ids[a] == bi.concept_ids[b]
            np.testing.assert_array_equal(bi.cap1[a], bi.cap1[b])
            np.testing.assert_array_equal(bi.cap2[a], bi.cap2[b])
            np.testing.assert_array_equal(bi.images[a], bi.images[b])

    def test_small_noise_concept_neighbours(self):
        cfg = GenerationConfig(sigma_sample=0.05, sigma_hrl=0.05, sigma_lrl=0.05, sigma_frame=0.2)
        bi = generate(cfg, 0).splits["train_bilingual"]
        assert raw_nn_concept_rate(bi, "cap1") >= 0.99
        assert raw_nn_concept_rate(bi, "cap2") >= 0.99

    @pytest.mark.parametrize("cap", ["cap1", "cap2"])
    def test_default_noise_concept_consistency(self, small_ds, cap):
        assert raw_nn_concept_rate(small_ds.splits["train_bilingual"], cap) >= 0.99

    def test_split_disjointness(self, small_ds):
        val = set(small_ds.splits["validation"].sample_ids.tolist())
        for name in ("train_hrl_large", "train_bilingual"):
            assert val.isdisjoint(small_ds.splits[name].sample_ids.tolist())

    def test_language_maps_shared_across_splits(self):
        # identical latents in two splits must give identical noiseless HRL profiles
        cfg = GenerationConfig(n_concepts=4, duplicates_per_concept=1, hrl_factor=1, n_validation=4,
                               sigma_sample=0, sigma_hrl=0, sigma_lrl=0, sigma_frame=0, sigma_image=0)
        ds = generate(cfg, 1)
        hrl, bi = ds.splits["train_hrl_large"], ds.splits["train_bilingual"]
        for c in range(4):
            np.testing.assert_array_equal(hrl.cap1[hrl.concept_ids == c][0], bi.cap1[bi.concept_ids == c][0])

    def test_invalid_config(self):
        with pytest.raises(ConfigError):
            GenerationConfig(n_concepts=0)
        with pytest.raises(ConfigError):
            GenerationConfig(sigma_lrl=-1.0)
        with pytest.raises(ConfigError):
            GenerationConfig(caption_mode="text")


class TestFiles:
    def test_round_trip(self, tiny_ds, tmp_path):
        datagen.save(tiny_ds, tmp_path / "d")
        assert datagen.load(tmp_path / "d") == tiny_ds

    def test_layout(self, tiny_ds, tmp_path):
        datagen.save(tiny_ds, tmp_path / "d")
        names = sorted(p.name for p in (tmp_path / "d").iterdir())
        assert names == ["manifest.json", "train_bilingual.bin", "train_hrl_large.bin", "validation.bin"]

    def test_truncated_names_sample(self, tiny_ds, tmp_path):
        root = datagen.save(tiny_ds, tmp_path / "d")
        blob = (root / "validation.bin").read_bytes()
        (root / "validation.bin").write_bytes(blob[:-10])
        last = int(tiny_ds.splits["validation"].sample_ids[-1])
        with pytest.raises(FormatError, match=f"sample {last}"):
            datagen.load(root)

    def test_unknown_version(self, tiny_ds, tmp_path):
        root = datagen.save(tiny_ds, tmp_path / "d")
        m = json.loads((root / "manifest.json").read_text())
        m["version"] = 7
        (root / "manifest.json").write_text(json.dumps(m))
        with pytest.raises(VersionError):
            datagen.load(root)

    def test_malformed_manifest_has_position(self, tiny_ds, tmp_path):
        root = datagen.save(tiny_ds, tmp_path / "d")
        (root / "manifest.json").write_text('{\n  "format": "bivgs-dataset",\n  "version": 1,,\n}')
        with pytest.raises(FormatError, match="line 3"):
            datagen.load(root)

    def test_missing_field(self, tiny_ds, tmp_path):
        root = datagen.save(tiny_ds, tmp_path / "d")
        m = json.loads((root / "manifest.json").read_text())
        del m["splits"]
        (root / "manifest.json").write_text(json.dumps(m))
        with pytest.raises(FormatError, match="splits"):
            datagen.load(root)


@pytest.mark.slow
def test_waveform_mode_runs_frontend():
    from bivgs.audiofeat import FrontendConfig

    cfg = GenerationConfig(n_concepts=4, duplicates_per_concept=2, hrl_factor=1, n_validation=4,
                           frames_hrl=12, frames_lrl=20, caption_mode="waveform",
                           sigma_sample=0.05, sigma_hrl=0.05, sigma_lrl=0.05)
    ds = generate(cfg, 0)
    bi = ds.splits["train_bilingual"]
    assert bi.cap1.shape == (8, 12, 40) and bi.cap2.shape == (8, 20, 40)
    assert ds.frontend == FrontendConfig(n_mels=40, sample_rate=16000)
    # values are log energies, not the mel-mode offsets
    assert bi.cap1.min() >= np.log(1e-10) - 1e-3
    assert raw_nn_concept_rate(bi, "cap1") == 1.0
    assert ds == generate(cfg, 0)
